"""
Semi-supervised sentence matching
=================================

5000 sentence pairs, only 10% of them labeled. Three ways to train:

* ENCODER_ONLY - the matcher sees the labeled pairs and nothing else;
* DECONV_AE    - adds a reconstruction loss on every sentence, no noise;
* SEMI_LVM     - adds the variational reconstruction objective on every
  sentence, so the unlabeled 90% shape the shared encoder.

Each mode is trained with five seeds; the full run takes a few minutes per seed.
"""

from deconv_lvm.experiments import semi_supervised_sweep

###############################################################################
# Run the sweep
# -------------
# Rows go to ``sweep.csv`` as they finish.

result = semi_supervised_sweep(seeds=(0, 1, 2, 3, 4), fractions=(0.1,), out_csv="sweep.csv", log=print)

###############################################################################
# Mean test accuracy per mode
# ---------------------------

for (fraction, mode), acc in sorted(result.means.items(), key=lambda kv: kv[1]):
    print(f"fraction {fraction:.2f}  {mode:12s} {acc:.4f}")
print(f"total {result.seconds / 60:.1f} min")

"""
Reconstruction and style in the latent space
============================================

First the model memorizes 32 sentences, which shows the deconvolutional
decoder can reproduce every token from a single latent column. Then it is
trained on a two-style corpus, and a linear probe with 200 examples reads
the style off the frozen latent means.
"""

import csv

from deconv_lvm.evaluation import pca_2d
from deconv_lvm.experiments import overfit, style_separation

###############################################################################
# Overfitting a tiny corpus
# -------------------------

result = overfit(n_sentences=32, max_epochs=500, log=print)
print(f"token accuracy {result.token_accuracy:.4f} after {result.epochs} epochs ({result.seconds:.0f}s)")

###############################################################################
# Style separation
# ----------------
# Two styles (formal / informal), 1000 training sentences each. The unsupervised
# LVM and the deterministic autoencoder are probed alike; the average of word
# embeddings is the bag-of-words baseline.

style = style_separation(log=None)
print(f"LVM probe        {style.lvm_probe:.3f}")
print(f"DECONV_AE probe  {style.ae_probe:.3f}")
print(f"baseline probe   {style.baseline_probe:.3f}")
print(f"KL share of loss {style.kl_fraction:.3f}  (well above 0: no posterior collapse)")

###############################################################################
# A 2-D view
# ----------
# Project the test codes onto their top two principal components and write
# them out for any plotting tool.

coords, _, variances = pca_2d(style.lvm_codes)
with open("style_codes_2d.csv", "w", newline="") as fh:
    writer = csv.writer(fh)
    writer.writerow(["tag", "pc1", "pc2"])
    for tag, (a, b) in zip(style.tags, coords):
        writer.writerow([tag, f"{a:.6f}", f"{b:.6f}"])
for tag in ("formal", "informal"):
    pts = coords[[t == tag for t in style.tags]]
    print(f"{tag:7s} centroid pc1 {pts[:, 0].mean():+.3f} pc2 {pts[:, 1].mean():+.3f}")

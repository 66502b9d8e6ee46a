"""Deconvolutional latent-variable models for sentences, in plain numpy.

A strided-CNN encoder maps a padded sentence to a diagonal Gaussian
posterior; a transposed-convolution decoder expands a latent code back to
one embedding-space vector per position, scored against the vocabulary by
cosine similarity over a temperature.  The same encoder, shared across a
sentence pair, feeds a matching classifier for supervised and
semi-supervised sentence-pair tasks.
"""

__version__ = "0.1.0"

from .autodiff import ParameterStore, Rng, Tensor, backward
from .config import ConfigError, ModelConfig, TrainingMode, build_config, load_config
from .text import Vocabulary, pair_dataset, sentence_dataset, tokenize
from .trainer import DivergenceError, Trainer

__all__ = [
    "__version__",
    "ConfigError",
    "DivergenceError",
    "ModelConfig",
    "ParameterStore",
    "Rng",
    "Tensor",
    "Trainer",
    "TrainingMode",
    "Vocabulary",
    "backward",
    "build_config",
    "load_config",
    "pair_dataset",
    "sentence_dataset",
    "tokenize",
]

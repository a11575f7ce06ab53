"""eleflow: elephant/mouse flow labeling and deep-learning flow detectors."""

__version__ = "0.1.0"

DEFAULT_SEED = 1337

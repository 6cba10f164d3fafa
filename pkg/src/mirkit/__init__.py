"""Music classification toolkit: spectrograms, augmentation, metrics, losses and training."""

__version__ = "0.1.0"

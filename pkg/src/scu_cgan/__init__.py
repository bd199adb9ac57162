"""Region-conditioned fire image synthesis (six-CBAM U-Net CycleGAN) with
evaluation metrics and a detection-dataset augmentation pipeline."""

__version__ = "0.1.0"

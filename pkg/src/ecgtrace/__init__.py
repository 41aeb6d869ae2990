"""ECG trace image classification pipeline.

Preprocessing (adaptive gamma, resize, z-score), class-balancing augmentation,
stratified k-fold planning, a from-scratch CNN, one-vs-rest metrics with
confidence intervals, and Score-CAM heatmaps.
"""

__version__ = "0.1.0"

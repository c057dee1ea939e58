"""Frequency-domain MRI enhancement, a numpy micro-CNN and 4-class metrics."""

__version__ = "0.1.0"

from .dft import Spectrum, center, dft_forward, dft_inverse, dft_naive, magnitude, phase, uncenter
from .enhance import (
    EnhanceConfig,
    FilterMask,
    adjust_brightness_contrast,
    apply_filter,
    build_lowpass,
    convolve_freq,
    enhance,
    highpass_from_lowpass,
    histogram_equalize,
    normalize_minmax,
)
from .image_io import ClassLabel, DatasetManifest, ImageGrid, load_grayscale, save_grayscale, scan_dataset
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    PredictionRecord,
    accuracy,
    auc_ovr_macro,
    balanced_accuracy,
    confusion_from_records,
    macro_f1,
    mcc_multiclass,
)

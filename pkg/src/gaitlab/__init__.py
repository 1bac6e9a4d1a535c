"""gaitlab: gait biometrics toolkit.

Silhouette preprocessing, gait templates, shape features, subspace
classifiers, pose-based-voting gender classification, genetic template
segmentation, view estimation and gait authentication.
"""
__version__ = "0.1.0"

from .core import (Covariate, DatasetError, DatasetIndex, EmptySilhouette, GaitError, GaitSequence, SampleKey,
                   SilhouetteFrame, load_dataset, split_gallery_probe)
from .templates import TemplateKind, compute_aei, compute_gei, compute_geni, compute_template

__all__ = [
    "Covariate", "DatasetError", "DatasetIndex", "EmptySilhouette", "GaitError", "GaitSequence", "SampleKey",
    "SilhouetteFrame", "load_dataset", "split_gallery_probe", "TemplateKind", "compute_aei", "compute_gei",
    "compute_geni", "compute_template", "__version__",
]

"""Dataset manifests, face cropping, patch extraction and the synthetic moiré benchmark."""

from fas_toolbox.datapipe.crop import crop_face, extract_patch, prepare_face, resize
from fas_toolbox.datapipe.manifest import load_manifest, load_sample, load_samples, write_image, write_manifest
from fas_toolbox.datapipe.merge import merge_sets, replace_live
from fas_toolbox.datapipe.synthetic import make_synthetic_benchmark
from fas_toolbox.datapipe.types import CropSpec, DatasetManifest, FaceSample, Label, ManifestEntry, Provenance

__all__ = [
    "CropSpec",
    "DatasetManifest",
    "FaceSample",
    "Label",
    "ManifestEntry",
    "Provenance",
    "crop_face",
    "extract_patch",
    "load_manifest",
    "load_sample",
    "load_samples",
    "make_synthetic_benchmark",
    "merge_sets",
    "prepare_face",
    "replace_live",
    "resize",
    "write_image",
    "write_manifest",
]

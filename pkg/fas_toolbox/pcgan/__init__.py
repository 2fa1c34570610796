"""Pattern Conversion GAN: content/pattern disentanglement and spoof-artifact injection and removal."""

from fas_toolbox.pcgan.convert import convert_manifest, inject_artifact, remove_artifact
from fas_toolbox.pcgan.losses import (
    PCGANLosses,
    adversarial_losses,
    blur,
    blurred_reconstruction_loss,
    discriminator_loss,
    pattern_conversion_loss,
    reconstruction_loss,
    total_pcgan_loss,
)
from fas_toolbox.pcgan.networks import LatentPair, PCGANModel
from fas_toolbox.pcgan.trainer import LossRecord, PCGANTrainState, load_pcgan, train_pcgan, train_step

__all__ = [
    "LatentPair",
    "LossRecord",
    "PCGANLosses",
    "PCGANModel",
    "PCGANTrainState",
    "adversarial_losses",
    "blur",
    "blurred_reconstruction_loss",
    "convert_manifest",
    "discriminator_loss",
    "inject_artifact",
    "load_pcgan",
    "pattern_conversion_loss",
    "reconstruction_loss",
    "remove_artifact",
    "total_pcgan_loss",
    "train_pcgan",
    "train_step",
]

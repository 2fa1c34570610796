"""Parameter and multiply-accumulate counts of our own networks."""

from __future__ import annotations

from collections.abc import Callable, Iterable, Sequence
from typing import Any

import torch
from torch import nn

from fas_toolbox.config import Config
from fas_toolbox.pcgan.networks import PCGANModel
from fas_toolbox.pmn.model import PMNModel


def count_parameters(module: nn.Module | Iterable[nn.Parameter]) -> int:
    parameters = module.parameters() if isinstance(module, nn.Module) else module
    return sum(parameter.numel() for parameter in parameters)


def _layer_macs(layer: nn.Module, output: torch.Tensor) -> int:
    if isinstance(layer, nn.Conv2d):
        kernel = layer.kernel_size[0] * layer.kernel_size[1]
        return output.numel() * (layer.in_channels // layer.groups) * kernel
    if isinstance(layer, nn.Linear):
        return output.numel() * layer.in_features
    return 0


@torch.no_grad()
def estimate_flops(
    module: nn.Module,
    input_shape: Sequence[int],
    forward: Callable[[torch.Tensor], Any] | None = None,
) -> int:
    """Multiply-accumulates of the Conv2d and Linear layers inside `module` for one zero input.

    `forward` runs the pass when the module is not called directly with the input; only layers
    belonging to `module` are counted. Attention matmuls and normalizations are not included.
    """
    total = 0

    def hook(layer: nn.Module, _inputs: Any, output: torch.Tensor) -> None:
        nonlocal total
        total += _layer_macs(layer, output)

    handles = [layer.register_forward_hook(hook) for layer in module.modules() if isinstance(layer, (nn.Conv2d, nn.Linear))]
    try:
        x = torch.zeros(*input_shape)
        (forward or module)(x)
    finally:
        for handle in handles:
            handle.remove()
    return total


def cost_report(config: Config) -> dict[str, dict[str, int]]:
    """Counts for the generator networks, the full detector and its face-only inference path."""
    pcgan = PCGANModel(config.pcgan).eval()
    size, patch = config.pcgan.image_size, config.pcgan.patch_size
    image_shape = (1, 3, size, size)
    crops_shape = (1, config.pcgan.n_crops, 3, patch, patch)
    n_reference = config.pcgan.n_reference_crops

    pmn = PMNModel(config.pmn).eval()
    detector_shape = (1, 3, pmn.input_size, pmn.input_size)
    backbone, heads = pmn.backbone, pmn.heads

    def inference(x: torch.Tensor) -> torch.Tensor:
        return heads.face(heads.features(backbone.encode_image(x)))

    inference_parameters = [*backbone.image_parameters(), *heads.features.parameters(), *heads.face.parameters()]
    return {
        "pcgan_encoder": {
            "parameters": count_parameters(pcgan.encoder),
            "macs": estimate_flops(pcgan.encoder, image_shape),
        },
        "pcgan_generator": {
            "parameters": count_parameters(pcgan.generator),
            "macs": estimate_flops(pcgan.generator, image_shape, pcgan.reconstruct),
        },
        "pcgan_discriminator": {
            "parameters": count_parameters(pcgan.discriminator),
            "macs": estimate_flops(pcgan.discriminator, image_shape),
        },
        "pcgan_patch_discriminator": {
            "parameters": count_parameters(pcgan.patch_discriminator),
            "macs": estimate_flops(
                pcgan.patch_discriminator, crops_shape, lambda x: pcgan.patch_discriminator(x, x[:, :n_reference])
            ),
        },
        "pmn_training": {
            "parameters": count_parameters(pmn),
            "macs": estimate_flops(pmn, detector_shape, lambda x: (inference(x), heads.patch(heads.features(backbone.encode_image(x))))),
        },
        "pmn_inference": {
            "parameters": count_parameters(inference_parameters),
            "macs": estimate_flops(pmn, detector_shape, inference),
        },
    }

"""Conversion GAN objectives.

Discriminators emit logits; -log D(·) is evaluated as softplus(-logit) so a perfectly fooled
discriminator (logit +inf) gives exactly 0 and an undecided one (logit 0) gives ln 2.
"""

from __future__ import annotations

from collections.abc import Callable

import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict
from torch.autograd import grad

from fas_toolbox.errors import NumericalError, ShapeError
from fas_toolbox.log import logger
from fas_toolbox.pcgan.patches import PatchSampler

Encoder = Callable[[torch.Tensor], tuple[torch.Tensor, torch.Tensor]]
Generator = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]
Critic = Callable[[torch.Tensor], torch.Tensor]
PatchCritic = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


class PCGANLosses(BaseModel):
    """The five generator-side terms of one iteration."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    rec: torch.Tensor
    rec_blur: torch.Tensor
    adv_rec: torch.Tensor
    adv_mix: torch.Tensor
    pat: torch.Tensor

    @property
    def total(self) -> torch.Tensor:
        return total_pcgan_loss(self)

    def as_floats(self) -> dict[str, float]:
        values = {name: float(getattr(self, name).detach()) for name in ("rec", "rec_blur", "adv_rec", "adv_mix", "pat")}
        values["total"] = float(self.total.detach())
        return values


def guard_finite(value: torch.Tensor, name: str) -> torch.Tensor:
    if not bool(torch.isfinite(value).all()):
        logger.warning(f"Non-finite {name}: {value.detach().cpu().tolist()}")
        raise NumericalError(f"{name} is not finite", {"term": name})
    return value


def fooled_loss(logits: torch.Tensor, name: str = "adversarial loss") -> torch.Tensor:
    """Mean -log σ(logit): the non-saturating generator objective."""
    return guard_finite(F.softplus(-logits).mean(), name)


def _flatten_samples(x: torch.Tensor) -> torch.Tensor:
    return x.reshape(1, -1) if x.ndim <= 3 else x.reshape(x.shape[0], -1)


def l2_distance(x: torch.Tensor, x_hat: torch.Tensor, normalized: bool = True) -> torch.Tensor:
    """Per-sample L2 distance averaged over the batch.

    With `normalized` the squared differences are averaged over elements (an RMS distance),
    otherwise summed.
    """
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    squared = _flatten_samples(x - x_hat) ** 2
    per_sample = squared.mean(dim=1) if normalized else squared.sum(dim=1)
    return per_sample.sqrt().mean()


def reconstruction_loss(x: torch.Tensor, x_hat: torch.Tensor, normalized: bool = True) -> torch.Tensor:
    return l2_distance(x, x_hat, normalized)


def blur(x: torch.Tensor) -> torch.Tensor:
    """2×2 average-pool downsample of a 3×S×S image or a B×3×S×S batch."""
    if x.ndim not in (3, 4):
        raise ShapeError(f"expected an image or a batch, got shape {tuple(x.shape)}")
    height, width = x.shape[-2:]
    if height % 2 or width % 2:
        raise ShapeError(f"blur needs even sides, got {height}×{width}")
    if x.ndim == 3:
        return F.avg_pool2d(x.unsqueeze(0), 2).squeeze(0)
    return F.avg_pool2d(x, 2)


def blurred_reconstruction_loss(x_tgt: torch.Tensor, x_mix: torch.Tensor, normalized: bool = True) -> torch.Tensor:
    if x_tgt.shape != x_mix.shape:
        raise ShapeError(f"shape mismatch: {tuple(x_tgt.shape)} vs {tuple(x_mix.shape)}")
    return l2_distance(blur(x_tgt), blur(x_mix), normalized)


def mix_images(encoder: Encoder, generator: Generator, x_src: torch.Tensor, x_tgt: torch.Tensor) -> torch.Tensor:
    """G(z_con of x_tgt, z_pat of x_src)."""
    _, src_pat = encoder(x_src)
    tgt_con, _ = encoder(x_tgt)
    return generator(tgt_con, src_pat)


def patch_fooled_loss(
    patch_discriminator: PatchCritic,
    x_mix: torch.Tensor,
    x_src: torch.Tensor,
    sampler: PatchSampler,
    rng: torch.Generator,
) -> torch.Tensor:
    candidates = sampler.candidates(x_mix, rng)
    references = sampler.references(x_src, rng)
    return fooled_loss(patch_discriminator(candidates, references), "pattern conversion loss")


def pattern_conversion_loss(
    encoder: Encoder,
    generator: Generator,
    patch_discriminator: PatchCritic,
    x_src: torch.Tensor,
    x_tgt: torch.Tensor,
    rng: torch.Generator,
    sampler: PatchSampler | None = None,
) -> torch.Tensor:
    """-log D_patch(crops of the mix, crops of x_src): the mix must carry x_src's pattern."""
    x_mix = mix_images(encoder, generator, x_src, x_tgt)
    return patch_fooled_loss(patch_discriminator, x_mix, x_src, sampler or PatchSampler(), rng)


def adversarial_losses(
    encoder: Encoder,
    generator: Generator,
    discriminator: Critic,
    x_src: torch.Tensor,
    x_tgt: torch.Tensor,
) -> tuple[torch.Tensor, torch.Tensor]:
    """(-log D(reconstruction of x_src), -log D(mix))."""
    src_con, src_pat = encoder(x_src)
    tgt_con, _ = encoder(x_tgt)
    rec = fooled_loss(discriminator(generator(src_con, src_pat)), "reconstruction adversarial loss")
    mix = fooled_loss(discriminator(generator(tgt_con, src_pat)), "mix adversarial loss")
    return rec, mix


def total_pcgan_loss(components: PCGANLosses) -> torch.Tensor:
    return components.rec + components.rec_blur + components.adv_rec + components.adv_mix + components.pat


def r1_penalty(real_logits: torch.Tensor, real_inputs: torch.Tensor) -> torch.Tensor:
    """Mean over samples of the squared gradient norm of the real logits w.r.t. the real inputs."""
    (gradient,) = grad(outputs=real_logits.sum(), inputs=real_inputs, create_graph=True)
    return gradient.pow(2).reshape(gradient.shape[0], -1).sum(dim=1).mean()


def discriminator_loss(
    discriminator: Critic,
    real: torch.Tensor,
    fake: torch.Tensor,
    r1_weight: float = 10.0,
) -> torch.Tensor:
    """softplus(-D(real)) + softplus(D(fake)) + r1_weight/2 · R1."""
    real = real.detach().requires_grad_(r1_weight > 0)
    real_logits = discriminator(real)
    fake_logits = discriminator(fake.detach())
    loss = F.softplus(-real_logits).mean() + F.softplus(fake_logits).mean()
    if r1_weight > 0:
        loss = loss + r1_weight / 2 * r1_penalty(real_logits, real)
    return guard_finite(loss, "discriminator loss")


def patch_discriminator_loss(
    patch_discriminator: PatchCritic,
    x_src: torch.Tensor,
    x_mix: torch.Tensor,
    sampler: PatchSampler,
    rng: torch.Generator,
    r1_weight: float = 10.0,
) -> torch.Tensor:
    """Real pairs are two crop sets of x_src, fake pairs are mix crops against x_src references."""
    references = sampler.references(x_src, rng).detach()
    real = sampler.candidates(x_src, rng).detach().requires_grad_(r1_weight > 0)
    fake = sampler.candidates(x_mix.detach(), rng)
    real_logits = patch_discriminator(real, references)
    fake_logits = patch_discriminator(fake, references)
    loss = F.softplus(-real_logits).mean() + F.softplus(fake_logits).mean()
    if r1_weight > 0:
        loss = loss + r1_weight / 2 * r1_penalty(real_logits, real)
    return guard_finite(loss, "patch discriminator loss")


def pcgan_losses(
    encoder: Encoder,
    generator: Generator,
    discriminator: Critic,
    patch_discriminator: PatchCritic,
    x_src: torch.Tensor,
    x_tgt: torch.Tensor,
    sampler: PatchSampler,
    rng: torch.Generator,
) -> PCGANLosses:
    """All five generator-side terms from one shared encoding of the pair."""
    src_con, src_pat = encoder(x_src)
    tgt_con, _ = encoder(x_tgt)
    x_rec = generator(src_con, src_pat)
    x_mix = generator(tgt_con, src_pat)
    return PCGANLosses(
        rec=guard_finite(reconstruction_loss(x_src, x_rec), "reconstruction loss"),
        rec_blur=guard_finite(blurred_reconstruction_loss(x_tgt, x_mix), "blurred reconstruction loss"),
        adv_rec=fooled_loss(discriminator(x_rec), "reconstruction adversarial loss"),
        adv_mix=fooled_loss(discriminator(x_mix), "mix adversarial loss"),
        pat=patch_fooled_loss(patch_discriminator, x_mix, x_src, sampler, rng),
    )

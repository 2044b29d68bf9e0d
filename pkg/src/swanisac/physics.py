"""Near-field channels and communication metrics.

Conventions:

* channels are complex tensors shaped ``(..., K, N)`` with one row per node
  (communication users first, sensing targets after);
* ``W`` is ``(..., N, K_c)`` and ``F`` is ``(..., N, K_s)``;
* the received signal uses the plain transpose ``h^T w`` (no conjugate),
  so a matched beam for ``h`` is ``conj(h)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import torch

from .geometry import AntennaMasks, GeometryConfig

SINGULAR_DISTANCE = 1e-6


class SingularChannelError(ValueError):
    """Node position coincides with an antenna."""


@dataclass(frozen=True)
class ChannelConfig:
    alpha: float = 1.0
    wavelength: float = 0.125
    sigma_c2: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be > 0")
        if not self.sigma_c2 > 0:
            raise ValueError("sigma_c2 must be > 0")


@dataclass(frozen=True)
class PowerConfig:
    rho_c: float = 0.8
    rho_s: float = 0.2
    P_max: float = 10.0

    def __post_init__(self):
        if not (0 <= self.rho_c <= 1 and 0 <= self.rho_s <= 1):
            raise ValueError("power-split factors must lie in [0, 1]")
        if self.rho_c + self.rho_s > 1 + 1e-12:
            raise ValueError("rho_c + rho_s must not exceed 1")
        if not self.P_max > 0:
            raise ValueError("P_max must be > 0")


class BeamSet(NamedTuple):
    W: torch.Tensor
    F: torch.Tensor


def antenna_positions(y: torch.Tensor, geo: GeometryConfig) -> torch.Tensor:
    """Antenna coordinates ``(bs_x, y_n, bs_z)`` as ``(..., N, 3)``."""
    x = torch.full_like(y, geo.bs_x)
    z = torch.full_like(y, geo.bs_z)
    return torch.stack([x, y, z], dim=-1)


def distances(p: torch.Tensor, y: torch.Tensor, geo: GeometryConfig) -> torch.Tensor:
    """Distances from nodes ``p (..., K, 3)`` to antennas ``y (..., N)``.

    Returns ``(..., K, N)``; a single node ``p (3,)`` gives ``(..., N)``.
    """
    p = p.to(torch.promote_types(p.dtype, y.dtype))
    single = p.dim() == 1
    if single:
        p = p.unsqueeze(-2)
    yy = y.unsqueeze(-2)
    dx = p[..., 0:1] - geo.bs_x
    dy = p[..., 1:2] - yy
    dz = p[..., 2:3] - geo.bs_z
    d = torch.sqrt(dx * dx + dy * dy + dz * dz)
    if bool((d.detach() <= SINGULAR_DISTANCE).any()):
        raise SingularChannelError("node within 1e-6 m of an antenna")
    return d.squeeze(-2) if single else d


def near_field_channel(p: torch.Tensor, y: torch.Tensor, cfg: ChannelConfig,
                       geo: GeometryConfig) -> torch.Tensor:
    """Spherical-wave channel ``alpha * exp(-j 2 pi d / lambda) / d``."""
    d = distances(p, y, geo)
    phase = (-2.0 * math.pi / cfg.wavelength) * d
    return cfg.alpha * torch.polar(1.0 / d, phase)


def node_positions(user_positions: torch.Tensor, target_positions: torch.Tensor) -> torch.Tensor:
    return torch.cat([user_positions, target_positions], dim=-2)


def complex_to_csi(h: torch.Tensor) -> torch.Tensor:
    """Complex ``(..., K, N)`` -> real ``(..., K, N, 2)``."""
    return torch.view_as_real(h.resolve_conj()).clone()


def csi_to_complex(H: torch.Tensor) -> torch.Tensor:
    """Real ``(..., K, N, 2)`` -> complex ``(..., K, N)``."""
    return torch.complex(H[..., 0], H[..., 1])


def build_csi_tensor(user_positions: torch.Tensor, target_positions: torch.Tensor,
                     grid: torch.Tensor, cfg: ChannelConfig, geo: GeometryConfig) -> torch.Tensor:
    """CSI snapshot on the reference grid, shape ``(..., K_c + K_s, N, 2)``."""
    p = node_positions(user_positions, target_positions)
    return complex_to_csi(near_field_channel(p, grid, cfg, geo))


def apply_tx_mask(beams: BeamSet, masks: AntennaMasks) -> BeamSet:
    tx = masks.tx.unsqueeze(-1).to(beams.W.real.dtype)
    return BeamSet(beams.W * tx, beams.F * tx)


def _gains(channels: torch.Tensor, beams: BeamSet):
    K_c = beams.W.shape[-1]
    N = channels.shape[-1]
    if beams.W.shape[-2] != N or beams.F.shape[-2] != N:
        raise ValueError(f"beam rows {beams.W.shape[-2]}/{beams.F.shape[-2]} != N={N}")
    if channels.shape[-2] < K_c:
        raise ValueError(f"{channels.shape[-2]} channel rows for {K_c} users")
    hu = channels[..., :K_c, :]
    G = hu @ beams.W  # G[k, i] = h_k^T w_i
    S = hu @ beams.F
    return (G.real ** 2 + G.imag ** 2), (S.real ** 2 + S.imag ** 2)


def sinr_all(channels: torch.Tensor, beams: BeamSet, masks: AntennaMasks | None,
             pw: PowerConfig, cfg: ChannelConfig) -> torch.Tensor:
    """SINR of every user, shape ``(..., K_c)``.

    Rows of ``W`` and ``F`` at receive-mode antennas are zeroed first.
    """
    if masks is not None:
        beams = apply_tx_mask(beams, masks)
    g2, s2 = _gains(channels, beams)
    signal = torch.diagonal(g2, dim1=-2, dim2=-1)
    interf = g2.sum(-1) - signal
    sens = s2.sum(-1)
    return pw.rho_c * signal / (pw.rho_c * interf + pw.rho_s * sens + cfg.sigma_c2)


def sinr(k: int, channels: torch.Tensor, beams: BeamSet, masks: AntennaMasks | None,
         pw: PowerConfig, cfg: ChannelConfig) -> torch.Tensor:
    return sinr_all(channels, beams, masks, pw, cfg)[..., k]


def sum_rate(channels: torch.Tensor, beams: BeamSet, masks: AntennaMasks | None,
             pw: PowerConfig, cfg: ChannelConfig) -> torch.Tensor:
    """Sum of ``log2(1 + SINR_k)`` over users, in bits/s/Hz."""
    return torch.log2(1.0 + sinr_all(channels, beams, masks, pw, cfg)).sum(-1)


def power_used(beams: BeamSet, pw: PowerConfig) -> torch.Tensor:
    def fro2(X):
        return (X.real ** 2 + X.imag ** 2).sum(dim=(-2, -1))
    return pw.rho_c * fro2(beams.W) + pw.rho_s * fro2(beams.F)


def project_power(beams: BeamSet, pw: PowerConfig) -> BeamSet:
    """Scale both beam matrices down so the weighted budget holds."""
    used = power_used(beams, pw)
    over = used > pw.P_max
    scale = torch.sqrt(pw.P_max / torch.where(over, used, torch.ones_like(used)))
    scale = scale[..., None, None]
    o = over[..., None, None]
    return BeamSet(torch.where(o, beams.W * scale, beams.W),
                   torch.where(o, beams.F * scale, beams.F))


def scale_to_budget(beams: BeamSet, pw: PowerConfig) -> BeamSet:
    """Scale both beam matrices (up or down) so the budget binds exactly."""
    used = power_used(beams, pw)
    ok = used > 0
    scale = torch.sqrt(pw.P_max / torch.where(ok, used, torch.ones_like(used)))
    scale = torch.where(ok, scale, torch.zeros_like(scale))[..., None, None]
    return BeamSet(beams.W * scale, beams.F * scale)


def matched_beams(channels: torch.Tensor, K_c: int, masks: AntennaMasks,
                  pw: PowerConfig) -> BeamSet:
    """Unit-norm conjugate beams on the transmit aperture, scaled to budget."""
    tx = masks.tx.unsqueeze(-2).to(channels.real.dtype)
    b = torch.conj(channels) * tx
    norm = torch.linalg.vector_norm(b, dim=-1, keepdim=True)
    b = b / torch.where(norm > 0, norm, torch.ones_like(norm))
    b = b.transpose(-2, -1)
    return scale_to_budget(BeamSet(b[..., :K_c], b[..., K_c:]), pw)


def perturb_csi(H: np.ndarray, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Relative additive Gaussian CSI error.

    ``H + delta * (||H||_F / sqrt(count)) * G`` with ``G`` standard normal,
    normalised per sample over the trailing ``(K, N, 2)`` axes.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    H = np.asarray(H)
    if delta == 0:
        return H.copy()
    axes = tuple(range(H.ndim - 3, H.ndim))
    count = np.prod([H.shape[a] for a in axes])
    rms = np.sqrt((H.astype(np.float64) ** 2).sum(axis=axes, keepdims=True) / count)
    G = rng.standard_normal(H.shape)
    return (H + delta * rms * G).astype(H.dtype)

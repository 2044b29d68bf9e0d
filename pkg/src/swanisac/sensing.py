"""Position Fisher information and CRLB for a sensing target.

The echo mean on the receive aperture is ``mu = beta * a_rx * (a_tx^T u)``
where ``a`` is the near-field steering vector, ``a_tx``/``a_rx`` are its
transmit/receive-masked copies and ``u`` is the effective sensing weight.
The FIM is ``(2 / sigma_r^2) Re{D^H D}`` with ``D = d mu / d eta``.

Only in-plane coordinates ``(x, y)`` are estimated by default; with a
linear aperture the full 3-D FIM is rank deficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .geometry import AntennaMasks, GeometryConfig
from .physics import (BeamSet, ChannelConfig, PowerConfig, SingularChannelError,
                      SINGULAR_DISTANCE, apply_tx_mask)

_ETA_AXES = {"xy": (0, 1), "xyz": (0, 1, 2)}


@dataclass(frozen=True)
class SensingConfig:
    beta: complex = 1.0
    sigma_r2: float = 1.0
    eta_dim: str = "xy"
    eps_crlb: float = 1e-4
    pinv_tol: float = 1e-10
    # Tikhonov term for the differentiable CRLB used in training
    ridge: float = 1e-3

    def __post_init__(self):
        if not self.sigma_r2 > 0:
            raise ValueError("sigma_r2 must be > 0")
        if not self.eps_crlb > 0:
            raise ValueError("eps_crlb must be > 0")
        if self.eta_dim not in _ETA_AXES:
            raise ValueError(f"eta_dim must be one of {sorted(_ETA_AXES)}")

    @property
    def axes(self) -> tuple[int, ...]:
        return _ETA_AXES[self.eta_dim]


@dataclass
class FimResult:
    J: torch.Tensor
    crlb: torch.Tensor | None = None
    degenerate: torch.Tensor | bool = False


def steering_and_derivatives(p: torch.Tensor, y: torch.Tensor, cfg: ChannelConfig,
                             geo: GeometryConfig, eta_dim: str = "xy"):
    """Steering vector ``a (..., N)`` and ``da/d eta (..., N, |eta|)``."""
    axes = _ETA_AXES[eta_dim]
    p = p.to(torch.promote_types(p.dtype, y.dtype))
    diffs = torch.broadcast_tensors(p[..., 0:1] - geo.bs_x, p[..., 1:2] - y,
                                    p[..., 2:3] - geo.bs_z)
    d = torch.sqrt(diffs[0] ** 2 + diffs[1] ** 2 + diffs[2] ** 2)
    if bool((d.detach() <= SINGULAR_DISTANCE).any()):
        raise SingularChannelError("target within 1e-6 m of an antenna")
    k = 2.0 * math.pi / cfg.wavelength
    e = cfg.alpha * torch.polar(torch.ones_like(d), -k * d)
    a = e / d
    # d a_n / d d_n = alpha e^{-jkd} (-1/d^2 - jk/d)
    radial = e * torch.complex(-1.0 / d ** 2, -k / d)
    da = torch.stack([radial * (diffs[c] / d) for c in axes], dim=-1)
    return a, da


def echo_jacobian(a, da, u, masks: AntennaMasks, beta) -> torch.Tensor:
    """``d mu / d eta`` as ``(..., N, |eta|)`` via the product rule."""
    tx = masks.tx.to(a.real.dtype)
    rx = masks.rx.to(a.real.dtype)
    a_tx, a_rx = a * tx, a * rx
    s = (a_tx * u).sum(-1)                      # a_tx^T u
    ds = ((da * tx.unsqueeze(-1)) * u.unsqueeze(-1)).sum(-2)   # (d a_tx)^T u
    D = (da * rx.unsqueeze(-1)) * s[..., None, None] + a_rx.unsqueeze(-1) * ds.unsqueeze(-2)
    return beta * D


def fim_matrix(D: torch.Tensor, sigma_r2: float) -> torch.Tensor:
    G = D.conj().transpose(-2, -1) @ D
    J = (2.0 / sigma_r2) * G.real
    return 0.5 * (J + J.transpose(-2, -1))


def fim(p, y, u, masks: AntennaMasks, s_cfg: SensingConfig, c_cfg: ChannelConfig,
        geo: GeometryConfig) -> FimResult:
    """Analytic FIM of the target position.

    ``degenerate`` is set when the receive aperture is empty.
    """
    a, da = steering_and_derivatives(p, y, c_cfg, geo, s_cfg.eta_dim)
    u = u * masks.tx.to(a.real.dtype)
    D = echo_jacobian(a, da, u, masks, s_cfg.beta)
    J = fim_matrix(D, s_cfg.sigma_r2)
    empty_rx = masks.rx.detach().sum(-1) == 0
    return FimResult(J=J, degenerate=empty_rx)


def crlb_trace(res: FimResult | torch.Tensor, s_cfg: SensingConfig) -> torch.Tensor:
    """``tr(J^{-1})``; falls back to the pseudo-inverse when ill-conditioned.

    Updates ``res.crlb``/``res.degenerate`` in place when given a FimResult.
    """
    J = res.J if isinstance(res, FimResult) else res
    Jd = J.detach()
    if bool((Jd.abs().amax(dim=(-2, -1)) == 0).any()):
        raise ValueError("all-zero Fisher information matrix")
    ev = torch.linalg.eigvalsh(Jd)
    bad = ev[..., 0] < s_cfg.pinv_tol * ev[..., -1]
    eye = torch.eye(J.shape[-1], dtype=J.dtype, device=J.device)
    safe = torch.where(bad[..., None, None], eye, J)
    tr = torch.diagonal(torch.linalg.inv(safe), dim1=-2, dim2=-1).sum(-1)
    if bool(bad.any()):
        tr_p = torch.diagonal(torch.linalg.pinv(J, hermitian=True), dim1=-2, dim2=-1).sum(-1)
        tr = torch.where(bad, tr_p, tr)
    if isinstance(res, FimResult):
        res.crlb = tr
        res.degenerate = bad | torch.as_tensor(res.degenerate)
    return tr


def crlb_ridge(J: torch.Tensor, ridge: float) -> torch.Tensor:
    """Differentiable surrogate ``tr((J + mu I)^{-1})`` with ``mu = ridge * tr(J) / E``.

    The shift is relative to the FIM's own scale, so the surrogate stays close
    to the exact trace for well-conditioned ``J`` whatever its magnitude, and
    is finite for any nonzero PSD ``J``. A floor of ``1e-300`` keeps an
    all-zero ``J`` finite as well.
    """
    E = J.shape[-1]
    eye = torch.eye(E, dtype=J.dtype, device=J.device)
    tr = torch.diagonal(J, dim1=-2, dim2=-1).sum(-1)
    mu = (ridge * tr / E).clamp(min=1e-300)[..., None, None]
    return torch.diagonal(torch.linalg.inv(J + mu * eye), dim1=-2, dim2=-1).sum(-1)


def sensing_weight(beams: BeamSet, masks: AntennaMasks, pw: PowerConfig) -> torch.Tensor:
    """``sqrt(rho_s) * sum_l f_l`` restricted to transmit antennas."""
    F = apply_tx_mask(beams, masks).F
    return math.sqrt(pw.rho_s) * F.sum(-1)


def target_fims(target_positions, y, beams: BeamSet, masks: AntennaMasks,
                s_cfg: SensingConfig, c_cfg: ChannelConfig, pw: PowerConfig,
                geo: GeometryConfig) -> FimResult:
    """FIMs of all targets, ``J`` shaped ``(..., K_s, E, E)``."""
    u = sensing_weight(beams, masks, pw).unsqueeze(-2)
    m = AntennaMasks(masks.tx.unsqueeze(-2), masks.rx.unsqueeze(-2))
    return fim(target_positions, y.unsqueeze(-2), u, m, s_cfg, c_cfg, geo)


def crlb_per_target(target_positions, y, beams: BeamSet, masks: AntennaMasks,
                    s_cfg: SensingConfig, c_cfg: ChannelConfig, pw: PowerConfig,
                    geo: GeometryConfig) -> torch.Tensor:
    """Per-target CRLB trace, shape ``(..., K_s)``."""
    res = target_fims(target_positions, y, beams, masks, s_cfg, c_cfg, pw, geo)
    return crlb_trace(res, s_cfg)


def fd_fim_oracle(p, y, u, masks: AntennaMasks, s_cfg: SensingConfig, c_cfg: ChannelConfig,
                  geo: GeometryConfig, step: float = 1e-5) -> FimResult:
    """FIM from central differences of the echo mean (numpy, complex128).

    Independent of the analytic derivatives: only the channel closed form
    is evaluated, at shifted target positions.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError("step must lie in [1e-7, 1e-3] m")
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    u = np.asarray(u, dtype=np.complex128)
    tx = np.asarray(masks.tx, dtype=np.float64)
    rx = np.asarray(masks.rx, dtype=np.float64)
    u = u * tx
    ant = np.stack([np.full_like(y, geo.bs_x), y, np.full_like(y, geo.bs_z)], axis=-1)
    k = 2.0 * np.pi / c_cfg.wavelength

    def mu(q):
        d = np.linalg.norm(q - ant, axis=-1)
        if np.any(d <= SINGULAR_DISTANCE):
            raise SingularChannelError("target within 1e-6 m of an antenna")
        a = c_cfg.alpha * np.exp(-1j * k * d) / d
        return s_cfg.beta * (a * rx) * np.sum(a * tx * u)

    cols = []
    for ax in s_cfg.axes:
        e = np.zeros(3)
        e[ax] = step
        cols.append((mu(p + e) - mu(p - e)) / (2 * step))
    D = np.stack(cols, axis=-1)
    J = (2.0 / s_cfg.sigma_r2) * np.real(D.conj().T @ D)
    J = 0.5 * (J + J.T)
    return FimResult(J=torch.from_numpy(J), degenerate=bool(rx.sum() == 0))

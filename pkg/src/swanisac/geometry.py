"""Segmented waveguide geometry.

Antenna coordinates live on a waveguide of length ``L`` that is split into
``M`` equal segments. Segment ``m`` (1-based) covers ``[(m-1)L/M, mL/M)``;
the last segment is closed at ``L``. Each segment is either transmitting
(``chi_m = 1``) or receiving (``chi_m = 0``).

All tensor functions accept arbitrary leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import torch


class InfeasibleGeometryError(ValueError):
    """Raised when ``N * d_min > L`` so no feasible deployment exists."""


@dataclass(frozen=True)
class GeometryConfig:
    M: int = 4
    N: int = 40
    L: float = 50.0
    d_min: float = 0.0625
    bs_x: float = 0.0
    bs_z: float = 3.0

    def __post_init__(self):
        if self.M < 2:
            raise ValueError(f"segment count M must be >= 2, got {self.M}")
        if self.N < 1:
            raise ValueError(f"antenna count N must be >= 1, got {self.N}")
        if not self.L > 0:
            raise ValueError(f"waveguide length L must be > 0, got {self.L}")
        if self.d_min < 0:
            raise ValueError(f"d_min must be >= 0, got {self.d_min}")
        if self.N * self.d_min > self.L:
            raise InfeasibleGeometryError(
                f"N*d_min = {self.N * self.d_min} exceeds L = {self.L}")

    def boundaries(self, dtype=torch.float64) -> torch.Tensor:
        """Interior segment boundaries ``mL/M`` for ``m = 1..M-1``."""
        return torch.tensor([m * self.L / self.M for m in range(1, self.M)], dtype=dtype)

    def reference_grid(self, dtype=torch.float64) -> torch.Tensor:
        """Uniform cell-centred grid of ``N`` points on ``[0, L]``."""
        n = torch.arange(self.N, dtype=dtype)
        return (n + 0.5) * self.L / self.N


class NonFiniteDeploymentError(ValueError):
    """Raised when deployment coordinates contain NaN or infinity."""


class AntennaMasks(NamedTuple):
    tx: torch.Tensor
    rx: torch.Tensor


def segment_interval(m: int, cfg: GeometryConfig) -> tuple[float, float]:
    """Return ``(lo, hi)`` of segment ``m`` (1-based).

    The interval is half-open ``[lo, hi)`` except for ``m == M`` which is
    closed at ``L``.
    """
    if not 1 <= m <= cfg.M:
        raise IndexError(f"segment index {m} outside 1..{cfg.M}")
    return (m - 1) * cfg.L / cfg.M, m * cfg.L / cfg.M


def segment_of(y, cfg: GeometryConfig):
    """1-based segment index containing each coordinate of ``y``.

    Accepts a python float (returns ``int``) or a tensor (returns a long
    tensor of the same shape).
    """
    scalar = not isinstance(y, torch.Tensor)
    yt = torch.as_tensor(y, dtype=torch.float64)
    if bool(((yt < 0) | (yt > cfg.L) | ~torch.isfinite(yt)).any()):
        raise ValueError(f"coordinate outside [0, {cfg.L}]")
    # right=True: a coordinate on a boundary belongs to the segment on its right
    idx = torch.bucketize(yt.detach(), cfg.boundaries(yt.dtype), right=True) + 1
    return int(idx) if scalar else idx


def is_feasible(y: torch.Tensor, cfg: GeometryConfig, tol: float = 1e-9) -> torch.Tensor:
    """Range and spacing predicates on a deployment (any order).

    Returns a boolean tensor over the leading batch dimensions.
    """
    ys, _ = torch.sort(y, dim=-1)
    in_range = ((ys >= -tol) & (ys <= cfg.L + tol)).all(dim=-1)
    if ys.shape[-1] < 2:
        return in_range
    gaps = ys[..., 1:] - ys[..., :-1]
    return in_range & (gaps >= cfg.d_min - tol).all(dim=-1)


def project_deployment(y_raw: torch.Tensor, cfg: GeometryConfig) -> torch.Tensor:
    """Project raw coordinates onto the sorted feasible set.

    Clip to ``[0, L]`` and sort; a point that is already feasible is
    returned as is. Otherwise a forward pass pushes each coordinate to at
    least ``d_min`` past its predecessor, and a reverse pass anchored at
    ``L`` pulls the tail back inside the waveguide. Both passes are running
    max/min operations so the map is piecewise linear and autograd-friendly.
    """
    if cfg.N * cfg.d_min > cfg.L:
        raise InfeasibleGeometryError(
            f"N*d_min = {cfg.N * cfg.d_min} exceeds L = {cfg.L}")
    if not bool(torch.isfinite(y_raw).all()):
        raise NonFiniteDeploymentError("non-finite deployment coordinates")
    ys, _ = torch.sort(y_raw.clamp(0.0, cfg.L), dim=-1)
    n = ys.shape[-1]
    if n < 2:
        return ys
    offs = torch.arange(n, dtype=ys.dtype, device=ys.device) * cfg.d_min
    # forward pass in shifted coordinates: y_i <- max(y_{i-1} + d, y_i)
    fwd = torch.cummax(ys - offs, dim=-1).values
    # reverse pass: y_i <- min(y_{i+1} - d, y_i), last clamped to L
    top = cfg.L - (n - 1) * cfg.d_min
    rev = torch.flip(torch.cummin(torch.flip(fwd.clamp(max=top), [-1]), dim=-1).values, [-1])
    out = (rev + offs).clamp(0.0, cfg.L)
    feasible = is_feasible(ys, cfg, tol=1e-12)
    return torch.where(feasible.unsqueeze(-1), ys, out)


def partition_from_logits(pi: torch.Tensor, K_tx: int) -> torch.Tensor:
    """Hard top-``K_tx`` partition; ties go to the lower segment index."""
    M = pi.shape[-1]
    if not 1 <= K_tx <= M - 1:
        raise ValueError(f"K_tx must lie in 1..{M - 1}, got {K_tx}")
    order = torch.sort(-pi.detach(), dim=-1, stable=True).indices
    dtype = pi.dtype if pi.is_floating_point() else torch.float64
    chi = torch.zeros(pi.shape, dtype=dtype, device=pi.device)
    chi.scatter_(-1, order[..., :K_tx], 1.0)
    return chi


def partition_straight_through(pi: torch.Tensor, K_tx: int) -> torch.Tensor:
    """Hard top-K forward value with a softmax surrogate gradient."""
    hard = partition_from_logits(pi, K_tx)
    soft = torch.softmax(pi, dim=-1)
    return hard + (soft - soft.detach())


def validate_partition(chi, K_c: int, K_s: int, M: int) -> bool:
    """``K_c + K_s <= sum(chi) <= M - 1`` with binary entries."""
    c = torch.as_tensor(chi)
    if c.shape[-1] != M or not bool(((c == 0) | (c == 1)).all()):
        return False
    tx = int(c.sum())
    return K_c + K_s <= tx <= M - 1


def tx_count(K_c: int, K_s: int, M: int) -> int:
    """Transmit-segment count used by the model; capped at ``M - 1``."""
    return max(1, min(K_c + K_s, M - 1))


def antenna_masks(y: torch.Tensor, chi: torch.Tensor, cfg: GeometryConfig) -> AntennaMasks:
    """Per-antenna transmit/receive masks from the segment partition.

    ``chi`` may carry a straight-through gradient; the masks inherit it.
    """
    seg = segment_of(y.detach().clamp(0.0, cfg.L), cfg) - 1
    chi_b = chi.expand(*seg.shape[:-1], chi.shape[-1]) if chi.dim() < seg.dim() else chi
    tx = torch.gather(chi_b, -1, seg)
    return AntennaMasks(tx=tx, rx=1.0 - tx)


def enumerate_partitions(K_c: int, K_s: int, M: int) -> torch.Tensor:
    """All valid partitions as a ``(P, M)`` float tensor, lexicographic order.

    When ``K_c + K_s > M - 1`` no partition satisfies the strict bound; the
    lower bound then relaxes to ``M - 1`` (see :func:`tx_count`).
    """
    rows = []
    lo = tx_count(K_c, K_s, M)
    for code in range(2 ** M):
        chi = [(code >> (M - 1 - b)) & 1 for b in range(M)]
        if lo <= sum(chi) <= M - 1:
            rows.append(chi)
    if not rows:
        raise ValueError(f"no valid partition for K_c={K_c}, K_s={K_s}, M={M}")
    rows.sort(reverse=True)
    return torch.tensor(rows, dtype=torch.float64)

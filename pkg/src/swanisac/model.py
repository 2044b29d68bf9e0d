"""Self-graph encoder, adapter backbone and the two prediction heads.

Data flow for one batch of CSI tensors ``H (B, K, N, 2)``::

    node_features, adjacency -> SelfGraphEncoder -> z_g
    tokenize(H) -> Backbone(tokens, z_g) -> H_llm (B, N, d)
    mean over tokens -> DeploymentHead -> (y_raw, pi)
                     -> BeamHead       -> (W, F)

The backbone is a pre-norm transformer encoder in which every attention and
feed-forward projection is a frozen base matrix plus a low-rank update
``(alpha / r) * B @ A`` with ``B`` initialised to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ModelConfig
from .geometry import (AntennaMasks, GeometryConfig, antenna_masks, partition_from_logits,
                       partition_straight_through, project_deployment, tx_count)
from .physics import BeamSet, PowerConfig, apply_tx_mask, csi_to_complex, project_power

TOKEN_DIM = 12


class ResetRequiredError(ValueError):
    """Beam head output size does not match the requested node counts."""


# --------------------------------------------------------------------------- features

def node_features(H: torch.Tensor, K_c: int) -> torch.Tensor:
    """``[||h_i||, angle(sum_n h_in), role]`` per node, shape ``(..., K, 3)``.

    The angle of an all-zero sum is 0.
    """
    h = csi_to_complex(H)
    norm = torch.linalg.vector_norm(h, dim=-1)
    s = h.sum(-1)
    ang = torch.atan2(s.imag, s.real)
    role = torch.zeros_like(norm)
    role[..., K_c:] = 1.0
    return torch.stack([norm, ang, role], dim=-1)


def order_free_sum(terms: torch.Tensor, dim: int) -> torch.Tensor:
    """Sum along ``dim`` in sorted order.

    Floating-point addition is not associative, so a plain sum of permuted
    terms can differ in the last bit. Sorting first makes the result depend
    only on the multiset of terms, which keeps node-permutation symmetry
    exact rather than approximate.
    """
    return torch.sort(terms, dim=dim).values.sum(dim)


def adjacency(H: torch.Tensor, eps: float) -> torch.Tensor:
    """Row-normalised CSI cosine-similarity graph, self loops included."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    h = csi_to_complex(H)
    norm = torch.linalg.vector_norm(h, dim=-1)
    gram = (h.conj() @ h.transpose(-2, -1)).abs()
    raw = gram / (norm.unsqueeze(-1) * norm.unsqueeze(-2) + eps)
    rows = order_free_sum(raw, -1).unsqueeze(-1)
    if bool((rows == 0).any()):
        raise ValueError("all-zero channel row; adjacency undefined")
    return raw / rows


def tokenize(H: torch.Tensor, K_c: int) -> torch.Tensor:
    """Per-antenna tokens of symmetric aggregates, ``(..., N, 12)``.

    For users then targets: mean, max and 2-norm over rows of the real part,
    then the same for the imaginary part. An empty role block is zero.
    """
    blocks = []
    for rows in (H[..., :K_c, :, :], H[..., K_c:, :, :]):
        if rows.shape[-3] == 0:
            blocks.append(H.new_zeros(*H.shape[:-3], H.shape[-2], 6))
            continue
        for part in (rows[..., 0], rows[..., 1]):
            blocks.append(torch.stack([part.mean(-2), part.amax(-2),
                                       torch.linalg.vector_norm(part, dim=-2)], dim=-1))
    return torch.cat(blocks, dim=-1)


# --------------------------------------------------------------------------- graph

class SelfGraphEncoder(nn.Module):
    def __init__(self, d_g: int = 64, layers: int = 2, in_dim: int = 3):
        super().__init__()
        self.w_in = nn.Linear(in_dim, d_g, bias=False)
        self.w_self = nn.ModuleList(nn.Linear(d_g, d_g) for _ in range(layers))
        self.w_nbr = nn.ModuleList(nn.Linear(d_g, d_g, bias=False) for _ in range(layers))

    def forward(self, X: torch.Tensor, A: torch.Tensor):
        h = self.w_in(X)
        for w1, w2 in zip(self.w_self, self.w_nbr):
            # (A h)_i as an order-free sum over neighbours j
            agg = order_free_sum(A.unsqueeze(-1) * h.unsqueeze(-3), dim=-2)
            h = torch.relu(w1(h) + w2(agg))
        return h, h.mean(dim=-2)


def graph_forward(X, A, encoder: SelfGraphEncoder):
    return encoder(X, A)


# --------------------------------------------------------------------------- backbone

class LoRALinear(nn.Module):
    """Linear layer with a frozen-able base and a zero-initialised low-rank update."""

    def __init__(self, d_in: int, d_out: int, rank: int, alpha: float, dropout: float = 0.0):
        super().__init__()
        if rank > min(d_in, d_out):
            raise ValueError(f"adapter rank {rank} exceeds layer width {min(d_in, d_out)}")
        self.base = nn.Linear(d_in, d_out)
        self.lora_A = nn.Parameter(torch.empty(rank, d_in))
        self.lora_B = nn.Parameter(torch.zeros(d_out, rank))
        nn.init.kaiming_uniform_(self.lora_A, a=math.sqrt(5))
        self.scale = alpha / rank
        self.dropout = nn.Dropout(dropout)
        self.adapter_enabled = True

    def forward(self, x):
        out = self.base(x)
        if not self.adapter_enabled:
            return out
        return out + self.scale * ((self.dropout(x) @ self.lora_A.t()) @ self.lora_B.t())


class Block(nn.Module):
    def __init__(self, d: int, heads: int, rank: int, alpha: float, dropout: float):
        super().__init__()
        self.heads = heads
        self.ln1 = nn.LayerNorm(d)
        self.ln2 = nn.LayerNorm(d)
        self.q, self.k, self.v, self.o = (LoRALinear(d, d, rank, alpha, dropout) for _ in range(4))
        self.ff1 = LoRALinear(d, 4 * d, rank, alpha, dropout)
        self.ff2 = LoRALinear(4 * d, d, rank, alpha, dropout)

    def attention(self, x):
        *lead, T, d = x.shape
        hd = d // self.heads

        def split(t):
            return t.reshape(*lead, T, self.heads, hd).transpose(-3, -2)
        q, k, v = split(self.q(x)), split(self.k(x)), split(self.v(x))
        w = torch.softmax((q @ k.transpose(-2, -1)) / math.sqrt(hd), dim=-1)
        return self.o((w @ v).transpose(-3, -2).reshape(*lead, T, d))

    def forward(self, x):
        x = x + self.attention(self.ln1(x))
        return x + self.ff2(F.gelu(self.ff1(self.ln2(x))))


class Backbone(nn.Module):
    def __init__(self, cfg: ModelConfig, n_tokens: int):
        super().__init__()
        d = cfg.hidden_dim
        if cfg.lora_rank > d:
            raise ValueError("adapter rank exceeds hidden dimension")
        self.tok_proj = nn.Linear(TOKEN_DIM, d)
        self.tok_norm = nn.LayerNorm(d)
        self.cond = nn.Linear(cfg.d_g, d, bias=False)
        self.pos = nn.Parameter(0.02 * torch.randn(n_tokens, d))
        self.blocks = nn.ModuleList(Block(d, cfg.heads, cfg.lora_rank, cfg.lora_alpha,
                                          cfg.lora_dropout) for _ in range(cfg.layers))
        self.final_norm = nn.LayerNorm(d)

    def embed(self, tokens, z_g):
        x = self.tok_norm(self.tok_proj(tokens))
        if z_g is not None:
            x = x + self.cond(z_g).unsqueeze(-2)
        return x

    def forward(self, tokens, z_g=None):
        x = self.embed(tokens, z_g) + self.pos
        for blk in self.blocks:
            x = blk(x)
        return self.final_norm(x)

    def adapters(self):
        return [m for m in self.modules() if isinstance(m, LoRALinear)]

    def set_adapters(self, enabled: bool):
        for m in self.adapters():
            m.adapter_enabled = enabled


def backbone_forward(tokens, z_g, backbone: Backbone):
    return backbone(tokens, z_g)


# --------------------------------------------------------------------------- heads

def uniform_logits(N: int) -> torch.Tensor:
    """Raw deployment values whose ``L * sigmoid`` is the uniform cell-centred grid."""
    return torch.logit((torch.arange(N, dtype=torch.float64) + 0.5) / N).float()


class DeploymentHead(nn.Module):
    """Pooled features -> ``N`` raw deployments and ``M`` partition logits.

    The deployment bias starts at the uniform grid, so an untrained head
    places one antenna per grid cell and every segment has antennas.
    """

    def __init__(self, d: int, hidden: int, N: int, M: int, proj: nn.Module | None = None):
        super().__init__()
        self.N, self.M = N, M
        self.proj = proj if proj is not None else nn.Sequential(nn.Linear(d, hidden), nn.GELU())
        self.out = nn.Linear(hidden, N + M)
        with torch.no_grad():
            self.out.bias[:N] = uniform_logits(N)

    def forward(self, pooled):
        o = self.out(self.proj(pooled))
        return o[..., :self.N], o[..., self.N:]


class BeamHead(nn.Module):
    """Pooled features -> ``2 N (K_c + K_s)`` reals -> complex ``W``, ``F``.

    Output layout: ``[W_re, W_im, F_re, F_im]``, each flattened row-major
    over ``(N, K)``. A fixed gain ``sqrt(P_max)`` keeps raw outputs near the
    power budget scale.
    """

    def __init__(self, d: int, hidden: int, N: int, K_c: int, K_s: int, gain: float = 1.0,
                 proj: nn.Module | None = None):
        super().__init__()
        self.N, self.K_c, self.K_s, self.gain = N, K_c, K_s, gain
        self.proj = proj if proj is not None else nn.Sequential(nn.Linear(d, hidden), nn.GELU())
        self.out = nn.Linear(hidden, 2 * N * (K_c + K_s))

    def forward(self, pooled) -> BeamSet:
        return reassemble_beams(self.gain * self.out(self.proj(pooled)), self.N, self.K_c, self.K_s)


def reassemble_beams(raw: torch.Tensor, N: int, K_c: int, K_s: int) -> BeamSet:
    if raw.shape[-1] != 2 * N * (K_c + K_s):
        raise ResetRequiredError(
            f"beam output has {raw.shape[-1]} values, expected {2 * N * (K_c + K_s)} "
            f"for N={N}, K_c={K_c}, K_s={K_s}; reset the beam head")
    lead = raw.shape[:-1]
    nw = N * K_c
    W_re, W_im = raw[..., :nw], raw[..., nw:2 * nw]
    F_re, F_im = raw[..., 2 * nw:2 * nw + N * K_s], raw[..., 2 * nw + N * K_s:]
    W = torch.complex(W_re, W_im).reshape(*lead, N, K_c)
    Fm = torch.complex(F_re, F_im).reshape(*lead, N, K_s)
    return BeamSet(W, Fm)


class MLPBaseline(nn.Module):
    """Flattened CSI through three hidden layers to all raw outputs."""

    def __init__(self, K: int, N: int, M: int, hidden: int, out_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(K * N * 2, hidden), nn.GELU(),
            nn.Linear(hidden, hidden), nn.GELU(),
            nn.Linear(hidden, hidden), nn.GELU())
        self.dep = nn.Linear(hidden, N + M)
        self.bf = nn.Linear(hidden, out_dim)
        with torch.no_grad():
            self.dep.bias[:N] = uniform_logits(N)

    def forward(self, H):
        return self.net(H.flatten(-3))


# --------------------------------------------------------------------------- full model

@dataclass
class Prediction:
    y_pre: torch.Tensor          # L * sigmoid(raw), before projection
    y: torch.Tensor              # projected, sorted
    pi: torch.Tensor
    chi: torch.Tensor            # hard partition (carries surrogate grad if enabled)
    masks: AntennaMasks
    beams: BeamSet               # masked and power-projected
    hidden: torch.Tensor | None = None


class SwanModel(nn.Module):
    """Joint deployment / partition / beamforming predictor.

    ``variant`` selects the benchmark family: ``full`` (graph + backbone +
    split heads), ``shared_head``, ``transformer_no_graph`` or ``mlp``.
    """

    def __init__(self, cfg: ModelConfig, geo: GeometryConfig, power: PowerConfig,
                 K_c: int, K_s: int):
        super().__init__()
        self.cfg, self.geo, self.power = cfg, geo, power
        self.K_c, self.K_s = K_c, K_s
        N, M, d, h = geo.N, geo.M, cfg.hidden_dim, cfg.head_dim
        gain = math.sqrt(power.P_max)
        self.variant = cfg.variant
        if cfg.variant == "mlp":
            self.mlp = MLPBaseline(K_c + K_s, N, M, cfg.mlp_hidden, 2 * N * (K_c + K_s))
            self.beam_gain = gain
            return
        if cfg.variant != "transformer_no_graph":
            self.graph = SelfGraphEncoder(cfg.d_g, cfg.graph_layers)
        self.backbone = Backbone(cfg, N)
        if cfg.variant == "shared_head":
            shared = nn.Sequential(nn.Linear(d, h), nn.GELU())
            self.dep_head = DeploymentHead(d, h, N, M, proj=shared)
            self.beam_head = BeamHead(d, h, N, K_c, K_s, gain, proj=shared)
        else:
            self.dep_head = DeploymentHead(d, h, N, M)
            self.beam_head = BeamHead(d, h, N, K_c, K_s, gain)

    # -- pieces -------------------------------------------------------------
    def graph_embedding(self, H, K_c):
        if not hasattr(self, "graph"):
            return None
        X = node_features(H, K_c)
        A = adjacency(H, self.cfg.adj_eps)
        return self.graph(X, A)[1]

    def hidden(self, H, K_c, z_g_override=None):
        z_g = self.graph_embedding(H, K_c) if z_g_override is None else z_g_override
        return self.backbone(tokenize(H, K_c), z_g)

    def pooled(self, H, K_c):
        return self.hidden(H, K_c).mean(dim=-2)

    def deployment(self, pooled_or_mlp):
        return self.dep_head(pooled_or_mlp)

    def reset_beam_head(self, K_c: int, K_s: int, generator: torch.Generator | None = None):
        """Replace the beam head's output map for new node counts."""
        self.K_c, self.K_s = K_c, K_s
        N = self.geo.N
        if self.variant == "mlp":
            old = self.mlp.bf
            self.mlp.bf = nn.Linear(old.in_features, 2 * N * (K_c + K_s)).to(old.weight.dtype)
            return
        head = self.beam_head
        new = BeamHead(self.cfg.hidden_dim, self.cfg.head_dim, N, K_c, K_s, head.gain,
                       proj=head.proj if self.variant == "shared_head" else None)
        self.beam_head = new.to(next(head.parameters()).dtype)

    # -- forward ------------------------------------------------------------
    def forward(self, H: torch.Tensor, K_c: int | None = None, K_s: int | None = None,
                straight_through: bool = True, z_g_override=None) -> Prediction:
        K_c = self.K_c if K_c is None else K_c
        K_s = H.shape[-3] - K_c if K_s is None else K_s
        if K_c != self.K_c or K_s != self.K_s:
            raise ResetRequiredError(
                f"beam head sized for K_c={self.K_c}, K_s={self.K_s}; got {K_c}, {K_s}")
        geo = self.geo
        if self.variant == "mlp":
            if H.shape[-3] * H.shape[-2] * 2 != self.mlp.net[0].in_features:
                raise ResetRequiredError("mlp input size does not match node count")
            z = self.mlp(H)
            o = self.mlp.dep(z)
            y_raw, pi = o[..., :geo.N], o[..., geo.N:]
            beams = reassemble_beams(self.beam_gain * self.mlp.bf(z), geo.N, K_c, K_s)
            hidden = None
        else:
            hidden = self.hidden(H, K_c, z_g_override)
            pooled = hidden.mean(dim=-2)
            y_raw, pi = self.dep_head(pooled)
            beams = self.beam_head(pooled)
        return self.finish(y_raw, pi, beams, K_c, K_s, straight_through, hidden)

    def finish(self, y_raw, pi, beams, K_c, K_s, straight_through=True, hidden=None):
        geo = self.geo
        y_pre = geo.L * torch.sigmoid(y_raw)
        y = project_deployment(y_pre, geo)
        k_tx = tx_count(K_c, K_s, geo.M)
        chi = partition_straight_through(pi, k_tx) if straight_through else \
            partition_from_logits(pi, k_tx)
        masks = antenna_masks(y, chi, geo)
        beams = project_power(apply_tx_mask(beams, masks), self.power)
        return Prediction(y_pre=y_pre, y=y, pi=pi, chi=chi, masks=masks, beams=beams,
                          hidden=hidden)

    # -- parameter groups ----------------------------------------------------
    def blocks(self) -> dict[str, list[tuple[str, nn.Parameter]]]:
        """Named parameter groups used for freezing, audits and gradient checks."""
        groups: dict[str, list] = {}
        for name, p in self.named_parameters():
            if name.startswith("mlp.bf"):
                g = "beam_head"
            elif name.startswith("mlp.dep"):
                g = "dep_head"
            elif name.startswith("mlp"):
                g = "mlp"
            elif name.startswith("graph"):
                g = "graph"
            elif name.startswith("backbone") and ".lora_" in name:
                g = "adapters"
            elif name.startswith("backbone.blocks") and ".base." in name:
                g = "backbone_base"
            elif name.startswith("backbone"):
                g = "backbone_io"
            elif name.startswith("beam_head.proj") and self.variant == "shared_head":
                g = "dep_head"
            elif name.startswith("beam_head"):
                g = "beam_head"
            else:
                g = "dep_head"
            groups.setdefault(g, []).append((name, p))
        return groups

    def freeze_base(self):
        """Freeze the backbone base projections; adapters stay trainable."""
        for _, p in self.blocks().get("backbone_base", []):
            p.requires_grad_(False)

    def freeze_all_but_beam_head(self):
        for g, params in self.blocks().items():
            for _, p in params:
                p.requires_grad_(g == "beam_head")

    def count_trainable(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)

    def count_group(self, group: str) -> int:
        return sum(p.numel() for _, p in self.blocks().get(group, []))


def deployment_head(H_llm: torch.Tensor, model: SwanModel, K_tx: int):
    """``(y, pi, chi)`` from a hidden sequence via the model's deployment head."""
    y_raw, pi = model.dep_head(H_llm.mean(dim=-2))
    y = project_deployment(model.geo.L * torch.sigmoid(y_raw), model.geo)
    return y, pi, partition_from_logits(pi, K_tx)


def beamforming_head(H_llm: torch.Tensor, model: SwanModel, K_c: int, K_s: int,
                     masks: AntennaMasks | None = None) -> BeamSet:
    """Beams from a hidden sequence; masked and power-projected if ``masks`` given."""
    head = model.beam_head
    if (head.K_c, head.K_s) != (K_c, K_s):
        raise ResetRequiredError(
            f"beam head sized for K_c={head.K_c}, K_s={head.K_s}; got {K_c}, {K_s}")
    beams = head(H_llm.mean(dim=-2))
    if masks is not None:
        beams = apply_tx_mask(beams, masks)
    return project_power(beams, model.power)


def baseline_forward(H, model: SwanModel, variant: str | None = None, K_c: int | None = None):
    """Forward pass for a benchmark variant.

    ``transformer_no_graph`` on a full model runs it with ``z_g = 0``.
    """
    v = variant or model.variant
    if v not in ("mlp", "transformer_no_graph", "shared_head", "full"):
        raise ValueError(f"unknown variant {v!r}")
    if v == "transformer_no_graph" and model.variant == "full":
        K_c = model.K_c if K_c is None else K_c
        zero = H.new_zeros(*H.shape[:-3], model.cfg.d_g)
        return model(H, K_c, z_g_override=zero)
    if v != model.variant:
        raise ValueError(f"model variant {model.variant!r} cannot run as {v!r}")
    return model(H, K_c)

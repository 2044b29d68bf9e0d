"""Scenario sampling, reference labels, dataset files and splits.

Dataset file layout (all little-endian)::

    magic        5 bytes  b"SWND1"
    version      u16
    n_samples    u32
    K_c K_s N M  4 x u16
    n_train n_val n_test   3 x u32
    split_seed   u64
    config_len   u32
    config       config_len bytes, UTF-8 JSON snapshot
    records      n_samples x record

    record:
      csi        f32[(K_c+K_s) * N * 2]   row-major (node, antenna, re/im)
      y_star     f32[N]
      chi_star   u8[M]
      positions  f32[(K_c+K_s) * 3]       users first, then targets
      score      f32
      seed       u32
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import RegionConfig, RunConfig, to_dict
from .geometry import (AntennaMasks, GeometryConfig, enumerate_partitions, is_feasible,
                       project_deployment, segment_of)
from .physics import build_csi_tensor, matched_beams, near_field_channel, sum_rate
from .sensing import echo_jacobian, fim_matrix, sensing_weight, steering_and_derivatives

MAGIC = b"SWND1"
VERSION = 1
_HEAD = struct.Struct("<5sHIHHHHIIIQI")
OFFSETS = (0.0, 0.25, -0.25, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0)


class DatasetFormatError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


@dataclass
class Scenario:
    user_positions: np.ndarray
    target_positions: np.ndarray
    seed: int = 0

    @property
    def K_c(self) -> int:
        return len(self.user_positions)

    @property
    def K_s(self) -> int:
        return len(self.target_positions)

    def positions(self) -> np.ndarray:
        return np.concatenate([self.user_positions, self.target_positions], axis=0)


@dataclass
class LabeledSample:
    scenario: Scenario
    csi: np.ndarray
    y_star: np.ndarray
    chi_star: np.ndarray
    oracle_score: float


def sample_scenario(region: RegionConfig, K_c: int, K_s: int, seed: int) -> Scenario:
    """Uniform i.i.d. node positions in the region at fixed height.

    Coordinates are rounded to float32 so the stored dataset is exact.
    """
    if K_c < 1 or K_s < 1:
        raise ValueError("K_c and K_s must be >= 1")
    rng = np.random.default_rng(seed)
    K = K_c + K_s
    x = rng.uniform(*region.x_range, size=K)
    y = rng.uniform(*region.y_range, size=K)
    pos = np.stack([x, y, np.full(K, region.z)], axis=-1).astype(np.float32).astype(np.float64)
    return Scenario(pos[:K_c], pos[K_c:], seed)


def _crlb_for_score(J: torch.Tensor, tol: float) -> torch.Tensor:
    """Exact ``tr(J^-1)``; ``inf`` for singular or ill-conditioned ``J``."""
    ev = torch.linalg.eigvalsh(J)
    bad = ~(ev[..., 0] > tol * ev[..., -1].clamp(min=0)) | (ev[..., -1] <= 0)
    eye = torch.eye(J.shape[-1], dtype=J.dtype)
    tr = torch.diagonal(torch.linalg.inv(torch.where(bad[..., None, None], eye, J)),
                        dim1=-2, dim2=-1).sum(-1)
    return torch.where(bad, torch.full_like(tr, math.inf), tr)


class LabelScorer:
    """Matched-beam score of candidate deployments for one scenario.

    ``score = R_sum - w_crlb * max(0, log(max_l CRLB_l + eps) - log(eps_crlb))``
    maximised over all valid partitions.
    """

    def __init__(self, scenario: Scenario, cfg: RunConfig):
        self.cfg = cfg
        self.geo = cfg.geometry
        self.K_c = scenario.K_c
        self.pos = torch.from_numpy(scenario.positions())
        self.partitions = enumerate_partitions(scenario.K_c, scenario.K_s, self.geo.M)

    def __call__(self, Y: torch.Tensor):
        """Scores ``(C,)`` and best partition index ``(C,)`` for deployments ``Y (C, N)``."""
        cfg, geo = self.cfg, self.geo
        h = near_field_channel(self.pos, Y, cfg.channel, geo)              # (C, K, N)
        seg = segment_of(Y, geo) - 1                               # (C, N)
        tx = self.partitions[:, seg].permute(1, 0, 2)              # (C, P, N)
        masks = AntennaMasks(tx, 1.0 - tx)
        hp = h.unsqueeze(1)                                        # (C, 1, K, N)
        beams = matched_beams(hp.expand(-1, tx.shape[1], -1, -1), self.K_c, masks, cfg.power)
        rate = sum_rate(hp, beams, masks, cfg.power, cfg.channel)  # (C, P)
        crlb = self._crlb(Y, beams, masks)
        t = cfg.train
        pen = torch.clamp(torch.log(crlb + t.eps) - math.log(cfg.sensing.eps_crlb), min=0.0)
        score = rate - t.w_crlb * pen
        best = torch.argmax(score, dim=-1)
        return score.gather(-1, best[:, None]).squeeze(-1), best

    def _crlb(self, Y, beams, masks):
        s = self.cfg.sensing
        u = sensing_weight(beams, masks, self.cfg.power)           # (C, P, N)
        tgt = self.pos[self.K_c:]                                  # (K_s, 3)
        a, da = steering_and_derivatives(tgt[None, None], Y[:, None, None, :],
                                         self.cfg.channel, self.geo, s.eta_dim)
        m = AntennaMasks(masks.tx.unsqueeze(-2), masks.rx.unsqueeze(-2))
        D = echo_jacobian(a, da, u.unsqueeze(-2) * m.tx, m, s.beta)
        J = fim_matrix(D, s.sigma_r2)                              # (C, P, K_s, E, E)
        return _crlb_for_score(J, s.pinv_tol).amax(-1)


def uniform_deployment(geo: GeometryConfig, dtype=torch.float64) -> torch.Tensor:
    return geo.reference_grid(dtype)


def random_deployments(geo: GeometryConfig, count: int, rng: np.random.Generator) -> torch.Tensor:
    raw = torch.from_numpy(rng.uniform(0.0, geo.L, size=(count, geo.N)))
    return project_deployment(raw, geo)


@dataclass
class OracleResult:
    y_star: torch.Tensor
    chi_star: torch.Tensor
    score: float
    baseline_score: float
    trace: list = field(default_factory=list)


def label_oracle(scenario: Scenario, cfg: RunConfig, candidates: int | None = None,
                 passes: int | None = None) -> OracleResult:
    """Best-of-candidates deployment refined by coordinate descent.

    Candidates are the uniform grid plus ``candidates`` random feasible
    deployments drawn from the scenario seed. Each pass moves every antenna
    in turn over ``OFFSETS`` (re-projecting) and keeps strict improvements.
    """
    geo = cfg.geometry
    R = cfg.data.oracle_candidates if candidates is None else candidates
    passes = cfg.data.oracle_passes if passes is None else passes
    rng = np.random.default_rng([scenario.seed, 0x5EED])
    scorer = LabelScorer(scenario, cfg)
    cands = [uniform_deployment(geo)[None]]
    if R > 0:
        cands.append(random_deployments(geo, R, rng))
    Y = torch.cat(cands, dim=0)
    scores, parts = scorer(Y)
    baseline = float(scores[0])
    i = int(torch.argmax(scores))
    y, score, part = Y[i], float(scores[i]), int(parts[i])
    trace = [score]
    offs = torch.tensor(OFFSETS, dtype=torch.float64)
    for _ in range(passes):
        for n in range(geo.N):
            trial = y.repeat(len(OFFSETS), 1)
            trial[:, n] = trial[:, n] + offs
            trial = project_deployment(trial, geo)
            s, p = scorer(trial)
            j = int(torch.argmax(s))
            if float(s[j]) > score:
                y, score, part = trial[j], float(s[j]), int(p[j])
                trace.append(score)
    return OracleResult(y_star=y, chi_star=scorer.partitions[part], score=score,
                        baseline_score=baseline, trace=trace)


def label_scenario(scenario: Scenario, cfg: RunConfig) -> LabeledSample:
    geo = cfg.geometry
    res = label_oracle(scenario, cfg)
    if not res.score >= res.baseline_score:
        raise AssertionError("oracle score below uniform baseline")
    grid = geo.reference_grid()
    csi = build_csi_tensor(torch.from_numpy(scenario.user_positions),
                           torch.from_numpy(scenario.target_positions), grid, cfg.channel, geo)
    y32 = res.y_star.numpy().astype(np.float32)
    if not bool(is_feasible(torch.from_numpy(y32.astype(np.float64)), geo, tol=1e-5)):
        raise AssertionError("label deployment infeasible after float32 rounding")
    return LabeledSample(scenario=scenario, csi=csi.numpy().astype(np.float32), y_star=y32,
                         chi_star=res.chi_star.numpy().astype(np.uint8),
                         oracle_score=float(np.float32(res.score)))


@dataclass
class Dataset:
    """Column-oriented labelled dataset."""
    csi: np.ndarray          # (S, K, N, 2) float32
    y_star: np.ndarray       # (S, N) float32
    chi_star: np.ndarray     # (S, M) uint8
    positions: np.ndarray    # (S, K, 3) float32
    score: np.ndarray        # (S,) float32
    seeds: np.ndarray        # (S,) uint32
    K_c: int
    K_s: int
    config: dict = field(default_factory=dict)
    split_sizes: tuple[int, int, int] = (0, 0, 0)
    split_seed: int = 0

    def __len__(self) -> int:
        return len(self.score)

    @property
    def N(self) -> int:
        return self.csi.shape[2]

    @property
    def M(self) -> int:
        return self.chi_star.shape[1]

    def __getitem__(self, i: int) -> LabeledSample:
        pos = self.positions[i].astype(np.float64)
        sc = Scenario(pos[:self.K_c], pos[self.K_c:], int(self.seeds[i]))
        return LabeledSample(sc, self.csi[i], self.y_star[i], self.chi_star[i], float(self.score[i]))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.csi[idx], self.y_star[idx], self.chi_star[idx], self.positions[idx],
                       self.score[idx], self.seeds[idx], self.K_c, self.K_s, self.config,
                       (len(idx), 0, 0), self.split_seed)

    def splits(self) -> tuple["Dataset", "Dataset", "Dataset"]:
        tr, va, te = split_dataset(len(self), split_fractions(self.split_sizes), self.split_seed,
                                   sizes=self.split_sizes)
        return self.subset(tr), self.subset(va), self.subset(te)

    @classmethod
    def from_samples(cls, samples: list[LabeledSample], config: dict | None = None,
                     split_sizes=(0, 0, 0), split_seed: int = 0) -> "Dataset":
        if not samples:
            raise ValueError("empty sample list")
        s0 = samples[0].scenario
        return cls(
            csi=np.stack([s.csi for s in samples]).astype(np.float32),
            y_star=np.stack([s.y_star for s in samples]).astype(np.float32),
            chi_star=np.stack([s.chi_star for s in samples]).astype(np.uint8),
            positions=np.stack([s.scenario.positions() for s in samples]).astype(np.float32),
            score=np.array([s.oracle_score for s in samples], dtype=np.float32),
            seeds=np.array([s.scenario.seed for s in samples], dtype=np.uint32),
            K_c=s0.K_c, K_s=s0.K_s, config=dict(config or {}),
            split_sizes=tuple(split_sizes), split_seed=split_seed)


def sample_seed(root: int, i: int) -> int:
    return (root * 1_000_003 + i) % 2 ** 32


def generate_dataset(cfg: RunConfig, num_samples: int | None = None, progress=None) -> Dataset:
    """Sample and label ``num_samples`` scenarios from ``cfg.data.seed``."""
    d = cfg.data
    n = d.num_samples if num_samples is None else num_samples
    samples = []
    for i in range(n):
        sc = sample_scenario(d.region, d.K_c, d.K_s, sample_seed(d.seed, i))
        samples.append(label_scenario(sc, cfg))
        if progress is not None:
            progress(i + 1, n)
    tr, va, te = split_dataset(n, d.split, d.seed)
    snap = to_dict(cfg)
    snap["data"]["num_samples"] = n
    return Dataset.from_samples(samples, config=snap, split_sizes=(len(tr), len(va), len(te)),
                                split_seed=d.seed)


def split_fractions(sizes) -> tuple[float, float, float]:
    n = sum(sizes)
    return tuple(s / n for s in sizes) if n else (1.0, 0.0, 0.0)


def split_dataset(n: int, fractions, seed: int, sizes=None) -> tuple[list, list, list]:
    """Deterministic shuffled split; val/test sizes round down."""
    if n < 3:
        raise ValueError("need at least 3 samples to split")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    if sizes is not None and sum(sizes) == n:
        n_val, n_test = sizes[1], sizes[2]
    else:
        n_val = int(math.floor(n * fractions[1] + 1e-9))
        n_test = int(math.floor(n * fractions[2] + 1e-9))
    perm = np.random.default_rng(seed).permutation(n)
    n_train = n - n_val - n_test
    return (sorted(perm[:n_train].tolist()), sorted(perm[n_train:n_train + n_val].tolist()),
            sorted(perm[n_train + n_val:].tolist()))


def record_size(K: int, N: int, M: int) -> int:
    return 4 * (K * N * 2 + N + K * 3 + 1) + M + 4


def _record_dtype(K: int, N: int, M: int) -> np.dtype:
    return np.dtype([("csi", "<f4", (K, N, 2)), ("y_star", "<f4", (N,)), ("chi", "u1", (M,)),
                     ("pos", "<f4", (K, 3)), ("score", "<f4"), ("seed", "<u4")])


def _header_bytes(ds: Dataset) -> bytes:
    conf = json.dumps(ds.config, sort_keys=True).encode()
    n_tr, n_va, n_te = ds.split_sizes
    return _HEAD.pack(MAGIC, VERSION, len(ds), ds.K_c, ds.K_s, ds.N, ds.M,
                      n_tr, n_va, n_te, ds.split_seed, len(conf)) + conf


def expected_file_size(ds: Dataset) -> int:
    return len(_header_bytes(ds)) + len(ds) * record_size(ds.K_c + ds.K_s, ds.N, ds.M)


def write_dataset(path: str | Path, ds: Dataset) -> int:
    """Write ``ds`` to ``path``; returns the byte count."""
    K = ds.K_c + ds.K_s
    rec = np.zeros(len(ds), dtype=_record_dtype(K, ds.N, ds.M))
    rec["csi"], rec["y_star"], rec["chi"] = ds.csi, ds.y_star, ds.chi_star
    rec["pos"], rec["score"], rec["seed"] = ds.positions, ds.score, ds.seeds
    blob = _header_bytes(ds) + rec.tobytes()
    Path(path).write_bytes(blob)
    return len(blob)


def read_dataset(path: str | Path) -> Dataset:
    buf = Path(path).read_bytes()
    if len(buf) < _HEAD.size:
        raise DatasetFormatError("truncated header", len(buf))
    (magic, version, n, K_c, K_s, N, M, n_tr, n_va, n_te, split_seed,
     clen) = _HEAD.unpack_from(buf, 0)
    if magic != MAGIC:
        raise DatasetFormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise DatasetFormatError(f"unsupported version {version}", 5)
    off = _HEAD.size
    if len(buf) < off + clen:
        raise DatasetFormatError("truncated config snapshot", len(buf))
    try:
        config = json.loads(buf[off:off + clen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"corrupt config snapshot: {exc}", off) from exc
    off += clen
    K = K_c + K_s
    size = record_size(K, N, M)
    need = off + n * size
    if len(buf) != need:
        bad = off + ((len(buf) - off) // size) * size if len(buf) < need else need
        raise DatasetFormatError(
            f"payload length {len(buf) - off} != {n} records x {size} bytes", bad)
    if n_tr + n_va + n_te not in (0, n):
        raise DatasetFormatError("split sizes do not add up to sample count", 21)
    rec = np.frombuffer(buf, dtype=_record_dtype(K, N, M), count=n, offset=off)
    return Dataset(csi=rec["csi"].copy(), y_star=rec["y_star"].copy(), chi_star=rec["chi"].copy(),
                   positions=rec["pos"].copy(), score=rec["score"].copy(), seeds=rec["seed"].copy(),
                   K_c=K_c, K_s=K_s, config=config, split_sizes=(n_tr, n_va, n_te),
                   split_seed=split_seed)

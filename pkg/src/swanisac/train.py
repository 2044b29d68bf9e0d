"""Losses, the training loop, beam-head-only transfer and evaluation."""

from __future__ import annotations

import copy
import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from .config import RunConfig, TrainConfig
from .data import Dataset
from .geometry import (GeometryConfig, NonFiniteDeploymentError, antenna_masks,
                       partition_from_logits, tx_count)
from .model import Prediction, SwanModel
from .physics import BeamSet, PowerConfig, matched_beams, near_field_channel, sum_rate
from .sensing import crlb_ridge, target_fims

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    def __init__(self, msg, batch_index=None, components=None):
        super().__init__(msg)
        self.batch_index = batch_index
        self.components = components or {}


# --------------------------------------------------------------------------- losses

def deployment_loss(y_hat: torch.Tensor, y_star: torch.Tensor, L: float) -> torch.Tensor:
    """Sorted, length-normalised MSE ``(1/N) ||(sort(y_hat) - sort(y*)) / L||^2``."""
    if y_hat.shape[-1] != y_star.shape[-1]:
        raise ValueError("deployment length mismatch")
    a = torch.sort(y_hat, dim=-1).values
    b = torch.sort(y_star, dim=-1).values
    return (((a - b) / L) ** 2).mean(-1)


def crlb_penalty(crlbs: torch.Tensor, eps_crlb: float, eps: float) -> torch.Tensor:
    if bool((crlbs.detach() <= 0).any()):
        raise ValueError("CRLB values must be positive")
    worst = crlbs.amax(-1)
    return torch.clamp(torch.log(worst + eps) - math.log(eps_crlb), min=0.0)


def perf_loss(rate: torch.Tensor, crlbs: torch.Tensor, w: TrainConfig,
              eps_crlb: float) -> torch.Tensor:
    """``-w_rate R + w_crlb max(0, log(max_l CRLB_l + eps) - log(eps_crlb))``."""
    return -w.w_rate * rate + w.w_crlb * crlb_penalty(crlbs, eps_crlb, w.eps)


def geom_loss(y_pre: torch.Tensor, geo: GeometryConfig, w: TrainConfig) -> torch.Tensor:
    """Spacing, range and segment-coverage penalties on raw coordinates."""
    L = geo.L
    ys = torch.sort(y_pre, dim=-1).values
    gaps = ys[..., 1:] - ys[..., :-1]
    spacing = (torch.clamp(geo.d_min - gaps, min=0.0) ** 2).sum(-1) / L ** 2
    outside = torch.clamp(-y_pre, min=0.0) + torch.clamp(y_pre - L, min=0.0)
    rng = (outside ** 2).sum(-1) / L ** 2
    seg = torch.clamp(torch.floor(y_pre.detach() * geo.M / L), 0, geo.M - 1).long()
    hit = torch.zeros(*y_pre.shape[:-1], geo.M, dtype=torch.bool, device=y_pre.device)
    hit.scatter_(-1, seg, True)
    coverage = 1.0 - hit.to(y_pre.dtype).mean(-1)
    return w.w_spacing * spacing + w.w_range * rng + w.w_coverage * coverage


# --------------------------------------------------------------------------- environment

@dataclass
class Batch:
    H: torch.Tensor
    y_star: torch.Tensor
    positions: torch.Tensor
    K_c: int

    @classmethod
    def from_dataset(cls, ds: Dataset, idx=None, dtype=torch.float32) -> "Batch":
        sl = slice(None) if idx is None else np.asarray(idx)
        return cls(H=torch.from_numpy(ds.csi[sl]).to(dtype),
                   y_star=torch.from_numpy(ds.y_star[sl]).to(torch.float64),
                   positions=torch.from_numpy(ds.positions[sl]).to(torch.float64),
                   K_c=ds.K_c)


@dataclass
class EnvOutput:
    rate: torch.Tensor           # (B,)
    J: torch.Tensor              # (B, K_s, E, E)
    crlb: torch.Tensor           # (B, K_s) differentiable surrogate


def evaluate_environment(y: torch.Tensor, beams: BeamSet, masks, positions: torch.Tensor,
                         K_c: int, cfg: RunConfig) -> EnvOutput:
    """Rate and target FIMs at the evaluated deployment, in float64."""
    y = y.to(torch.float64)
    beams = BeamSet(beams.W.to(torch.complex128), beams.F.to(torch.complex128))
    masks = type(masks)(masks.tx.to(torch.float64), masks.rx.to(torch.float64))
    h = near_field_channel(positions, y, cfg.channel, cfg.geometry)
    rate = sum_rate(h, beams, masks, cfg.power, cfg.channel)
    res = target_fims(positions[..., K_c:, :], y, beams, masks, cfg.sensing, cfg.channel,
                      cfg.power, cfg.geometry)
    return EnvOutput(rate=rate, J=res.J, crlb=crlb_ridge(res.J, cfg.sensing.ridge))


def compute_loss(model: SwanModel, batch: Batch, cfg: RunConfig, straight_through: bool = True,
                 pred: Prediction | None = None):
    """Total loss and its components (batch means)."""
    t = cfg.train
    if pred is None:
        pred = model(batch.H, batch.K_c, straight_through=straight_through)
    env = evaluate_environment(pred.y, pred.beams, pred.masks, batch.positions, batch.K_c, cfg)
    l_dep = deployment_loss(pred.y.to(torch.float64), batch.y_star, cfg.geometry.L).mean()
    l_perf = perf_loss(env.rate, env.crlb, t, cfg.sensing.eps_crlb).mean()
    l_geom = geom_loss(pred.y_pre.to(torch.float64), cfg.geometry, t).mean()
    total = t.w_dep * l_dep + l_perf + l_geom
    parts = {"dep": l_dep.item(), "perf": l_perf.item(), "geom": l_geom.item(),
             "rate": env.rate.mean().item()}
    return total, parts, pred, env


# --------------------------------------------------------------------------- metrics

@dataclass
class MetricsRecord:
    epoch: int = 0
    train_loss: float = float("nan")
    val_loss: float = float("nan")
    dep_mse: float = float("nan")
    rate: float = float("nan")
    crlb_mean: float = float("nan")
    crlb_max: float = float("nan")
    drift: float = float("nan")
    trainable_params: int = 0
    wall_clock: float = 0.0
    max_grad_norm: float = float("nan")

    FIELDS = ("epoch", "train_loss", "val_loss", "dep_mse", "rate", "crlb_mean", "crlb_max",
              "drift", "trainable_params", "wall_clock", "max_grad_norm")

    def row(self) -> list:
        return [getattr(self, f) for f in self.FIELDS]


def exact_crlb(J: torch.Tensor, tol: float) -> torch.Tensor:
    """``tr(J^-1)`` with ``inf`` where ``J`` is singular or ill-conditioned."""
    ev = torch.linalg.eigvalsh(J)
    bad = ~(ev[..., 0] > tol * ev[..., -1].clamp(min=0)) | (ev[..., -1] <= 0)
    eye = torch.eye(J.shape[-1], dtype=J.dtype)
    tr = torch.diagonal(torch.linalg.inv(torch.where(bad[..., None, None], eye, J)),
                        dim1=-2, dim2=-1).sum(-1)
    return torch.where(bad, torch.full_like(tr, math.inf), tr)


@dataclass
class EvalResult:
    record: MetricsRecord
    y: torch.Tensor
    rates: torch.Tensor
    crlbs: torch.Tensor


@torch.no_grad()
def predict(model: SwanModel, ds: Dataset, cfg: RunConfig, csi: np.ndarray | None = None,
            batch_size: int | None = None) -> list[Prediction]:
    model.eval()
    bs = batch_size or cfg.train.eval_batch
    H_all = ds.csi if csi is None else csi
    dtype = next(model.parameters()).dtype
    out = []
    for s in range(0, len(ds), bs):
        H = torch.from_numpy(np.ascontiguousarray(H_all[s:s + bs])).to(dtype)
        out.append(model(H, ds.K_c, straight_through=False))
    return out


@torch.no_grad()
def evaluate(model: SwanModel, ds: Dataset, cfg: RunConfig, reference_y: torch.Tensor | None = None,
             csi: np.ndarray | None = None, power=None, epoch: int = 0) -> EvalResult:
    """Validation metrics; ``csi`` replaces the model input (e.g. perturbed CSI)."""
    if power is not None:
        cfg = dataclasses.replace(cfg, power=power)
        model_power, model.power = model.power, power
    t0 = time.perf_counter()
    try:
        preds = predict(model, ds, cfg, csi=csi)
    finally:
        if power is not None:
            model.power = model_power
    bs = cfg.train.eval_batch
    ys, rates, crlbs, losses = [], [], [], []
    for b, pred in enumerate(preds):
        sl = slice(b * bs, b * bs + len(pred.y))
        batch = Batch(H=None, y_star=torch.from_numpy(ds.y_star[sl]).double(),
                      positions=torch.from_numpy(ds.positions[sl]).double(), K_c=ds.K_c)
        total, _, _, env = compute_loss(model, batch, cfg, pred=pred)
        losses.append(float(total) * len(pred.y))
        ys.append(pred.y.double())
        rates.append(env.rate)
        crlbs.append(exact_crlb(env.J, cfg.sensing.pinv_tol))
    y = torch.cat(ys)
    rate = torch.cat(rates)
    crlb = torch.cat(crlbs)
    L = cfg.geometry.L
    rec = MetricsRecord(
        epoch=epoch,
        val_loss=sum(losses) / len(ds),
        dep_mse=float(deployment_loss(y, torch.from_numpy(ds.y_star).double(), L).mean()),
        rate=float(rate.mean()),
        crlb_mean=float(crlb.mean()),
        crlb_max=float(crlb.max()),
        drift=float(deployment_loss(y, reference_y, L).mean()) if reference_y is not None
        else float("nan"),
        trainable_params=model.count_trainable(),
        wall_clock=(time.perf_counter() - t0) / max(1, len(preds)))
    return EvalResult(rec, y, rate, crlb)


@torch.no_grad()
def matched_beam_rate(ds: Dataset, cfg: RunConfig, y: torch.Tensor, chi: torch.Tensor,
                      power: PowerConfig | None = None) -> torch.Tensor:
    """Per-sample rate of conjugate beams at deployments ``y`` and partitions ``chi``."""
    pw = power or cfg.power
    pos = torch.from_numpy(ds.positions).double()
    h = near_field_channel(pos, y.double(), cfg.channel, cfg.geometry)
    masks = antenna_masks(y.double(), chi.double(), cfg.geometry)
    beams = matched_beams(h, ds.K_c, masks, pw)
    return sum_rate(h, beams, masks, pw, cfg.channel)


def random_deployment_baseline(ds: Dataset, cfg: RunConfig, seed: int = 0) -> torch.Tensor:
    """Matched-beam rates at random feasible deployments and random partitions."""
    from .data import random_deployments
    rng = np.random.default_rng(seed)
    geo = cfg.geometry
    y = random_deployments(geo, len(ds), rng)
    pi = torch.from_numpy(rng.standard_normal((len(ds), geo.M)))
    chi = partition_from_logits(pi, tx_count(ds.K_c, ds.K_s, geo.M))
    return matched_beam_rate(ds, cfg, y, chi)


# --------------------------------------------------------------------------- training

@dataclass
class TrainResult:
    model: SwanModel
    history: list[MetricsRecord]
    best_epoch: int
    best_state: dict
    grad_norms: list[float] = field(default_factory=list)
    initial_loss: float = float("nan")


def _global_norm(params) -> float:
    norms = [p.grad.detach().norm() for p in params if p.grad is not None]
    if not norms:
        return 0.0
    return float(torch.linalg.vector_norm(torch.stack(norms)))


def train(model: SwanModel, train_ds: Dataset, val_ds: Dataset, cfg: RunConfig,
          on_epoch=None) -> TrainResult:
    """Joint training of all trainable blocks.

    All parameters train for ``warm_epochs``; then the backbone base
    projections freeze and only adapters, graph encoder, embeddings and
    heads keep updating. The best epoch is chosen by validation rate.
    """
    t = cfg.train
    torch.manual_seed(t.seed)
    gen = torch.Generator().manual_seed(t.seed)
    dtype = next(model.parameters()).dtype
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=t.lr)
    history, grad_norms = [], []
    best_rate, best_epoch, best_state = -math.inf, 0, None
    initial_loss = float("nan")
    n = len(train_ds)
    for epoch in range(1, t.epochs + 1):
        if epoch == t.warm_epochs + 1 and model.variant != "mlp":
            model.freeze_base()
        model.train()
        t0 = time.perf_counter()
        perm = torch.randperm(n, generator=gen).numpy()
        total_loss, seen, epoch_max_norm = 0.0, 0, 0.0
        for b, s in enumerate(range(0, n, t.batch)):
            batch = Batch.from_dataset(train_ds, perm[s:s + t.batch], dtype)
            try:
                loss, parts, _, _ = compute_loss(model, batch, cfg)
            except NonFiniteDeploymentError as exc:
                parts = dict.fromkeys(("dep", "perf", "geom", "rate"), math.nan)
                raise TrainingDivergedError(
                    f"non-finite model output at epoch {epoch}, batch {b}: {exc}", b, parts) from exc
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {b}: {parts}", b, parts)
            if math.isnan(initial_loss):
                initial_loss = loss.item()
            opt.zero_grad(set_to_none=True)
            loss.backward()
            live = [p for p in params if p.grad is not None and p.requires_grad]
            torch.nn.utils.clip_grad_norm_(live, t.clip)
            post = _global_norm(live)
            grad_norms.append(post)
            epoch_max_norm = max(epoch_max_norm, post)
            opt.step()
            total_loss += loss.item() * len(batch.y_star)
            seen += len(batch.y_star)
        ev = evaluate(model, val_ds, cfg, epoch=epoch)
        rec = ev.record
        rec.train_loss = total_loss / seen
        rec.max_grad_norm = epoch_max_norm
        rec.wall_clock = time.perf_counter() - t0
        history.append(rec)
        logger.info("epoch %d loss %.4f val rate %.4f depMSE %.5f", epoch, rec.train_loss,
                    rec.rate, rec.dep_mse)
        if rec.rate > best_rate:
            best_rate, best_epoch = rec.rate, epoch
            best_state = copy.deepcopy(model.state_dict())
        if on_epoch is not None:
            on_epoch(rec)
    return TrainResult(model, history, best_epoch, best_state, grad_norms, initial_loss)


def build_model(cfg: RunConfig, K_c: int | None = None, K_s: int | None = None,
                dtype=torch.float32) -> SwanModel:
    torch.manual_seed(cfg.train.seed)
    m = SwanModel(cfg.model, cfg.geometry, cfg.power,
                  cfg.data.K_c if K_c is None else K_c, cfg.data.K_s if K_s is None else K_s)
    return m.to(dtype)


# --------------------------------------------------------------------------- transfer

@dataclass
class TransferReport:
    history: list[MetricsRecord]
    best_epoch: int
    drift: float
    dep_mse: float
    rate: float
    crlb_mean: float
    unadapted_rate: float
    beam_head_params: int
    full_model_trainable: int
    frozen_bytes_equal: bool


def _frozen_bytes(model: SwanModel) -> bytes:
    return b"".join(p.detach().cpu().numpy().tobytes()
                    for g, ps in sorted(model.blocks().items()) if g != "beam_head"
                    for _, p in ps)


def transfer_beam_head(src: SwanModel, tgt_train: Dataset, tgt_val: Dataset, cfg: RunConfig,
                       full_model_trainable: int | None = None):
    """Adapt only a freshly reset beam head to new node counts.

    Graph encoder, backbone and deployment head are frozen; their pooled
    features and the deployment predictions are computed once and reused
    for every epoch.
    """
    t = cfg.train
    K_c, K_s = tgt_train.K_c, tgt_train.K_s
    if src.variant == "mlp":
        raise ValueError("the mlp variant has a fixed input size and cannot transfer")
    if (tgt_val.K_c, tgt_val.K_s) != (K_c, K_s):
        raise ValueError("train/val node counts differ")
    model = copy.deepcopy(src)
    model.eval()
    if full_model_trainable is None:
        full_model_trainable = src.count_trainable()
    torch.manual_seed(t.seed)
    model.reset_beam_head(K_c, K_s)
    model.freeze_all_but_beam_head()
    frozen_before = _frozen_bytes(model)
    dtype = next(model.parameters()).dtype
    # frozen layers behave deterministically while the beam head trains
    model.eval()

    @torch.no_grad()
    def cache(ds):
        H = torch.from_numpy(ds.csi).to(dtype)
        feats = model.hidden(H, K_c).mean(dim=-2)
        y_raw, pi = model.dep_head(feats)
        return feats, y_raw, pi

    tr_cache = cache(tgt_train)
    y_before = evaluate(model, tgt_val, cfg).y

    def run(c, idx, positions, y_star):
        feats, y_raw, pi = (x[idx] for x in c)
        pred = model.finish(y_raw, pi, model.beam_head(feats), K_c, K_s, straight_through=False)
        batch = Batch(H=None, y_star=y_star, positions=positions, K_c=K_c)
        return compute_loss(model, batch, cfg, pred=pred)

    unadapted = evaluate(model, tgt_val, cfg, reference_y=y_before)
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=t.lr)
    gen = torch.Generator().manual_seed(t.seed)
    pos_tr = torch.from_numpy(tgt_train.positions).double()
    ystar_tr = torch.from_numpy(tgt_train.y_star).double()
    # the freshly reset head is itself a candidate (epoch 0)
    history = []
    best_rate, best_epoch = unadapted.record.rate, 0
    best_state = copy.deepcopy(model.state_dict())
    n = len(tgt_train)
    for epoch in range(1, t.epochs + 1):
        t0 = time.perf_counter()
        perm = torch.randperm(n, generator=gen)
        total, max_norm = 0.0, 0.0
        for s in range(0, n, t.batch):
            idx = perm[s:s + t.batch]
            loss, parts, _, _ = run(tr_cache, idx, pos_tr[idx], ystar_tr[idx])
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss in transfer epoch {epoch}",
                                            s // t.batch, parts)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            torch.nn.utils.clip_grad_norm_(params, t.clip)
            max_norm = max(max_norm, _global_norm(params))
            opt.step()
            total += loss.item() * len(idx)
        rec = evaluate(model, tgt_val, cfg, reference_y=y_before, epoch=epoch).record
        rec.train_loss = total / n
        rec.max_grad_norm = max_norm
        rec.wall_clock = time.perf_counter() - t0
        history.append(rec)
        if rec.rate > best_rate:
            best_rate, best_epoch = rec.rate, epoch
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    model.freeze_all_but_beam_head()
    final = evaluate(model, tgt_val, cfg, reference_y=y_before)
    report = TransferReport(
        history=history, best_epoch=best_epoch, drift=final.record.drift,
        dep_mse=final.record.dep_mse, rate=final.record.rate, crlb_mean=final.record.crlb_mean,
        unadapted_rate=unadapted.record.rate, beam_head_params=model.count_group("beam_head"),
        full_model_trainable=full_model_trainable,
        frozen_bytes_equal=_frozen_bytes(model) == frozen_before)
    return model, report


# --------------------------------------------------------------------------- gradient checks

@dataclass
class BlockCheck:
    block: str
    max_rel_error: float
    worst_param: str = ""
    worst_index: int = -1
    coords: int = 0
    frozen: bool = False
    max_frozen_grad: float = 0.0


@dataclass
class GradCheckReport:
    blocks: list[BlockCheck]
    tol: float

    def passed(self, b: BlockCheck) -> bool:
        if b.frozen:
            return b.max_frozen_grad == 0.0
        return b.max_rel_error < self.tol

    @property
    def ok(self) -> bool:
        return all(self.passed(b) for b in self.blocks)

    def failures(self) -> list[BlockCheck]:
        return [b for b in self.blocks if not self.passed(b)]


def relative_error(a: float, b: float, floor: float) -> float:
    """``|a - b| / max(|a|, |b|)``; pairs below ``floor`` in magnitude compare absolutely."""
    scale = max(abs(a), abs(b))
    if scale < floor:
        return abs(a - b) / floor
    return abs(a - b) / scale


def grad_check(loss_fn, blocks: dict[str, list[tuple[str, torch.nn.Parameter]]], coords: int = 50,
               step=(1e-4, 1e-5, 1e-6), tol: float = 1e-3, seed: int = 0, floor: float = 1e-7,
               mutate=None) -> GradCheckReport:
    """Central differences vs autograd on random coordinates of each block.

    ``loss_fn()`` must return a scalar (use float64 and a deterministic
    forward). ``step`` may be a sequence: each coordinate is then scored by
    its best agreement over the steps, which tolerates both truncation
    error (large steps on strongly curved coordinates) and round-off (small
    steps on tiny gradients). A wrong analytic gradient disagrees at every
    step. ``mutate(block, grad)`` may alter analytic gradients before
    comparison, for fault-injection tests.
    """
    steps = (step,) if isinstance(step, (int, float)) else tuple(step)
    rng = np.random.default_rng(seed)
    live = [(g, n, p) for g, ps in blocks.items() for n, p in ps if p.requires_grad]
    for _, _, p in live:
        p.grad = None
    loss = loss_fn()
    grads = torch.autograd.grad(loss, [p for _, _, p in live], allow_unused=True)
    analytic = {n: (torch.zeros_like(p) if gr is None else gr.detach())
                for (_, n, p), gr in zip(live, grads)}
    out = []
    for g, ps in blocks.items():
        trainable = [(n, p) for n, p in ps if p.requires_grad]
        if not trainable:
            # frozen blocks never receive a gradient
            mx = max((float(p.grad.abs().max()) for _, p in ps if p.grad is not None), default=0.0)
            out.append(BlockCheck(g, 0.0, frozen=True, max_frozen_grad=mx))
            continue
        sizes = np.array([p.numel() for _, p in trainable])
        flat = rng.choice(int(sizes.sum()), size=min(coords, int(sizes.sum())), replace=False)
        bounds = np.cumsum(sizes)
        worst = BlockCheck(g, 0.0, coords=len(flat))
        for f in flat:
            k = int(np.searchsorted(bounds, f, side="right"))
            i = int(f - (bounds[k - 1] if k else 0))
            name, p = trainable[k]
            a = analytic[name].reshape(-1)[i].item()
            if mutate is not None:
                a = mutate(g, a)
            view = p.data.view(-1)
            orig = view[i].item()
            err = math.inf
            with torch.no_grad():
                for h in steps:
                    view[i] = orig + h
                    fp = float(loss_fn())
                    view[i] = orig - h
                    fm = float(loss_fn())
                    view[i] = orig
                    err = min(err, relative_error(a, (fp - fm) / (2 * h), floor))
            if err > worst.max_rel_error:
                worst.max_rel_error, worst.worst_param, worst.worst_index = err, name, i
        out.append(worst)
    return GradCheckReport(out, tol)


def model_loss_fn(model: SwanModel, batch: Batch, cfg: RunConfig):
    """Deterministic float64 loss closure for :func:`grad_check`.

    Dropout is off and the partition is the plain hard top-K, so the
    analytic gradient is that of the evaluated function.
    """
    model.eval()

    def fn():
        return compute_loss(model, batch, cfg, straight_through=False)[0]
    return fn

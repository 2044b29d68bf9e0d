import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from swanisac.config import ModelConfig
from swanisac.geometry import GeometryConfig, is_feasible
from swanisac.model import (Backbone, ResetRequiredError, SelfGraphEncoder, SwanModel, adjacency,
                            baseline_forward, beamforming_head, deployment_head, graph_forward,
                            node_features, reassemble_beams, tokenize)
from swanisac.physics import PowerConfig, complex_to_csi, power_used

SMALL = ModelConfig(hidden_dim=32, layers=2, heads=2, d_g=16, head_dim=16, mlp_hidden=32,
                    lora_rank=4, lora_alpha=2.0)
GEO = GeometryConfig(N=8)
PW = PowerConfig()


def rand_csi(rng, K=3, N=8, batch=()):
    h = rng.standard_normal((*batch, K, N)) + 1j * rng.standard_normal((*batch, K, N))
    return complex_to_csi(torch.from_numpy(h))


def small_model(variant="full", dtype=torch.float64, K_c=2, K_s=1):
    torch.manual_seed(0)
    m = SwanModel(ModelConfig(**{**SMALL.__dict__, "variant": variant}), GEO, PW, K_c, K_s)
    return m.to(dtype).eval()


def test_node_feature_examples():
    H = complex_to_csi(torch.tensor([[1 + 0j, 1 + 0j], [1j, 1j]], dtype=torch.complex128))
    X = node_features(H, K_c=1)
    assert torch.allclose(X[0], torch.tensor([math.sqrt(2), 0.0, 0.0], dtype=torch.float64))
    assert torch.allclose(X[1], torch.tensor([math.sqrt(2), math.pi / 2, 1.0], dtype=torch.float64))
    Z = complex_to_csi(torch.tensor([[1 + 0j, -1 + 0j]], dtype=torch.complex128))
    assert node_features(Z, 1)[0, 1] == 0


def test_node_feature_phase_rotation(rng):
    H = rand_csi(rng)
    X = node_features(H, 2)
    for _ in range(10):
        phi = rng.uniform(-math.pi, math.pi)
        h = torch.view_as_complex(H.contiguous()) * np.exp(1j * phi)
        X2 = node_features(torch.view_as_real(h), 2)
        assert torch.allclose(X2[:, [0, 2]], X[:, [0, 2]])
        d = torch.remainder(X2[:, 1] - X[:, 1] - phi + math.pi, 2 * math.pi) - math.pi
        assert d.abs().max() < 1e-9


def test_adjacency_examples(rng):
    h = torch.tensor([[1 + 1j, 2 - 1j]] * 3, dtype=torch.complex128)
    A = adjacency(complex_to_csi(h), 1e-12)
    assert torch.allclose(A, torch.full((3, 3), 1 / 3, dtype=torch.float64))
    A = adjacency(complex_to_csi(torch.tensor([[1, 0], [0, 1]], dtype=torch.complex128)), 1e-8)
    assert A[0, 1] == 0 and A[1, 0] == 0
    A = adjacency(rand_csi(rng, K=5, batch=(20,)), 1e-8)
    assert (A.sum(-1) - 1).abs().max() <= 1e-9
    assert bool(((A >= 0) & (A <= 1)).all())
    with pytest.raises(ValueError):
        adjacency(torch.zeros(2, 4, 2, dtype=torch.float64), 1e-8)
    with pytest.raises(ValueError):
        adjacency(rand_csi(rng), 0.0)


def test_graph_equivariance_exact(rng):
    torch.manual_seed(0)
    enc = SelfGraphEncoder(16, 2).double()
    H = rand_csi(rng, K=5)
    X, A = node_features(H, 2), adjacency(H, 1e-8)
    nodes, z = graph_forward(X, A, enc)
    for _ in range(20):
        P = torch.from_numpy(rng.permutation(5))
        nodes2, z2 = graph_forward(X[P], A[P][:, P], enc)
        assert torch.equal(nodes2, nodes[P])
        assert (z2 - z).abs().max() <= 1e-6


def test_graph_special_cases(rng):
    torch.manual_seed(1)
    enc = SelfGraphEncoder(8, 1).double()
    X = torch.from_numpy(rng.standard_normal((1, 3)))
    h0 = enc.w_in(X)
    out, z = enc(X, torch.ones(1, 1, dtype=torch.float64))
    w1, w2 = enc.w_self[0], enc.w_nbr[0]
    assert torch.allclose(out, torch.relu(h0 @ (w1.weight + w2.weight).T + w1.bias))
    with torch.no_grad():
        w2.weight.zero_()
    X = torch.from_numpy(rng.standard_normal((4, 3)))
    A = torch.full((4, 4), 0.25, dtype=torch.float64)
    _, z = enc(X, A)
    assert torch.allclose(z, torch.relu(w1(enc.w_in(X))).mean(0))


def test_tokenize_symmetry(rng):
    H = rand_csi(rng, K=4)
    T = tokenize(H, 2)
    assert T.shape == (8, 12)
    assert torch.equal(tokenize(H[[1, 0, 3, 2]], 2), T)
    dup = torch.cat([H[:2], H[:1], H[2:]])
    T2 = tokenize(dup, 3)
    assert torch.equal(T2[:, [1, 4]], T[:, [1, 4]])        # user max blocks
    assert torch.equal(T2[:, 6:], T[:, 6:])                 # target block untouched
    r = H[:2, :, 0]
    assert torch.allclose(T2[:, 0], (2 * r[0] + r[1]) / 3)
    assert torch.allclose(T2[:, 2], torch.sqrt(2 * r[0] ** 2 + r[1] ** 2))
    assert torch.equal(tokenize(H[2:], 0)[:, :6], torch.zeros(8, 6, dtype=H.dtype))
    assert tokenize(rand_csi(rng, K=3, N=40), 2).shape == (40, 12)


def test_adapter_identity_and_scale(rng):
    assert ModelConfig().lora_alpha / ModelConfig().lora_rank == 0.5
    torch.manual_seed(0)
    bb = Backbone(ModelConfig(), 40).eval()
    assert {m.scale for m in bb.adapters()} == {0.5}
    tok = tokenize(rand_csi(rng, N=40).float(), 2)
    z = torch.randn(64)
    out = bb(tok, z)
    bb.set_adapters(False)
    assert torch.equal(out, bb(tok, z))
    bb.set_adapters(True)
    # z_g = 0 reproduces the unconditioned forward
    assert torch.equal(bb(tok, torch.zeros(64)), bb(tok, None))
    with pytest.raises(ValueError):
        ModelConfig(hidden_dim=16, lora_rank=32, heads=2)


def test_every_base_has_one_adapter():
    bb = Backbone(SMALL, 8)
    names = [n for n, _ in bb.named_parameters()]
    bases = {n.rsplit(".base.", 1)[0] for n in names if ".base.weight" in n}
    for b in bases:
        assert f"{b}.lora_A" in names and f"{b}.lora_B" in names
    assert all(bool((m.lora_B == 0).all()) for m in bb.adapters())


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6), scale=st.floats(0.1, 50.0))
def test_deployment_head_feasible(seed, scale):
    m = small_model()
    g = torch.Generator().manual_seed(seed)
    hid = scale * torch.randn(16, GEO.N, SMALL.hidden_dim, generator=g, dtype=torch.float64)
    y, pi, chi = deployment_head(hid, m, 3)
    assert bool(is_feasible(y, GEO).all()) and pi.shape[-1] == 4
    assert bool((chi.sum(-1) == 3).all())


def test_beam_head_shapes_and_power(rng):
    m = small_model()
    hid = torch.from_numpy(rng.standard_normal((5, GEO.N, 32))) * 10
    b = beamforming_head(hid, m, 2, 1)
    assert b.W.shape == (5, 8, 2) and b.F.shape == (5, 8, 1)
    assert bool((power_used(b, PW) <= PW.P_max * (1 + 1e-9)).all())
    with pytest.raises(ResetRequiredError):
        beamforming_head(hid, m, 3, 1)
    raw = torch.arange(240, dtype=torch.float64)
    bs = reassemble_beams(raw, 40, 2, 1)
    assert bs.W.shape == (40, 2) and bs.F.shape == (40, 1)
    assert bs.W[0, 1] == complex(1, 81) and bs.F[0, 0] == complex(160, 200)


def test_zero_hidden_gives_bias_beams():
    m = small_model()
    head = m.beam_head
    out = head(torch.zeros(SMALL.hidden_dim, dtype=torch.float64))
    bias = head.gain * head.out(head.proj(torch.zeros(SMALL.hidden_dim, dtype=torch.float64)))
    ref = reassemble_beams(bias, 8, 2, 1)
    assert torch.equal(out.W, ref.W) and torch.equal(out.F, ref.F)


def test_variants_shapes_and_equivalence(rng):
    H = rand_csi(rng, batch=(4,))
    full = small_model("full")
    pf = full(H)
    for v in ("mlp", "shared_head", "transformer_no_graph"):
        p = small_model(v)(H)
        assert p.y.shape == pf.y.shape and p.pi.shape == pf.pi.shape
        assert p.beams.W.shape == pf.beams.W.shape and p.beams.F.shape == pf.beams.F.shape
    a = baseline_forward(H, full, "transformer_no_graph")
    b = full(H, z_g_override=torch.zeros(4, SMALL.d_g, dtype=torch.float64))
    assert torch.equal(a.y, b.y) and torch.equal(a.beams.W, b.beams.W)
    with pytest.raises(ValueError):
        baseline_forward(H, full, "cnn")
    with pytest.raises(ValueError):
        ModelConfig(variant="cnn")
    shared = small_model("shared_head")
    assert shared.count_trainable() < full.count_trainable()


def test_reset_and_groups(rng):
    m = small_model()
    H4 = rand_csi(rng, K=4, batch=(2,))
    with pytest.raises(ResetRequiredError):
        m(H4, K_c=3, K_s=1)
    dep_before = {n: p.clone() for n, p in m.dep_head.named_parameters()}
    m.reset_beam_head(3, 1)
    p = m(H4, K_c=3, K_s=1)
    assert p.beams.W.shape == (2, 8, 3)
    assert all(torch.equal(dep_before[n], q) for n, q in m.dep_head.named_parameters())
    m.freeze_all_but_beam_head()
    assert m.count_trainable() == m.count_group("beam_head")
    groups = m.blocks()
    assert {"graph", "adapters", "backbone_base", "backbone_io", "dep_head",
            "beam_head"} <= set(groups)

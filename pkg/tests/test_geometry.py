import pytest
import torch
from hypothesis import given, settings, strategies as st

from swanisac.geometry import (GeometryConfig, InfeasibleGeometryError, antenna_masks,
                               enumerate_partitions, is_feasible, partition_from_logits,
                               partition_straight_through, project_deployment, segment_interval,
                               segment_of, tx_count, validate_partition)

GEO = GeometryConfig()


def test_segment_interval_examples():
    assert segment_interval(1, GEO) == (0.0, 12.5)
    assert segment_interval(4, GEO) == (37.5, 50.0)
    assert segment_interval(2, GeometryConfig(M=2, N=1, L=1.0)) == (0.5, 1.0)
    with pytest.raises(IndexError):
        segment_interval(0, GEO)
    with pytest.raises(IndexError):
        segment_interval(5, GEO)


def test_segment_of_boundaries():
    assert segment_of(12.5, GEO) == 2
    assert segment_of(50.0, GEO) == 4
    assert segment_of(0.0, GEO) == 1
    assert segment_of(12.4999, GEO) == 1
    t = segment_of(torch.tensor([0.0, 25.0, 49.0]), GEO)
    assert t.tolist() == [1, 3, 4]
    for bad in (-0.1, 50.1, float("nan")):
        with pytest.raises(ValueError):
            segment_of(bad, GEO)


def test_geometry_validation():
    with pytest.raises(InfeasibleGeometryError):
        GeometryConfig(N=1000, d_min=0.1, L=50)
    with pytest.raises(ValueError):
        GeometryConfig(M=1)


def test_projection_examples():
    g = GeometryConfig(N=2, d_min=0.5)
    out = project_deployment(torch.tensor([5.0, 5.0], dtype=torch.float64), g)
    assert out.tolist() == [5.0, 5.5]
    out = project_deployment(torch.tensor([49.9, 49.95], dtype=torch.float64), g)
    assert torch.allclose(out, torch.tensor([49.5, 50.0], dtype=torch.float64), atol=1e-12)
    feas = torch.tensor([1.0, 3.0, 20.0], dtype=torch.float64)
    assert torch.equal(project_deployment(feas, GeometryConfig(N=3)), feas)


def test_projection_rejects_nonfinite():
    with pytest.raises(ValueError):
        project_deployment(torch.tensor([1.0, float("nan")]), GeometryConfig(N=2))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-20, 70, allow_nan=False), min_size=2, max_size=12),
       st.floats(0.0, 4.0))
def test_projection_feasible_and_idempotent(vals, d_min):
    N = len(vals)
    if N * d_min > 50:
        return
    g = GeometryConfig(N=N, d_min=d_min)
    y = project_deployment(torch.tensor(vals, dtype=torch.float64), g)
    assert bool(is_feasible(y, g, tol=1e-9))
    assert torch.equal(project_deployment(y, g), y)
    assert bool((y[1:] >= y[:-1]).all())


def test_projection_batched_and_differentiable():
    g = GeometryConfig(N=5, d_min=1.0)
    raw = (torch.rand(7, 5, dtype=torch.float64) * 60 - 5).requires_grad_()
    y = project_deployment(raw, g)
    assert y.shape == (7, 5)
    assert bool(is_feasible(y, g).all())
    y.sum().backward()
    assert torch.isfinite(raw.grad).all()


def test_partition_from_logits():
    chi = partition_from_logits(torch.tensor([0.9, 0.1, 0.5, 0.7]), 3)
    assert chi.tolist() == [1, 0, 1, 1]
    assert partition_from_logits(torch.ones(4), 3).tolist() == [1, 1, 1, 0]
    for bad in (0, 4):
        with pytest.raises(ValueError):
            partition_from_logits(torch.ones(4), bad)
    assert tx_count(2, 1, 4) == 3
    assert tx_count(3, 1, 4) == 3


def test_partition_exact_count_random(rng):
    pi = torch.from_numpy(rng.standard_normal((500, 6)))
    for k in range(1, 6):
        assert bool((partition_from_logits(pi, k).sum(-1) == k).all())


def test_straight_through_value_and_gradient():
    pi = torch.tensor([0.3, -0.2, 1.0, 0.0], requires_grad=True)
    chi = partition_straight_through(pi, 3)
    assert chi.detach().tolist() == [1, 0, 1, 1]
    (chi * torch.arange(4.0)).sum().backward()
    assert pi.grad.abs().sum() > 0


def test_validate_partition():
    assert validate_partition([1, 1, 1, 0], 2, 1, 4)
    assert not validate_partition([1, 1, 1, 1], 2, 1, 4)
    assert not validate_partition([1, 1, 0, 0], 2, 1, 4)
    assert not validate_partition([1, 2, 0, 0], 1, 1, 4)


def test_enumerate_partitions():
    P = enumerate_partitions(2, 1, 4)
    assert P.shape == (4, 4)
    assert bool((P.sum(-1) == 3).all())
    P = enumerate_partitions(1, 1, 4)
    assert set(P.sum(-1).tolist()) == {2.0, 3.0}
    # infeasible strict bound relaxes to M-1 transmit segments
    assert bool((enumerate_partitions(3, 1, 4).sum(-1) == 3).all())


def test_antenna_masks_examples(rng):
    g = GeometryConfig(N=3)
    y = torch.tensor([1.0, 2.0, 3.0], dtype=torch.float64)
    m = antenna_masks(y, torch.tensor([1.0, 0, 0, 0], dtype=torch.float64), g)
    assert m.tx.tolist() == [1, 1, 1]
    y = torch.tensor([1.0, 20.0, 45.0], dtype=torch.float64)
    m = antenna_masks(y, torch.tensor([1.0, 1, 1, 0], dtype=torch.float64), g)
    assert m.tx.tolist() == [1, 1, 0] and m.rx.tolist() == [0, 0, 1]
    for _ in range(50):
        y = project_deployment(torch.from_numpy(rng.uniform(0, 50, 8)), GeometryConfig(N=8))
        chi = partition_from_logits(torch.from_numpy(rng.standard_normal(4)), 3)
        m = antenna_masks(y, chi, GeometryConfig(N=8))
        assert torch.equal(m.tx + m.rx, torch.ones(8, dtype=torch.float64))
        seg = [segment_of(float(v), GEO) for v in y]
        assert m.tx.tolist() == [float(chi[s - 1]) for s in seg]

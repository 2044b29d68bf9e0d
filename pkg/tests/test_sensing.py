import math

import numpy as np
import pytest
import torch

from swanisac.geometry import AntennaMasks, GeometryConfig
from swanisac.physics import BeamSet, ChannelConfig, PowerConfig, SingularChannelError
from swanisac.sensing import (SensingConfig, crlb_per_target, crlb_ridge, crlb_trace,
                              fd_fim_oracle, fim, steering_and_derivatives)

S = SensingConfig()
C = ChannelConfig()


def instance(rng, N=6, rx_from=3):
    geo = GeometryConfig(N=N)
    y = torch.from_numpy(np.sort(rng.uniform(0, 50, N)))
    tx = torch.zeros(N, dtype=torch.float64)
    tx[:rx_from] = 1
    masks = AntennaMasks(tx, 1 - tx)
    p = torch.tensor([rng.uniform(1, 21), rng.uniform(0, 50), 0.0], dtype=torch.float64)
    u = torch.from_numpy(rng.standard_normal(N) + 1j * rng.standard_normal(N)) * tx
    return geo, y, masks, p, u


def test_steering_derivative_fd(rng):
    geo, y, _, p, _ = instance(rng)
    a, da = steering_and_derivatives(p, y, C, geo, "xyz")
    for ax in range(3):
        e = torch.zeros(3, dtype=torch.float64)
        e[ax] = 1e-5
        fd = (steering_and_derivatives(p + e, y, C, geo)[0]
              - steering_and_derivatives(p - e, y, C, geo)[0]) / 2e-5
        assert torch.allclose(da[:, ax], fd, rtol=1e-6, atol=1e-9 * fd.abs().max())


def test_steering_closed_form_terms():
    geo = GeometryConfig(N=1, bs_x=0.0, bs_z=0.0, d_min=0.0)
    y = torch.tensor([0.0], dtype=torch.float64)
    # target 10 m away along y only
    p = torch.tensor([0.0, 10.0, 0.0], dtype=torch.float64)
    a, da = steering_and_derivatives(p, y, C, geo, "xyz")
    k = 2 * math.pi / C.wavelength
    expect = C.alpha * np.exp(-1j * k * 10) * (-1 / 100 - 1j * k / 10)
    assert abs(da[0, 1].item() - expect) < 1e-12
    assert da[0, 0].item() == 0 and da[0, 2].item() == 0


def test_steering_singular():
    geo = GeometryConfig(N=1)
    with pytest.raises(SingularChannelError):
        steering_and_derivatives(torch.tensor([0.0, 5.0, 3.0], dtype=torch.float64),
                                 torch.tensor([5.0], dtype=torch.float64), C, geo)


def test_fim_symmetric_geometry_decouples():
    geo = GeometryConfig(N=4)
    p = torch.tensor([6.0, 25.0, 0.0], dtype=torch.float64)
    y = torch.tensor([21.0, 23.0, 27.0, 29.0], dtype=torch.float64)
    tx = torch.tensor([0, 1, 1, 0], dtype=torch.float64)
    u = torch.ones(4, dtype=torch.complex128) * tx
    J = fim(p, y, u, AntennaMasks(tx, 1 - tx), S, C, geo).J
    assert abs(J[0, 1].item()) <= 1e-10 * J.abs().max().item()


def test_fim_degenerate_cases(rng):
    geo, y, masks, p, u = instance(rng)
    allt = AntennaMasks(torch.ones_like(masks.tx), torch.zeros_like(masks.rx))
    res = fim(p, y, u, allt, S, C, geo)
    assert bool(res.degenerate)
    with pytest.raises(ValueError):
        crlb_trace(res, S)
    # no transmit antennas: no echo, zero information
    none = AntennaMasks(torch.zeros_like(masks.tx), torch.ones_like(masks.rx))
    assert bool((fim(p, y, u, none, S, C, geo).J == 0).all())
    # one receive antenna: a single complex row still carries two real constraints
    tx = torch.ones(6, dtype=torch.float64)
    tx[-1] = 0
    res = fim(p, y, u * 0 + 1, AntennaMasks(tx, 1 - tx), S, C, geo)
    assert not bool(res.degenerate)
    assert bool(torch.isfinite(crlb_trace(res, S)))


def test_fim_matches_oracle(rng):
    for _ in range(20):
        geo, y, masks, p, u = instance(rng)
        J = fim(p, y, u, masks, S, C, geo).J
        Jf = fd_fim_oracle(p, y, u, masks, S, C, geo).J
        scale = torch.sqrt(torch.outer(J.diagonal(), J.diagonal()))
        assert ((J - Jf).abs() / scale).max() < 1e-4


def test_oracle_convergence_order(rng):
    geo, y, masks, p, u = instance(rng)
    J = fim(p, y, u, masks, S, C, geo).J
    e1 = (fd_fim_oracle(p, y, u, masks, S, C, geo, step=1e-3).J - J).abs().max()
    e2 = (fd_fim_oracle(p, y, u, masks, S, C, geo, step=5e-4).J - J).abs().max()
    assert 3.0 < e1 / e2 < 5.0
    with pytest.raises(ValueError):
        fd_fim_oracle(p, y, u, masks, S, C, geo, step=1.0)


def test_zero_beta(rng):
    geo, y, masks, p, u = instance(rng)
    s0 = SensingConfig(beta=0.0)
    assert bool((fim(p, y, u, masks, s0, C, geo).J == 0).all())
    assert bool((fd_fim_oracle(p, y, u, masks, s0, C, geo).J == 0).all())


def test_crlb_trace_examples(rng):
    assert crlb_trace(torch.diag(torch.tensor([2.0, 4.0], dtype=torch.float64)), S).item() == 0.75
    assert crlb_trace(torch.eye(3, dtype=torch.float64), S).item() == 3.0
    A = torch.from_numpy(rng.standard_normal((5, 3, 3)))
    J = A @ A.transpose(-1, -2) + 0.5 * torch.eye(3, dtype=torch.float64)
    ref = torch.stack([torch.trace(torch.inverse(j)) for j in J])
    assert torch.allclose(crlb_trace(J, S), ref, rtol=1e-10)
    with pytest.raises(ValueError):
        crlb_trace(torch.zeros(2, 2, dtype=torch.float64), S)


def test_crlb_ridge_close_to_exact(rng):
    A = torch.from_numpy(rng.standard_normal((4, 2, 2)))
    J = 1e-4 * (A @ A.transpose(-1, -2) + torch.eye(2, dtype=torch.float64))
    exact = crlb_trace(J, S)
    assert torch.allclose(crlb_ridge(J, 1e-6), exact, rtol=1e-4)
    assert torch.isfinite(crlb_ridge(torch.zeros(2, 2, dtype=torch.float64), 1e-3))


def test_crlb_per_target_scaling(rng):
    geo = GeometryConfig(N=6)
    y = torch.from_numpy(np.sort(rng.uniform(0, 50, 6)))
    tx = torch.tensor([1, 1, 1, 0, 0, 0], dtype=torch.float64)
    masks = AntennaMasks(tx, 1 - tx)
    targets = torch.tensor([[5.0, 20.0, 0.0]], dtype=torch.float64)
    beams = BeamSet(torch.ones(6, 2, dtype=torch.complex128),
                    torch.from_numpy(rng.standard_normal((6, 1)) + 1j).to(torch.complex128))
    pw = PowerConfig()
    c = crlb_per_target(targets, y, beams, masks, S, C, pw, geo)
    assert c.shape == (1,)
    c2 = crlb_per_target(targets, y, beams, masks, SensingConfig(beta=2.0), C, pw, geo)
    c3 = crlb_per_target(targets, y, beams, masks, SensingConfig(sigma_r2=2.0), C, pw, geo)
    assert torch.allclose(c2, c / 4, rtol=1e-12)
    assert torch.allclose(c3, 2 * c, rtol=1e-12)


def test_fim_scaling_exact(rng):
    geo, y, masks, p, u = instance(rng)
    J = fim(p, y, u, masks, S, C, geo).J
    J2 = fim(p, y, u, masks, SensingConfig(beta=2.0), C, geo).J
    Jn = fim(p, y, u, masks, SensingConfig(sigma_r2=2.0), C, geo).J
    assert torch.allclose(J2, 4 * J, rtol=1e-12, atol=0)
    assert torch.allclose(Jn, J / 2, rtol=1e-12, atol=0)


def test_xyz_rank_deficient(rng):
    geo, y, masks, p, u = instance(rng)
    res = fim(p, y, u, masks, SensingConfig(eta_dim="xyz"), C, geo)
    assert res.J.shape == (3, 3)
    # the fixed-height plane still leaves the cone ambiguity: one eigenvalue collapses
    ev = torch.linalg.eigvalsh(res.J)
    assert ev[0] < 1e-8 * ev[-1]
    assert math.isfinite(crlb_trace(res, SensingConfig(eta_dim="xyz")).item())

"""State-space building blocks: plants, filters, and their interconnection."""

import numpy as np
import pytest

from peakgain.errors import (
    DimensionMismatch,
    InvalidOrder,
    InvalidPole,
    UnstableFilter,
)
from peakgain.systems import (
    augment,
    basis_filter,
    kron_identity_filter,
    make_plant,
    spectral_radius,
    static_identity_filter,
)

from conftest import BENCH_BLOCKS, BENCH_DIMS


def test_make_plant_shapes(bench_plant):
    d = bench_plant.dims
    assert (d.nx, d.np, d.nq, d.nw, d.nz) == (2, 2, 2, 2, 2)
    assert bench_plant.A.shape == (2, 2)
    assert bench_plant.Dzw.shape == (2, 2)


def test_make_plant_rejects_bad_block():
    blocks = dict(BENCH_BLOCKS)
    blocks["Bw"] = [[1.0], [2.0]]  # nw says two columns
    with pytest.raises(DimensionMismatch) as excinfo:
        make_plant(blocks, BENCH_DIMS)
    assert "Bw" in str(excinfo.value)


def test_make_plant_rejects_unknown_block():
    blocks = dict(BENCH_BLOCKS, Bz=[[1.0]])
    with pytest.raises(DimensionMismatch):
        make_plant(blocks, BENCH_DIMS)


def test_make_plant_fills_empty_blocks():
    plant = make_plant(
        {"A": [[0.5]], "Bw": [[1.0]]},
        {"nx": 1, "np": 0, "nq": 0, "nw": 1, "nz": 0},
    )
    assert plant.Bp.shape == (1, 0)
    assert plant.Cz.shape == (0, 1)
    x, q, z = plant.response(np.zeros((4, 0)), np.ones((4, 1)))
    assert x.shape == (5, 1)
    assert z.shape == (4, 0)


def test_plant_response_matches_manual_recursion(bench_plant):
    rng = np.random.default_rng(7)
    for _ in range(5):
        T = int(rng.integers(3, 12))
        p = rng.standard_normal((T, 2))
        w = rng.standard_normal((T, 2))
        x, q, z = bench_plant.response(p, w)
        xk = np.zeros(2)
        for k in range(T):
            assert np.allclose(q[k], bench_plant.Cq @ xk
                               + bench_plant.Dqp @ p[k]
                               + bench_plant.Dqw @ w[k], atol=1e-12)
            assert np.allclose(z[k], bench_plant.Cz @ xk
                               + bench_plant.Dzp @ p[k]
                               + bench_plant.Dzw @ w[k], atol=1e-12)
            xk = bench_plant.A @ xk + bench_plant.Bp @ p[k] + bench_plant.Bw @ w[k]
            assert np.allclose(x[k + 1], xk, atol=1e-12)


def test_basis_filter_structure():
    phi = basis_filter(0.3, 3)
    assert phi.nphi == 3
    assert phi.nsigma == 4
    expected_A = 0.3 * np.eye(3) + np.diag(np.ones(2), -1)
    assert np.allclose(phi.A, expected_A)
    assert np.allclose(phi.B, np.eye(3)[:, :1])
    assert np.allclose(phi.C[0], np.zeros(3))  # direct row first
    assert np.allclose(phi.D, np.eye(4)[:, :1])
    assert spectral_radius(phi.A) == pytest.approx(0.3)


def test_basis_filter_validation():
    with pytest.raises(InvalidPole):
        basis_filter(1.0, 2)
    with pytest.raises(InvalidPole):
        basis_filter(-1.3, 2)
    with pytest.raises(InvalidOrder):
        basis_filter(0.2, 0)


def test_kron_identity_filter_dims():
    phi = basis_filter(-0.4, 2)
    flt = kron_identity_filter(phi, 3)
    assert flt.npsi == 2 * phi.nphi * 3
    assert flt.ns == 2 * phi.nsigma * 3
    assert flt.nq == 3 and flt.np == 3
    # stable block-diagonal state matrix
    assert spectral_radius(flt.Apsi) == pytest.approx(0.4)


def test_static_identity_filter():
    flt = static_identity_filter(4)
    assert flt.npsi == 0
    assert flt.ns == 4
    q = np.array([[1.0, 2.0]])
    p = np.array([[3.0, 4.0]])
    _, s = flt.response(q, p)
    assert np.allclose(s[0], [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(DimensionMismatch):
        static_identity_filter(3)


def test_augment_cascade_equivalence(bench_plant):
    """The augmented response must equal plant-then-filter, channel by
    channel, because augmentation is just series interconnection."""
    phi = basis_filter(0.15, 2)
    flt = kron_identity_filter(phi, 2)
    aug = augment(bench_plant, flt)
    assert aug.dims.nchi == flt.npsi + 2
    rng = np.random.default_rng(11)
    for _ in range(8):
        T = int(rng.integers(2, 20))
        p = rng.standard_normal((T, 2))
        w = rng.standard_normal((T, 2))
        chi, s, z = aug.response(p, w)
        x, q, z_direct = bench_plant.response(p, w)
        psi, s_direct = flt.response(q, p)
        assert np.allclose(z, z_direct, atol=1e-10)
        assert np.allclose(s, s_direct, atol=1e-10)
        assert np.allclose(chi[:, : flt.npsi], psi, atol=1e-10)
        assert np.allclose(chi[:, flt.npsi:], x, atol=1e-10)


def test_augment_static_filter_cascade(bench_plant):
    flt = static_identity_filter(4)
    aug = augment(bench_plant, flt)
    assert aug.dims.nchi == 2
    rng = np.random.default_rng(3)
    p = rng.standard_normal((6, 2))
    w = rng.standard_normal((6, 2))
    chi, s, _ = aug.response(p, w)
    x, q, _ = bench_plant.response(p, w)
    assert np.allclose(chi, x, atol=1e-12)
    assert np.allclose(s, np.hstack([q, p]), atol=1e-12)


def test_augment_rejects_channel_mismatch(bench_plant):
    flt = static_identity_filter(6)  # plant (q, p) stack has width 4
    with pytest.raises(DimensionMismatch):
        augment(bench_plant, flt)


def test_spectral_radius_empty():
    assert spectral_radius(np.zeros((0, 0))) == 0.0


def test_unstable_filter_rejected():
    phi = basis_filter(0.5, 1)
    # hand-build an unstable variant through the public constructor
    from peakgain.systems import Filter

    with pytest.raises(UnstableFilter):
        Filter(
            Apsi=np.array([[1.01]]),
            Bq=np.array([[1.0]]),
            Bp=np.array([[0.0]]),
            Cs=np.array([[1.0], [0.0]]),
            Dsq=np.array([[0.0], [0.0]]),
            Dsp=np.array([[0.0], [1.0]]),
        )
    # the stable one is fine
    kron_identity_filter(phi, 1)

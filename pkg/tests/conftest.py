"""Shared fixtures: benchmark plants and solved certificates reused across
test modules. Everything heavy is session-scoped so the suite solves each
program once."""

import numpy as np
import pytest

from peakgain.engine import certify_gain, maximize_volume
from peakgain.systems import augment, basis_filter, make_plant
from peakgain.uncertainty import (
    UncertaintySpec,
    class_polytopic_ti,
    multiplier_class_for,
)

BENCH_BLOCKS = {
    "A": [[0.2, 0.01], [-0.1, -0.01]],
    "Bp": [[0.1, 0.2], [0.3, -0.2]],
    "Bw": [[3.0, 2.0], [3.0, 1.0]],
    "Cq": [[0.2, -0.3], [0.8, 0.5]],
    "Dqp": [[0.4, 0.3], [-0.6, 0.1]],
    "Dqw": [[3.0, 1.0], [2.0, 7.0]],
    "Cz": [[2.0, 1.0], [2.0, 3.0]],
    "Dzp": [[1.0, 2.0], [-1.0, 4.0]],
    "Dzw": [[1.0, -2.0], [-4.0, 3.0]],
}
BENCH_DIMS = {"nx": 2, "np": 2, "nq": 2, "nw": 2, "nz": 2}
BENCH_VERTICES = ((-0.1, -0.3), (-0.1, 0.6), (0.5, -0.3), (0.5, 0.6))

REACH_BLOCKS = {
    "A": [[0.05, -0.2, 0.3], [0.1, 0.8, 0.2], [-0.2, 0.5, -0.1]],
    "Bp": [[0.2, 0.1], [0.5, -0.4], [-0.3, -0.2]],
    "Bw": [[0.5, 0.1], [-0.3, -0.7], [0.5, -0.2]],
    "Cq": [[1.0, -0.5, 0.3], [0.9, 0.2, -0.5]],
    "Dqp": [[0.1, 0.6], [0.6, -0.9]],
    "Dqw": [[-0.5, 0.4], [0.3, 0.1]],
}
REACH_DIMS = {"nx": 3, "np": 2, "nq": 2, "nw": 2, "nz": 0}
REACH_VERTICES = ((-0.3, -0.3), (0.3, 0.3))
REACH_W_PEAK = float(np.sqrt(0.5))


@pytest.fixture(scope="session")
def bench_plant():
    return make_plant(BENCH_BLOCKS, BENCH_DIMS)


@pytest.fixture(scope="session")
def bench_tv_spec():
    return UncertaintySpec(kind="ptv", nq=2, np=2, vertices=BENCH_VERTICES)


@pytest.fixture(scope="session")
def bench_ti_spec():
    return UncertaintySpec(kind="pti", nq=2, np=2, vertices=BENCH_VERTICES)


@pytest.fixture(scope="session")
def reach_plant():
    return make_plant(REACH_BLOCKS, REACH_DIMS)


@pytest.fixture(scope="session")
def reach_spec():
    return UncertaintySpec(kind="pti", nq=2, np=2, vertices=REACH_VERTICES)


@pytest.fixture(scope="session")
def ti_setup(bench_plant, bench_ti_spec):
    """Basis-filtered time-invariant class at the benchmark's best pole."""
    phi = basis_filter(-0.25, 2)
    mc = class_polytopic_ti(bench_ti_spec, phi)
    aug = augment(bench_plant, mc.filter)
    return bench_plant, bench_ti_spec, mc, aug


@pytest.fixture(scope="session")
def tv_setup(bench_plant, bench_tv_spec):
    mc = multiplier_class_for(bench_tv_spec)
    aug = augment(bench_plant, mc.filter)
    return bench_plant, bench_tv_spec, mc, aug


@pytest.fixture(scope="session")
def ti_cert(ti_setup):
    """Gain certificate at the pinned benchmark optimum (rho=0.18)."""
    _, _, mc, aug = ti_setup
    cert = certify_gain(aug, mc, 0.18)
    assert cert is not None
    return cert


@pytest.fixture(scope="session")
def tv_thm1_cert(tv_setup):
    _, _, mc, aug = tv_setup
    cert = certify_gain(aug, mc, 0.23, "thm1")
    assert cert is not None
    return cert


@pytest.fixture(scope="session")
def tv_thm2_cert(tv_setup):
    _, _, mc, aug = tv_setup
    cert = certify_gain(aug, mc, 0.21, "thm2")
    assert cert is not None
    return cert


@pytest.fixture(scope="session")
def reach_setup(reach_plant, reach_spec):
    phi = basis_filter(0.2, 2)
    mc = class_polytopic_ti(reach_spec, phi)
    aug = augment(reach_plant, mc.filter)
    return reach_plant, reach_spec, mc, aug


@pytest.fixture(scope="session")
def reach_cert(reach_setup):
    """Ellipsoid certificate near the benchmark's best rate."""
    _, _, mc, aug = reach_setup
    cert = maximize_volume(aug, mc, 0.9216, REACH_W_PEAK, scale=1000.0)
    assert cert is not None
    return cert

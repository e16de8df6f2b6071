"""Multiplier classes: admissible-set constraints and numeric recovery."""

import numpy as np
import pytest

from peakgain.errors import DimensionMismatch, WrongKind
from peakgain.lmi import SdpProgram
from peakgain.systems import basis_filter
from peakgain.uncertainty import (
    UncertaintySpec,
    class_no_uncertainty,
    class_norm_bounded,
    class_polytopic_ti,
    class_polytopic_tv,
    class_residuals,
    multiplier_class_for,
)


def test_spec_validation():
    with pytest.raises(WrongKind):
        UncertaintySpec(kind="weird", nq=1, np=1)
    with pytest.raises(DimensionMismatch):
        UncertaintySpec(kind="ptv", nq=2, np=1, vertices=((0.0, 0.0),))
    with pytest.raises(WrongKind):
        UncertaintySpec(kind="pti", nq=1, np=1, vertices=())
    with pytest.raises(DimensionMismatch):
        UncertaintySpec(kind="ptv", nq=2, np=2, vertices=((1.0,),))
    with pytest.raises(WrongKind):
        UncertaintySpec(kind="normbound", nq=1, np=1, vertices=((1.0,),))
    with pytest.raises(WrongKind):
        UncertaintySpec(kind="none", nq=1, np=0)


def test_vertex_array():
    spec = UncertaintySpec(kind="ptv", nq=2, np=2,
                           vertices=((0.0, 1.0), (2.0, 3.0)))
    assert spec.m == 2
    assert np.allclose(spec.vertex_array(), [[0.0, 1.0], [2.0, 3.0]])


def test_tv_class_installs_vertex_constraints():
    spec = UncertaintySpec(kind="ptv", nq=2, np=2,
                           vertices=((-1.0, -1.0), (1.0, 1.0), (0.5, -0.5)))
    mc = class_polytopic_tv(spec)
    assert mc.pointwise and mc.terminal_cost_zero
    prog = SdpProgram()
    cv = mc.install(prog, 0.5)
    assert cv.M.shape == (4, 4)
    assert cv.X is None
    labels = [c.label for c in prog.constraints]
    assert "class-lower-right" in labels
    assert sum(1 for lbl in labels if lbl.startswith("class-vertex")) == 3


def test_ti_class_needs_basis_and_installs_cap():
    spec = UncertaintySpec(kind="pti", nq=2, np=2,
                           vertices=((-0.5, -0.5), (0.5, 0.5)))
    with pytest.raises(WrongKind):
        multiplier_class_for(spec)
    phi = basis_filter(0.1, 2)
    mc = class_polytopic_ti(spec, phi)
    assert not mc.pointwise
    prog = SdpProgram()
    cv = mc.install(prog, 0.7)
    nsig_q = phi.nsigma * 2
    nphi_q = phi.nphi * 2
    assert cv.M.shape == (2 * nsig_q, 2 * nsig_q)
    assert cv.X.shape == (2 * nphi_q, 2 * nphi_q)
    labels = [c.label for c in prog.constraints]
    assert "class-basis" in labels
    assert "class-vertex1" in labels and "class-vertex2" in labels
    assert "class-cap1" in labels and "class-cap2" in labels


def test_normbound_class_scalar_family():
    spec = UncertaintySpec(kind="normbound", nq=2, np=2)
    mc = class_norm_bounded(spec)
    assert mc.pointwise
    prog = SdpProgram()
    cv = mc.install(prog, 0.5)
    M = cv.M.evaluate({"eps": 3.0})
    assert np.allclose(M, np.diag([3.0, 3.0, -3.0, -3.0]))


def test_no_uncertainty_class():
    spec = UncertaintySpec(kind="none", nq=0, np=0)
    mc = class_no_uncertainty()
    prog = SdpProgram()
    cv = mc.install(prog, 0.5)
    assert cv.M.shape == (0, 0)
    assert multiplier_class_for(spec).kind == "none"


def test_sector_multiplier_residuals():
    """For scalar delta in [-1, 1] the classic sector multiplier
    diag(c, -c), c >= 0, is admissible; its negation is not."""
    spec = UncertaintySpec(kind="ptv", nq=1, np=1,
                           vertices=((-1.0,), (1.0,)))
    mc = class_polytopic_tv(spec)
    good = class_residuals(mc, 0.5, {"M": np.diag([2.0, -2.0])})
    assert min(good.values()) >= -1e-12
    bad = class_residuals(mc, 0.5, {"M": np.diag([-2.0, 2.0])})
    assert min(bad.values()) < -1.0


def test_ti_numeric_multiplier_roundtrip():
    spec = UncertaintySpec(kind="pti", nq=1, np=1,
                           vertices=((-0.4,), (0.4,)))
    phi = basis_filter(-0.2, 1)
    mc = class_polytopic_ti(spec, phi)
    rng = np.random.default_rng(0)
    raw_m = rng.standard_normal((4, 4))
    raw_x = rng.standard_normal((2, 2))
    values = {"M": raw_m + raw_m.T, "X": raw_x + raw_x.T,
              "Y1": np.eye(2), "Y2": np.eye(2)}
    M, X = mc.numeric_multiplier(values)
    assert np.allclose(M, values["M"])
    assert np.allclose(X, values["X"])


def test_second_copy_suffix_no_collision():
    spec = UncertaintySpec(kind="ptv", nq=1, np=1,
                           vertices=((-1.0,), (1.0,)))
    mc = class_polytopic_tv(spec)
    prog = SdpProgram()
    mc.install(prog, 0.5)
    cv2 = mc.install(prog, 0.5, suffix="2")
    names = [v.name for v in prog.variables]
    assert "M" in names and "M2" in names
    M2, _ = mc.numeric_multiplier({"M": np.eye(2), "M2": 5 * np.eye(2)},
                                  suffix="2")
    assert np.allclose(M2, 5 * np.eye(2))
    assert cv2.M.shape == (2, 2)

"""Affine expression algebra, LMI builders, and volume-objective encoding."""

import numpy as np
import pytest

from peakgain.errors import DimensionMismatch, DuplicateVariable
from peakgain.lmi import (
    SdpProgram,
    add_detroot_objective,
    add_geomean,
    add_invariance_constraints,
    as_expr,
    block,
    blockdiag,
    build_decay_lmi,
    build_peak_lmi_schur,
    build_pointwise_peak_lmi_schur,
    congruence,
    gain_outer_factor,
    output_row,
    smul,
    zeros,
)
from peakgain.solver import solve_program
from peakgain.systems import augment, make_plant
from peakgain.uncertainty import class_no_uncertainty


def _sym(rng, n):
    raw = rng.standard_normal((n, n))
    return raw + raw.T


def test_expression_algebra_matches_numpy():
    rng = np.random.default_rng(5)
    prog = SdpProgram()
    P = prog.symmetric("P", 3)
    a = prog.scalar("a")
    Pv = _sym(rng, 3)
    av = 0.7
    asg = {"P": Pv, "a": av}
    F = rng.standard_normal((3, 2))
    G = rng.standard_normal((2, 3))

    expr = 2.0 * as_expr(P) - np.eye(3) + as_expr(P).T
    assert np.allclose(expr.evaluate(asg), 3 * Pv - np.eye(3))
    assert np.allclose((as_expr(P) @ F).evaluate(asg), Pv @ F)
    assert np.allclose((G @ as_expr(P)).evaluate(asg), G @ Pv)
    assert np.allclose(congruence(P, F).evaluate(asg), F.T @ Pv @ F)
    assert np.allclose(
        blockdiag(P, smul(a, np.eye(2))).evaluate(asg),
        np.block([[Pv, np.zeros((3, 2))], [np.zeros((2, 3)), av * np.eye(2)]]),
    )
    sub = as_expr(P).sub(slice(1, 3), slice(0, 2))
    assert np.allclose(sub.evaluate(asg), Pv[1:3, 0:2])
    assert np.allclose(as_expr(P).trace().evaluate(asg), np.trace(Pv))
    stacked = block([[P, None], [None, as_expr(np.eye(2))]])
    assert stacked.shape == (5, 5)


def test_expression_shape_errors():
    prog = SdpProgram()
    P = prog.symmetric("P", 2)
    with pytest.raises(DimensionMismatch):
        as_expr(P) + np.eye(3)
    with pytest.raises(DimensionMismatch):
        as_expr(P) @ np.eye(3)
    with pytest.raises(DimensionMismatch):
        smul(as_expr(np.eye(2)), np.eye(2))
    with pytest.raises(DimensionMismatch):
        congruence(P, np.eye(3))


def test_duplicate_variable_rejected():
    prog = SdpProgram()
    prog.symmetric("P", 2)
    with pytest.raises(DuplicateVariable):
        prog.scalar("P")


def test_decay_lmi_matches_dense_formula(ti_setup):
    """The builder output is a congruence of a block-diagonal inner matrix;
    evaluating it at random assignments must match the dense assembly."""
    _, _, _, aug = ti_setup
    d = aug.dims
    prog = SdpProgram()
    P = prog.symmetric("P", d.nchi)
    M = prog.symmetric("M", d.ns)
    mu = prog.scalar("mu")
    rho = 0.37
    con = build_decay_lmi(aug, P, M, mu, rho)
    assert con.sense == "nsd" and con.label == "decay"
    F = gain_outer_factor(aug)
    rng = np.random.default_rng(2)
    for _ in range(5):
        asg = {"P": _sym(rng, d.nchi), "M": _sym(rng, d.ns),
               "mu": abs(rng.standard_normal())}
        inner = np.zeros((2 * d.nchi + d.ns + d.nw,) * 2)
        inner[: d.nchi, : d.nchi] = -rho * asg["P"]
        inner[d.nchi : 2 * d.nchi, d.nchi : 2 * d.nchi] = asg["P"]
        inner[2 * d.nchi : 2 * d.nchi + d.ns, 2 * d.nchi : 2 * d.nchi + d.ns] = asg["M"]
        inner[2 * d.nchi + d.ns :, 2 * d.nchi + d.ns :] = -asg["mu"] * np.eye(d.nw)
        assert np.allclose(con.expr.evaluate(asg), F.T @ inner @ F, atol=1e-12)


def test_peak_lmi_matches_dense_formula(ti_setup):
    _, _, _, aug = ti_setup
    d = aug.dims
    prog = SdpProgram()
    P = prog.symmetric("P", d.nchi)
    X = prog.symmetric("X", d.npsi)
    M = prog.symmetric("M", d.ns)
    mu = prog.scalar("mu")
    gamma = prog.scalar("gamma")
    rho = 0.4
    con = build_peak_lmi_schur(aug, P, X, M, mu, gamma, rho)
    F = gain_outer_factor(aug)
    Z = output_row(aug)
    rng = np.random.default_rng(9)
    asg = {"P": _sym(rng, d.nchi), "X": _sym(rng, d.npsi), "M": _sym(rng, d.ns),
           "mu": 1.3, "gamma": 4.2}
    Xt = np.zeros((d.nchi, d.nchi))
    Xt[: d.npsi, : d.npsi] = asg["X"]
    inner = np.zeros((2 * d.nchi + d.ns + d.nw,) * 2)
    inner[: d.nchi, : d.nchi] = -rho * asg["P"]
    inner[d.nchi : 2 * d.nchi, d.nchi : 2 * d.nchi] = Xt
    inner[2 * d.nchi : 2 * d.nchi + d.ns, 2 * d.nchi : 2 * d.nchi + d.ns] = asg["M"]
    inner[2 * d.nchi + d.ns :, 2 * d.nchi + d.ns :] = (
        -rho * (asg["gamma"] - asg["mu"]) / (1 - rho) * np.eye(d.nw)
    )
    S = F.T @ inner @ F
    corner = -asg["gamma"] * (1 - rho) / rho * np.eye(d.nz)
    dense = np.block([[S, Z.T], [Z, corner]])
    assert np.allclose(con.expr.evaluate(asg), dense, atol=1e-12)


def test_pointwise_peak_drops_state_update_row(tv_setup):
    _, _, _, aug = tv_setup
    d = aug.dims
    prog = SdpProgram()
    P = prog.symmetric("P", d.nchi)
    M2 = prog.symmetric("M2", d.ns)
    mu = prog.scalar("mu")
    gamma = prog.scalar("gamma")
    rho = 0.3
    con = build_pointwise_peak_lmi_schur(aug, P, M2, mu, gamma, rho)
    # bordered size: (chi, p, w) columns plus the output border
    n = d.nchi + d.np + d.nw + d.nz
    assert con.expr.shape == (n, n)
    rng = np.random.default_rng(4)
    asg = {"P": _sym(rng, d.nchi), "M2": _sym(rng, d.ns), "mu": 0.9, "gamma": 3.0}
    F = np.block(
        [
            [np.eye(d.nchi), np.zeros((d.nchi, d.np)), np.zeros((d.nchi, d.nw))],
            [aug.Cs, aug.Dsp, aug.Dsw],
            [np.zeros((d.nw, d.nchi)), np.zeros((d.nw, d.np)), np.eye(d.nw)],
        ]
    )
    inner = np.zeros((d.nchi + d.ns + d.nw,) * 2)
    inner[: d.nchi, : d.nchi] = -rho * asg["P"]
    inner[d.nchi : d.nchi + d.ns, d.nchi : d.nchi + d.ns] = asg["M2"]
    inner[d.nchi + d.ns :, d.nchi + d.ns :] = (
        -rho * (asg["gamma"] - asg["mu"]) / (1 - rho) * np.eye(d.nw)
    )
    S = F.T @ inner @ F
    Z = output_row(aug)
    corner = -asg["gamma"] * (1 - rho) / rho * np.eye(d.nz)
    dense = np.block([[S, Z.T], [Z, corner]])
    assert np.allclose(con.expr.evaluate(asg), dense, atol=1e-12)


def test_schur_border_absent_without_outputs(reach_setup):
    _, _, _, aug = reach_setup
    d = aug.dims
    assert d.nz == 0
    prog = SdpProgram()
    P = prog.symmetric("P", d.nchi)
    X = prog.symmetric("X", d.npsi)
    M = prog.symmetric("M", d.ns)
    mu = prog.scalar("mu")
    gamma = prog.scalar("gamma")
    con = build_peak_lmi_schur(aug, P, X, M, mu, gamma, 0.5)
    n = d.nchi + d.np + d.nw
    assert con.expr.shape == (n, n)


def test_invariance_constraint_labels_and_slacks():
    plant = make_plant({"A": [[0.5]], "Bw": [[1.0]]},
                       {"nx": 1, "np": 0, "nq": 0, "nw": 1, "nz": 0})
    aug = augment(plant, class_no_uncertainty().filter)
    prog = SdpProgram()
    P = prog.symmetric("P", 1)
    Q = prog.symmetric("Q", 1)
    add_invariance_constraints(prog, aug, P, None, Q, margin=1e-6)
    labels = [c.label for c in prog.constraints]
    assert labels == ["Q-margin", "P-above-XQ"]
    res = prog.residuals({"P": [[2.0]], "Q": [[1.0]]})
    assert res["Q-margin"] == pytest.approx(1.0 - 1e-6)
    assert res["P-above-XQ"] == pytest.approx(1.0 - 1e-6)
    bad = prog.residuals({"P": [[0.5]], "Q": [[1.0]]})
    assert bad["P-above-XQ"] < 0


def test_detroot_objective_is_exact():
    """max det(Q)^(1/3) s.t. Q <= diag(1, 2, 3) has the analytic solution
    Q = diag(1, 2, 3) with value 6^(1/3)."""
    cap = np.diag([1.0, 2.0, 3.0])
    prog = SdpProgram()
    Q = prog.symmetric("Q", 3)
    prog.add_nsd(as_expr(Q) - cap, "cap")
    add_detroot_objective(prog, Q)
    res = solve_program(prog)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(6.0 ** (1.0 / 3.0), rel=1e-6)
    assert np.allclose(res.assignment["Q"], cap, atol=1e-6)


def test_geomean_handles_non_power_of_two():
    """max t s.t. t <= geomean(4, 9, 1) should land on 36^(1/3): padding the
    cone tree with t itself preserves the geometric mean exactly."""
    prog = SdpProgram()
    t = add_geomean(prog, [4.0, 9.0, 1.0])
    prog.maximize(t)
    res = solve_program(prog)
    assert res.status == "optimal"
    assert res.objective == pytest.approx(36.0 ** (1.0 / 3.0), rel=1e-7)


def test_zero_size_constraint_residual():
    prog = SdpProgram()
    prog.add_psd(zeros(0), "empty")
    assert prog.residuals({})["empty"] == 0.0

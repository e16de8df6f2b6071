"""End-to-end acceptance gate.

Each test reproduces one headline result of the package on the two bundled
benchmark studies -- certified gain bounds, the reachable-set ellipsoid,
oracle cross-checks -- and prints a single ``ACCEPTANCE n: PASS/FAIL`` line
with the measured numbers, then asserts it.
"""

import time

import numpy as np
import pytest

from conftest import (
    BENCH_BLOCKS,
    BENCH_DIMS,
    BENCH_VERTICES,
    REACH_BLOCKS,
    REACH_DIMS,
    REACH_VERTICES,
    REACH_W_PEAK,
)
from peakgain.engine import certify_gain, maximize_volume, rho_line_search
from peakgain.lmi import (
    build_peak_lmi_schur,
    build_pointwise_peak_lmi_schur,
    gain_outer_factor,
    output_row,
)
from peakgain.oracle import (
    DeltaRealization,
    empirical_gain,
    gain_soundness_check,
    iqc_residual_check,
    reach_containment_check,
)
from peakgain.schemas import parse_problem
from peakgain.service import fixture_text, run_gain, run_reach
from peakgain.systems import augment, make_plant
from peakgain.uncertainty import UncertaintySpec, multiplier_class_for

FIXTURES = ("example1_ti", "example1_tv_thm1", "example1_tv_thm2", "example2")


def block_diag(*mats):
    mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in mats]
    rows = sum(m.shape[0] for m in mats)
    cols = sum(m.shape[1] for m in mats)
    out = np.zeros((rows, cols))
    r = c = 0
    for m in mats:
        out[r:r + m.shape[0], c:c + m.shape[1]] = m
        r += m.shape[0]
        c += m.shape[1]
    return out


def _verdict(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\nACCEPTANCE {n}: {'PASS' if ok else 'FAIL'} — {detail}")
    assert ok, f"criterion {n} failed: {detail}"


@pytest.fixture(scope="module")
def pipeline():
    """Run all four bundled studies once, end to end, with wall times."""
    out = {}
    for name in FIXTURES:
        doc, _ = parse_problem(fixture_text(name))
        runner = run_gain if doc.request == "gain" else run_reach
        t0 = time.perf_counter()
        out[name] = (runner(doc), time.perf_counter() - t0)
    return out


def test_criterion_1_ti_gain_double_search(pipeline, ti_setup, capsys):
    """Time-invariant polytopic study: full pole+rate search lands in the
    reference window and a single pinned-rate solve is fast."""
    report, seconds = pipeline["example1_ti"]
    gamma = report.gain.gamma
    _, _, mc, aug = ti_setup
    t0 = time.perf_counter()
    single = certify_gain(aug, mc, 0.18)
    t_single = time.perf_counter() - t0
    ok = (59.41 <= gamma <= 61.3 and seconds < 180.0
          and single is not None and t_single < 2.0)
    _verdict(capsys, 1, ok,
             f"gamma={gamma:.4f} in [59.41, 61.3] "
             f"(rho={report.certificate.rho:.4f}, "
             f"lam={report.certificate.lam}), search {seconds:.1f}s < 180s, "
             f"pinned solve {t_single:.2f}s < 2s")


def test_criterion_2_tv_gain_second_variant(pipeline, capsys):
    report, seconds = pipeline["example1_tv_thm2"]
    gamma = report.gain.gamma
    ok = 65.66 <= gamma <= 67.6 and seconds < 60.0
    _verdict(capsys, 2, ok,
             f"gamma={gamma:.4f} in [65.66, 67.6] "
             f"(rho={report.certificate.rho:.4f}), search {seconds:.1f}s < 60s")


def test_criterion_3_pointwise_variant_ordering(pipeline, capsys):
    g1 = pipeline["example1_tv_thm1"][0].gain.gamma
    g2 = pipeline["example1_tv_thm2"][0].gain.gamma
    ok = g1 <= 68.5 and g1 >= g2 - 1e-4
    _verdict(capsys, 3, ok,
             f"first-variant gamma={g1:.4f} <= 68.5 and >= "
             f"second-variant {g2:.4f} - 1e-4")


def test_criterion_4_reachable_set_volume(pipeline, reach_setup, capsys):
    report, seconds = pipeline["example2"]
    volume = report.reach.volume
    _, _, mc, aug = reach_setup
    t0 = time.perf_counter()
    pinned = maximize_volume(aug, mc, 0.9216, REACH_W_PEAK, scale=1000.0)
    t_pinned = time.perf_counter() - t0
    ok = (volume <= 7.2 and seconds < 60.0
          and pinned is not None and t_pinned < 2.0)
    _verdict(capsys, 4, ok,
             f"-logdet(Qtilde)={volume:.4f} <= 7.2 "
             f"(rho={report.certificate.rho:.4f}), search {seconds:.1f}s "
             f"< 60s, pinned solve {t_pinned:.2f}s < 2s")


def test_criterion_5_certificate_soundness(pipeline, capsys):
    """Monte-Carlo falsification: no admissible run beats any certificate."""
    plant = make_plant(BENCH_BLOCKS, BENCH_DIMS)
    rplant = make_plant(REACH_BLOCKS, REACH_DIMS)
    ti = UncertaintySpec(kind="pti", nq=2, np=2, vertices=BENCH_VERTICES)
    tv = UncertaintySpec(kind="ptv", nq=2, np=2, vertices=BENCH_VERTICES)
    rspec = UncertaintySpec(kind="pti", nq=2, np=2, vertices=REACH_VERTICES)

    t0 = time.perf_counter()
    margins = []
    for i, (name, spec) in enumerate([("example1_ti", ti),
                                      ("example1_tv_thm1", tv),
                                      ("example1_tv_thm2", tv)]):
        gamma = pipeline[name][0].gain.gamma
        worst = gain_soundness_check(plant, spec, gamma, trials=1000, T=200,
                                     seed=i)
        margins.append(worst / gamma)
    Qtilde = np.asarray(pipeline["example2"][0].certificate.matrices["Qtilde"])
    worst_x = reach_containment_check(rplant, None, Qtilde, rspec,
                                      REACH_W_PEAK, trials=500, T=150, seed=3)
    seconds = time.perf_counter() - t0
    ok = (all(m <= 1.0 + 1e-4 for m in margins)
          and worst_x <= 1.0 + 1e-4 and seconds < 60.0)
    _verdict(capsys, 5, ok,
             f"worst gain ratios {[f'{m:.4f}' for m in margins]} <= 1+1e-4, "
             f"worst ellipsoid level {worst_x:.4f} <= 1+1e-4, "
             f"{seconds:.1f}s < 60s")


def _hull_draws(verts, rng, n, T, varying):
    """Admissible parameter realizations: every vertex plus n interior picks."""
    verts = np.asarray(verts, dtype=float)
    out = [DeltaRealization.constant(v) for v in verts]
    for _ in range(n):
        if varying:
            theta = rng.dirichlet(np.ones(verts.shape[0]), size=T)
            out.append(DeltaRealization.schedule(theta @ verts))
        else:
            theta = rng.dirichlet(np.ones(verts.shape[0]))
            out.append(DeltaRealization.constant(theta @ verts))
    return out


def _ball_draws(np_, nq, rng, n, T):
    out = [DeltaRealization.norm_bounded(np.zeros((np_, nq))),
           DeltaRealization.norm_bounded(np.eye(np_, nq)),
           DeltaRealization.norm_bounded(-np.eye(np_, nq))]
    for _ in range(n):
        mats = rng.standard_normal((T, np_, nq))
        for k in range(T):
            smax = np.linalg.svd(mats[k], compute_uv=False)[0]
            mats[k] *= rng.uniform(0.0, 1.0) / max(smax, 1e-12)
        out.append(DeltaRealization.norm_bounded(mats))
    return out


def test_criterion_6_multiplier_iqc_validity(ti_setup, tv_setup, ti_cert,
                                             tv_thm1_cert, tv_thm2_cert,
                                             capsys):
    """Every solved multiplier satisfies its filtered quadratic constraint
    along admissible runs: vertices plus 50 random interior draws, T=40."""
    T = 40
    rng = np.random.default_rng(2024)
    plant = make_plant(BENCH_BLOCKS, BENCH_DIMS)
    nb_spec = UncertaintySpec(kind="normbound", nq=2, np=2)
    nb_mc = multiplier_class_for(nb_spec)
    nb_cert = rho_line_search(augment(plant, nb_mc.filter), nb_mc)
    nb_M, _ = nb_mc.numeric_multiplier(nb_cert.matrices)

    cases = [
        ("ti", ti_setup[2].filter, ti_cert.matrices["M"],
         ti_cert.matrices["X"], ti_cert.rho,
         _hull_draws(BENCH_VERTICES, rng, 50, T, varying=False)),
        ("tv", tv_setup[2].filter, tv_thm1_cert.matrices["M"], None,
         tv_thm1_cert.rho, _hull_draws(BENCH_VERTICES, rng, 50, T, True)),
        ("tv-second", tv_setup[2].filter, tv_thm2_cert.matrices["M2"], None,
         tv_thm2_cert.rho, _hull_draws(BENCH_VERTICES, rng, 50, T, True)),
        ("normbound", nb_mc.filter, nb_M, None, nb_cert.rho,
         _ball_draws(2, 2, rng, 50, T)),
    ]
    results = {}
    ok = True
    for name, filt, M, X, rho, draws in cases:
        M = np.asarray(M)
        scale = 1.0 + float(np.abs(M).max())
        if X is not None:
            scale = max(scale, 1.0 + float(np.abs(np.asarray(X)).max()))
        worst = min(
            iqc_residual_check(filt, M, X, rho, delta,
                               rng.standard_normal((T, 2)), T=T)
            for delta in draws)
        results[name] = worst
        ok = ok and worst >= -1e-6 * scale
    detail = ", ".join(f"{k}: min residual {v:.2e}" for k, v in results.items())
    _verdict(capsys, 6, ok, detail + " (all >= -1e-6*scale)")


def _peak_forms(aug, matrices, rho, pointwise):
    """Dense quadratic peak condition and its bordered linearization,
    evaluated at one concrete parameter point. Returns (lhs_max_eig pair)."""
    d = aug.dims
    P = np.asarray(matrices["P"])
    mu = float(matrices["mu"])
    gamma = float(matrices["gamma"])
    Z = output_row(aug)
    c_dist = rho * (gamma - mu) / (1.0 - rho)
    if pointwise:
        M2 = np.asarray(matrices["M2"])
        F = np.block([
            [np.eye(d.nchi), np.zeros((d.nchi, d.np)), np.zeros((d.nchi, d.nw))],
            [aug.Cs, aug.Dsp, aug.Dsw],
            [np.zeros((d.nw, d.nchi)), np.zeros((d.nw, d.np)), np.eye(d.nw)],
        ])
        inner = block_diag(-rho * P, M2, -c_dist * np.eye(d.nw))
        con = build_pointwise_peak_lmi_schur(aug, P, M2, mu, gamma, rho)
    else:
        M = np.asarray(matrices["M"])
        X = matrices.get("X")
        Xt = (np.zeros((d.nchi, d.nchi)) if X is None
              else block_diag(np.asarray(X), np.zeros((d.nx, d.nx))))
        F = gain_outer_factor(aug)
        inner = block_diag(-rho * P, Xt, M, -c_dist * np.eye(d.nw))
        con = build_peak_lmi_schur(aug, P, X, M, mu, gamma, rho)
    dense = F.T @ inner @ F + rho / (gamma * (1.0 - rho)) * Z.T @ Z
    bordered = con.expr.evaluate({})
    return (float(np.linalg.eigvalsh(0.5 * (dense + dense.T))[-1]),
            float(np.linalg.eigvalsh(0.5 * (bordered + bordered.T))[-1]))


def _wiggle(A, eps, rng):
    E = rng.standard_normal(A.shape)
    E = 0.5 * (E + E.T)
    return A + eps * (np.linalg.norm(A, 2) + 1.0) * E / np.linalg.norm(E, 2)


def test_criterion_7_schur_linearization_equivalence(ti_setup, tv_setup,
                                                     ti_cert, tv_thm1_cert,
                                                     tv_thm2_cert, capsys):
    """The bordered LMI and the quadratic condition it linearizes agree in
    sign on random parameter points around every solved certificate."""
    rng = np.random.default_rng(77)
    cases = [(ti_setup[3], ti_cert, False),
             (tv_setup[3], tv_thm1_cert, False),
             (tv_setup[3], tv_thm2_cert, True)]
    agree = 0
    total = 0
    n_viol = 0
    for aug, cert, pointwise in cases:
        mats = {k: np.asarray(v) if v is not None else None
                for k, v in cert.matrices.items()}
        mats["mu"], mats["gamma"] = cert.mu, cert.gamma
        for trial in range(50):
            pt = dict(mats)
            if trial:
                eps = 10.0 ** rng.uniform(-3, -0.5)
                pt["P"] = _wiggle(pt["P"], eps, rng)
                key = "M2" if pointwise else "M"
                pt[key] = _wiggle(pt[key], eps, rng)
                pt["gamma"] = cert.gamma * (1.0 + eps * rng.uniform(-1, 1))
                pt["mu"] = cert.mu * (1.0 + eps * rng.uniform(-1, 1))
            lam_dense, lam_lmi = _peak_forms(aug, pt, cert.rho, pointwise)
            total += 1
            agree += (lam_dense <= 0.0) == (lam_lmi <= 0.0)
            n_viol += lam_dense > 0.0
    ok = agree == total and 0 < n_viol < total
    _verdict(capsys, 7, ok,
             f"sign agreement {agree}/{total} points "
             f"({n_viol} infeasible perturbations exercised both signs)")


def test_criterion_8_no_uncertainty_oracle(capsys):
    """Scalar lag x+ = 0.5x + w, z = x: exact gain 2 by impulse-response
    summation; the certified bound lands on it."""
    l1 = 0.0
    h = 1.0  # impulse response of z: 0.5**k starting at k=1
    for _ in range(400):
        l1 += h
        h *= 0.5
    doc, _ = parse_problem("""
    {"format": "peakgain-problem", "request": "gain",
     "plant": {"dims": {"nx": 1, "np": 0, "nq": 0, "nw": 1, "nz": 1},
               "A": [[0.5]], "Bw": [[1.0]], "Cz": [[1.0]], "Dzw": [[0.0]]},
     "uncertainty": {"kind": "none"}, "options": {}}
    """)
    report = run_gain(doc)
    gamma = report.gain.gamma
    ok = l1 == 2.0 and 2.0 - 1e-9 <= gamma <= 2.1
    _verdict(capsys, 8, ok,
             f"impulse-sum gain {l1} == 2 exactly, certified "
             f"gamma={gamma:.9f} in [2, 2.1]")


def test_criterion_9_empirical_lower_bounds(pipeline, capsys):
    """Deterministic worst-case search reaches the known lower bounds and
    never crosses the certified upper bounds."""
    plant = make_plant(BENCH_BLOCKS, BENCH_DIMS)
    ti = UncertaintySpec(kind="pti", nq=2, np=2, vertices=BENCH_VERTICES)
    tv = UncertaintySpec(kind="ptv", nq=2, np=2, vertices=BENCH_VERTICES)
    wit_ti = empirical_gain(plant, ti, horizon=200)
    wit_tv = empirical_gain(plant, tv, horizon=200)
    g_ti = pipeline["example1_ti"][0].gain.gamma
    g_tv = min(pipeline["example1_tv_thm1"][0].gain.gamma,
               pipeline["example1_tv_thm2"][0].gain.gamma)
    ok = (wit_ti.gain >= 58.0 and wit_ti.gain <= g_ti
          and wit_tv.gain >= 64.0 and wit_tv.gain <= g_tv)
    _verdict(capsys, 9, ok,
             f"empirical ti={wit_ti.gain:.4f} in [58, {g_ti:.4f}], "
             f"tv={wit_tv.gain:.4f} in [64, {g_tv:.4f}]")

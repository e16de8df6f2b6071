"""JSON-over-HTTP face of the analysis pipelines.

A small app exposing gain certification (POST /gain), reachable-set
certification (POST /reach), certificate validation (POST /check), plus
health and bundled-fixture lookups. The command-line client drives this
same app in-process through an ASGI transport, so CLI behavior and service
behavior cannot drift apart.

All analysis errors surface as structured JSON bodies
``{"error": {"type": ..., "message": ...}}`` with 4xx/5xx status codes;
analysis outcomes (certificate, infeasible, pass, fail) are 200s whose
report carries the outcome in ``status``.
"""

from __future__ import annotations

import json
import time
from dataclasses import replace
from importlib import resources

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse

from . import __version__
from .engine import (
    certificate_residuals,
    certify_gain,
    l1_bracket,
    lambda_line_search,
    maximize_volume,
    reach_rho_search,
    rho_line_search,
)
from .errors import AllInfeasible, DimensionMismatch, ParseError, PeakgainError, WrongKind
from .oracle import (
    DeltaRealization,
    _sample_delta,
    _sample_disturbance,
    dissipation_check,
    empirical_gain,
    gain_soundness_check,
    iqc_residual_check,
    reach_containment_check,
    simulate,
)
from .schemas import (
    CertificateDocument,
    GainResultDoc,
    OptionsDoc,
    OracleDoc,
    ProblemDocument,
    ReachResultDoc,
    ReportDocument,
    SuiteDoc,
    certificate_from_doc,
    certificate_to_doc,
    ellipsoid_axes,
    finish_report,
    parse_certificate,
    parse_problem,
    problem_to_objects,
    resolve_w_peak,
)
from .solver import SolveOptions
from .systems import augment, basis_filter
from .uncertainty import class_polytopic_ti, multiplier_class_for

# Monte-Carlo budgets for --verify / check runs (overridable per request).
VERIFY_TRIALS = 200
GAIN_HORIZON = 200
REACH_HORIZON = 150
DISSIPATION_TRIALS = 100
DISSIPATION_HORIZON = 60
IQC_DRAWS = 50
IQC_HORIZON = 40
RATIO_SLACK = 1.0 + 1e-4


def _solve_options(options: OptionsDoc) -> SolveOptions | None:
    if options.tol is None:
        return None
    return SolveOptions(tol=options.tol)


def _grid(values):
    return None if values is None else np.asarray(values, dtype=float)


def _search(thunk):
    """Run a line search, mapping an everywhere-infeasible grid to None."""
    try:
        return thunk(), None
    except AllInfeasible as exc:
        return None, str(exc)


def _base_report(command: str, doc: ProblemDocument, notices, t0) -> ReportDocument:
    return ReportDocument(
        command=command,
        status="infeasible",
        problem_name=doc.name,
        seed=doc.options.seed,
        notices=list(notices),
        runtime_s=round(time.perf_counter() - t0, 6),
    )


# ---------------------------------------------------------------------------
# gain pipeline


def run_gain(doc: ProblemDocument, extra_notices=()) -> ReportDocument:
    """Certify the peak-to-peak gain a problem document asks for."""
    if doc.request != "gain":
        raise WrongKind(f"request is {doc.request!r}, expected 'gain'")
    t0 = time.perf_counter()
    plant, spec, notices = problem_to_objects(doc)
    notices = list(extra_notices) + notices
    o = doc.options
    opts = _solve_options(o)

    if spec.kind == "pti":
        if o.lam is not None:
            phi = basis_filter(o.lam, o.nu)
            mc = class_polytopic_ti(spec, phi)
            aug = augment(plant, mc.filter)
            if o.rho is not None:
                cert = certify_gain(aug, mc, o.rho, o.variant, opts, o.scale)
                note = None
            else:
                cert, note = _search(lambda: rho_line_search(
                    aug, mc, o.variant, _grid(o.rho_grid), opts=opts,
                    scale=o.scale))
            if cert is not None:
                cert = replace(cert, lam=float(o.lam), nu=int(o.nu))
        else:
            cert, note = _search(lambda: lambda_line_search(
                plant, spec, o.nu, o.variant, "gain",
                lambda_grid=_grid(o.lambda_grid), rho_grid=_grid(o.rho_grid),
                opts=opts, scale=o.scale))
    else:
        mc = multiplier_class_for(spec)
        aug = augment(plant, mc.filter)
        if o.rho is not None:
            cert = certify_gain(aug, mc, o.rho, o.variant, opts, o.scale)
            note = None
        else:
            cert, note = _search(lambda: rho_line_search(
                aug, mc, o.variant, _grid(o.rho_grid), opts=opts,
                scale=o.scale))

    if cert is None:
        if note:
            notices.append(note)
        return finish_report(_base_report("gain", doc, notices, t0))

    lo, hi = l1_bracket(cert, plant.dims.nz, plant.dims.nw)
    gain = GainResultDoc(
        gamma=cert.gamma, mu=cert.mu, rho=cert.rho, variant=cert.variant,
        lam=cert.lam, nu=cert.nu, l1_lower=lo, l1_upper=hi,
    )
    oracle = None
    if o.verify:
        trials = o.trials or VERIFY_TRIALS
        horizon = o.horizon or GAIN_HORIZON
        witness = empirical_gain(plant, spec, horizon=horizon, seed=o.seed)
        worst = gain_soundness_check(plant, spec, cert.gamma, trials=trials,
                                     T=horizon, seed=o.seed)
        oracle = OracleDoc(empirical_gain=witness.gain,
                           soundness_max_ratio=worst,
                           trials=trials, horizon=horizon)
        if max(witness.gain, worst) > cert.gamma * RATIO_SLACK:
            notices.append("simulation found a peak ratio above the "
                           "certified gain; the certificate is unsound")
    cert_doc = certificate_to_doc(cert, spec.kind, plant.dims)
    report = _base_report("gain", doc, notices, t0)
    report.status = "certificate"
    report.gain = gain
    report.oracle = oracle
    report.certificate = cert_doc
    report.solver = dict(cert_doc.stats)
    report.runtime_s = round(time.perf_counter() - t0, 6)
    return finish_report(report)


# ---------------------------------------------------------------------------
# reachability pipeline


def run_reach(doc: ProblemDocument, extra_notices=()) -> ReportDocument:
    """Certify a reachable-set ellipsoid for a problem document."""
    if doc.request != "reach":
        raise WrongKind(f"request is {doc.request!r}, expected 'reach'")
    t0 = time.perf_counter()
    plant, spec, notices = problem_to_objects(doc)
    notices = list(extra_notices) + notices
    o = doc.options
    opts = _solve_options(o)
    if plant.dims.nz:
        notices.append(f"performance channel (nz={plant.dims.nz}) is ignored "
                       "by reachable-set analysis")
    w_peak, w_notes = resolve_w_peak(o, plant.dims.nw)
    notices.extend(w_notes)
    shape = None  # free ellipsoid shape; Q is a decision variable

    if spec.kind == "pti":
        if o.lam is not None:
            phi = basis_filter(o.lam, o.nu)
            mc = class_polytopic_ti(spec, phi)
            aug = augment(plant, mc.filter)
            if o.rho is not None:
                cert = maximize_volume(aug, mc, o.rho, w_peak, opts, o.scale,
                                       shape)
                note = None
            else:
                cert, note = _search(lambda: reach_rho_search(
                    aug, mc, w_peak, _grid(o.rho_grid), opts=opts,
                    scale=o.scale, shape_matrix=shape))
            if cert is not None:
                cert = replace(cert, lam=float(o.lam), nu=int(o.nu))
        else:
            cert, note = _search(lambda: lambda_line_search(
                plant, spec, o.nu, objective="reach",
                lambda_grid=_grid(o.lambda_grid), rho_grid=_grid(o.rho_grid),
                opts=opts, scale=o.scale, w_peak=w_peak, shape_matrix=shape))
    else:
        mc = multiplier_class_for(spec)
        aug = augment(plant, mc.filter)
        if o.rho is not None:
            cert = maximize_volume(aug, mc, o.rho, w_peak, opts, o.scale, shape)
            note = None
        else:
            cert, note = _search(lambda: reach_rho_search(
                aug, mc, w_peak, _grid(o.rho_grid), opts=opts, scale=o.scale,
                shape_matrix=shape))

    if cert is None:
        if note:
            notices.append(note)
        return finish_report(_base_report("reach", doc, notices, t0))

    reach = ReachResultDoc(
        volume=cert.volume, rho=cert.rho, w_peak=cert.w_peak,
        lam=cert.lam, nu=cert.nu, axes=ellipsoid_axes(cert.Qtilde),
    )
    oracle = None
    if o.verify:
        trials = o.trials or VERIFY_TRIALS
        horizon = o.horizon or REACH_HORIZON
        worst = reach_containment_check(plant, None, cert.Qtilde, spec,
                                        cert.w_peak, trials=trials, T=horizon,
                                        seed=o.seed)
        oracle = OracleDoc(containment_max=worst, trials=trials,
                           horizon=horizon)
        if worst > RATIO_SLACK:
            notices.append("simulation left the certified ellipsoid; the "
                           "certificate is unsound")
    cert_doc = certificate_to_doc(cert, spec.kind, plant.dims)
    report = _base_report("reach", doc, notices, t0)
    report.status = "certificate"
    report.reach = reach
    report.oracle = oracle
    report.certificate = cert_doc
    report.solver = dict(cert_doc.stats)
    report.runtime_s = round(time.perf_counter() - t0, 6)
    return finish_report(report)


# ---------------------------------------------------------------------------
# certificate validation pipeline


def _assignment_magnitude(matrices: dict) -> float:
    mags = [float(np.max(np.abs(np.asarray(v, dtype=float))))
            for v in matrices.values() if np.size(v)]
    return max(mags, default=1.0)


def _iqc_deltas(spec, rng, draws):
    """Vertex realizations plus random interior/admissible draws."""
    deltas = []
    if spec.kind in ("ptv", "pti"):
        verts = spec.vertex_array()
        for v in verts:
            deltas.append(DeltaRealization.constant(v))
        for _ in range(draws):
            weights = rng.dirichlet(np.ones(len(verts)))
            point = weights @ verts
            if spec.kind == "pti":
                deltas.append(DeltaRealization.constant(point))
            else:
                sched = rng.dirichlet(np.ones(len(verts)), size=IQC_HORIZON) @ verts
                deltas.append(DeltaRealization.schedule(sched))
    elif spec.kind == "normbound":
        for sign in (1.0, -1.0):
            deltas.append(DeltaRealization.norm_bounded(
                np.stack([sign * np.eye(spec.np, spec.nq)] * IQC_HORIZON)))
        for _ in range(draws):
            gains = []
            for _k in range(IQC_HORIZON):
                raw = rng.standard_normal((spec.np, spec.nq))
                norm = np.linalg.norm(raw, 2)
                gains.append(raw / norm * rng.uniform(0.2, 1.0))
            deltas.append(DeltaRealization.norm_bounded(np.stack(gains)))
    return deltas


def _certificate_suites(plant, spec, mc, aug, cert, options) -> list[SuiteDoc]:
    """Run every validation suite against a solved certificate."""
    o = options
    rng = np.random.default_rng(o.seed)
    mag = _assignment_magnitude(cert.matrices)
    is_gain = hasattr(cert, "gamma")
    suites = []

    # 1. re-substitution: the solved assignment satisfies its own program
    residuals = certificate_residuals(aug, mc, cert)
    worst = min(residuals.values())
    bound = -1e-6 * (1.0 + mag)
    suites.append(SuiteDoc(name="re-substitution", worst=float(worst),
                           bound=bound, passed=worst >= bound))

    # 2. filtered-constraint residuals along admissible loops
    if spec.kind != "none":
        M, X = mc.numeric_multiplier(cert.matrices)
        M2 = (mc.numeric_multiplier(cert.matrices, suffix="2")[0]
              if is_gain and cert.variant == "thm2" else None)
        worst_r = np.inf
        for delta in _iqc_deltas(spec, rng, IQC_DRAWS):
            q = rng.standard_normal((IQC_HORIZON, spec.nq))
            r = iqc_residual_check(mc.filter, M, X, cert.rho, delta, q)
            worst_r = min(worst_r, r)
            if M2 is not None:
                r2 = iqc_residual_check(mc.filter, M2, None, cert.rho, delta, q)
                worst_r = min(worst_r, r2)
        bound_r = -1e-6 * max(1.0, cert.scale) * (1.0 + mag)
        suites.append(SuiteDoc(name="iqc-residual", worst=float(worst_r),
                               bound=bound_r, passed=worst_r >= bound_r))

    # 3. dissipation along simulated trajectories
    trials = o.trials or DISSIPATION_TRIALS
    T = o.horizon or DISSIPATION_HORIZON
    M, X = mc.numeric_multiplier(cert.matrices)
    if is_gain:
        mu, gamma = cert.mu, cert.gamma
        M2 = (mc.numeric_multiplier(cert.matrices, suffix="2")[0]
              if cert.variant == "thm2" else None)
        X_used = None if cert.variant == "thm2" else X
        w_amp = 1.0
    else:
        mu, gamma, M2, X_used = 1.0 - cert.rho, None, None, X
        w_amp = cert.w_peak
    verts = spec.vertex_array() if spec.kind in ("ptv", "pti") else None
    P = np.asarray(cert.matrices["P"], dtype=float)
    worst_d = -np.inf
    for trial in range(trials):
        delta = _sample_delta(spec, verts, rng, T, trial)
        w = _sample_disturbance(rng, T, plant.dims.nw, w_amp, trial)
        traj = simulate(plant, mc.filter, delta, w, T=T)
        d = dissipation_check(aug, P, M, X_used, mu, gamma, cert.rho, traj,
                              second_multiplier=M2)
        worst_d = max(worst_d, d)
    bound_d = 1e-5 * (1.0 + mag)
    suites.append(SuiteDoc(name="dissipation", worst=float(worst_d),
                           bound=bound_d, passed=worst_d <= bound_d))

    # 4. end-to-end soundness against fresh simulations
    trials = o.trials or VERIFY_TRIALS
    if is_gain:
        T = o.horizon or GAIN_HORIZON
        worst_s = gain_soundness_check(plant, spec, cert.gamma, trials=trials,
                                       T=T, seed=o.seed)
        bound_s = cert.gamma * RATIO_SLACK
        suites.append(SuiteDoc(name="gain-soundness", worst=float(worst_s),
                               bound=bound_s, passed=worst_s <= bound_s))
    else:
        T = o.horizon or REACH_HORIZON
        worst_s = reach_containment_check(plant, None, cert.Qtilde, spec,
                                          cert.w_peak, trials=trials, T=T,
                                          seed=o.seed)
        suites.append(SuiteDoc(name="containment", worst=float(worst_s),
                               bound=RATIO_SLACK, passed=worst_s <= RATIO_SLACK))
    return suites


def run_check(problem: ProblemDocument, certificate: CertificateDocument,
              extra_notices=()) -> ReportDocument:
    """Validate a certificate document against its problem document."""
    t0 = time.perf_counter()
    plant, spec, notices = problem_to_objects(problem)
    notices = list(extra_notices) + notices
    d = plant.dims
    cd = certificate.dims
    got = (cd.nx, cd.np, cd.nq, cd.nw, cd.nz)
    expected = (d.nx, d.np, d.nq, d.nw, d.nz)
    if got != expected:
        raise DimensionMismatch("certificate dims", expected, got)
    if certificate.kind != spec.kind:
        raise WrongKind(f"certificate is for uncertainty kind "
                        f"{certificate.kind!r}, problem says {spec.kind!r}")
    cert = certificate_from_doc(certificate)
    if spec.kind == "pti":
        if cert.lam is None or cert.nu is None:
            raise WrongKind("a time-invariant polytopic certificate must "
                            "carry its basis pole and order")
        mc = class_polytopic_ti(spec, basis_filter(cert.lam, cert.nu))
    else:
        mc = multiplier_class_for(spec)
    aug = augment(plant, mc.filter)
    suites = _certificate_suites(plant, spec, mc, aug, cert, problem.options)
    report = _base_report("check", problem, notices, t0)
    report.command = "check"
    report.status = "pass" if all(s.passed for s in suites) else "fail"
    report.suites = suites
    report.runtime_s = round(time.perf_counter() - t0, 6)
    return finish_report(report)


# ---------------------------------------------------------------------------
# bundled fixtures


def fixture_names() -> list[str]:
    root = resources.files("peakgain.fixtures")
    return sorted(
        entry.name[: -len(".problem")]
        for entry in root.iterdir()
        if entry.name.endswith(".problem")
    )


def fixture_text(name: str) -> str:
    if not name.replace("_", "").isalnum():
        raise ParseError(f"invalid fixture name {name!r}")
    entry = resources.files("peakgain.fixtures") / f"{name}.problem"
    if not entry.is_file():
        raise FileNotFoundError(name)
    return entry.read_text()


# ---------------------------------------------------------------------------
# the app


def _error_body(exc: Exception) -> dict:
    return {"error": {"type": type(exc).__name__, "message": str(exc)}}


def create_app() -> FastAPI:
    app = FastAPI(title="peakgain service", version=__version__)

    @app.exception_handler(PeakgainError)
    async def _domain_error(request: Request, exc: PeakgainError):
        status = 422 if isinstance(exc, ParseError) else 400
        return JSONResponse(status_code=status, content=_error_body(exc))

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content=_error_body(exc))

    @app.exception_handler(Exception)
    async def _unexpected(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content=_error_body(exc))

    @app.get("/health")
    async def health():
        return {"status": "ok", "name": "peakgain", "version": __version__}

    @app.get("/fixtures")
    async def fixtures():
        return {"fixtures": fixture_names()}

    @app.get("/fixtures/{name}")
    async def fixture(name: str):
        try:
            text = fixture_text(name)
        except FileNotFoundError:
            raise HTTPException(status_code=404,
                                detail=f"no bundled fixture named {name!r}")
        return json.loads(text)

    async def _problem_from(request: Request, lenient: bool):
        body = (await request.body()).decode("utf-8", errors="replace")
        return parse_problem(body, strict=not lenient, source="<request body>")

    @app.post("/gain")
    async def gain(request: Request, lenient: bool = Query(False)):
        doc, warnings = await _problem_from(request, lenient)
        return run_gain(doc, extra_notices=warnings).model_dump(mode="json")

    @app.post("/reach")
    async def reach(request: Request, lenient: bool = Query(False)):
        doc, warnings = await _problem_from(request, lenient)
        return run_reach(doc, extra_notices=warnings).model_dump(mode="json")

    @app.post("/check")
    async def check(request: Request, lenient: bool = Query(False)):
        body = (await request.body()).decode("utf-8", errors="replace")
        try:
            data = json.loads(body)
        except json.JSONDecodeError as exc:
            raise ParseError(
                f"<request body>: invalid JSON at line {exc.lineno}, column "
                f"{exc.colno}: {exc.msg}", line=exc.lineno, column=exc.colno,
            ) from None
        if (not isinstance(data, dict) or "problem" not in data
                or "certificate" not in data):
            raise ParseError("check request body must be an object with "
                             "'problem' and 'certificate' documents")
        strict = not lenient
        pdoc, warn_p = parse_problem(json.dumps(data["problem"]), strict,
                                     source="problem")
        cdoc, warn_c = parse_certificate(json.dumps(data["certificate"]),
                                         strict, source="certificate")
        return run_check(pdoc, cdoc,
                         extra_notices=warn_p + warn_c).model_dump(mode="json")

    return app


app = create_app()

"""Top-level certified analyses.

Gain certification minimizes the peak-to-peak bound gamma over the decay and
peak LMIs for a fixed decay rate rho; a line search over rho (and, for
dynamic filters, a second line search over the basis pole) picks the best
rate. Reachability certification pins the disturbance budget, adds the
state-ellipsoid side conditions, and maximizes det(Q)^(1/n) to shrink the
certified outer ellipsoid.

All searches are deterministic: fixed grids, golden-section refinement, and
ties broken toward the smaller abscissa.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    AllInfeasible,
    PointwiseRequired,
    SolverFailure,
    VolumeUnbounded,
    WrongKind,
)
from .lmi import (
    GAMMA_FLOOR,
    SdpProgram,
    add_detroot_objective,
    add_invariance_constraints,
    as_expr,
    build_decay_lmi,
    build_peak_lmi_schur,
    build_pointwise_peak_lmi_schur,
    smul,
)
from .solver import SolveOptions, solve_program
from .systems import AugmentedPlant, Plant, augment, basis_filter
from .uncertainty import MultiplierClass, UncertaintySpec, class_polytopic_ti


def default_rho_grid(n: int = 25, lo: float = 0.02, hi: float = 0.98) -> np.ndarray:
    """Log-spaced decay-rate grid; endpoints stay strictly inside (0, 1)."""
    return np.exp(np.linspace(math.log(lo), math.log(hi), n))


def default_lambda_grid(n: int = 19, span: float = 0.9) -> np.ndarray:
    return np.linspace(-span, span, n)


def w_peak_from_inf(w_inf: float, nw: int) -> float:
    """Peak-norm budget implied by a per-component bound |w_i| <= w_inf."""
    return float(w_inf) * math.sqrt(nw)


def strictness_margin(scale: float = 1.0) -> float:
    """Margin for the strict inequalities of the invariance conditions,
    sized so it stays ~1e-7 in solver units under variable rescaling."""
    return 1e-7 * (1.0 + scale) / scale


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class GainCertificate:
    gamma: float
    mu: float
    rho: float
    variant: str  # "thm1" | "thm2"
    kind: str
    lam: float | None = None
    nu: int | None = None
    scale: float = 1.0
    matrices: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    @property
    def P(self):
        return self.matrices.get("P")

    @property
    def M(self):
        return self.matrices.get("M")

    @property
    def X(self):
        return self.matrices.get("X")

    @property
    def M2(self):
        return self.matrices.get("M2")


@dataclass(frozen=True)
class ReachCertificate:
    Q: np.ndarray
    Qtilde: np.ndarray
    volume: float  # -log det(Qtilde)
    rho: float
    w_peak: float
    lam: float | None = None
    nu: int | None = None
    scale: float = 1.0
    shape_matrix: np.ndarray | None = None
    matrices: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    @property
    def P(self):
        return self.matrices.get("P")

    @property
    def X(self):
        return self.matrices.get("X")


# ---------------------------------------------------------------------------
# single-point programs


def build_gain_program(
    aug: AugmentedPlant,
    mc: MultiplierClass,
    rho: float,
    variant: str = "thm1",
    scale: float = 1.0,
):
    """Assemble the gamma-minimization program at a fixed rate."""
    if variant not in ("thm1", "thm2"):
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "thm2" and not mc.pointwise:
        raise PointwiseRequired(
            "the independent-second-multiplier variant needs a pointwise class"
        )
    prog = SdpProgram({"rho": rho, "variant": variant})
    P = prog.symmetric("P", aug.dims.nchi)
    gamma = prog.scalar("gamma")
    mu = prog.scalar("mu")
    cv = mc.install(prog, rho)
    prog.add_nonneg(as_expr(gamma) - as_expr(mu), "gamma-dominates-mu")
    prog.add_nonneg(as_expr(mu), "mu-sign")
    prog.add_nonneg(as_expr(gamma) - GAMMA_FLOOR, "gamma-floor")
    prog.add(build_decay_lmi(aug, P, cv.M, mu, rho))
    if variant == "thm1":
        prog.add(build_peak_lmi_schur(aug, P, cv.X, cv.M, mu, gamma, rho))
    else:
        cv2 = mc.install(prog, rho, suffix="2")
        prog.add(build_pointwise_peak_lmi_schur(aug, P, cv2.M, mu, gamma, rho))
    prog.minimize(as_expr(gamma))
    if scale != 1.0:
        rescale_program(prog, scale)
    return prog


def rescale_program(program: SdpProgram, scale: float) -> SdpProgram:
    """Improve conditioning by solving for scale*v instead of v.

    In a gain program only the disturbance budget mu is rescaled; in a reach
    program (where mu is pinned) every matrix block is, which is the same
    joint rescaling the homogeneous LMIs admit. Decoding divides back, so
    reported certificates are in original units.
    """
    if not scale > 0:
        raise ValueError("scale must be positive")
    if scale == 1.0:
        return program
    names = {v.name for v in program.variables}
    if "mu" in names:
        program.set_scale("mu", scale)
    else:
        for name in names:
            program.set_scale(name, scale)
    return program


def _certificate(res, mc, rho, variant, scale) -> GainCertificate:
    return GainCertificate(
        gamma=float(res.assignment["gamma"]),
        mu=float(res.assignment["mu"]),
        rho=float(rho),
        variant=variant,
        kind=mc.kind,
        scale=scale,
        matrices=res.assignment,
        stats=res.stats,
    )


def gamma_star(
    aug: AugmentedPlant,
    mc: MultiplierClass,
    rho: float,
    opts: SolveOptions | None = None,
    scale: float = 1.0,
) -> GainCertificate | None:
    """Best certified gain bound at a fixed rate; None when infeasible.

    Numerical-limit outcomes raise SolverFailure with the rate attached in
    the context, so a caller scanning a grid can decide to skip the point.
    """
    prog = build_gain_program(aug, mc, rho, "thm1", scale)
    res = solve_program(prog, opts)
    if res.status == "infeasible":
        return None
    if res.status != "optimal":
        raise SolverFailure(
            f"gain program ended {res.status}", stats=res.stats, context={"rho": rho}
        )
    return _certificate(res, mc, rho, "thm1", scale)


def gamma_star_pointwise(
    aug: AugmentedPlant,
    mc: MultiplierClass,
    rho: float,
    opts: SolveOptions | None = None,
    scale: float = 1.0,
) -> GainCertificate | None:
    """Variant with an independent second multiplier in the peak condition;
    only sound for pointwise classes (PointwiseRequired otherwise)."""
    prog = build_gain_program(aug, mc, rho, "thm2", scale)
    res = solve_program(prog, opts)
    if res.status == "infeasible":
        return None
    if res.status != "optimal":
        raise SolverFailure(
            f"gain program ended {res.status}", stats=res.stats, context={"rho": rho}
        )
    return _certificate(res, mc, rho, "thm2", scale)


def certify_gain(aug, mc, rho, variant="thm1", opts=None, scale=1.0):
    if variant == "thm2":
        return gamma_star_pointwise(aug, mc, rho, opts, scale)
    return gamma_star(aug, mc, rho, opts, scale)


# ---------------------------------------------------------------------------
# line searches


class _ArgMin:
    """Running minimum with ties broken toward the smaller abscissa."""

    def __init__(self):
        self.value = math.inf
        self.x = None
        self.payload = None
        self.evaluations = []

    def consider(self, x, value, payload):
        self.evaluations.append((float(x), float(value)))
        if value < self.value or (value == self.value and
                                  self.x is not None and x < self.x):
            self.value = value
            self.x = x
            self.payload = payload


_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_refine(fun, a: float, b: float, iters: int):
    """Golden-section descent on [a, b]; ``fun`` returns +inf when a point
    yields nothing. The caller's accumulator keeps the best payload."""
    if iters <= 0 or not b > a:
        return
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = fun(c), fun(d)
    used = 2
    while used < iters:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = fun(d)
        used += 1


def _grid_then_refine(evaluate, grid: np.ndarray, refine_iters: int, what: str):
    best = _ArgMin()

    def fun(x):
        value, payload = evaluate(float(x))
        best.consider(x, value, payload)
        return value

    values = [fun(x) for x in grid]
    finite = [i for i, v in enumerate(values) if math.isfinite(v)]
    if not finite:
        raise AllInfeasible(f"every {what} grid point was infeasible or failed")
    i = min(finite, key=lambda k: (values[k], grid[k]))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    _golden_refine(fun, float(lo), float(hi), refine_iters)
    return best


def rho_line_search(
    aug: AugmentedPlant,
    mc: MultiplierClass,
    variant: str = "thm1",
    rho_grid: np.ndarray | None = None,
    refine_iters: int = 12,
    opts: SolveOptions | None = None,
    scale: float = 1.0,
) -> GainCertificate:
    """Minimize the certified gain over the decay rate.

    Infeasible and numerically failed grid points count as +inf; if every
    point is one of those, AllInfeasible is raised.
    """
    grid = default_rho_grid() if rho_grid is None else np.asarray(rho_grid, float)

    def evaluate(rho):
        try:
            cert = certify_gain(aug, mc, rho, variant, opts, scale)
        except SolverFailure:
            return math.inf, None
        if cert is None:
            return math.inf, None
        return cert.gamma, cert

    best = _grid_then_refine(evaluate, grid, refine_iters, "rho")
    return best.payload


def lambda_line_search(
    plant: Plant,
    spec: UncertaintySpec,
    nu: int,
    variant: str = "thm1",
    objective: str = "gain",
    lambda_grid: np.ndarray | None = None,
    refine_iters: int = 8,
    rho_grid: np.ndarray | None = None,
    rho_refine_iters: int = 12,
    opts: SolveOptions | None = None,
    scale: float = 1.0,
    w_peak: float | None = None,
    shape_matrix: np.ndarray | None = None,
):
    """Outer search over the basis pole, inner search over the rate.

    The filter and augmented plant are rebuilt per pole. ``objective`` picks
    the inner analysis: "gain" minimizes the certified gamma, "reach"
    minimizes -log det of the certified ellipsoid (needs ``w_peak``).
    """
    if spec.kind != "pti":
        raise WrongKind("the pole line search applies to the time-invariant "
                        "polytopic class")
    if objective not in ("gain", "reach"):
        raise ValueError(f"unknown objective {objective!r}")
    if objective == "reach" and w_peak is None:
        raise ValueError("reach objective needs w_peak")
    basis_filter(0.0, nu)  # validate the order once, before the grid loop
    lgrid = default_lambda_grid() if lambda_grid is None else np.asarray(
        lambda_grid, float)

    def evaluate(lam):
        phi = basis_filter(lam, nu)
        mc = class_polytopic_ti(spec, phi)
        aug = augment(plant, mc.filter)
        try:
            if objective == "gain":
                cert = rho_line_search(
                    aug, mc, variant, rho_grid, rho_refine_iters, opts, scale
                )
                value = cert.gamma
            else:
                cert = reach_rho_search(
                    aug, mc, w_peak, rho_grid, rho_refine_iters, opts, scale,
                    shape_matrix,
                )
                value = cert.volume
        except AllInfeasible:
            return math.inf, None
        cert = replace(cert, lam=float(lam), nu=int(nu))
        return value, cert

    best = _grid_then_refine(evaluate, lgrid, refine_iters, "lambda")
    return best.payload


# ---------------------------------------------------------------------------
# reachability


def build_reach_program(
    aug: AugmentedPlant,
    mc: MultiplierClass,
    rho: float,
    scale: float = 1.0,
    shape_matrix: np.ndarray | None = None,
):
    """Invariant-ellipsoid program at a fixed rate with mu pinned to 1 - rho.

    With no shape matrix the ellipsoid shape is free and det(Q)^(1/n) is
    maximized; with one, Q = t*Q0 and t is maximized.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    d = aug.dims
    prog = SdpProgram({"rho": rho, "mode": "reach"})
    P = prog.symmetric("P", d.nchi)
    cv = mc.install(prog, rho)
    mu_pinned = 1.0 - rho
    prog.add(build_decay_lmi(aug, P, cv.M, mu_pinned, rho))
    margin = strictness_margin(scale)
    if shape_matrix is None:
        Q = prog.symmetric("Q", d.nx)
        Qe = as_expr(Q)
        add_detroot_objective(prog, Qe)
    else:
        Q0 = np.asarray(shape_matrix, dtype=float).reshape(d.nx, d.nx)
        eigs = np.linalg.eigvalsh(0.5 * (Q0 + Q0.T))
        if eigs[0] <= 0:
            raise ValueError("shape matrix must be symmetric positive definite")
        t = prog.scalar("t")
        prog.add_nonneg(as_expr(t), "t-sign")
        Qe = smul(t, Q0)
        prog.maximize(as_expr(t))
    add_invariance_constraints(prog, aug, P, cv.X, Qe, margin)
    prog.metadata["Q_expr"] = Qe
    if scale != 1.0:
        rescale_program(prog, scale)
    return prog


def maximize_volume(
    aug: AugmentedPlant,
    mc: MultiplierClass,
    rho: float,
    w_peak: float,
    opts: SolveOptions | None = None,
    scale: float = 1.0,
    shape_matrix: np.ndarray | None = None,
) -> ReachCertificate | None:
    """Tightest certified ellipsoid containing every reachable state under
    peak-bounded disturbances: maximizes det(Q)^(1/n) subject to the decay
    condition with mu = 1 - rho and the invariance side conditions.

    Returns None when the rate is infeasible; raises VolumeUnbounded when
    the disturbance channel is identically zero (the reachable set is the
    origin and no finite optimal ellipsoid exists).
    """
    if not w_peak > 0:
        raise ValueError("w_peak must be positive")
    if np.allclose(aug.Bw, 0.0) and np.allclose(aug.Dsw, 0.0):
        raise VolumeUnbounded(
            "disturbance channel is identically zero; the certified ellipsoid "
            "can shrink without bound"
        )
    prog = build_reach_program(aug, mc, rho, scale, shape_matrix)
    Q_expr = prog.metadata["Q_expr"]
    res = solve_program(prog, opts)
    if res.status == "infeasible":
        return None
    if res.status == "unbounded":
        raise VolumeUnbounded("ellipsoid program is unbounded")
    if res.status != "optimal":
        raise SolverFailure(
            f"reach program ended {res.status}", stats=res.stats, context={"rho": rho}
        )
    Q = Q_expr.evaluate(res.assignment)
    Q = 0.5 * (Q + Q.T)
    Qtilde = Q / (w_peak**2)
    sign, logdet = np.linalg.slogdet(Qtilde)
    if sign <= 0:
        raise SolverFailure("certified Q is not positive definite",
                            stats=res.stats, context={"rho": rho})
    return ReachCertificate(
        Q=Q,
        Qtilde=Qtilde,
        volume=float(-logdet),
        rho=float(rho),
        w_peak=float(w_peak),
        scale=scale,
        shape_matrix=shape_matrix,
        matrices=res.assignment,
        stats=res.stats,
    )


def reach_rho_search(
    aug: AugmentedPlant,
    mc: MultiplierClass,
    w_peak: float,
    rho_grid: np.ndarray | None = None,
    refine_iters: int = 12,
    opts: SolveOptions | None = None,
    scale: float = 1.0,
    shape_matrix: np.ndarray | None = None,
) -> ReachCertificate:
    """Minimize -log det(Qtilde) over the decay rate."""
    grid = default_rho_grid() if rho_grid is None else np.asarray(rho_grid, float)

    def evaluate(rho):
        try:
            cert = maximize_volume(aug, mc, rho, w_peak, opts, scale, shape_matrix)
        except SolverFailure:
            return math.inf, None
        if cert is None:
            return math.inf, None
        return cert.volume, cert

    best = _grid_then_refine(evaluate, grid, refine_iters, "rho")
    return best.payload


# ---------------------------------------------------------------------------
# reporting helpers


def l1_bracket(cert_or_gamma, m: int, n: int) -> tuple[float, float]:
    """Bracket of the induced ell-1 norm implied by a peak-gain bound gamma:
    gamma/sqrt(n) <= ||H||_1 <= sqrt(m)*gamma for an n-output, m-input map."""
    gamma = getattr(cert_or_gamma, "gamma", cert_or_gamma)
    gamma = float(gamma)
    return gamma / math.sqrt(n), math.sqrt(m) * gamma


def certificate_residuals(
    aug: AugmentedPlant, mc: MultiplierClass, cert
) -> dict[str, float]:
    """Re-substitution slacks of the generating constraints at a certificate
    (every slack >= -1e-6 means the certificate checks out)."""
    if isinstance(cert, ReachCertificate):
        prog = build_reach_program(aug, mc, cert.rho, cert.scale, cert.shape_matrix)
        assignment = dict(cert.matrices)
    else:
        prog = build_gain_program(aug, mc, cert.rho, cert.variant, cert.scale)
        assignment = dict(cert.matrices)
        assignment.setdefault("gamma", cert.gamma)
        assignment.setdefault("mu", cert.mu)
    return prog.residuals(assignment)

"""Time-domain verification independent of the conic machinery.

Everything here works on plain simulated trajectories: closed-loop
interconnection of plant and uncertainty, empirical lower bounds on the
peak-to-peak gain, filtered-residual checks of the weighted quadratic
constraints, per-step dissipation checks of solved certificates, and
Monte-Carlo containment checks of certified ellipsoids.

Empirical searches are deterministic heuristics (documented per function);
their results are valid lower bounds whose quality, not soundness, depends
on the search budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IllPosed, WrongKind
from .systems import AugmentedPlant, Filter, Plant
from .uncertainty import UncertaintySpec

ILL_POSED_COND = 1e8


def peak_norm(signal: np.ndarray) -> float:
    """sup over time of the per-step Euclidean norm; 0 for empty signals."""
    signal = np.atleast_2d(np.asarray(signal, dtype=float))
    if signal.size == 0:
        return 0.0
    return float(np.sqrt((signal**2).sum(axis=1)).max())


# ---------------------------------------------------------------------------
# uncertainty realizations


@dataclass(frozen=True)
class DeltaRealization:
    """Concrete admissible uncertainty along a horizon.

    kind "pti": one parameter vector held for all time. kind "ptv": one
    parameter vector per step. kind "normbound": one matrix per step with
    largest singular value <= 1. kind "none": no uncertainty channel.
    """

    kind: str
    values: np.ndarray  # () / (T, nq) / (T, np, nq) per kind
    meta: dict = field(default_factory=dict)

    @staticmethod
    def constant(delta) -> "DeltaRealization":
        return DeltaRealization("pti", np.asarray(delta, dtype=float).ravel())

    @staticmethod
    def schedule(deltas) -> "DeltaRealization":
        return DeltaRealization("ptv", np.atleast_2d(np.asarray(deltas, dtype=float)))

    @staticmethod
    def norm_bounded(mats) -> "DeltaRealization":
        arr = np.asarray(mats, dtype=float)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        return DeltaRealization("normbound", arr)

    @staticmethod
    def none() -> "DeltaRealization":
        return DeltaRealization("none", np.zeros(0))

    def matrix_at(self, k: int, np_: int, nq: int) -> np.ndarray:
        """The uncertainty matrix mapping q_k to p_k at step k."""
        if self.kind == "none":
            return np.zeros((np_, nq))
        if self.kind == "pti":
            return np.diag(self.values)
        if self.kind == "ptv":
            row = self.values[min(k, self.values.shape[0] - 1)]
            return np.diag(row)
        arr = self.values
        return arr[min(k, arr.shape[0] - 1)]

    def membership_gap(self, spec: UncertaintySpec) -> float:
        """How far the realization sits outside the declared class (0 = member).

        Parametric kinds measure hull distance of each parameter vector;
        norm-bounded measures the worst singular-value excess.
        """
        if self.kind != spec.kind and not (self.kind == "pti" and
                                           spec.kind == "ptv"):
            return math.inf
        if spec.kind == "normbound":
            worst = 0.0
            for mat in self.values:
                smax = float(np.linalg.svd(mat, compute_uv=False)[0]) if mat.size else 0.0
                worst = max(worst, smax - 1.0)
            return max(worst, 0.0)
        if spec.kind == "none":
            return 0.0
        verts = spec.vertex_array()
        rows = self.values[None, :] if self.values.ndim == 1 else self.values
        worst = 0.0
        for row in rows:
            worst = max(worst, _hull_distance(row, verts))
        return worst


def _hull_distance(point: np.ndarray, verts: np.ndarray) -> float:
    """Euclidean distance from a point to the convex hull of the rows of
    ``verts``, via a few projected-gradient steps on the simplex weights."""
    m = verts.shape[0]
    theta = np.full(m, 1.0 / m)
    gram = verts @ verts.T
    vp = verts @ point
    # minimize ||verts' theta - point||^2 over the simplex
    lip = max(float(np.linalg.eigvalsh(gram)[-1]), 1e-12)
    for _ in range(200):
        grad = gram @ theta - vp
        theta = _project_simplex(theta - grad / lip)
    return float(np.linalg.norm(verts.T @ theta - point))


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    cond = u - css / idx > 0
    r = int(idx[cond][-1])
    tau = css[r - 1] / r
    return np.maximum(v - tau, 0.0)


# ---------------------------------------------------------------------------
# closed-loop simulation


@dataclass(frozen=True)
class Trajectory:
    """One simulated run of the uncertain interconnection."""

    x: np.ndarray  # (T+1, nx)
    psi: np.ndarray  # (T+1, npsi)
    q: np.ndarray  # (T, nq)
    p: np.ndarray  # (T, np)
    w: np.ndarray  # (T, nw)
    z: np.ndarray  # (T, nz)
    s: np.ndarray  # (T, ns)
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.w.shape[0]

    def chi(self) -> np.ndarray:
        """Stacked (psi, x) state of the augmented system, (T+1, nchi)."""
        return np.hstack([self.psi, self.x])


def simulate(
    plant: Plant,
    filt: Filter | None,
    delta: DeltaRealization,
    w: np.ndarray,
    T: int | None = None,
) -> Trajectory:
    """Exact recursion of the uncertain feedback loop from zero state.

    Per step the algebraic loop p_k = Delta_k q_k is solved through
    (I - Delta_k Dqp) p_k = Delta_k (Cq x_k + Dqw w_k); a condition number
    beyond 1e8 on that matrix raises IllPosed with the step attached.
    The filter, when given, runs in series on the realized (q, p).
    """
    d = plant.dims
    w = np.atleast_2d(np.asarray(w, dtype=float))
    if T is None:
        T = w.shape[0]
    wfull = np.zeros((T, d.nw))
    upto = min(T, w.shape[0])
    wfull[:upto] = w[:upto]

    x = np.zeros((T + 1, d.nx))
    q = np.zeros((T, d.nq))
    p = np.zeros((T, d.np))
    z = np.zeros((T, d.nz))
    eye = np.eye(d.np)
    for k in range(T):
        dk = delta.matrix_at(k, d.np, d.nq)
        loop = eye - dk @ plant.Dqp
        cond = np.linalg.cond(loop) if d.np else 1.0
        if cond > ILL_POSED_COND:
            raise IllPosed(k, cond)
        drive = plant.Cq @ x[k] + plant.Dqw @ wfull[k]
        p[k] = np.linalg.solve(loop, dk @ drive) if d.np else np.zeros(0)
        q[k] = drive + plant.Dqp @ p[k]
        z[k] = plant.Cz @ x[k] + plant.Dzp @ p[k] + plant.Dzw @ wfull[k]
        x[k + 1] = plant.A @ x[k] + plant.Bp @ p[k] + plant.Bw @ wfull[k]

    if filt is not None:
        psi, s = filt.response(q, p)
    else:
        psi = np.zeros((T + 1, 0))
        s = np.zeros((T, 0))
    return Trajectory(x=x, psi=psi, q=q, p=p, w=wfull, z=z, s=s,
                      meta={"delta_kind": delta.kind})


# ---------------------------------------------------------------------------
# deterministic lower-bound search


@dataclass(frozen=True)
class GainWitness:
    gain: float
    delta: DeltaRealization
    w: np.ndarray
    meta: dict = field(default_factory=dict)


def _closed_loop(plant: Plant, delta_vec: np.ndarray):
    """Constant-parameter closed-loop state-space matrices."""
    d = plant.dims
    dk = np.diag(delta_vec)
    loop = np.eye(d.np) - dk @ plant.Dqp
    G = np.linalg.solve(loop, dk)
    A = plant.A + plant.Bp @ G @ plant.Cq
    B = plant.Bw + plant.Bp @ G @ plant.Dqw
    C = plant.Cz + plant.Dzp @ G @ plant.Cq
    D = plant.Dzw + plant.Dzp @ G @ plant.Dqw
    return A, B, C, D


def _aligned_gain_lti(A, B, C, D, T: int, directions: int = 16):
    """Peak-to-peak gain of an LTI system by adjoint alignment.

    For a unit output direction u the best unit-step disturbance gives
    sum_j ||H_j' u|| over impulse-response terms H_j; maximizing over u on
    the circle (grid + golden refinement, nz = 2) or by power-like sweeps
    for higher dimensions yields the exact gain as T grows.
    """
    nz = C.shape[0]
    if nz == 0:
        return 0.0, np.zeros(0)
    # impulse response stack: H_0 = D, H_j = C A^{j-1} B
    hs = [D]
    Ak_B = B
    for _ in range(1, T):
        hs.append(C @ Ak_B)
        Ak_B = A @ Ak_B
    hs = np.asarray(hs)  # (T, nz, nw)

    def score(u):
        return float(np.linalg.norm(hs.transpose(0, 2, 1) @ u, axis=1).sum())

    if nz == 1:
        u = np.array([1.0])
        return score(u), u
    if nz == 2:
        angles = np.linspace(0.0, np.pi, directions, endpoint=False)
        vals = [score(np.array([np.cos(a), np.sin(a)])) for a in angles]
        i = int(np.argmax(vals))
        lo = angles[i] - np.pi / directions
        hi = angles[i] + np.pi / directions
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c = b - invphi * (b - a)
        dd = a + invphi * (b - a)
        fc = score(np.array([np.cos(c), np.sin(c)]))
        fd = score(np.array([np.cos(dd), np.sin(dd)]))
        for _ in range(24):
            if fc >= fd:
                b, dd, fd = dd, c, fc
                c = b - invphi * (b - a)
                fc = score(np.array([np.cos(c), np.sin(c)]))
            else:
                a, c, fc = c, dd, fd
                dd = a + invphi * (b - a)
                fd = score(np.array([np.cos(dd), np.sin(dd)]))
        best = a if fc >= fd else b
        u = np.array([np.cos(best), np.sin(best)])
        return score(u), u
    # nz >= 3: seeded coordinate sweeps on the sphere
    rng = np.random.default_rng(0)
    best_u, best_v = None, -1.0
    for _ in range(8 * nz):
        u = rng.normal(size=nz)
        u /= np.linalg.norm(u)
        v = score(u)
        if v > best_v:
            best_u, best_v = u, v
    return best_v, best_u


def _witness_w(A, B, C, D, u: np.ndarray, T: int) -> np.ndarray:
    """Unit-peak disturbance aligned with output direction u at time T-1."""
    nw = B.shape[1]
    hs = [D]
    Ak_B = B
    for _ in range(1, T):
        hs.append(C @ Ak_B)
        Ak_B = A @ Ak_B
    w = np.zeros((T, nw))
    for j, H in enumerate(hs):
        g = H.T @ u
        n = np.linalg.norm(g)
        w[T - 1 - j] = g / n if n > 1e-14 else 0.0
    return w


def _hull_ascent(plant: Plant, verts: np.ndarray, start: np.ndarray, T: int):
    """Maximize the constant-parameter gain over the vertex hull by line
    searches toward each vertex (convexity keeps iterates admissible)."""

    def value(dv):
        try:
            return _aligned_gain_lti(*_closed_loop(plant, dv), T)[0]
        except np.linalg.LinAlgError:
            return -math.inf

    best = np.asarray(start, dtype=float)
    best_val = value(best)
    for dv in verts:
        v = value(dv)
        if v > best_val:
            best, best_val = dv.copy(), v
    steps = (0.5, 0.25, 0.1, 0.04)
    for _ in range(6):
        improved = False
        for vert in verts:
            for alpha in steps:
                cand = (1 - alpha) * best + alpha * vert
                v = value(cand)
                if v > best_val + 1e-10:
                    best, best_val = cand, v
                    improved = True
        if not improved:
            break
    return best, best_val


def _tv_alignment(plant: Plant, schedule: np.ndarray, u: np.ndarray, t_star: int):
    """Disturbance maximizing u' z_{t*} for a fixed parameter schedule,
    unit peak per step, via the adjoint (backward) recursion."""
    d = plant.dims
    T = schedule.shape[0]
    As, Bs, Cs, Ds = [], [], [], []
    for k in range(T):
        A, B, C, Dmat = _closed_loop(plant, schedule[k])
        As.append(A)
        Bs.append(B)
        Cs.append(C)
        Ds.append(Dmat)
    w = np.zeros((T, d.nw))
    lam = Cs[t_star].T @ u  # gradient of u'z_{t*} w.r.t. x_k, backward
    g = Ds[t_star].T @ u
    n = np.linalg.norm(g)
    if n > 1e-14:
        w[t_star] = g / n
    for k in range(t_star - 1, -1, -1):
        g = Bs[k].T @ lam
        n = np.linalg.norm(g)
        if n > 1e-14:
            w[k] = g / n
        lam = As[k].T @ lam
    return w


def _simulate_schedule(plant: Plant, schedule: np.ndarray, w: np.ndarray):
    delta = DeltaRealization.schedule(schedule)
    return simulate(plant, None, delta, w, T=w.shape[0])


def empirical_gain(
    plant: Plant,
    spec: UncertaintySpec,
    horizon: int = 200,
    initial_guess=None,
    beam_width: int = 8,
    beam_horizon: int = 12,
    rounds: int = 3,
    seed: int = 0,
) -> GainWitness:
    """Deterministic lower bound on the worst-case peak-to-peak gain.

    Time-invariant classes alternate (a) exact adjoint alignment of the
    disturbance for the current parameter with (b) hull line searches over
    the parameter. Time-varying classes additionally search vertex
    schedules with a beam over a trailing window before the peak time,
    then refine by single-step vertex swaps. Norm-bounded classes use the
    worst constant diagonal +-1 pattern as the parametric proxy plus seeded
    random rotations. The result never overstates the gain: every candidate
    is evaluated by plain simulation.
    """
    d = plant.dims
    if spec.kind == "none" or d.nz == 0:
        A, B, C, D = plant.A, plant.Bw, plant.Cz, plant.Dzw
        val, u = _aligned_gain_lti(A, B, C, D, horizon)
        w = _witness_w(A, B, C, D, u, horizon) if d.nz else np.zeros((horizon, d.nw))
        return GainWitness(val, DeltaRealization.none(), w, {"mode": "nominal"})

    if spec.kind == "normbound":
        rng = np.random.default_rng(seed)
        best = GainWitness(0.0, DeltaRealization.none(), np.zeros((horizon, d.nw)))
        candidates = []
        for signs in ([1.0] * d.nq, [-1.0] * d.nq):
            mat = np.zeros((d.np, d.nq))
            r = min(d.np, d.nq)
            mat[:r, :r] = np.diag(signs[:r])
            candidates.append(mat)
        for _ in range(6):
            gauss = rng.normal(size=(d.np, d.nq))
            uu, _, vv = np.linalg.svd(gauss, full_matrices=False)
            candidates.append(uu @ vv)
        for mat in candidates:
            try:
                probe = simulate(plant, None,
                                 DeltaRealization.norm_bounded(mat[None]),
                                 np.zeros((1, d.nw)))
            except IllPosed:
                continue
            del probe
            dk = mat
            loop = np.eye(d.np) - dk @ plant.Dqp
            G = np.linalg.solve(loop, dk)
            A = plant.A + plant.Bp @ G @ plant.Cq
            B = plant.Bw + plant.Bp @ G @ plant.Dqw
            C = plant.Cz + plant.Dzp @ G @ plant.Cq
            D = plant.Dzw + plant.Dzp @ G @ plant.Dqw
            val, u = _aligned_gain_lti(A, B, C, D, horizon)
            if val > best.gain:
                w = _witness_w(A, B, C, D, u, horizon)
                reps = np.repeat(mat[None], horizon, axis=0)
                best = GainWitness(val, DeltaRealization.norm_bounded(reps), w,
                                   {"mode": "normbound"})
        return best

    verts = spec.vertex_array()
    start = np.asarray(initial_guess, dtype=float) if initial_guess is not None \
        else verts.mean(axis=0)
    best_delta, ti_val = _hull_ascent(plant, verts, start, horizon)
    A, B, C, D = _closed_loop(plant, best_delta)
    _, u = _aligned_gain_lti(A, B, C, D, horizon)
    w = _witness_w(A, B, C, D, u, horizon)
    witness = GainWitness(ti_val, DeltaRealization.constant(best_delta), w,
                          {"mode": "pti", "u": u})
    if spec.kind == "pti":
        return witness

    # time-varying: beam over vertex schedules in a trailing window
    T = horizon
    schedule = np.repeat(best_delta[None, :], T, axis=0)
    best_tv = _peak_ratio(plant, schedule, w)
    best_state = (schedule, w, best_tv)
    m = verts.shape[0]
    for _ in range(rounds):
        schedule, w, _ = best_state
        traj = _simulate_schedule(plant, schedule, w)
        t_star = int(np.argmax(np.linalg.norm(traj.z, axis=1)))
        lo = max(0, t_star - beam_horizon + 1)
        # beam over vertex choices on [lo, t_star]
        beams = [(schedule.copy(), 0.0)]
        for k in range(lo, t_star + 1):
            scored = []
            for sched, _ in beams:
                for j in range(m):
                    cand = sched.copy()
                    cand[k] = verts[j]
                    val = _peak_ratio(plant, cand, w)
                    scored.append((cand, val))
            scored.sort(key=lambda sv: -sv[1])
            beams = scored[:beam_width]
        cand_schedule, cand_val = beams[0]
        if cand_val > best_tv:
            best_tv = cand_val
            best_state = (cand_schedule, w, cand_val)
        # re-align disturbance for the new schedule
        schedule = best_state[0]
        traj = _simulate_schedule(plant, schedule, best_state[1])
        t_star = int(np.argmax(np.linalg.norm(traj.z, axis=1)))
        zdir = traj.z[t_star]
        nz = np.linalg.norm(zdir)
        u_dir = zdir / nz if nz > 1e-14 else np.eye(d.nz)[0]
        w_new = _tv_alignment(plant, schedule, u_dir, t_star)
        val = _peak_ratio(plant, schedule, w_new)
        if val > best_tv:
            best_tv = val
            best_state = (schedule, w_new, val)
    schedule, w, val = best_state
    # single-step vertex swap hill climbing near the peak
    traj = _simulate_schedule(plant, schedule, w)
    t_star = int(np.argmax(np.linalg.norm(traj.z, axis=1)))
    for k in range(max(0, t_star - 2 * beam_horizon), t_star + 1):
        for j in range(m):
            cand = schedule.copy()
            cand[k] = verts[j]
            v = _peak_ratio(plant, cand, w)
            if v > val + 1e-12:
                schedule, val = cand, v
    if val > witness.gain:
        witness = GainWitness(val, DeltaRealization.schedule(schedule), w,
                              {"mode": "ptv"})
    return witness


def _peak_ratio(plant: Plant, schedule: np.ndarray, w: np.ndarray) -> float:
    wp = peak_norm(w)
    if wp <= 1e-14:
        return 0.0
    try:
        traj = _simulate_schedule(plant, schedule, w)
    except IllPosed:
        return -math.inf
    return peak_norm(traj.z) / wp


# ---------------------------------------------------------------------------
# certificate checks


def iqc_residual_check(
    filt: Filter,
    M: np.ndarray,
    X: np.ndarray | None,
    rho: float,
    delta: DeltaRealization,
    q: np.ndarray,
    T: int | None = None,
) -> float:
    """Minimum weighted-residual of the filtered quadratic constraint.

    Feeds (q, p = Delta q) through the filter and accumulates
    r(t) = sum_{k<=t} rho^(t-k) s_k' M s_k + psi_{t+1}' X psi_{t+1};
    with X absent the check is pointwise: min_k s_k' M s_k.
    A valid multiplier keeps the minimum (essentially) nonnegative.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    if T is not None:
        q = q[:T]
    T = q.shape[0]
    nq = filt.nq
    npp = filt.np
    p = np.zeros((T, npp))
    for k in range(T):
        p[k] = delta.matrix_at(k, npp, nq) @ q[k]
    psi, s = filt.response(q, p)
    m_terms = np.einsum("ti,ij,tj->t", s, M, s)
    if X is None:
        return float(m_terms.min()) if T else 0.0
    worst = math.inf
    acc = 0.0
    for t in range(T):
        acc = rho * acc + m_terms[t]
        terminal = psi[t + 1] @ X @ psi[t + 1]
        worst = min(worst, acc + terminal)
    return float(worst) if T else 0.0


def dissipation_check(
    aug: AugmentedPlant,
    P: np.ndarray,
    M: np.ndarray,
    X: np.ndarray | None,
    mu: float,
    gamma: float | None,
    rho: float,
    traj: Trajectory,
    second_multiplier: np.ndarray | None = None,
) -> float:
    """Largest per-step violation of the two dissipation inequalities a
    solved certificate implies along a trajectory (<= ~0 when valid).

    The decay inequality uses (P, M, mu); the peak inequality uses the
    terminal cost (zero-padded to the stacked state) and, when given, an
    independent second multiplier. ``gamma=None`` checks decay only, which
    is the reachability case.
    """
    d = aug.dims
    chi = traj.chi()
    s = traj.s
    w = traj.w
    z = traj.z
    T = traj.horizon
    Pc = chi[:T + 1] @ P  # (T+1, nchi)
    p_quad = np.einsum("ti,ti->t", Pc, chi[: T + 1])
    s_m = np.einsum("ti,ij,tj->t", s, M, s)
    w_sq = (w**2).sum(axis=1)
    d1 = p_quad[1:] - rho * p_quad[:-1] + s_m - mu * w_sq
    worst = float(d1.max()) if T else 0.0
    if gamma is None:
        return worst
    M2 = M if second_multiplier is None else second_multiplier
    s_m2 = s_m if second_multiplier is None else np.einsum(
        "ti,ij,tj->t", s, M2, s)
    Xt = np.zeros((d.nchi, d.nchi))
    if X is not None:
        Xt[: d.npsi, : d.npsi] = X
    x_quad = np.einsum("ti,ij,tj->t", chi[1: T + 1], Xt, chi[1: T + 1])
    z_sq = (z**2).sum(axis=1)
    c_z = rho / (gamma * (1.0 - rho))
    c_w = rho * (gamma - mu) / (1.0 - rho)
    d2 = -rho * p_quad[:-1] + x_quad + s_m2 + c_z * z_sq - c_w * w_sq
    if T:
        worst = max(worst, float(d2.max()))
    return worst


def reach_containment_check(
    plant: Plant,
    filt: Filter | None,
    Qtilde: np.ndarray,
    spec: UncertaintySpec,
    w_peak: float,
    trials: int = 500,
    T: int = 150,
    seed: int = 0,
) -> float:
    """Monte-Carlo maximum of x_k' Qtilde x_k over admissible runs.

    Containment of the certified ellipsoid means the returned maximum stays
    <= 1 (up to simulation round-off). Disturbances mix per-step random
    directions on the w_peak sphere with bang-bang axis patterns; the
    uncertainty mixes vertices with random hull points (time-varying kinds
    resample per step).
    """
    d = plant.dims
    rng = np.random.default_rng(seed)
    verts = spec.vertex_array() if spec.kind in ("ptv", "pti") else None
    worst = 0.0
    for trial in range(trials):
        delta = _sample_delta(spec, verts, rng, T, trial)
        w = _sample_disturbance(rng, T, d.nw, w_peak, trial)
        try:
            traj = simulate(plant, filt, delta, w, T=T)
        except IllPosed:
            continue
        vals = np.einsum("ti,ij,tj->t", traj.x, Qtilde, traj.x)
        worst = max(worst, float(vals.max()))
    return worst


def gain_soundness_check(
    plant: Plant,
    spec: UncertaintySpec,
    gamma: float,
    trials: int = 1000,
    T: int = 200,
    seed: int = 0,
) -> float:
    """Largest simulated ||z||peak / ||w||peak over sampled admissible runs;
    a sound gain certificate keeps this <= gamma (up to round-off)."""
    d = plant.dims
    rng = np.random.default_rng(seed)
    verts = spec.vertex_array() if spec.kind in ("ptv", "pti") else None
    worst = 0.0
    for trial in range(trials):
        delta = _sample_delta(spec, verts, rng, T, trial)
        w = _sample_disturbance(rng, T, d.nw, 1.0, trial)
        try:
            traj = simulate(plant, None, delta, w, T=T)
        except IllPosed:
            continue
        wp = peak_norm(traj.w)
        if wp > 1e-14:
            worst = max(worst, peak_norm(traj.z) / wp)
    return worst


def _sample_delta(spec, verts, rng, T: int, trial: int) -> DeltaRealization:
    if spec.kind == "none":
        return DeltaRealization.none()
    if spec.kind == "normbound":
        mats = np.zeros((T, spec.np, spec.nq))
        r = min(spec.np, spec.nq)
        if trial % 3 == 0:
            mats[:, :r, :r] = np.eye(r) * (1 if trial % 2 == 0 else -1)
        else:
            for k in range(T):
                gauss = rng.normal(size=(spec.np, spec.nq))
                uu, _, vv = np.linalg.svd(gauss, full_matrices=False)
                mats[k] = (uu @ vv) * rng.uniform(0.5, 1.0)
        return DeltaRealization.norm_bounded(mats)
    m = verts.shape[0]
    if spec.kind == "pti":
        if trial % 3 == 0:
            return DeltaRealization.constant(verts[trial % m])
        theta = rng.dirichlet(np.ones(m))
        return DeltaRealization.constant(verts.T @ theta)
    # ptv: vertex bang-bang or per-step hull samples
    if trial % 3 == 0:
        picks = rng.integers(0, m, size=T)
        return DeltaRealization.schedule(verts[picks])
    thetas = rng.dirichlet(np.ones(m), size=T)
    return DeltaRealization.schedule(thetas @ verts)


def _sample_disturbance(rng, T: int, nw: int, w_peak: float, trial: int):
    if nw == 0:
        return np.zeros((T, 0))
    if trial % 4 == 0:
        # bang-bang axis pattern with random dwell lengths
        w = np.zeros((T, nw))
        k = 0
        while k < T:
            dwell = int(rng.integers(1, 12))
            axis = int(rng.integers(0, nw))
            sign = 1.0 if rng.random() < 0.5 else -1.0
            w[k: k + dwell, axis] = sign * w_peak
            k += dwell
        return w
    dirs = rng.normal(size=(T, nw))
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    norms[norms < 1e-12] = 1.0
    scale = w_peak if trial % 2 == 0 else w_peak * rng.uniform(0.3, 1.0)
    return dirs / norms * scale

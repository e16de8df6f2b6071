"""Conic canonicalization and the interior-point backend contract.

A sealed program is flattened to the standard form

    minimize    q' theta
    subject to  A theta + s = b,   s in K

where K stacks a nonnegative orthant block, second-order cones, and PSD
cones in that order. PSD blocks use the scaled upper-triangle vectorization
(column-major, off-diagonals carrying sqrt(2)) so matrix inner products are
preserved; the reference backend (Clarabel) uses the same convention
natively, so no basis change is needed on its side.

Backends are pluggable: anything with ``solve_conic(problem, opts)`` works.
A backend instance is cheap and stateless; the engine makes one call per
line-search point.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import EmptyProgram, SolverFailure
from .lmi import (
    LmiConstraint,
    NonnegConstraint,
    ScalarVariable,
    SdpProgram,
    SocConstraint,
)

_SQRT2 = math.sqrt(2.0)


@dataclass
class SolveOptions:
    tol: float = 1e-8
    max_iter: int = 200
    verbose: bool = False


@dataclass
class ConeSpec:
    kind: str  # "nonneg" | "soc" | "psd"
    rows: int
    order: int = 0  # matrix order for psd cones


@dataclass
class ConicProblem:
    q: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    cones: list
    program: SdpProgram
    var_slices: dict

    @property
    def num_vars(self) -> int:
        return self.q.size


@dataclass
class SolveResult:
    status: str  # optimal | infeasible | unbounded | numerical-limit
    objective: float | None
    assignment: dict
    stats: dict


@lru_cache(maxsize=None)
def _svec_map(n: int):
    """Flat indices and weights selecting the scaled upper triangle
    (column-major) from a C-order flattened n x n matrix."""
    idx = []
    wgt = []
    for j in range(n):
        for i in range(j + 1):
            idx.append(i * n + j)
            wgt.append(1.0 if i == j else _SQRT2)
    return np.asarray(idx, dtype=np.intp), np.asarray(wgt, dtype=float)


def svec(mat: np.ndarray) -> np.ndarray:
    n = mat.shape[0]
    idx, wgt = _svec_map(n)
    return mat.ravel()[idx] * wgt


def smat(vec: np.ndarray, n: int) -> np.ndarray:
    """Inverse of ``svec``."""
    idx, wgt = _svec_map(n)
    flat = np.zeros(n * n)
    flat[idx] = np.asarray(vec, dtype=float) / wgt
    mat = flat.reshape(n, n)
    return mat + np.triu(mat, 1).T


def _symmetrized(C: np.ndarray, n: int) -> np.ndarray:
    """Average a flattened-matrix coefficient block with its transpose."""
    C3 = C.reshape(n, n, -1)
    return 0.5 * (C3 + C3.transpose(1, 0, 2)).reshape(n * n, -1)


def canonicalize(program: SdpProgram) -> ConicProblem:
    """Flatten a program to conic standard form; seals the program."""
    if not program.variables:
        raise EmptyProgram("program declares no variables")
    program.seal()

    offsets = {}
    pos = 0
    for v in program.variables:
        offsets[v.name] = slice(pos, pos + v.dim)
        pos += v.dim
    N = pos

    colscale = np.ones(N)
    for name, s in program.var_scales.items():
        colscale[offsets[name]] = 1.0 / s

    nonneg = [c for c in program.constraints if isinstance(c, NonnegConstraint)]
    socs = [c for c in program.constraints if isinstance(c, SocConstraint)]
    lmis = [c for c in program.constraints if isinstance(c, LmiConstraint)]

    blocks_A: list[np.ndarray] = []
    blocks_b: list[np.ndarray] = []
    cones: list[ConeSpec] = []

    def emit(const_vec: np.ndarray, coeff_rows: dict):
        """One cone block: s = const + C theta, i.e. A = -C, b = const."""
        k = const_vec.size
        Ablk = np.zeros((k, N))
        for var, C in coeff_rows.items():
            Ablk[:, offsets[var.name]] = -C
        blocks_A.append(Ablk)
        blocks_b.append(const_vec)

    nn_rows = 0
    for c in nonneg:
        e = c.expr
        emit(e.const.ravel(), {v: e.coeffs[v] for v in e.coeffs})
        nn_rows += e.const.size
    if nn_rows:
        cones.append(ConeSpec("nonneg", nn_rows))

    for c in socs:
        t, x = c.t, c.x
        k = 1 + x.const.size
        const_vec = np.concatenate([t.const.ravel(), x.const.ravel()])
        coeff_rows = {}
        for e, sl in ((t, slice(0, 1)), (x, slice(1, k))):
            for v, C in e.coeffs.items():
                rows = coeff_rows.setdefault(v, np.zeros((k, v.dim)))
                rows[sl, :] += C
        emit(const_vec, coeff_rows)
        cones.append(ConeSpec("soc", k))

    for c in lmis:
        e = c.psd_expr()
        n = e.shape[0]
        if n == 0:
            continue
        idx, wgt = _svec_map(n)
        const_vec = svec(0.5 * (e.const + e.const.T))
        coeff_rows = {
            v: _symmetrized(C, n)[idx, :] * wgt[:, None] for v, C in e.coeffs.items()
        }
        emit(const_vec, coeff_rows)
        cones.append(ConeSpec("psd", idx.size, order=n))

    if blocks_A:
        A = np.vstack(blocks_A) * colscale[None, :]
        b = np.concatenate(blocks_b)
    else:
        A = np.zeros((0, N))
        b = np.zeros(0)

    q = np.zeros(N)
    if program.objective is not None:
        sign = -1.0 if program.objective_sense == "max" else 1.0
        for v, C in program.objective.coeffs.items():
            q[offsets[v.name]] = sign * C.reshape(v.dim)
        q *= colscale

    return ConicProblem(
        q=q,
        A=sp.csc_matrix(A),
        b=b,
        cones=cones,
        program=program,
        var_slices=offsets,
    )


def decode(problem: ConicProblem, x: np.ndarray) -> dict:
    """Map a solver iterate back to named variable values (scales undone)."""
    program = problem.program
    assignment = {}
    for v in program.variables:
        theta = np.asarray(x[problem.var_slices[v.name]], dtype=float)
        s = program.var_scales.get(v.name, 1.0)
        value = v.materialize(theta / s)
        assignment[v.name] = float(value[0, 0]) if isinstance(v, ScalarVariable) else value
    return assignment


_CLARABEL_STATUS = {
    "Solved": "optimal",
    "PrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
}


class ClarabelBackend:
    """Reference backend: native interior-point conic solver."""

    name = "clarabel"

    def solve_conic(self, problem: ConicProblem, opts: SolveOptions):
        import clarabel

        cones = []
        for c in problem.cones:
            if c.kind == "nonneg":
                cones.append(clarabel.NonnegativeConeT(c.rows))
            elif c.kind == "soc":
                cones.append(clarabel.SecondOrderConeT(c.rows))
            else:
                cones.append(clarabel.PSDTriangleConeT(c.order))

        settings = clarabel.DefaultSettings()
        settings.verbose = opts.verbose
        settings.max_iter = opts.max_iter
        settings.tol_feas = opts.tol
        settings.tol_gap_abs = opts.tol
        settings.tol_gap_rel = opts.tol
        settings.max_threads = 1  # deterministic across runs

        n = problem.num_vars
        P = sp.csc_matrix((n, n))
        solver = clarabel.DefaultSolver(
            P, problem.q, problem.A, problem.b, cones, settings
        )
        sol = solver.solve()
        raw = str(sol.status)
        status = _CLARABEL_STATUS.get(raw, "numerical-limit")
        stats = {
            "solver": self.name,
            "solver_status": raw,
            "iterations": int(getattr(sol, "iterations", -1)),
            "solve_time": float(getattr(sol, "solve_time", float("nan"))),
            "r_prim": float(getattr(sol, "r_prim", float("nan"))),
            "r_dual": float(getattr(sol, "r_dual", float("nan"))),
            "obj_val": float(getattr(sol, "obj_val", float("nan"))),
        }
        x = np.asarray(sol.x, dtype=float) if status == "optimal" else None
        return status, x, stats


_DEFAULT_BACKEND = ClarabelBackend()


def solve_program(
    program: SdpProgram,
    opts: SolveOptions | None = None,
    backend=None,
) -> SolveResult:
    """Canonicalize, solve, and decode.

    Returns a SolveResult for optimal/infeasible/unbounded outcomes and
    raises SolverFailure when the backend hits its numerical limits, with
    the solver diagnostics and program metadata attached.
    """
    opts = opts or SolveOptions()
    backend = backend or _DEFAULT_BACKEND
    problem = canonicalize(program)
    t0 = time.perf_counter()
    status, x, stats = backend.solve_conic(problem, opts)
    stats["wall_time"] = time.perf_counter() - t0
    stats["num_vars"] = problem.num_vars
    stats["num_rows"] = int(problem.b.size)
    if status == "numerical-limit":
        raise SolverFailure(
            f"solver stopped at its numerical limit ({stats['solver_status']})",
            stats=stats,
            context=dict(program.metadata),
        )
    assignment = decode(problem, x) if x is not None else {}
    objective = program.objective_value(assignment) if assignment else None
    return SolveResult(status=status, objective=objective, assignment=assignment, stats=stats)

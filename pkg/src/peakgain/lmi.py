"""Affine symmetric-matrix expressions and semidefinite program assembly.

Everything the analysis needs is affine in the decision blocks: a matrix
expression is a constant plus a sum of variable terms, and congruence with a
constant outer factor (F' * inner * F) keeps it affine. This module provides
that small symbolic layer, the constraint/program containers consumed by the
solver backend, and the builders for the three analysis LMIs plus the
reachable-set program pieces.

Matrix-valued coefficients are stored densely as (rows*cols, n_params)
arrays in C order; problem sizes here are tens of rows, so dense is both
simpler and faster than sparse bookkeeping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, DuplicateVariable
from .systems import AugmentedPlant

GAMMA_FLOOR = 1e-9  # Schur-complement linearization needs gamma > 0


# ---------------------------------------------------------------------------
# decision variables


class Variable:
    """A declared decision block with ``dim`` free scalar parameters."""

    def __init__(self, name: str, n: int, dim: int):
        self.name = name
        self.n = n
        self.dim = dim
        self._basis: np.ndarray | None = None

    def _build_basis(self) -> np.ndarray:
        raise NotImplementedError

    def basis(self) -> np.ndarray:
        """(n*n, dim) map from free parameters to the flattened matrix."""
        if self._basis is None:
            self._basis = self._build_basis()
            self._basis.setflags(write=False)
        return self._basis

    def materialize(self, theta: np.ndarray) -> np.ndarray:
        return (self.basis() @ np.asarray(theta, dtype=float)).reshape(self.n, self.n)

    def free_params(self, mat: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, n={self.n})"


class SymmetricVariable(Variable):
    """Symmetric n x n block; parameters are the upper triangle (row-major)."""

    def __init__(self, name: str, n: int):
        super().__init__(name, n, n * (n + 1) // 2)

    def _pairs(self):
        return [(i, j) for i in range(self.n) for j in range(i, self.n)]

    def _build_basis(self) -> np.ndarray:
        B = np.zeros((self.n * self.n, self.dim))
        for k, (i, j) in enumerate(self._pairs()):
            B[i * self.n + j, k] = 1.0
            B[j * self.n + i, k] = 1.0
        return B

    def free_params(self, mat: np.ndarray) -> np.ndarray:
        mat = np.asarray(mat, dtype=float).reshape(self.n, self.n)
        return np.array([mat[i, j] for i, j in self._pairs()])


class LowerTriangularVariable(Variable):
    """Lower-triangular n x n block (used by the determinant-root factor)."""

    def __init__(self, name: str, n: int):
        super().__init__(name, n, n * (n + 1) // 2)

    def _pairs(self):
        return [(i, j) for i in range(self.n) for j in range(i + 1)]

    def _build_basis(self) -> np.ndarray:
        B = np.zeros((self.n * self.n, self.dim))
        for k, (i, j) in enumerate(self._pairs()):
            B[i * self.n + j, k] = 1.0
        return B

    def free_params(self, mat: np.ndarray) -> np.ndarray:
        mat = np.asarray(mat, dtype=float).reshape(self.n, self.n)
        return np.array([mat[i, j] for i, j in self._pairs()])


class ScalarVariable(Variable):
    def __init__(self, name: str):
        super().__init__(name, 1, 1)

    def _build_basis(self) -> np.ndarray:
        return np.ones((1, 1))

    def free_params(self, mat) -> np.ndarray:
        return np.asarray(mat, dtype=float).reshape(1)


# ---------------------------------------------------------------------------
# affine expressions


class AffineMatrixExpr:
    """const + sum_v coeff_v @ params(v), reshaped to (rows, cols)."""

    __slots__ = ("const", "coeffs")

    # make ndarray @ expr defer to __rmatmul__ instead of broadcasting
    __array_ufunc__ = None

    def __init__(self, const: np.ndarray, coeffs: dict[Variable, np.ndarray]):
        self.const = np.asarray(const, dtype=float)
        if self.const.ndim != 2:
            raise DimensionMismatch("expr", ("2-d",), self.const.shape)
        self.coeffs = coeffs

    @property
    def shape(self):
        return self.const.shape

    @property
    def is_constant(self) -> bool:
        return not self.coeffs

    def _c3(self, var: Variable) -> np.ndarray:
        r, c = self.shape
        return self.coeffs[var].reshape(r, c, var.dim)

    def __add__(self, other):
        other = as_expr(other)
        if other.shape != self.shape:
            raise DimensionMismatch("sum", self.shape, other.shape)
        coeffs = {v: c.copy() for v, c in self.coeffs.items()}
        for v, c in other.coeffs.items():
            coeffs[v] = coeffs[v] + c if v in coeffs else c.copy()
        return AffineMatrixExpr(self.const + other.const, coeffs)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (as_expr(other) * -1.0)

    def __rsub__(self, other):
        return as_expr(other) + (self * -1.0)

    def __mul__(self, alpha: float):
        alpha = float(alpha)
        return AffineMatrixExpr(
            alpha * self.const, {v: alpha * c for v, c in self.coeffs.items()}
        )

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __matmul__(self, right):
        right = np.asarray(_const_of(right), dtype=float)
        r, c = self.shape
        if right.shape[0] != c:
            raise DimensionMismatch("matmul", (c,), right.shape)
        coeffs = {
            v: np.einsum("rkd,kc->rcd", self._c3(v), right).reshape(-1, v.dim)
            for v in self.coeffs
        }
        return AffineMatrixExpr(self.const @ right, coeffs)

    def __rmatmul__(self, left):
        left = np.asarray(_const_of(left), dtype=float)
        r, c = self.shape
        if left.shape[1] != r:
            raise DimensionMismatch("matmul", (r,), left.shape)
        coeffs = {
            v: np.einsum("ik,kcd->icd", left, self._c3(v)).reshape(-1, v.dim)
            for v in self.coeffs
        }
        return AffineMatrixExpr(left @ self.const, coeffs)

    @property
    def T(self):
        r, c = self.shape
        coeffs = {
            v: self._c3(v).transpose(1, 0, 2).reshape(c * r, v.dim)
            for v in self.coeffs
        }
        return AffineMatrixExpr(self.const.T, coeffs)

    def sub(self, rows: slice, cols: slice):
        coeffs = {
            v: self._c3(v)[rows, cols, :].reshape(-1, v.dim) for v in self.coeffs
        }
        return AffineMatrixExpr(self.const[rows, cols], coeffs)

    def element(self, i: int, j: int):
        return self.sub(slice(i, i + 1), slice(j, j + 1))

    def diag_part(self):
        """Zero out everything but the main diagonal (square exprs)."""
        r, c = self.shape
        if r != c:
            raise DimensionMismatch("diag_part", (r, r), (r, c))
        mask = np.eye(r, dtype=bool).ravel()
        coeffs = {}
        for v, cf in self.coeffs.items():
            out = np.zeros_like(cf)
            out[mask, :] = cf[mask, :]
            coeffs[v] = out
        return AffineMatrixExpr(np.diag(np.diag(self.const)), coeffs)

    def trace(self):
        r, c = self.shape
        if r != c:
            raise DimensionMismatch("trace", (r, r), (r, c))
        picked = self.diag_part()
        ones = np.ones((1, r))
        return ones @ picked @ np.ones((r, 1))

    def evaluate(self, assignment) -> np.ndarray:
        """Numeric value at a {variable-name: matrix} assignment."""
        val = self.const.copy()
        for v, cf in self.coeffs.items():
            if v.name not in assignment:
                raise KeyError(f"assignment is missing variable {v.name!r}")
            theta = v.free_params(np.asarray(assignment[v.name], dtype=float))
            val += (cf @ theta).reshape(self.shape)
        return val

    def __repr__(self):
        names = ", ".join(v.name for v in self.coeffs)
        return f"AffineMatrixExpr(shape={self.shape}, vars=[{names}])"


def _const_of(x):
    if isinstance(x, AffineMatrixExpr):
        if not x.is_constant:
            raise DimensionMismatch("matmul", ("constant factor",), ("affine",))
        return x.const
    return x


def as_expr(x) -> AffineMatrixExpr:
    if isinstance(x, AffineMatrixExpr):
        return x
    if isinstance(x, Variable):
        return AffineMatrixExpr(
            np.zeros((x.n, x.n)), {x: np.array(x.basis(), copy=True)}
        )
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    return AffineMatrixExpr(arr, {})


def zeros(r: int, c: int | None = None) -> AffineMatrixExpr:
    return AffineMatrixExpr(np.zeros((r, r if c is None else c)), {})


def block(rows) -> AffineMatrixExpr:
    """Assemble a block matrix; ``None`` entries become zero blocks."""
    grid = [[None if e is None else as_expr(e) for e in row] for row in rows]
    nr = len(grid)
    nc = len(grid[0])
    heights: list[int | None] = [None] * nr
    widths: list[int | None] = [None] * nc
    for i, row in enumerate(grid):
        if len(row) != nc:
            raise DimensionMismatch("block", (nc,), (len(row),))
        for j, e in enumerate(row):
            if e is None:
                continue
            r, c = e.shape
            if heights[i] is None:
                heights[i] = r
            elif heights[i] != r:
                raise DimensionMismatch(f"block[{i}][{j}]", (heights[i],), (r,))
            if widths[j] is None:
                widths[j] = c
            elif widths[j] != c:
                raise DimensionMismatch(f"block[{i}][{j}]", (widths[j],), (c,))
    if any(h is None for h in heights) or any(w is None for w in widths):
        raise DimensionMismatch("block", ("resolvable shapes",), ("all-None line",))
    roff = np.concatenate([[0], np.cumsum(heights)])
    coff = np.concatenate([[0], np.cumsum(widths)])
    R, C = int(roff[-1]), int(coff[-1])
    const = np.zeros((R, C))
    slabs: dict[Variable, np.ndarray] = {}
    for i, row in enumerate(grid):
        for j, e in enumerate(row):
            if e is None:
                continue
            r0, c0 = int(roff[i]), int(coff[j])
            h, w = e.shape
            const[r0 : r0 + h, c0 : c0 + w] = e.const
            for v in e.coeffs:
                slab = slabs.setdefault(v, np.zeros((R, C, v.dim)))
                slab[r0 : r0 + h, c0 : c0 + w, :] += e._c3(v)
    coeffs = {v: slab.reshape(R * C, v.dim) for v, slab in slabs.items()}
    return AffineMatrixExpr(const, coeffs)


def blockdiag(*entries) -> AffineMatrixExpr:
    entries = [as_expr(e) for e in entries]
    n = len(entries)
    return block(
        [[entries[i] if i == j else None for j in range(n)] for i in range(n)]
    )


def smul(scalar, mat) -> AffineMatrixExpr:
    """Scalar expression times a constant matrix."""
    s = as_expr(scalar)
    if s.shape != (1, 1):
        raise DimensionMismatch("smul", (1, 1), s.shape)
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    flat = mat.ravel()
    coeffs = {v: np.outer(flat, c.reshape(v.dim)) for v, c in s.coeffs.items()}
    return AffineMatrixExpr(s.const[0, 0] * mat, coeffs)


def congruence(inner, outer: np.ndarray) -> AffineMatrixExpr:
    """outer' @ inner @ outer with a constant outer factor."""
    inner = as_expr(inner)
    outer = np.asarray(outer, dtype=float)
    if outer.shape[0] != inner.shape[0] or inner.shape[0] != inner.shape[1]:
        raise DimensionMismatch("congruence", inner.shape, outer.shape)
    return outer.T @ inner @ outer


# ---------------------------------------------------------------------------
# constraints and program


@dataclass
class LmiConstraint:
    """expr >= 0 (sense "psd") or expr <= 0 (sense "nsd") in the Loewner order."""

    expr: AffineMatrixExpr
    sense: str = "psd"
    label: str = ""

    def __post_init__(self):
        r, c = self.expr.shape
        if r != c:
            raise DimensionMismatch(self.label or "lmi", (r, r), (r, c))
        if self.sense not in ("psd", "nsd"):
            raise ValueError(f"unknown sense {self.sense!r}")

    def psd_expr(self) -> AffineMatrixExpr:
        return self.expr if self.sense == "psd" else -self.expr

    def residual(self, assignment) -> float:
        """Smallest eigenvalue of the sense-normalized block (>= 0 iff satisfied)."""
        val = self.psd_expr().evaluate(assignment)
        if val.shape[0] == 0:
            return 0.0
        val = 0.5 * (val + val.T)
        return float(np.linalg.eigvalsh(val)[0])


@dataclass
class NonnegConstraint:
    """Elementwise expr >= 0 for a column expression."""

    expr: AffineMatrixExpr
    label: str = ""

    def residual(self, assignment) -> float:
        val = self.expr.evaluate(assignment)
        return float(val.min()) if val.size else 0.0


@dataclass
class SocConstraint:
    """Second-order cone ||x||_2 <= t with affine t (1x1) and x (k x 1)."""

    t: AffineMatrixExpr
    x: AffineMatrixExpr
    label: str = ""

    def residual(self, assignment) -> float:
        t = float(self.t.evaluate(assignment)[0, 0])
        x = self.x.evaluate(assignment).ravel()
        return t - float(np.linalg.norm(x))


class SdpProgram:
    """Declared variables + conic constraints + a linear objective."""

    def __init__(self, metadata: dict | None = None):
        self.variables: list[Variable] = []
        self._by_name: dict[str, Variable] = {}
        self.constraints: list = []
        self.objective: AffineMatrixExpr | None = None
        self.objective_sense: str = "min"
        self.var_scales: dict[str, float] = {}
        self.metadata = dict(metadata or {})
        self.sealed = False

    # -- declarations ------------------------------------------------------

    def declare(self, var: Variable) -> Variable:
        self._mutating()
        if var.name in self._by_name:
            raise DuplicateVariable(var.name)
        self.variables.append(var)
        self._by_name[var.name] = var
        return var

    def symmetric(self, name: str, n: int) -> SymmetricVariable:
        return self.declare(SymmetricVariable(name, n))

    def scalar(self, name: str) -> ScalarVariable:
        return self.declare(ScalarVariable(name))

    def lower_triangular(self, name: str, n: int) -> LowerTriangularVariable:
        return self.declare(LowerTriangularVariable(name, n))

    def variable(self, name: str) -> Variable:
        return self._by_name[name]

    # -- constraints ---------------------------------------------------------

    def _mutating(self):
        if self.sealed:
            raise RuntimeError("program is sealed")

    def _label(self, label: str) -> str:
        return label or f"c{len(self.constraints)}"

    def add(self, constraint):
        self._mutating()
        constraint.label = self._label(constraint.label)
        self.constraints.append(constraint)
        return constraint

    def add_psd(self, expr, label: str = ""):
        return self.add(LmiConstraint(as_expr(expr), "psd", label))

    def add_nsd(self, expr, label: str = ""):
        return self.add(LmiConstraint(as_expr(expr), "nsd", label))

    def add_nonneg(self, expr, label: str = ""):
        return self.add(NonnegConstraint(as_expr(expr), label))

    def add_soc(self, t, x, label: str = ""):
        return self.add(SocConstraint(as_expr(t), as_expr(x), label))

    def add_rotated(self, u, v, w, label: str = ""):
        """u^2 <= v*w with v, w >= 0, encoded as ||[2u; v-w]|| <= v+w."""
        u, v, w = as_expr(u), as_expr(v), as_expr(w)
        return self.add_soc(v + w, block([[2.0 * u], [v - w]]), label)

    # -- objective / scaling -------------------------------------------------

    def minimize(self, expr):
        self._mutating()
        expr = as_expr(expr)
        if expr.shape != (1, 1):
            raise DimensionMismatch("objective", (1, 1), expr.shape)
        self.objective = expr
        self.objective_sense = "min"

    def maximize(self, expr):
        self.minimize(expr)
        self.objective_sense = "max"

    def set_scale(self, name: str, scale: float):
        """Solve for scale*v instead of v; decoding divides back."""
        self._mutating()
        if name not in self._by_name:
            raise KeyError(f"unknown variable {name!r}")
        if not scale > 0:
            raise ValueError("scale must be positive")
        self.var_scales[name] = float(scale)

    def seal(self):
        self.sealed = True
        return self

    # -- diagnostics -----------------------------------------------------------

    def residuals(self, assignment) -> dict[str, float]:
        """Constraint slacks at a numeric assignment (>= 0 means satisfied)."""
        return {c.label: c.residual(assignment) for c in self.constraints}

    def objective_value(self, assignment) -> float | None:
        if self.objective is None:
            return None
        return float(self.objective.evaluate(assignment)[0, 0])


# ---------------------------------------------------------------------------
# analysis LMI builders


def gain_outer_factor(aug: AugmentedPlant) -> np.ndarray:
    """Rows (chi, chi_next, s, w) as functions of the stacked (chi, p, w)."""
    d = aug.dims
    return np.block(
        [
            [np.eye(d.nchi), np.zeros((d.nchi, d.np)), np.zeros((d.nchi, d.nw))],
            [aug.Asig, aug.Bp, aug.Bw],
            [aug.Cs, aug.Dsp, aug.Dsw],
            [np.zeros((d.nw, d.nchi)), np.zeros((d.nw, d.np)), np.eye(d.nw)],
        ]
    )


def output_row(aug: AugmentedPlant) -> np.ndarray:
    d = aug.dims
    return np.hstack([aug.Cz, aug.Dzp, aug.Dzw])


def build_decay_lmi(aug: AugmentedPlant, P, M, mu, rho: float) -> LmiConstraint:
    """Exponential decay condition: state energy contracts at rate rho while
    absorbing the multiplier term and a mu-weighted disturbance budget."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    d = aug.dims
    inner = blockdiag(
        (-rho) * as_expr(P),
        as_expr(P),
        as_expr(M),
        smul(mu, -np.eye(d.nw)),
    )
    return LmiConstraint(congruence(inner, gain_outer_factor(aug)), "nsd", "decay")


def _disturbance_block(gamma, mu, rho: float, nw: int) -> AffineMatrixExpr:
    # -rho*(gamma - mu)/(1 - rho) * I, kept affine in (gamma, mu)
    c = rho / (1.0 - rho)
    return smul((as_expr(mu) - as_expr(gamma)) * c, np.eye(nw))


def _schur_bordered(S: AffineMatrixExpr, aug, gamma, rho: float, label: str):
    """Assemble [[S, Z'],[Z, -(gamma(1-rho)/rho) I]] <= 0 with Z the output row."""
    d = aug.dims
    if d.nz == 0:
        return LmiConstraint(S, "nsd", label)
    Z = output_row(aug)
    corner = smul(as_expr(gamma) * (-(1.0 - rho) / rho), np.eye(d.nz))
    full = block([[S, Z.T], [Z, corner]])
    return LmiConstraint(full, "nsd", label)


def build_peak_lmi_schur(
    aug: AugmentedPlant, P, X, M, mu, gamma, rho: float
) -> LmiConstraint:
    """Peak-output condition in Schur-bordered form, affine in (P, X, M, gamma, mu).

    The raw condition carries a 1/gamma-weighted output term; moving the
    output row to a border block with corner -(gamma(1-rho)/rho)*I makes it
    an LMI (valid for gamma > 0). ``X`` is the terminal-cost block on the
    filter state and may be None when the class pins it to zero.
    """
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    d = aug.dims
    if X is None:
        Xt = zeros(d.nchi)
    else:
        Xt = blockdiag(as_expr(X), zeros(d.nx))
    inner = blockdiag(
        (-rho) * as_expr(P),
        Xt,
        as_expr(M),
        _disturbance_block(gamma, mu, rho, d.nw),
    )
    S = congruence(inner, gain_outer_factor(aug))
    return _schur_bordered(S, aug, gamma, rho, "peak")


def build_pointwise_peak_lmi_schur(
    aug: AugmentedPlant, P, M2, mu, gamma, rho: float
) -> LmiConstraint:
    """Peak-output condition for pointwise multipliers: the state-update row
    drops out entirely and an independent second multiplier M2 takes M's place."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    d = aug.dims
    F = np.block(
        [
            [np.eye(d.nchi), np.zeros((d.nchi, d.np)), np.zeros((d.nchi, d.nw))],
            [aug.Cs, aug.Dsp, aug.Dsw],
            [np.zeros((d.nw, d.nchi)), np.zeros((d.nw, d.np)), np.eye(d.nw)],
        ]
    )
    inner = blockdiag(
        (-rho) * as_expr(P),
        as_expr(M2),
        _disturbance_block(gamma, mu, rho, d.nw),
    )
    S = congruence(inner, F)
    return _schur_bordered(S, aug, gamma, rho, "peak-pointwise")


def add_invariance_constraints(
    prog: SdpProgram, aug: AugmentedPlant, P, X, Q, margin: float
):
    """State-ellipsoid side conditions: Q and P - diag(X, Q) strictly positive."""
    d = aug.dims
    prog.add_psd(as_expr(Q) - margin * np.eye(d.nx), "Q-margin")
    if X is None:
        Xt = zeros(d.npsi)
    else:
        Xt = as_expr(X)
    gap = as_expr(P) - blockdiag(Xt, as_expr(Q)) - margin * np.eye(d.nchi)
    prog.add_psd(gap, "P-above-XQ")


def add_detroot_objective(prog: SdpProgram, Q, name: str = "vol") -> AffineMatrixExpr:
    """Maximize det(Q)^(1/n) via a lower-triangular factor L with
    [[Q, L], [L', diag(L)]] >= 0 and a geometric-mean cone on diag(L)."""
    Q = as_expr(Q)
    n = Q.shape[0]
    L = prog.lower_triangular(f"{name}_L", n)
    Le = as_expr(L)
    prog.add_psd(block([[Q, Le], [Le.T, Le.diag_part()]]), f"{name}-factor")
    t = add_geomean(prog, [Le.element(i, i) for i in range(n)], name)
    prog.maximize(t)
    return t


def add_geomean(prog: SdpProgram, scalars, name: str = "gm") -> AffineMatrixExpr:
    """t <= geometric mean of the given nonnegative affine scalars.

    Builds the standard power-of-two cone tree, padding leaves with t itself.
    Returns t as an expression; the caller owns the objective.
    """
    scalars = [as_expr(s) for s in scalars]
    n = len(scalars)
    if n == 0:
        raise ValueError("need at least one scalar")
    t = prog.scalar(f"{name}_t")
    te = as_expr(t)
    prog.add_nonneg(te, f"{name}-t-sign")
    if n == 1:
        prog.add_nonneg(scalars[0] - te, f"{name}-leaf")
        return te
    size = 1 << (n - 1).bit_length()
    nodes = scalars + [te] * (size - n)
    level = 0
    while len(nodes) > 2:
        paired = []
        for i in range(0, len(nodes), 2):
            g = prog.scalar(f"{name}_{level}_{i // 2}")
            prog.add_nonneg(as_expr(g), f"{name}-sign-{level}-{i // 2}")
            prog.add_rotated(g, nodes[i], nodes[i + 1], f"{name}-cone-{level}-{i // 2}")
            paired.append(as_expr(g))
        nodes = paired
        level += 1
    prog.add_rotated(te, nodes[0], nodes[1], f"{name}-root")
    return te

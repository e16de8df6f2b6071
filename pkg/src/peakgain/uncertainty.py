"""Uncertainty classes and their admissible multiplier parametrizations.

Three classes are supported: time-varying polytopic (per-step diagonal gains
with the parameter vector in a vertex hull), time-invariant polytopic (same
hull, parameter frozen in time), and norm-bounded time-varying matrix gains.
Each class contributes a filter acting on the stacked (q, p) pair together
with the LMI description of its admissible multiplier set; the analysis
engine installs those into the program it is assembling.

The polytopic time-invariant class is the rich one: a basis block is lifted
channel-wise over q and p, the multiplier lives on the filter output, a
terminal-cost block lives on the filter state, and per-vertex auxiliary
blocks tie the two together.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, WrongKind
from .lmi import (
    AffineMatrixExpr,
    SdpProgram,
    as_expr,
    blockdiag,
    congruence,
    smul,
    zeros,
)
from .systems import BasisBlock, Filter, kron_identity_filter, static_identity_filter

KINDS = ("ptv", "pti", "normbound", "none")


@dataclass(frozen=True)
class UncertaintySpec:
    """What is known about the uncertainty channel.

    kind: "ptv" | "pti" | "normbound" | "none"; polytopic kinds carry the
    vertex list (tuples of length nq) and require np == nq.
    """

    kind: str
    nq: int
    np: int
    vertices: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise WrongKind(f"unknown uncertainty kind {self.kind!r}")
        object.__setattr__(
            self, "vertices", tuple(tuple(float(x) for x in v) for v in self.vertices)
        )
        if self.kind in ("ptv", "pti"):
            if self.np != self.nq:
                raise DimensionMismatch("uncertainty np", (self.nq,), (self.np,))
            if len(self.vertices) < 1:
                raise WrongKind("polytopic uncertainty needs at least one vertex")
            for v in self.vertices:
                if len(v) != self.nq:
                    raise DimensionMismatch("vertex", (self.nq,), (len(v),))
        elif self.kind == "normbound":
            if self.vertices:
                raise WrongKind("norm-bounded uncertainty takes no vertices")
            if self.nq < 1 or self.np < 1:
                raise DimensionMismatch("uncertainty dims", ("nq, np >= 1",),
                                        (self.nq, self.np))
        else:  # none
            if self.nq != 0 or self.np != 0 or self.vertices:
                raise WrongKind("kind 'none' means an empty uncertainty channel")

    @property
    def m(self) -> int:
        return len(self.vertices)

    def vertex_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float).reshape(self.m, self.nq)


@dataclass
class ClassVars:
    """Handles returned by MultiplierClass.install."""

    M: AffineMatrixExpr
    X: AffineMatrixExpr | None
    names: tuple


@dataclass(frozen=True)
class MultiplierClass:
    """A filter plus the LMI-described set of admissible (M, X) pairs."""

    kind: str
    spec: UncertaintySpec
    filter: Filter
    pointwise: bool
    terminal_cost_zero: bool
    phi: BasisBlock | None = None

    @property
    def ns(self) -> int:
        return self.filter.ns

    @property
    def npsi(self) -> int:
        return self.filter.npsi

    def install(self, prog: SdpProgram, rho: float, suffix: str = "") -> ClassVars:
        """Declare this class's decision blocks in ``prog`` and add the
        constraints carving out the admissible set at rate ``rho``.

        Pointwise classes ignore ``rho`` (their constraints are rate-free).
        A ``suffix`` keeps a second independent copy (the pointwise-variant
        second multiplier) from colliding with the first.
        """
        if self.kind == "ptv":
            return self._install_ptv(prog, suffix)
        if self.kind == "pti":
            return self._install_pti(prog, rho, suffix)
        if self.kind == "normbound":
            return self._install_normbound(prog, suffix)
        return ClassVars(M=zeros(0), X=None, names=())

    def _install_ptv(self, prog, suffix):
        nq = self.spec.nq
        M = prog.symmetric("M" + suffix, 2 * nq)
        Me = as_expr(M)
        drop = np.vstack([np.zeros((nq, nq)), np.eye(nq)])
        prog.add_nsd(congruence(Me, drop), f"class{suffix}-lower-right")
        for j, vert in enumerate(self.spec.vertices, start=1):
            lift = np.vstack([np.eye(nq), np.diag(vert)])
            prog.add_psd(congruence(Me, lift), f"class{suffix}-vertex{j}")
        return ClassVars(M=Me, X=None, names=(M.name,))

    def _install_pti(self, prog, rho, suffix):
        if not 0.0 < rho < 1.0:
            raise ValueError(f"rho must lie in (0, 1), got {rho}")
        phi = self.phi
        nq = self.spec.nq
        nphi_q = phi.nphi * nq
        nsig_q = phi.nsigma * nq
        M = prog.symmetric("M" + suffix, 2 * nsig_q)
        X = prog.symmetric("X" + suffix, 2 * nphi_q)
        Me, Xe = as_expr(M), as_expr(X)
        names = [M.name, X.name]

        # one copy of the basis block per channel, p-side blocks only
        IA = np.kron(np.eye(nq), phi.A)
        IB = np.kron(np.eye(nq), phi.B)
        IC = np.kron(np.eye(nq), phi.C)
        ID = np.kron(np.eye(nq), phi.D)
        X22 = Xe.sub(slice(nphi_q, None), slice(nphi_q, None))
        M22 = Me.sub(slice(nsig_q, None), slice(nsig_q, None))
        basis_outer = np.block(
            [
                [np.eye(nphi_q), np.zeros((nphi_q, nq))],
                [IA, IB],
                [IC, ID],
            ]
        )
        inner = blockdiag((-rho) * X22, X22, M22)
        prog.add_nsd(congruence(inner, basis_outer), f"class{suffix}-basis")

        flt = self.filter
        for j, vert in enumerate(self.spec.vertices, start=1):
            Y = prog.symmetric(f"Y{j}{suffix}", 2 * nphi_q)
            Ye = as_expr(Y)
            names.append(Y.name)
            D = np.diag(vert)
            vertex_outer = np.block(
                [
                    [np.eye(2 * nphi_q), np.zeros((2 * nphi_q, nq))],
                    [flt.Apsi, flt.Bq + flt.Bp @ D],
                    [flt.Cs, flt.Dsq + flt.Dsp @ D],
                ]
            )
            inner_j = blockdiag((-rho) * Ye, Ye, Me)
            prog.add_psd(congruence(inner_j, vertex_outer), f"class{suffix}-vertex{j}")
            prog.add_nsd(Ye - Xe, f"class{suffix}-cap{j}")
        return ClassVars(M=Me, X=Xe, names=tuple(names))

    def _install_normbound(self, prog, suffix):
        eps = prog.scalar("eps" + suffix)
        prog.add_nonneg(as_expr(eps), f"class{suffix}-eps-sign")
        M = smul(eps, self._gain_signature())
        return ClassVars(M=M, X=None, names=(eps.name,))

    def _gain_signature(self) -> np.ndarray:
        nq, npp = self.spec.nq, self.spec.np
        return np.block(
            [
                [np.eye(nq), np.zeros((nq, npp))],
                [np.zeros((npp, nq)), -np.eye(npp)],
            ]
        )

    def numeric_multiplier(self, assignment, suffix: str = ""):
        """Recover the numeric (M, X) pair from a solved assignment."""
        if self.kind == "ptv":
            return np.asarray(assignment["M" + suffix], dtype=float), None
        if self.kind == "pti":
            return (
                np.asarray(assignment["M" + suffix], dtype=float),
                np.asarray(assignment["X" + suffix], dtype=float),
            )
        if self.kind == "normbound":
            return float(assignment["eps" + suffix]) * self._gain_signature(), None
        return np.zeros((0, 0)), None


def class_polytopic_tv(spec: UncertaintySpec) -> MultiplierClass:
    """Pointwise multipliers for per-step diagonal gains in a vertex hull:
    the lower-right block is capped negative and every vertex lift is
    nonnegative, which covers the hull by concavity in the parameter."""
    if spec.kind != "ptv":
        raise WrongKind(f"expected kind 'ptv', got {spec.kind!r}")
    return MultiplierClass(
        kind="ptv",
        spec=spec,
        filter=static_identity_filter(2 * spec.nq, spec.nq),
        pointwise=True,
        terminal_cost_zero=True,
    )


def class_polytopic_ti(spec: UncertaintySpec, phi: BasisBlock) -> MultiplierClass:
    """Rate-hard multipliers with terminal cost for frozen-parameter diagonal
    gains, built on a channel-wise lift of the given basis block."""
    if spec.kind != "pti":
        raise WrongKind(f"expected kind 'pti', got {spec.kind!r}")
    return MultiplierClass(
        kind="pti",
        spec=spec,
        filter=kron_identity_filter(phi, spec.nq),
        pointwise=False,
        terminal_cost_zero=False,
        phi=phi,
    )


def class_norm_bounded(spec: UncertaintySpec) -> MultiplierClass:
    """Pointwise multipliers eps*diag(I, -I) for contractive matrix gains."""
    if spec.kind != "normbound":
        raise WrongKind(f"expected kind 'normbound', got {spec.kind!r}")
    return MultiplierClass(
        kind="normbound",
        spec=spec,
        filter=static_identity_filter(spec.nq + spec.np, spec.nq),
        pointwise=True,
        terminal_cost_zero=True,
    )


def class_no_uncertainty() -> MultiplierClass:
    """Empty uncertainty channel: trivial filter, no multiplier variables."""
    spec = UncertaintySpec(kind="none", nq=0, np=0)
    flt = Filter(
        Apsi=np.zeros((0, 0)),
        Bq=np.zeros((0, 0)),
        Bp=np.zeros((0, 0)),
        Cs=np.zeros((0, 0)),
        Dsq=np.zeros((0, 0)),
        Dsp=np.zeros((0, 0)),
    )
    return MultiplierClass(
        kind="none",
        spec=spec,
        filter=flt,
        pointwise=True,
        terminal_cost_zero=True,
    )


def multiplier_class_for(
    spec: UncertaintySpec, phi: BasisBlock | None = None
) -> MultiplierClass:
    """Dispatch a spec to its class constructor (pti requires a basis block)."""
    if spec.kind == "ptv":
        return class_polytopic_tv(spec)
    if spec.kind == "pti":
        if phi is None:
            raise WrongKind("time-invariant polytopic class needs a basis block")
        return class_polytopic_ti(spec, phi)
    if spec.kind == "normbound":
        return class_norm_bounded(spec)
    return class_no_uncertainty()


def class_residuals(mc: MultiplierClass, rho: float, values: dict) -> dict:
    """Slacks of the class constraints at a candidate numeric assignment.

    Useful for checking whether a hand-picked multiplier belongs to the
    admissible set (all slacks >= 0) without running a solver.
    """
    prog = SdpProgram()
    mc.install(prog, rho)
    return prog.residuals(values)

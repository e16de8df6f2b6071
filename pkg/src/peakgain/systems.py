"""State-space containers, IQC basis/filter realizations, and plant augmentation.

The plant has two input channels (uncertainty input p, disturbance w) and up
to three outputs (uncertainty output q, performance output z). A filter is a
stable LTI system driven by the stacked pair (q, p); its output s feeds the
quadratic forms used by the analysis engine. ``augment`` wires a filter in
series with a plant, producing the single augmented system the LMIs act on.

All matrices are dense float64 and frozen after construction; dimensions may
legitimately be zero (no performance output, static filter) and every
operation supports 0-row/0-column blocks without special cases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidOrder,
    InvalidPole,
    UnstableFilter,
)

# filters must be strictly stable: spectral radius < 1 - STABILITY_MARGIN
STABILITY_MARGIN = 1e-9


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def _check_shape(name: str, arr: np.ndarray, rows: int, cols: int) -> np.ndarray:
    if arr.shape != (rows, cols):
        raise DimensionMismatch(name, (rows, cols), arr.shape)
    return arr


def _coerce_block(name: str, value, rows: int, cols: int) -> np.ndarray:
    """Coerce one named block to a (rows x cols) float array.

    ``None`` stands in for a block that is empty by the declared dims
    (e.g. the z-row of a plant with nz = 0).
    """
    if value is None:
        if rows == 0 or cols == 0:
            return np.zeros((rows, cols))
        raise DimensionMismatch(name, (rows, cols), ("absent",))
    arr = np.asarray(value, dtype=float)
    if arr.size == 0:
        arr = arr.reshape(
            rows if rows * cols == 0 else -1, cols if rows * cols == 0 else -1
        )
        arr = np.zeros((rows, cols)) if arr.size == 0 else arr
    if arr.ndim == 1:
        # accept a flat vector only when one dimension is 1
        if rows == 1:
            arr = arr.reshape(1, -1)
        elif cols == 1:
            arr = arr.reshape(-1, 1)
    return _check_shape(name, arr, rows, cols)


def spectral_radius(a: np.ndarray) -> float:
    if a.shape[0] == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(a))))


@dataclass(frozen=True)
class PlantDims:
    nx: int
    np: int
    nq: int
    nw: int
    nz: int

    def __post_init__(self):
        for name in ("nx", "np", "nq", "nw", "nz"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise DimensionMismatch(name, ("nonnegative int",), (v,))


@dataclass(frozen=True)
class Plant:
    """Discrete-time LTI plant with uncertainty channel p->q and
    performance channel w->z. The initial state is always zero."""

    A: np.ndarray
    Bp: np.ndarray
    Bw: np.ndarray
    Cq: np.ndarray
    Dqp: np.ndarray
    Dqw: np.ndarray
    Cz: np.ndarray
    Dzp: np.ndarray
    Dzw: np.ndarray
    dims: PlantDims

    def __post_init__(self):
        d = self.dims
        spec = {
            "A": (d.nx, d.nx),
            "Bp": (d.nx, d.np),
            "Bw": (d.nx, d.nw),
            "Cq": (d.nq, d.nx),
            "Dqp": (d.nq, d.np),
            "Dqw": (d.nq, d.nw),
            "Cz": (d.nz, d.nx),
            "Dzp": (d.nz, d.np),
            "Dzw": (d.nz, d.nw),
        }
        for name, (r, c) in spec.items():
            arr = _coerce_block(name, getattr(self, name), r, c)
            object.__setattr__(self, name, _frozen(arr))

    def response(self, p: np.ndarray, w: np.ndarray):
        """Open-loop response from zero state with p, w as exogenous inputs.

        p: (T, np), w: (T, nw). Returns (x, q, z) with x of length T+1.
        """
        p = np.atleast_2d(np.asarray(p, dtype=float))
        w = np.atleast_2d(np.asarray(w, dtype=float))
        T = max(p.shape[0], w.shape[0])
        d = self.dims
        x = np.zeros((T + 1, d.nx))
        q = np.zeros((T, d.nq))
        z = np.zeros((T, d.nz))
        for k in range(T):
            pk = p[k] if k < p.shape[0] else np.zeros(d.np)
            wk = w[k] if k < w.shape[0] else np.zeros(d.nw)
            q[k] = self.Cq @ x[k] + self.Dqp @ pk + self.Dqw @ wk
            z[k] = self.Cz @ x[k] + self.Dzp @ pk + self.Dzw @ wk
            x[k + 1] = self.A @ x[k] + self.Bp @ pk + self.Bw @ wk
        return x, q, z


@dataclass(frozen=True)
class Filter:
    """Stable LTI filter driven by the stacked pair (q, p), zero initial state."""

    Apsi: np.ndarray
    Bq: np.ndarray
    Bp: np.ndarray
    Cs: np.ndarray
    Dsq: np.ndarray
    Dsp: np.ndarray

    def __post_init__(self):
        Apsi = np.asarray(self.Apsi, dtype=float)
        if Apsi.ndim != 2:
            Apsi = np.atleast_2d(Apsi)
        npsi = Apsi.shape[0]
        _check_shape("Apsi", Apsi, npsi, npsi)
        # the feedthrough rows always exist, so they anchor the channel widths
        Dsq = np.atleast_2d(np.asarray(self.Dsq, dtype=float))
        Dsp = np.atleast_2d(np.asarray(self.Dsp, dtype=float))
        ns, nq = Dsq.shape
        _check_shape("Dsp", Dsp, ns, Dsp.shape[1])
        Bq = _coerce_block("Bq", self.Bq, npsi, nq)
        Bp = _coerce_block("Bp", self.Bp, npsi, Dsp.shape[1])
        Cs = _coerce_block("Cs", self.Cs, ns, npsi)
        radius = spectral_radius(Apsi)
        if radius >= 1.0 - STABILITY_MARGIN:
            raise UnstableFilter(
                f"filter state matrix has spectral radius {radius:.12f} >= 1"
            )
        for name, arr in (
            ("Apsi", Apsi), ("Bq", Bq), ("Bp", Bp),
            ("Cs", Cs), ("Dsq", Dsq), ("Dsp", Dsp),
        ):
            object.__setattr__(self, name, _frozen(arr))

    @property
    def npsi(self) -> int:
        return self.Apsi.shape[0]

    @property
    def ns(self) -> int:
        return self.Cs.shape[0]

    @property
    def nq(self) -> int:
        return self.Dsq.shape[1]

    @property
    def np(self) -> int:
        return self.Dsp.shape[1]

    def response(self, q: np.ndarray, p: np.ndarray):
        """Response from zero state to inputs q: (T, nq), p: (T, np).

        Returns (psi, s) with psi of length T+1.
        """
        q = np.asarray(q, dtype=float).reshape(-1, self.nq)
        p = np.asarray(p, dtype=float).reshape(-1, self.np)
        T = q.shape[0]
        psi = np.zeros((T + 1, self.npsi))
        s = np.zeros((T, self.ns))
        for k in range(T):
            s[k] = self.Cs @ psi[k] + self.Dsq @ q[k] + self.Dsp @ p[k]
            psi[k + 1] = self.Apsi @ psi[k] + self.Bq @ q[k] + self.Bp @ p[k]
        return psi, s


@dataclass(frozen=True)
class BasisBlock:
    """First-order-pole basis system: state matrix lam*I plus a subdiagonal
    shift, single input, nu+1 outputs (feedthrough row stacked over states)."""

    lam: float
    nu: int
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    @property
    def nphi(self) -> int:
        return self.nu

    @property
    def nsigma(self) -> int:
        return self.nu + 1


def basis_filter(lam: float, nu: int) -> BasisBlock:
    """Realize the scalar basis block with pole ``lam`` repeated ``nu`` times.

    A = lam*I + subdiagonal shift, B = e1, C = [0; I], D = e1, so the first
    output is the input itself and the remaining nu outputs are the states.
    """
    if not isinstance(nu, (int, np.integer)) or nu < 1:
        raise InvalidOrder(f"basis order must be a positive integer, got {nu!r}")
    lam = float(lam)
    if not abs(lam) < 1.0:
        raise InvalidPole(f"basis pole must satisfy |lam| < 1, got {lam}")
    A = lam * np.eye(nu)
    if nu > 1:
        A[1:, :-1] += np.eye(nu - 1)
    B = np.zeros((nu, 1))
    B[0, 0] = 1.0
    C = np.vstack([np.zeros((1, nu)), np.eye(nu)])
    D = np.zeros((nu + 1, 1))
    D[0, 0] = 1.0
    return BasisBlock(lam=lam, nu=int(nu), A=_frozen(A), B=_frozen(B),
                      C=_frozen(C), D=_frozen(D))


def kron_identity_filter(phi: BasisBlock, nq: int) -> Filter:
    """Lift a basis block to the filter acting channel-wise on (q, p).

    The filter applies one copy of ``phi`` to every component of q and every
    component of p (requires np = nq), with the q-copies stacked first:
    state dim 2*nphi*nq, output dim 2*nsigma*nq.
    """
    if nq < 1:
        raise InvalidOrder(f"channel count must be >= 1, got {nq}")
    IA = np.kron(np.eye(nq), phi.A)
    IB = np.kron(np.eye(nq), phi.B)
    IC = np.kron(np.eye(nq), phi.C)
    ID = np.kron(np.eye(nq), phi.D)
    nphi_q = phi.nphi * nq
    nsig_q = phi.nsigma * nq
    Apsi = np.block([
        [IA, np.zeros((nphi_q, nphi_q))],
        [np.zeros((nphi_q, nphi_q)), IA],
    ])
    Bq = np.vstack([IB, np.zeros((nphi_q, nq))])
    Bp = np.vstack([np.zeros((nphi_q, nq)), IB])
    Cs = np.block([
        [IC, np.zeros((nsig_q, nphi_q))],
        [np.zeros((nsig_q, nphi_q)), IC],
    ])
    Dsq = np.vstack([ID, np.zeros((nsig_q, nq))])
    Dsp = np.vstack([np.zeros((nsig_q, nq)), ID])
    return Filter(Apsi=Apsi, Bq=Bq, Bp=Bp, Cs=Cs, Dsq=Dsq, Dsp=Dsp)


def static_identity_filter(n: int, nq: int | None = None) -> Filter:
    """Memoryless filter passing the stacked (q, p) straight through.

    ``n`` is the total stacked size; ``nq`` the size of the q part (defaults
    to an even split). State dimension is zero.
    """
    if n < 1:
        raise InvalidOrder(f"identity size must be >= 1, got {n}")
    if nq is None:
        if n % 2 != 0:
            raise DimensionMismatch("static identity", ("even n",), (n,))
        nq = n // 2
    if not 0 <= nq <= n:
        raise DimensionMismatch("static identity nq", (n,), (nq,))
    eye = np.eye(n)
    return Filter(
        Apsi=np.zeros((0, 0)),
        Bq=np.zeros((0, nq)),
        Bp=np.zeros((0, n - nq)),
        Cs=np.zeros((n, 0)),
        Dsq=eye[:, :nq],
        Dsp=eye[:, nq:],
    )


@dataclass(frozen=True)
class AugDims:
    nchi: int
    npsi: int
    nx: int
    np: int
    nq: int
    nw: int
    nz: int
    ns: int


@dataclass(frozen=True)
class AugmentedPlant:
    """Series interconnection of a plant and a filter with stacked state
    chi = (psi, x); the filter sees the plant's (q, p) pair."""

    Asig: np.ndarray
    Bp: np.ndarray
    Bw: np.ndarray
    Cs: np.ndarray
    Dsp: np.ndarray
    Dsw: np.ndarray
    Cz: np.ndarray
    Dzp: np.ndarray
    Dzw: np.ndarray
    dims: AugDims

    @property
    def psi_slice(self) -> slice:
        """Index range of the filter state inside the stacked state chi."""
        return slice(0, self.dims.npsi)

    def response(self, p: np.ndarray, w: np.ndarray):
        """Open-loop response from zero state; returns (chi, s, z)."""
        d = self.dims
        p = np.asarray(p, dtype=float).reshape(-1, d.np)
        w = np.asarray(w, dtype=float).reshape(-1, d.nw)
        T = max(p.shape[0], w.shape[0])
        chi = np.zeros((T + 1, d.nchi))
        s = np.zeros((T, d.ns))
        z = np.zeros((T, d.nz))
        for k in range(T):
            pk = p[k] if k < p.shape[0] else np.zeros(d.np)
            wk = w[k] if k < w.shape[0] else np.zeros(d.nw)
            s[k] = self.Cs @ chi[k] + self.Dsp @ pk + self.Dsw @ wk
            z[k] = self.Cz @ chi[k] + self.Dzp @ pk + self.Dzw @ wk
            chi[k + 1] = self.Asig @ chi[k] + self.Bp @ pk + self.Bw @ wk
        return chi, s, z


_BLOCK_NAMES = ("A", "Bp", "Bw", "Cq", "Dqp", "Dqw", "Cz", "Dzp", "Dzw")


def make_plant(blocks, dims) -> Plant:
    """Assemble and validate a plant from named blocks and a dims record.

    ``blocks`` maps (case-insensitive) block names A, Bp, Bw, Cq, Dqp, Dqw,
    Cz, Dzp, Dzw to nested-list or ndarray data; blocks that are empty under
    ``dims`` may be omitted. ``dims`` is a PlantDims or a mapping with keys
    nx, np, nq, nw, nz.
    """
    if not isinstance(dims, PlantDims):
        dims = PlantDims(**{k: int(v) for k, v in dict(dims).items()})
    lowered = {str(k).lower(): v for k, v in dict(blocks).items()}
    known = {name.lower(): name for name in _BLOCK_NAMES}
    unknown = set(lowered) - set(known)
    if unknown:
        raise DimensionMismatch(sorted(unknown)[0], ("known block name",), ("unknown",))
    kwargs = {name: lowered.get(name.lower()) for name in _BLOCK_NAMES}
    return Plant(dims=dims, **kwargs)


def augment(plant: Plant, filt: Filter) -> AugmentedPlant:
    """Wire ``filt`` in series with ``plant`` (filter input = plant (q, p)).

    The augmented state matrix is upper block triangular with the filter and
    plant state matrices on the diagonal; the filter is driven through the
    plant's q output, so e.g. the top-right state block is Bq_filter @ Cq.
    """
    d = plant.dims
    if filt.nq != d.nq:
        raise DimensionMismatch("filter Bq", (filt.npsi, d.nq), filt.Bq.shape)
    if filt.np != d.np:
        raise DimensionMismatch("filter Bp", (filt.npsi, d.np), filt.Bp.shape)
    npsi, ns = filt.npsi, filt.ns
    nchi = npsi + d.nx
    Asig = np.block([
        [filt.Apsi, filt.Bq @ plant.Cq],
        [np.zeros((d.nx, npsi)), plant.A],
    ])
    Bp = np.vstack([filt.Bp + filt.Bq @ plant.Dqp, plant.Bp])
    Bw = np.vstack([filt.Bq @ plant.Dqw, plant.Bw])
    Cs = np.hstack([filt.Cs, filt.Dsq @ plant.Cq])
    Dsp = filt.Dsp + filt.Dsq @ plant.Dqp
    Dsw = filt.Dsq @ plant.Dqw
    Cz = np.hstack([np.zeros((d.nz, npsi)), plant.Cz])
    return AugmentedPlant(
        Asig=_frozen(Asig), Bp=_frozen(Bp), Bw=_frozen(Bw),
        Cs=_frozen(Cs), Dsp=_frozen(Dsp), Dsw=_frozen(Dsw),
        Cz=_frozen(Cz), Dzp=_frozen(plant.Dzp), Dzw=_frozen(plant.Dzw),
        dims=AugDims(nchi=nchi, npsi=npsi, nx=d.nx, np=d.np, nq=d.nq,
                     nw=d.nw, nz=d.nz, ns=ns),
    )

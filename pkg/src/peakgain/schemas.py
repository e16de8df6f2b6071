"""Serialized document formats for problems, certificates, and reports.

One JSON dialect covers all three document kinds. Every document carries a
``format`` tag and a schema ``version``, matrices are nested row-major
arrays, and dimensions are spelled out next to the data they describe.
Parsing is strict by default — unknown keys are an error — with a lenient
mode that drops unknown keys and reports them as warnings instead.

Reports embed both a machine-readable result and a human rendering; the
rendering is a pure function of the machine fields (``render_human``), and
every number it shows is formatted exactly as the machine document
serializes it, so the two never disagree.
"""

from __future__ import annotations

import json
import math
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .engine import GainCertificate, ReachCertificate, w_peak_from_inf
from .errors import ParseError, WrongKind
from .systems import Plant, make_plant
from .uncertainty import UncertaintySpec

Matrix = list[list[float]]
Vector = list[float]

SCHEMA_VERSION = 1


class _Doc(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


# ---------------------------------------------------------------------------
# problem documents


class DimsDoc(_Doc):
    """Channel widths of a plant; every block shape follows from these."""

    nx: int = Field(ge=0)
    np: int = Field(ge=0)
    nq: int = Field(ge=0)
    nw: int = Field(ge=0)
    nz: int = Field(ge=0)


class PlantDoc(_Doc):
    """State-space blocks, row-major; blocks empty under dims may be omitted."""

    dims: DimsDoc
    A: Matrix
    Bp: Matrix | None = None
    Bw: Matrix | None = None
    Cq: Matrix | None = None
    Dqp: Matrix | None = None
    Dqw: Matrix | None = None
    Cz: Matrix | None = None
    Dzp: Matrix | None = None
    Dzw: Matrix | None = None


class UncertaintyDoc(_Doc):
    """Uncertainty channel description.

    Polytopic kinds list the parameter-box vertices (rows of length nq);
    norm-bounded uncertainty takes an operator-norm bound instead. Channel
    widths come from the plant dims.
    """

    kind: Literal["ptv", "pti", "normbound", "none"]
    vertices: list[Vector] | None = None
    bound: float = 1.0

    @model_validator(mode="after")
    def _consistent(self):
        if self.kind in ("ptv", "pti") and not self.vertices:
            raise ValueError(f"kind {self.kind!r} requires a vertex list")
        if self.kind in ("normbound", "none") and self.vertices:
            raise ValueError(f"kind {self.kind!r} takes no vertices")
        if self.bound <= 0:
            raise ValueError("bound must be positive")
        if self.kind != "normbound" and self.bound != 1.0:
            raise ValueError("bound only applies to kind 'normbound'")
        return self


class OptionsDoc(_Doc):
    """Analysis options; everything has a default so `{}` is a valid value."""

    variant: Literal["thm1", "thm2"] = "thm1"
    nu: int = Field(default=2, ge=1)
    lam: float | None = None  # pin the basis pole (skip the pole search)
    rho: float | None = None  # pin the decay rate (skip the rate search)
    lambda_grid: Vector | None = None
    rho_grid: Vector | None = None
    w_peak: float | None = None
    w_inf: float | None = None
    tol: float | None = None
    scale: float = Field(default=1.0, gt=0.0)
    seed: int = 0
    verify: bool = False
    trials: int | None = Field(default=None, ge=1)
    horizon: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _consistent(self):
        if self.w_peak is not None and self.w_inf is not None:
            raise ValueError("give w_peak or w_inf, not both")
        for name in ("lam", "rho", "w_peak", "w_inf", "tol"):
            value = getattr(self, name)
            if value is not None and not math.isfinite(value):
                raise ValueError(f"{name} must be finite")
        if self.rho is not None and not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")
        return self


class ProblemDocument(_Doc):
    format: Literal["peakgain-problem"] = "peakgain-problem"
    version: int = SCHEMA_VERSION
    name: str | None = None
    request: Literal["gain", "reach", "check"]
    plant: PlantDoc
    uncertainty: UncertaintyDoc
    options: OptionsDoc = Field(default_factory=OptionsDoc)


# ---------------------------------------------------------------------------
# certificate documents


class CertificateDocument(_Doc):
    """A solved certificate with every matrix needed to re-check it.

    ``matrices`` holds the full solver assignment (P, the multiplier
    variables, Q, ...), so validation suites can re-substitute without
    another solve.
    """

    format: Literal["peakgain-certificate"] = "peakgain-certificate"
    version: int = SCHEMA_VERSION
    type: Literal["gain", "reach"]
    kind: Literal["ptv", "pti", "normbound", "none"]
    dims: DimsDoc
    rho: float
    variant: Literal["thm1", "thm2"] | None = None
    lam: float | None = None
    nu: int | None = None
    scale: float = 1.0
    gamma: float | None = None
    mu: float | None = None
    w_peak: float | None = None
    volume: float | None = None
    shape_matrix: Matrix | None = None
    matrices: dict[str, float | Matrix] = Field(default_factory=dict)
    stats: dict[str, float | int | str] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _consistent(self):
        if self.type == "gain" and (self.gamma is None or self.mu is None):
            raise ValueError("gain certificates need gamma and mu")
        if self.type == "reach":
            if self.volume is None or self.w_peak is None:
                raise ValueError("reach certificates need volume and w_peak")
            for name in ("Q", "Qtilde"):
                if name not in self.matrices:
                    raise ValueError(f"reach certificates need matrices[{name!r}]")
        return self


# ---------------------------------------------------------------------------
# report documents


class AxisDoc(_Doc):
    """One principal semi-axis of the certified ellipsoid."""

    length: float
    direction: Vector


class GainResultDoc(_Doc):
    gamma: float
    mu: float
    rho: float
    variant: Literal["thm1", "thm2"]
    lam: float | None = None
    nu: int | None = None
    l1_lower: float
    l1_upper: float


class ReachResultDoc(_Doc):
    volume: float  # -log det(Qtilde)
    rho: float
    w_peak: float
    lam: float | None = None
    nu: int | None = None
    axes: list[AxisDoc] = Field(default_factory=list)


class SuiteDoc(_Doc):
    """Outcome of one validation suite: worst observed value vs. its bound."""

    name: str
    worst: float
    bound: float
    passed: bool


class OracleDoc(_Doc):
    """Simulation cross-check summary attached by --verify."""

    empirical_gain: float | None = None
    soundness_max_ratio: float | None = None
    containment_max: float | None = None
    iqc_min_residual: float | None = None
    trials: int | None = None
    horizon: int | None = None


class ReportDocument(_Doc):
    format: Literal["peakgain-report"] = "peakgain-report"
    version: int = SCHEMA_VERSION
    command: Literal["gain", "reach", "check"]
    status: Literal["certificate", "infeasible", "pass", "fail"]
    problem_name: str | None = None
    seed: int = 0
    notices: list[str] = Field(default_factory=list)
    gain: GainResultDoc | None = None
    reach: ReachResultDoc | None = None
    suites: list[SuiteDoc] | None = None
    oracle: OracleDoc | None = None
    certificate: CertificateDocument | None = None
    solver: dict[str, float | int | str] = Field(default_factory=dict)
    runtime_s: float | None = None
    human: str = ""


# ---------------------------------------------------------------------------
# parsing


def dumps(doc: BaseModel) -> str:
    """Serialize a document to JSON text (two-space indent, keys in order)."""
    return json.dumps(doc.model_dump(mode="json"), indent=2, allow_nan=False)


def _drop_key(data, path):
    node = data
    for step in path[:-1]:
        node = node[step]
    if isinstance(node, dict):
        node.pop(path[-1], None)


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<document>"
        lines.append(f"  at {where}: {err['msg']}")
    return "\n".join(lines)


def parse_document(text: str, model: type, strict: bool = True,
                   source: str = "<document>"):
    """Parse JSON text against a document model.

    Returns (document, warnings). In strict mode unknown keys are an error;
    in lenient mode they are dropped and reported as warnings. Every failure
    raises ParseError (malformed JSON carries line/column, schema violations
    carry the offending key path); nothing else escapes.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{source}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}", line=exc.lineno, column=exc.colno,
        ) from None
    if not isinstance(data, dict):
        raise ParseError(f"{source}: top level must be a JSON object")
    warnings: list[str] = []
    for _ in range(64):  # nested unknown keys surface a level at a time
        try:
            return model.model_validate(data), warnings
        except ValidationError as exc:
            errors = exc.errors()
            extras = [e["loc"] for e in errors if e["type"] == "extra_forbidden"]
            if strict or len(extras) < len(errors):
                first = errors[0]
                raise ParseError(
                    f"{source}: not a valid {model.__name__}\n"
                    f"{_format_errors(exc)}",
                    path=tuple(first["loc"]),
                ) from None
            for loc in extras:
                warnings.append("ignored unknown key "
                                + ".".join(str(p) for p in loc))
                _drop_key(data, loc)
    raise ParseError(f"{source}: document nests too deeply")


def parse_problem(text: str, strict: bool = True,
                  source: str = "<problem>") -> tuple[ProblemDocument, list[str]]:
    return parse_document(text, ProblemDocument, strict, source)


def parse_certificate(text: str, strict: bool = True,
                      source: str = "<certificate>"):
    return parse_document(text, CertificateDocument, strict, source)


def parse_report(text: str, strict: bool = True,
                 source: str = "<report>") -> tuple[ReportDocument, list[str]]:
    return parse_document(text, ReportDocument, strict, source)


# ---------------------------------------------------------------------------
# document <-> core object conversion


def plant_from_doc(doc: PlantDoc) -> Plant:
    blocks = {
        name: getattr(doc, name)
        for name in ("A", "Bp", "Bw", "Cq", "Dqp", "Dqw", "Cz", "Dzp", "Dzw")
        if getattr(doc, name) is not None
    }
    return make_plant(blocks, doc.dims.model_dump())


def problem_to_objects(doc: ProblemDocument):
    """Build the core (plant, uncertainty spec) pair from a problem document.

    Returns (plant, spec, notices). A norm bound b != 1 is absorbed into the
    plant's p-channel columns (Bp, Dqp, Dzp scaled by b), which leaves an
    equivalent loop with a unit-norm uncertainty; the rescaling is recorded
    as a notice.
    """
    plant = plant_from_doc(doc.plant)
    unc = doc.uncertainty
    d = plant.dims
    notices: list[str] = []
    if unc.kind == "none" and (d.nq or d.np):
        raise WrongKind(
            "uncertainty kind 'none' requires an empty p/q channel "
            f"(got nq={d.nq}, np={d.np})"
        )
    if unc.kind == "normbound" and unc.bound != 1.0:
        b = unc.bound
        plant = make_plant(
            {
                "A": plant.A, "Bp": b * plant.Bp, "Bw": plant.Bw,
                "Cq": plant.Cq, "Dqp": b * plant.Dqp, "Dqw": plant.Dqw,
                "Cz": plant.Cz, "Dzp": b * plant.Dzp, "Dzw": plant.Dzw,
            },
            d,
        )
        notices.append(
            f"norm bound {_num(b)} absorbed into the p-channel columns "
            "(Bp, Dqp, Dzp scaled); analysis runs against a unit-norm loop"
        )
    spec = UncertaintySpec(
        kind=unc.kind,
        nq=d.nq,
        np=d.np,
        vertices=tuple(tuple(v) for v in (unc.vertices or ())),
    )
    return plant, spec, notices


def resolve_w_peak(options: OptionsDoc, nw: int) -> tuple[float, list[str]]:
    """Pick the disturbance peak bound for a reach request.

    w_inf is a per-component bound and converts to a Euclidean peak bound of
    w_inf * sqrt(nw); the conversion is recorded as a notice.
    """
    if options.w_peak is not None:
        return float(options.w_peak), []
    if options.w_inf is not None:
        w = w_peak_from_inf(options.w_inf, nw)
        return w, [
            f"w_inf {_num(options.w_inf)} with nw={nw} converts to "
            f"w_peak {_num(w)}"
        ]
    raise ParseError("reach requests need options.w_peak or options.w_inf")


def _matrix_out(value):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr)
    return np.atleast_2d(arr).tolist()


def _finite_stats(stats: dict) -> dict:
    out = {}
    for key, value in (stats or {}).items():
        if isinstance(value, str):
            out[key] = value
        elif isinstance(value, (bool, np.bool_)):
            out[key] = int(value)
        elif isinstance(value, (int, np.integer)):
            out[key] = int(value)
        elif isinstance(value, (float, np.floating)) and math.isfinite(value):
            out[key] = float(value)
    return out


def certificate_to_doc(cert, kind: str, dims) -> CertificateDocument:
    """Serialize a solved certificate (full matrices, original units)."""
    matrices = {name: _matrix_out(v) for name, v in cert.matrices.items()}
    common = dict(
        kind=kind,
        dims=DimsDoc(nx=dims.nx, np=dims.np, nq=dims.nq, nw=dims.nw, nz=dims.nz),
        rho=float(cert.rho),
        lam=None if cert.lam is None else float(cert.lam),
        nu=None if cert.nu is None else int(cert.nu),
        scale=float(cert.scale),
        matrices=matrices,
        stats=_finite_stats(cert.stats),
    )
    if isinstance(cert, GainCertificate):
        return CertificateDocument(
            type="gain", variant=cert.variant,
            gamma=float(cert.gamma), mu=float(cert.mu), **common,
        )
    if isinstance(cert, ReachCertificate):
        matrices["Q"] = _matrix_out(cert.Q)
        matrices["Qtilde"] = _matrix_out(cert.Qtilde)
        shape = cert.shape_matrix
        return CertificateDocument(
            type="reach", volume=float(cert.volume), w_peak=float(cert.w_peak),
            shape_matrix=None if shape is None else _matrix_out(shape), **common,
        )
    raise TypeError(f"not a certificate: {type(cert).__name__}")


def certificate_from_doc(doc: CertificateDocument):
    """Rebuild the in-memory certificate a document describes."""
    matrices = {
        name: (float(v) if np.isscalar(v) else np.asarray(v, dtype=float))
        for name, v in doc.matrices.items()
    }
    if doc.type == "gain":
        return GainCertificate(
            gamma=doc.gamma, mu=doc.mu, rho=doc.rho, variant=doc.variant,
            kind=doc.kind, lam=doc.lam, nu=doc.nu, scale=doc.scale,
            matrices=matrices, stats=dict(doc.stats),
        )
    shape = doc.shape_matrix
    return ReachCertificate(
        Q=np.asarray(matrices["Q"], dtype=float),
        Qtilde=np.asarray(matrices["Qtilde"], dtype=float),
        volume=doc.volume, rho=doc.rho, w_peak=doc.w_peak,
        lam=doc.lam, nu=doc.nu, scale=doc.scale,
        shape_matrix=None if shape is None else np.asarray(shape, dtype=float),
        matrices=matrices, stats=dict(doc.stats),
    )


def ellipsoid_axes(Qtilde: np.ndarray) -> list[AxisDoc]:
    """Principal semi-axes of {x : x'Qx <= 1}: lengths 1/sqrt(eig), longest first."""
    Q = 0.5 * (np.asarray(Qtilde, float) + np.asarray(Qtilde, float).T)
    eigvals, eigvecs = np.linalg.eigh(Q)
    axes = []
    for i in range(eigvals.size):  # eigh sorts ascending, so lengths descend
        lam = max(float(eigvals[i]), 0.0)
        length = math.inf if lam == 0.0 else 1.0 / math.sqrt(lam)
        axes.append(AxisDoc(length=length,
                            direction=[float(v) for v in eigvecs[:, i]]))
    return axes


# ---------------------------------------------------------------------------
# human rendering


def _num(x) -> str:
    """Format a number exactly as the machine document serializes it."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return json.dumps(int(x))
    return json.dumps(float(x))


def _line(label: str, value: str) -> str:
    return f"  {label:<22}: {value}"


def render_human(report: ReportDocument) -> str:
    """Render the machine fields of a report as plain text.

    Every number shown is produced by the same JSON formatter that writes
    the machine document, so the rendering never contains a value the
    machine document lacks.
    """
    head = {
        "gain": "peak-to-peak gain analysis",
        "reach": "reachable-set analysis",
        "check": "certificate validation",
    }[report.command]
    lines = [f"{head}: {report.status}"]
    if report.problem_name:
        lines.append(_line("problem", report.problem_name))
    g = report.gain
    if g is not None:
        lines.append(_line("certified gain gamma", _num(g.gamma)))
        lines.append(_line("disturbance budget mu", _num(g.mu)))
        lines.append(_line("decay rate rho", _num(g.rho)))
        if g.lam is not None:
            lines.append(_line("basis pole lambda", _num(g.lam)))
        if g.nu is not None:
            lines.append(_line("basis order nu", _num(g.nu)))
        lines.append(_line("variant", g.variant))
        lines.append(_line("l1-gain bracket",
                           f"[{_num(g.l1_lower)}, {_num(g.l1_upper)}]"))
    r = report.reach
    if r is not None:
        lines.append(_line("-log det(Qtilde)", _num(r.volume)))
        lines.append(_line("decay rate rho", _num(r.rho)))
        if r.lam is not None:
            lines.append(_line("basis pole lambda", _num(r.lam)))
        if r.nu is not None:
            lines.append(_line("basis order nu", _num(r.nu)))
        lines.append(_line("disturbance peak bound", _num(r.w_peak)))
        for axis in r.axes:
            direction = ", ".join(_num(v) for v in axis.direction)
            lines.append(_line("semi-axis",
                               f"length {_num(axis.length)} along "
                               f"[{direction}]"))
    if report.suites is not None:
        lines.append("  validation suites:")
        for suite in report.suites:
            verdict = "pass" if suite.passed else "FAIL"
            lines.append(
                f"    {suite.name:<18} {verdict}  "
                f"worst {_num(suite.worst)} vs bound {_num(suite.bound)}"
            )
    o = report.oracle
    if o is not None:
        lines.append("  simulation cross-checks:")
        if o.empirical_gain is not None:
            lines.append(_line("  empirical gain >=", _num(o.empirical_gain)))
        if o.soundness_max_ratio is not None:
            lines.append(_line("  worst peak ratio", _num(o.soundness_max_ratio)))
        if o.containment_max is not None:
            lines.append(_line("  worst containment", _num(o.containment_max)))
        if o.iqc_min_residual is not None:
            lines.append(_line("  min IQC residual", _num(o.iqc_min_residual)))
        if o.trials is not None:
            lines.append(_line("  trials", _num(o.trials)))
    lines.append(_line("seed", _num(report.seed)))
    if report.runtime_s is not None:
        lines.append(_line("runtime [s]", _num(report.runtime_s)))
    for notice in report.notices:
        lines.append(f"  note: {notice}")
    return "\n".join(lines) + "\n"


def finish_report(report: ReportDocument) -> ReportDocument:
    """Fill in the human rendering from the machine fields."""
    report.human = render_human(report)
    return report

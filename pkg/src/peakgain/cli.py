"""Command-line client for the analysis service.

Subcommands ``gain``, ``reach``, and ``check`` post problem documents to the
JSON service and render the returned report; by default the app runs
in-process behind an ASGI transport, and ``--server URL`` points the same
client at a remote instance instead. ``serve`` starts the service,
``fixtures`` lists or prints the bundled example problems.

Exit codes: 0 when a certificate is found (or every validation suite
passes), 2 when the problem is infeasible (or a suite fails), 1 on any
error — unreadable input, malformed documents, solver breakdowns.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx
from pydantic import ValidationError

from . import __version__
from .errors import ParseError, PeakgainError
from .schemas import ProblemDocument, ReportDocument, dumps, parse_problem
from .service import fixture_names, fixture_text

_STATUS_EXIT = {"certificate": 0, "pass": 0, "infeasible": 2, "fail": 2}


class _Parser(argparse.ArgumentParser):
    """Argument errors exit 1: code 2 is reserved for infeasible outcomes."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _grid_arg(text: str) -> list[float]:
    """Parse a grid flag of the form a:b:n into n evenly spaced points."""
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"expected a:b:n (three ':'-separated fields), got {text!r}")
    try:
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected numeric a:b and integer n, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("grid needs at least one point")
    if n == 1:
        return [a]
    step = (b - a) / (n - 1)
    return [a + step * i for i in range(n)]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="peakgain",
                     description="Certified peak-to-peak gain bounds and "
                                 "reachable-set ellipsoids for uncertain "
                                 "discrete-time linear systems.")
    parser.add_argument("--version", action="version",
                        version=f"peakgain {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def analysis_flags(p):
        p.add_argument("--variant", choices=["thm1", "thm2"],
                       help="gain condition variant: thm1 couples the peak "
                            "inequality to the decay multiplier, thm2 uses "
                            "an independent pointwise second multiplier")
        p.add_argument("--class", dest="klass",
                       choices=["ptv", "pti", "normbound"],
                       help="override the uncertainty class in the document")
        p.add_argument("--nu", type=int, help="basis filter order")
        p.add_argument("--lam", type=float,
                       help="pin the basis pole (skips the pole search)")
        p.add_argument("--rho", type=float,
                       help="pin the decay rate (skips the rate search)")
        p.add_argument("--rho-grid", type=_grid_arg, metavar="A:B:N",
                       help="decay-rate grid as start:stop:count "
                            "(default: 25 log-spaced points in [0.02, 0.98])")
        p.add_argument("--lambda-grid", type=_grid_arg, metavar="A:B:N",
                       help="basis-pole grid as start:stop:count "
                            "(default: 19 points spanning (-0.9, 0.9))")
        p.add_argument("--tol", type=float, help="solver tolerance")
        p.add_argument("--scale", type=float,
                       help="variable rescaling factor for conditioning")
        p.add_argument("--verify", action="store_true",
                       help="cross-check the certificate by simulation")
        p.add_argument("--seed", type=int, help="simulation seed (default 0)")
        p.add_argument("--trials", type=int,
                       help="Monte-Carlo trials for --verify/check suites")
        p.add_argument("--horizon", type=int,
                       help="simulation horizon for --verify/check suites")
        common_flags(p)

    def common_flags(p):
        p.add_argument("--lenient", action="store_true",
                       help="warn about unknown document keys instead of "
                            "rejecting them")
        p.add_argument("--out", metavar="FILE",
                       help="write the machine-readable report here")
        p.add_argument("--json", action="store_true",
                       help="print the machine-readable report instead of "
                            "the human rendering")
        p.add_argument("--server", metavar="URL",
                       help="send requests to a running service instead of "
                            "the in-process app")

    p_gain = sub.add_parser("gain", help="certify a peak-to-peak gain bound")
    p_gain.add_argument("problem",
                        help="problem document path, bundled fixture name, "
                             "or '-' for stdin")
    analysis_flags(p_gain)
    p_gain.set_defaults(func=cmd_gain)

    p_reach = sub.add_parser("reach",
                             help="certify a reachable-set ellipsoid")
    p_reach.add_argument("problem",
                         help="problem document path, bundled fixture name, "
                              "or '-' for stdin")
    p_reach.add_argument("--w-peak", type=float,
                         help="disturbance bound: peak Euclidean norm")
    p_reach.add_argument("--w-inf", type=float,
                         help="disturbance bound: per-component amplitude")
    analysis_flags(p_reach)
    p_reach.set_defaults(func=cmd_reach)

    p_check = sub.add_parser("check",
                             help="validate a certificate against a problem")
    p_check.add_argument("certificate", help="certificate document path")
    p_check.add_argument("problem",
                         help="problem document path or bundled fixture name")
    p_check.add_argument("--seed", type=int, help="simulation seed (default 0)")
    p_check.add_argument("--trials", type=int,
                         help="Monte-Carlo trials per suite")
    p_check.add_argument("--horizon", type=int, help="simulation horizon")
    common_flags(p_check)
    p_check.set_defaults(func=cmd_check)

    p_serve = sub.add_parser("serve", help="run the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.set_defaults(func=cmd_serve)

    p_fix = sub.add_parser("fixtures",
                           help="list bundled example problems, or print one")
    p_fix.add_argument("name", nargs="?",
                       help="fixture to print (omit to list)")
    p_fix.set_defaults(func=cmd_fixtures)
    return parser


# ---------------------------------------------------------------------------
# document plumbing


def _load_problem_text(ref: str) -> tuple[str, str]:
    if ref == "-":
        return sys.stdin.read(), "<stdin>"
    path = Path(ref)
    if path.exists():
        return path.read_text(), str(path)
    try:
        return fixture_text(ref), f"fixture:{ref}"
    except (FileNotFoundError, ParseError):
        raise PeakgainError(
            f"no such file or bundled fixture: {ref!r} "
            f"(bundled: {', '.join(fixture_names())})") from None


def _load_problem(args) -> ProblemDocument:
    text, source = _load_problem_text(args.problem)
    doc, warnings = parse_problem(text, strict=not args.lenient, source=source)
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return doc


def _apply_overrides(doc: ProblemDocument, args) -> None:
    """Fold command-line flags into the parsed problem document."""
    o = doc.options
    if args.klass is not None:
        doc.uncertainty.kind = args.klass
    if args.variant is not None:
        o.variant = args.variant
    for name in ("nu", "lam", "rho", "tol", "scale", "seed", "trials",
                 "horizon"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(o, name, value)
    if args.rho_grid is not None:
        o.rho_grid = args.rho_grid
    if args.lambda_grid is not None:
        o.lambda_grid = args.lambda_grid
    if getattr(args, "w_peak", None) is not None:
        o.w_inf = None
        o.w_peak = args.w_peak
    if getattr(args, "w_inf", None) is not None:
        o.w_peak = None
        o.w_inf = args.w_inf
    if args.verify:
        o.verify = True


# ---------------------------------------------------------------------------
# transport


async def _request_async(method: str, url: str, payload: str | None,
                         server: str | None) -> httpx.Response:
    if server is None:
        from .service import app

        transport = httpx.ASGITransport(app=app)
        async with httpx.AsyncClient(transport=transport, timeout=None,
                                     base_url="http://peakgain.internal") as c:
            return await c.request(method, url, content=payload)
    async with httpx.AsyncClient(base_url=server, timeout=600.0) as c:
        return await c.request(method, url, content=payload)


def _request(method: str, url: str, payload: str | None = None,
             server: str | None = None) -> httpx.Response:
    return asyncio.run(_request_async(method, url, payload, server))


def _emit(resp: httpx.Response, args) -> int:
    if resp.status_code != 200:
        try:
            err = resp.json()["error"]
            print(f"error [{err['type']}]: {err['message']}", file=sys.stderr)
        except (KeyError, TypeError, ValueError):
            print(f"error: HTTP {resp.status_code}: {resp.text}",
                  file=sys.stderr)
        return 1
    report = ReportDocument.model_validate(resp.json())
    text = dumps(report)
    if args.out:
        Path(args.out).write_text(text + "\n")
    if args.json:
        print(text)
    else:
        print(report.human, end="")
    return _STATUS_EXIT.get(report.status, 1)


# ---------------------------------------------------------------------------
# commands


def cmd_gain(args) -> int:
    doc = _load_problem(args)
    _apply_overrides(doc, args)
    return _emit(_request("POST", "/gain", dumps(doc), args.server), args)


def cmd_reach(args) -> int:
    doc = _load_problem(args)
    _apply_overrides(doc, args)
    return _emit(_request("POST", "/reach", dumps(doc), args.server), args)


def cmd_check(args) -> int:
    cert_path = Path(args.certificate)
    if not cert_path.exists():
        raise PeakgainError(f"no such certificate file: {args.certificate!r}")
    cert_data = json.loads(cert_path.read_text())
    if isinstance(cert_data, dict) and cert_data.get("format") == "peakgain-report":
        # a saved report carries its certificate; accept it directly
        cert_data = cert_data.get("certificate")
        if cert_data is None:
            raise PeakgainError("this report contains no certificate")
    text, source = _load_problem_text(args.problem)
    doc, warnings = parse_problem(text, strict=not args.lenient, source=source)
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    for name in ("seed", "trials", "horizon"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(doc.options, name, value)
    body = json.dumps({"problem": doc.model_dump(mode="json"),
                       "certificate": cert_data})
    query = "?lenient=true" if args.lenient else ""
    return _emit(_request("POST", f"/check{query}", body, args.server), args)


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("peakgain.service:app", host=args.host, port=args.port)
    return 0


def cmd_fixtures(args) -> int:
    if args.name is None:
        for name in fixture_names():
            print(name)
        return 0
    try:
        print(fixture_text(args.name), end="")
    except FileNotFoundError:
        raise PeakgainError(
            f"no bundled fixture named {args.name!r}") from None
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error [ParseError]: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "<document>"
        print(f"error [ValidationError]: at {where}: {first['msg']}",
              file=sys.stderr)
        return 1
    except PeakgainError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1
    except httpx.HTTPError as exc:
        print(f"error [transport]: {exc}", file=sys.stderr)
        return 1
    except json.JSONDecodeError as exc:
        print(f"error [ParseError]: invalid JSON at line {exc.lineno}, "
              f"column {exc.colno}: {exc.msg}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

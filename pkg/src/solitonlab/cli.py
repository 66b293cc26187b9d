"""Command-line entry point: ``solitonlab <command> [options]``.

Every command writes its artifacts plus ``config.json`` (the resolved
options, reusable through ``--config``) and ``manifest.json`` (config echo and
SHA-256 of each artifact) into ``--out``.
"""

from __future__ import annotations

import argparse
import ast
import hashlib
import json
import logging
import math
import operator
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import SolitonLabError

log = logging.getLogger("solitonlab")

_NAMES = {"pi": math.pi, "sqrt2": math.sqrt(2.0), "e": math.e}
_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow, ast.USub: operator.neg,
        ast.UAdd: operator.pos}


def parse_number(text) -> float:
    """Evaluate ``pi/2``, ``sqrt2*pi``, ``3.14159`` and similar arithmetic."""
    if isinstance(text, (int, float)):
        return float(text)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id == "sqrt" and len(node.args) == 1:
            return math.sqrt(ev(node.args[0]))
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {text!r}")

    try:
        return ev(ast.parse(str(text).strip(), mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError) as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc


# ---------------------------------------------------------------------------
# artifacts


class Artifacts:
    def __init__(self, out, config: dict):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out / name
        self.files.append(p)
        return p

    def field(self, name: str, u) -> None:
        """Field CSV plus its grid sidecar."""
        from .grid import write_field_csv

        p = self.path(name)
        write_field_csv(u, p)
        self.files.append(Path(str(p) + ".json"))

    def json(self, name: str, obj) -> None:
        with open(self.path(name), "w") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def finish(self) -> None:
        with open(self.out / "config.json", "w") as fh:
            json.dump(_jsonable(self.config), fh, indent=2, sort_keys=True)
            fh.write("\n")
        hashes = {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
                  for p in self.files if p.exists()}
        manifest = {"config": self.config, "artifacts": hashes}
        with open(self.out / "manifest.json", "w") as fh:
            json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _config_of(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "config")}


# ---------------------------------------------------------------------------
# commands


def _solver_config(args):
    from .pde import SolverConfig

    kw = {}
    if args.caps:
        kw["cap_schedule"] = tuple(args.caps)
    if args.tol:
        kw["newton_tol"] = args.tol
    return SolverConfig(**kw)


def _kind(args, w):
    from .surfaces import SurfaceKind

    return SurfaceKind(args.surface, w, x_hat=args.x_hat, alpha=args.alpha, L=args.L,
                       a=args.a, b=args.b)


def _solve_one(args, w, out):
    from .grid import DomainSpec
    from .pde import translator_residual
    from .surfaces import construct_piece, graph_mesh, grim_reaper_field, schwarz_reflect

    art = Artifacts(out, {**_config_of(args), "w": [w], "out": str(out)})
    h = args.h or w / 32
    if args.surface in ("grim-reaper", "grim_reaper"):
        x0 = -12.0 if args.xmin is None else args.xmin
        x1 = 12.0 if args.xmax is None else args.xmax
        d = DomainSpec("strip", 0.75 * w, x0, x1, h, y_min=w / 8)
        u = grim_reaper_field(w, d)
        r = translator_residual(u)
        report = {"exact": True, "h": h, "residual_sup": float(np.max(np.abs(r.values)))}
        art.field("u.csv", u)
        art.json("report.json", report)
        if args.obj:
            graph_mesh(u).to_obj(art.path("mesh.obj"))
        art.finish()
        return 0
    kind = _kind(args, w)
    piece = construct_piece(kind, h, _solver_config(args), x_min=args.xmin, x_max=args.xmax,
                            strict=False)
    art.field("u.csv", piece.field)
    rep = piece.report.to_dict()
    rep["surface"] = kind.to_dict()
    if piece.calibration is not None:
        rep["calibration"] = piece.calibration.to_dict()
    art.json("report.json", rep)
    if args.obj and piece.report.converged:
        mesh = schwarz_reflect(piece) if kind.name in ("pitchfork", "helicoid", "trident") \
            else graph_mesh(piece.field)
        mesh.to_obj(art.path("mesh.obj"))
    art.finish()
    if not piece.report.converged:
        log.error("solve did not converge: %s", piece.report.message)
        return 1
    return 0


def _solve_job(payload):
    args, w, out = payload
    try:
        return _solve_one(args, w, out)
    except SolitonLabError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code


def cmd_solve(args) -> int:
    widths = args.w
    if len(widths) == 1:
        return _solve_one(args, widths[0], args.out)
    jobs = [(args, w, Path(args.out) / f"w_{k}") for k, w in enumerate(widths)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            codes = list(ex.map(_solve_job, jobs))
    else:
        codes = [_solve_job(j) for j in jobs]
    return max(codes)


def cmd_check(args) -> int:
    from . import geometry as geo
    from .grid import read_field_csv

    art = Artifacts(args.out, _config_of(args))
    what = args.what
    if what == "delta":
        art.json("delta.json", {"delta": geo.delta_bound((args.axis_x, args.axis_y),
                                                         args.R, args.w)})
        art.finish()
        return 0
    if args.field is None:
        raise argparse.ArgumentTypeError("--field is required for this check")
    u = read_field_csv(args.field)
    if what == "gauss":
        nf = geo.gauss_map(u)
        inj = geo.gauss_injectivity_sample(u, args.samples, args.seed)
        if nf.degenerate:
            log.warning("degenerate Gauss map: every normal equals e3")
        out = {"degenerate": nf.degenerate, "upper_hemisphere": nf.upper_hemisphere,
               "e3_points": len(nf.e3_nodes), "injectivity": inj.to_dict()}
        art.json("gauss.json", out)
    elif what == "slope":
        sb = geo.slope_bound_scan(u, args.direction, eps=args.eps)
        art.json("slope.json", sb.to_dict())
    elif what == "theta":
        p_a = (args.axis_x, args.axis_y)
        region = None
        if args.R is not None:
            sign = args.sign if args.sign else (1 if u.grid.s[-1] - p_a[0] > p_a[0] - u.grid.s[0]
                                                else -1)
            region = geo.omega_region(u, p_a, args.R, sign)
        rep = geo.theta_graph_check(u, p_a, region)
        art.json("theta.json", rep.to_dict())
        geo.write_points_csv(rep.critical, art.path("critical_curve.csv"))
        print("PASS" if rep.passed else "FAIL")
    art.finish()
    return 0


def cmd_diff(args) -> int:
    from .grid import read_field_csv
    from .levelsets import (DifferenceSpec, analyse_difference, arc_count_report,
                            classify_arcs, extract_zero_arcs, find_critical_points, fixture)

    art = Artifacts(args.out, _config_of(args))
    if args.fixture:
        v = fixture(args.fixture, h=args.h or 0.02)
        cps = find_critical_points(v)
        arcs = classify_arcs(extract_zero_arcs(v, cps))
        rep = arc_count_report(arcs)
    else:
        if not (args.u1 and args.u2):
            raise argparse.ArgumentTypeError("--u1 and --u2 (or --fixture) are required")
        spec = DifferenceSpec(read_field_csv(args.u1), read_field_csv(args.u2),
                              tuple(args.xi), x_hat=args.x_hat)
        res = analyse_difference(spec)
        cps, arcs, rep = res["critical_points"], res["arcs"], res["report"]
    art.json("critical_points.json", [c.to_dict() for c in cps])
    arcs.write_csv(art.path("arcs.csv"))
    art.json("report.json", {**rep.to_dict(), "arcs": len(arcs.arcs),
                             "types": [a.type for a in arcs.arcs]})
    art.finish()
    print(rep.verdict)
    return 0


def cmd_probe(args) -> int:
    from .surfaces import uniqueness_probe

    if len(args.seeds) * len(args.hs) < 2:
        raise argparse.ArgumentTypeError("a probe needs at least two runs")
    w = args.w[0]
    art = Artifacts(args.out, _config_of(args))
    cfg = _solver_config(args)
    B = cfg.cap_schedule[-1]
    rep = uniqueness_probe(_kind(args, w), seeds=tuple(args.seeds),
                           discretizations=[(h, B) for h in args.hs], config=cfg)
    art.json("probe.json", rep.to_dict())
    art.finish()
    return 1 if rep.failures else 0


def cmd_limits(args) -> int:
    from .surfaces import rescaled_helicoid_limit_check

    art = Artifacts(args.out, _config_of(args))
    rep = rescaled_helicoid_limit_check(args.widths, n_per_width=args.n)
    art.json("limits.json", rep.to_dict())
    art.finish()
    print("decreasing" if rep.decreasing else "not decreasing")
    return 0


def cmd_fixtures(args) -> int:
    from .levelsets import (FIXTURES, arc_count_report, classify_arcs, extract_zero_arcs,
                            find_critical_points, fixture)

    art = Artifacts(args.out, _config_of(args))
    summary = {}
    for name in FIXTURES:
        v = fixture(name, h=args.h)
        art.field(f"{name}.csv", v)
        cps = find_critical_points(v)
        arcs = classify_arcs(extract_zero_arcs(v, cps))
        arcs.write_csv(art.path(f"{name}_arcs.csv"))
        summary[name] = arc_count_report(arcs).to_dict()
    art.json("fixtures.json", summary)
    art.finish()
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_surface(p, multi_w=False):
    p.add_argument("--surface", default="pitchfork",
                   help="pitchfork, helicoid, scherk, scherkenoid, trident or grim-reaper")
    p.add_argument("--w", type=parse_number, nargs="+" if multi_w else 1, required=True,
                   help="strip width; accepts pi, pi/2, sqrt2*pi")
    p.add_argument("--x-hat", type=parse_number, default=None)
    p.add_argument("--alpha", type=parse_number, default=None)
    p.add_argument("--L", type=parse_number, default=None)
    p.add_argument("--a", type=parse_number, default=None)
    p.add_argument("--b", type=parse_number, default=None)
    p.add_argument("--caps", type=parse_number, nargs="+", default=None)
    p.add_argument("--tol", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="solitonlab", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="JSON file of option defaults (CLI flags override)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a capped Dirichlet problem")
    _add_surface(p, multi_w=True)
    p.add_argument("--h", type=parse_number, default=None)
    p.add_argument("--xmin", type=parse_number, default=None)
    p.add_argument("--xmax", type=parse_number, default=None)
    p.add_argument("--obj", action="store_true", help="also export an OBJ mesh")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check", help="geometry checks on a field CSV")
    p.add_argument("what", choices=["gauss", "theta", "slope", "delta"])
    p.add_argument("--field")
    p.add_argument("--axis-x", type=parse_number, default=0.0)
    p.add_argument("--axis-y", type=parse_number, default=0.0)
    p.add_argument("--R", type=parse_number, default=None)
    p.add_argument("--sign", type=int, choices=[-1, 1], default=None)
    p.add_argument("--w", type=parse_number, default=math.pi)
    p.add_argument("--direction", type=int, choices=[-1, 1], default=-1)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("diff", help="difference field analysis")
    p.add_argument("--u1")
    p.add_argument("--u2")
    p.add_argument("--xi", type=parse_number, nargs=2, default=[0.0, 0.0])
    p.add_argument("--x-hat", type=parse_number, default=None)
    p.add_argument("--fixture", default=None)
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("probe", help="uniqueness probe modulo vertical translation")
    _add_surface(p)
    p.add_argument("--seeds", nargs="+", default=["zero", "harmonic"])
    p.add_argument("--hs", type=parse_number, nargs="+", required=True)
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("limits", help="rescaled helicoid limit check")
    p.add_argument("--widths", type=parse_number, nargs="+",
                   default=[math.pi / 2, math.pi / 4, math.pi / 8])
    p.add_argument("--n", type=int, default=32, help="grid points per width")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_limits)

    p = sub.add_parser("levelsets", help="level-set utilities")
    lsub = p.add_subparsers(dest="levelsets_command", required=True)
    q = lsub.add_parser("fixtures", help="write the analytic fixtures and their arcs")
    q.add_argument("--h", type=float, default=0.02)
    q.add_argument("--out", default="out")
    q.set_defaults(func=cmd_fixtures)
    return ap


def _load_config(argv):
    """Defaults from ``--config``; explicit flags on the command line win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return {}
    with open(known.config) as fh:
        return json.load(fh)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    defaults = _load_config(argv)
    commands = parser._subparsers._group_actions[0].choices
    if defaults.get("command") and not any(a in commands for a in argv):
        # ``--config run/config.json`` alone repeats the recorded command
        argv.append(defaults["command"])
        if defaults.get("levelsets_command"):
            argv.append(defaults["levelsets_command"])
    if defaults:
        # defaults go to every subcommand; the one named on the command line runs
        for action in parser._subparsers._group_actions:
            for sp in action.choices.values():
                sp.set_defaults(**{k: v for k, v in defaults.items() if k != "command"})
                for a in sp._actions:
                    if a.dest in defaults:
                        a.required = False
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        parser.error(str(exc))
    except SolitonLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``dioph <command> [options]``.

Every run writes its outputs atomically and a manifest holding the resolved
configuration and the SHA-256 of each output; ``dioph replay <manifest>``
re-executes the run and compares the bytes. Exit codes: 0 success, 2 bad input
or unsatisfiable request, 3 a proven inequality failed on computed data.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from dioph import __version__
from dioph.core import DEFAULT_PRECISION, MAX_PRECISION, MIN_PRECISION, parse_point, parse_shift
from dioph.errors import DescriptorError, DiophError, InvariantViolation, UsageError
from dioph.plotdata import atomic_write, plot_svg, plot_text

EXIT_OK, EXIT_USAGE, EXIT_INVARIANT = 0, 2, 3
COMMANDS = ("exponent", "transfer", "cover", "measure", "slice")
_LOCAL_KEYS = {"out_dir", "manifest", "config", "command", "inject_fault"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return ""
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue().encode()


def json_bytes(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


# ---------------------------------------------------------------------------
# Commands: each maps a resolved config to {relative output name: bytes}.


def run_exponent(cfg: dict) -> dict:
    from dioph.exponents import ExponentKind, estimate

    point = parse_point(cfg["point"])
    kind = {
        ("sim", False): ExponentKind.SimOrdinary,
        ("sim", True): ExponentKind.SimUniform,
        ("dual", False): ExponentKind.DualOrdinary,
        ("dual", True): ExponentKind.DualUniform,
    }[(cfg["kind"], bool(cfg["uniform"]))]
    theta = parse_shift(cfg["shift"], 1 if kind.is_dual else point.dimension)
    est = estimate(kind, point, theta, cfg["qmax"], precision_bits=cfg["precision"])
    header = ["kind", "n", "qmax", "running_sup", "tail_sup", "tail_inf_uniform", "rational_flag", "n_records"]
    row = [kind.value, est.dimension, est.height_max, est.running_sup, est.tail_sup, est.tail_inf_uniform,
           est.rational_flag, len(est.records)]
    out = {cfg["out"]: csv_bytes(header, [row])}
    if cfg.get("records"):
        rows = []
        for r in est.records:
            q = r.q if isinstance(r.q, int) else ";".join(str(v) for v in r.q)
            p = r.p if isinstance(r.p, int) else ";".join(str(v) for v in r.p)
            rows.append([q, p, float(r.error), r.local_exponent])
        out[cfg["records"]] = csv_bytes(["q", "p", "error", "local_exponent"], rows)
    return out


def run_transfer(cfg: dict) -> dict:
    from dioph.transference import Verdict, transference_report

    point = parse_point(cfg["point"])
    theta = parse_shift(cfg["shift"], point.dimension)
    report = transference_report(point, theta, cfg["qmax"], cfg["slack"])
    out = {cfg["out"]: json_bytes(report.as_dict())}
    if report.verdict is Verdict.HardViolation:
        failed = [c.name for c in report.checks if c.exact and not c.satisfied]
        raise InvariantViolation(f"exact check failed: {', '.join(failed)}") from _Partial(out)
    return out


class _Partial(Exception):
    """Carries outputs that should still be written when a run ends in an invariant failure."""

    def __init__(self, outputs):
        super().__init__("partial outputs")
        self.outputs = outputs


def _summary_name(out: str, suffix: str) -> str:
    p = Path(out)
    return str(p.with_name(p.stem + suffix + p.suffix))


def run_cover(cfg: dict) -> dict:
    from dioph import covering
    from dioph.curves import parse_curve

    curve = parse_curve(cfg["curve"])
    theta = parse_shift(cfg["shift"], curve.dimension)
    eps = cfg["eps"]
    if cfg["tmax"] < cfg["tmin"]:
        raise UsageError("tmax must be >= tmin")
    ts = list(range(cfg["tmin"], cfg["tmax"] + 1))
    families = {t: covering.enumerate_family(curve, theta, eps, t, cfg["signs"]) for t in ts}
    decay = covering.disjoint_sum_decay(curve, theta, eps, ts, families=families)
    ball_rows, dich_rows = [], []
    failures = []
    for t in ts:
        fam = families[t]
        audit = covering.lemma1_audit(fam)
        if audit.violations:
            failures.append((t, audit))
        for k in range(len(fam)):
            ball_rows.append([t, int(fam.q[k]), ";".join(str(int(v)) for v in fam.p[k]), fam.tag(k),
                              float(fam.measure[k]), float(audit.upper[k]), float(audit.lower[k])])
        for r in covering.nondisjoint_dichotomy(fam):
            dich_rows.append([r.t, r.q, ";".join(map(str, r.p)), r.partner_q, ";".join(map(str, r.partner_p)),
                              r.q_diff, ";".join(map(str, r.p_diff)), r.combination, r.combination_bound,
                              r.combination_ok, r.branch or ""])
    out = {
        cfg["out"]: csv_bytes(
            ["t", "q", "p", "tag", "trace_measure", "lemma1_upper", "lemma1_lower_or_blank"], ball_rows
        ),
        cfg.get("summary") or _summary_name(cfg["out"], "_summary"): csv_bytes(
            ["t", "S", "bound", "n_disjoint", "n_nondisjoint"],
            [[r.t, r.total, r.bound, r.n_disjoint, r.n_nondisjoint] for r in decay.rows]
            + [["slope", decay.slope, decay.constant, "", ""]],
        ),
    }
    if cfg.get("dichotomy"):
        out[cfg["dichotomy"]] = csv_bytes(
            ["t", "q", "p", "partner_q", "partner_p", "q_diff", "p_diff", "combination", "combination_bound",
             "combination_ok", "branch"],
            dich_rows,
        )
    if cfg.get("plot"):
        series = [(r.t, r.total) for r in decay.rows]
        out[cfg["plot"]] = plot_text(series, "t", "S")
        if any(y > 0 for _, y in series):
            out[str(Path(cfg["plot"]).with_suffix(".svg"))] = plot_svg(series, log2_y=True, title="disjoint sum")
    if failures:
        t, audit = failures[0]
        k, kind, m, bnd = audit.violations[0]
        raise covering.LemmaAuditError(
            f"trace-measure bound violated at t={t}: ball {k}, {kind} bound {bnd:.6e}, measure {m:.6e}"
        ) from _Partial(out)
    return out


def run_measure(cfg: dict) -> dict:
    from dioph.curves import parse_curve
    from dioph.measure import TruncatedLimsupConfig, tail_fraction_curve

    curve = parse_curve(cfg["curve"])
    theta = parse_shift(cfg["shift"], curve.dimension)
    try:
        grid = [int(v) for v in str(cfg["sgrid"]).split(",") if v.strip()]
    except ValueError:
        raise DescriptorError("malformed s grid", str(cfg["sgrid"])) from None
    if not grid:
        raise DescriptorError("empty s grid", str(cfg["sgrid"]))
    mc = TruncatedLimsupConfig(curve, theta, cfg["eps"], min(grid), cfg["qmax"], cfg["samples"], cfg["seed"],
                               cfg["signs"])
    res = tail_fraction_curve(mc, grid)
    out = {
        cfg["out"]: csv_bytes(
            ["s", "qmax", "fraction", "stderr_estimate", "n_members"],
            [[r.s, r.qmax, r.fraction, r.stderr, r.n_members] for r in res.rows],
        )
    }
    if cfg.get("plot"):
        series = [(r.s, r.fraction) for r in res.rows]
        out[cfg["plot"]] = plot_text(series, "s", "fraction")
        out[str(Path(cfg["plot"]).with_suffix(".svg"))] = plot_svg(series, title="member fraction")
    return out


def run_slice(cfg: dict) -> dict:
    from dioph.curves import arc_measure, parse_surface, slice_surface

    surface = parse_surface(cfg["surface"])
    res = slice_surface(surface, cfg["count"])
    rows = [[float(y0), True, arc_measure(c)] for y0, c in res.accepted]
    rows += [[float(y0), False, None] for y0 in res.rejected]
    rows.sort(key=lambda r: r[0])
    area = surface.area()
    fubini = res.fubini_sum() if res.accepted else None
    summary = [["spacing", float(res.spacing)], ["accepted", len(res.accepted)], ["rejected", len(res.rejected)],
               ["fubini_sum", fubini], ["area", area],
               ["relative_gap", None if fubini is None else abs(fubini - area) / area]]
    return {
        cfg["out"]: csv_bytes(["y", "accepted", "arc_measure"], rows),
        cfg.get("summary") or _summary_name(cfg["out"], "_summary"): csv_bytes(["quantity", "value"], summary),
    }


RUNNERS = {
    "exponent": run_exponent,
    "transfer": run_transfer,
    "cover": run_cover,
    "measure": run_measure,
    "slice": run_slice,
}


# ---------------------------------------------------------------------------
# Argument parsing and config files


def _precision(text: str) -> int:
    v = int(text)
    if not MIN_PRECISION <= v <= MAX_PRECISION:
        raise argparse.ArgumentTypeError(f"precision must lie in [{MIN_PRECISION}, {MAX_PRECISION}]")
    return v


def _add_globals(p, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--precision", type=_precision, default=d(DEFAULT_PRECISION), help="working precision in bits")
    p.add_argument("--seed", type=int, default=d(0), help="random seed (64-bit)")
    p.add_argument("--out-dir", default=d("."), help="directory for outputs")
    p.add_argument("--manifest", default=d(None), help="manifest path (default <out-dir>/<command>.manifest.json)")
    p.add_argument("--config", default=d(None), help="flat key = value file; flags win")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dioph", description="Diophantine approximation experiments on curves.")
    parser.add_argument("--version", action="version", version=f"dioph {__version__}")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("exponent", help="finite-height exponent estimate")
    p.add_argument("--kind", choices=("sim", "dual"), default="sim")
    p.add_argument("--uniform", action="store_true")
    p.add_argument("--point", required=True)
    p.add_argument("--shift", default="0")
    p.add_argument("--qmax", type=int, default=10000)
    p.add_argument("--out", default="exponent.csv")
    p.add_argument("--records", default=None, help="optional CSV of record approximations")
    _add_globals(p, suppress=True)

    p = sub.add_parser("transfer", help="transference inequality audit")
    p.add_argument("--point", required=True)
    p.add_argument("--shift", default="0")
    p.add_argument("--qmax", type=int, default=200)
    p.add_argument("--slack", type=float, default=0.15)
    p.add_argument("--out", default="transfer.json")
    _add_globals(p, suppress=True)

    p = sub.add_parser("cover", help="dyadic ball families on a curve")
    p.add_argument("--curve", required=True)
    p.add_argument("--shift", default="0")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--tmin", type=int, required=True)
    p.add_argument("--tmax", type=int, required=True)
    p.add_argument("--signs", choices=("positive", "both"), default="positive")
    p.add_argument("--out", default="cover.csv")
    p.add_argument("--summary", default=None)
    p.add_argument("--dichotomy", default=None)
    p.add_argument("--plot", default=None)
    p.add_argument("--inject-fault", default=None, help=argparse.SUPPRESS)
    _add_globals(p, suppress=True)

    p = sub.add_parser("measure", help="Monte Carlo member fractions of truncated limsup sets")
    p.add_argument("--curve", required=True)
    p.add_argument("--shift", default="0")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--qmax", type=int, required=True)
    p.add_argument("--sgrid", default="1,10,100,1000")
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--signs", choices=("positive", "both"), default="positive")
    p.add_argument("--out", default="measure.csv")
    p.add_argument("--plot", default=None)
    _add_globals(p, suppress=True)

    p = sub.add_parser("slice", help="slice a surface patch into curves")
    p.add_argument("--surface", required=True)
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--out", default="slice.csv")
    p.add_argument("--summary", default=None)
    _add_globals(p, suppress=True)

    p = sub.add_parser("replay", help="re-run from a manifest and compare outputs")
    p.add_argument("manifest_path")
    p.add_argument("--out-dir", dest="replay_out_dir", default=None)
    return parser


def read_config(path) -> dict:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DescriptorError(f"config line {lineno} is not 'key = value'", raw.strip())
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _subparser(parser, command):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def _apply_config(parser, sub, values: dict):
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help",)}
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise DescriptorError("unknown config key", unknown[0])
    main_defaults, sub_defaults = {}, {}
    main_dests = {a.dest for a in parser._actions}
    for key, raw in values.items():
        action = actions[key]
        if isinstance(action, argparse._StoreTrueAction):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise DescriptorError(f"config key {key} expects a boolean", raw)
            val = raw.lower() in ("true", "1", "yes")
        else:
            try:
                val = action.type(raw) if action.type else raw
            except (ValueError, argparse.ArgumentTypeError):
                raise DescriptorError(f"bad value for config key {key}", raw) from None
            if action.choices and val not in action.choices:
                raise DescriptorError(f"bad value for config key {key}", raw)
        action.required = False
        (main_defaults if key in main_dests else sub_defaults)[key] = val
    parser.set_defaults(**main_defaults)
    sub.set_defaults(**sub_defaults)


def prescan(argv) -> tuple[str | None, str | None]:
    """The command name and ``--config`` path, read before full validation."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, rest = pre.parse_known_args(argv)
    command = next((a for a in rest if a in COMMANDS or a == "replay"), None)
    return command, known.config


def parse(argv) -> argparse.Namespace:
    command, config = prescan(argv)
    parser = build_parser()
    if command in COMMANDS and config:
        _apply_config(parser, _subparser(parser, command), read_config(config))
    ns = parser.parse_args(argv)
    if ns.command is None:
        raise UsageError(f"a command is required: one of {', '.join(COMMANDS + ('replay',))}")
    return ns


# ---------------------------------------------------------------------------
# Execution


def resolved_config(ns: argparse.Namespace) -> dict:
    cfg = {k: v for k, v in vars(ns).items() if k not in _LOCAL_KEYS and not k.startswith("replay")}
    cfg["command"] = ns.command
    return cfg


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_outputs(out_dir: Path, outputs: dict) -> dict:
    hashes = {}
    for name, data in sorted(outputs.items()):
        atomic_write(out_dir / name, data)
        hashes[name] = _sha256(data)
    return hashes


def manifest_bytes(cfg: dict, hashes: dict) -> bytes:
    return json_bytes({"tool": "dioph", "version": __version__, "config": cfg, "outputs": hashes})


def execute(cfg: dict, out_dir: Path, fault: str | None = None):
    """Run one command; returns the output hashes. Partial outputs are kept on invariant failures."""
    from dioph import covering

    covering.set_fault(fault)
    try:
        outputs = RUNNERS[cfg["command"]](cfg)
    except InvariantViolation as exc:
        if isinstance(exc.__cause__, _Partial):
            _write_outputs(out_dir, exc.__cause__.outputs)
        raise
    finally:
        covering.set_fault(None)
    return _write_outputs(out_dir, outputs)


def replay(manifest_path, out_dir=None) -> dict:
    """Re-execute a manifest; returns ``{output: (expected, actual)}`` for mismatches."""
    try:
        manifest = json.loads(Path(manifest_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read manifest {manifest_path}: {exc}") from None
    cfg = manifest["config"]
    if cfg.get("command") not in RUNNERS:
        raise DescriptorError("manifest names an unknown command", str(cfg.get("command")))
    target = Path(out_dir) if out_dir else Path(manifest_path).parent
    hashes = execute(cfg, target)
    expected = manifest["outputs"]
    return {k: (expected.get(k), hashes.get(k)) for k in sorted(set(expected) | set(hashes))
            if expected.get(k) != hashes.get(k)}


def _error_record(exc: BaseException, code: int, command) -> str:
    rec = {"error": type(exc).__name__, "message": str(exc), "exit_code": code, "command": command}
    token = getattr(exc, "token", None)
    if token is not None:
        rec["token"] = token
    return json.dumps(rec, sort_keys=True)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    command = prescan(argv)[0] if argv else None
    try:
        ns = parse(argv)
        command = ns.command
        if command == "replay":
            diffs = replay(ns.manifest_path, ns.replay_out_dir)
            if diffs:
                for name, (want, got) in diffs.items():
                    print(f"MISMATCH {name}: expected {want}, got {got}")
                raise InvariantViolation(f"{len(diffs)} output(s) differ from the manifest")
            print("replay: all outputs identical")
            return EXIT_OK
        cfg = resolved_config(ns)
        out_dir = Path(ns.out_dir)
        hashes = execute(cfg, out_dir, getattr(ns, "inject_fault", None))
        manifest = Path(ns.manifest) if ns.manifest else out_dir / f"{command}.manifest.json"
        atomic_write(manifest, manifest_bytes(cfg, hashes))
        for name in sorted(hashes):
            print(out_dir / name)
        return EXIT_OK
    except InvariantViolation as exc:
        print(_error_record(exc, EXIT_INVARIANT, command), file=sys.stderr)
        return EXIT_INVARIANT
    except UsageError as exc:
        print(_error_record(exc, EXIT_USAGE, command), file=sys.stderr)
        return EXIT_USAGE
    except DiophError as exc:
        print(_error_record(exc, EXIT_USAGE, command), file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(_error_record(exc, EXIT_USAGE, command), file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

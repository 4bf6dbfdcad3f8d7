"""``minsurf`` command line.

Exit codes: 0 success, 1 usage error, 2 data or validation error, 3 I/O error.
Data goes to stdout, diagnostics to stderr; ``MINSURF_LOG`` sets the log level.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .codec import ParseError, convert_coords, format_real, from_json, parse_text, serialize_text, to_json
from .decoder import DecodeParams, decode
from .mesh import MeshError, check_mesh, export_obj, export_ply
from .metrics import FIELDS, BatchError, beta_for_stage, evaluate_batch, evaluate_pair, s2ms_loss
from .skeleton import CoordSystem, SkeletonError, random_skeleton, validate

log = logging.getLogger("minsurf")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_IO = 0, 1, 2, 3
_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
           "info": logging.INFO, "debug": logging.DEBUG}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _read(path) -> str:
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _looks_json(path, text: str) -> bool:
    return str(path).endswith(".json") or text.lstrip().startswith("{")


def load_skeleton(path):
    text = _read(path)
    return from_json(text) if _looks_json(path, text) else parse_text(text)


def _as_description(path) -> str:
    """Description text of a file; JSON is converted, anything unreadable is passed through."""
    text = _read(path)
    if _looks_json(path, text):
        try:
            return serialize_text(from_json(text))
        except (ParseError, SkeletonError):
            return text
    return text


def _dump(obj) -> str:
    # json writes floats with repr, which is the shortest round-trip form
    return json.dumps(obj, indent=2, sort_keys=False)


def _write_out(path, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# ---------------------------------------------------------------- commands

def cmd_validate(args) -> int:
    try:
        skel = load_skeleton(args.path)
    except (ParseError, SkeletonError) as exc:
        rule = getattr(exc, "rule", "syntax")
        item = {"rule": rule, "message": str(exc), "indices": list(getattr(exc, "indices", ()))}
        if getattr(exc, "line", 0):
            item["line"] = exc.line
        print(_dump({"ok": False, "violations": [item]}))
        return EXIT_DATA
    report = validate(skel)
    print(_dump(report.to_dict()))
    return EXIT_OK if report.ok else EXIT_DATA


def _report_csv(reports: list[tuple[str, object]]) -> str:
    lines = [",".join(["sample"] + FIELDS)]
    for name, r in reports:
        cells = [("true" if v else "false") if isinstance(v, bool) else format_real(v)
                 for v in (getattr(r, f) for f in FIELDS)]
        lines.append(",".join([name] + cells))
    return "\n".join(lines) + "\n"


def cmd_score(args) -> int:
    # ground truth must be valid; a broken prediction just scores zero
    gt_text = serialize_text(load_skeleton(args.gt))
    report = evaluate_pair(_as_description(args.pred), gt_text, edges=args.edges)
    if args.csv:
        sys.stdout.write(_report_csv([(Path(args.pred).name, report)]))
    else:
        print(_dump(report.to_dict()))
    return EXIT_OK


def _find_pairs(directory: Path, pattern: str):
    pairs, names = [], []
    for pred in sorted(directory.glob(pattern + ".pred.txt")):
        stem = pred.name[: -len(".pred.txt")]
        gt = directory / f"{stem}.gt.txt"
        if not gt.exists():
            log.warning("no ground truth for %s, skipped", pred.name)
            continue
        names.append(stem)
        pairs.append((pred, gt))
    return names, pairs


def _manifest_pairs(directory: Path, manifest):
    names, pairs = [], []
    for lineno, line in enumerate(_read(manifest).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            pred, gt = directory / rec["pred"], directory / rec["gt"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"manifest entry is malformed: {exc}", lineno) from None
        names.append(str(rec.get("name", Path(rec["pred"]).name)))
        pairs.append((pred, gt))
    return names, pairs


def cmd_batch_eval(args) -> int:
    directory = Path(args.dir)
    if not directory.is_dir():
        raise FileNotFoundError(f"not a directory: {directory}")
    if args.manifest:
        names, paths = _manifest_pairs(directory, args.manifest)
    else:
        names, paths = _find_pairs(directory, args.pattern)
    if not paths:
        log.error("no <stem>.pred.txt / <stem>.gt.txt pairs in %s", directory)
        return EXIT_DATA
    texts = [(_as_description(p), _read(g)) for p, g in paths]
    summary = evaluate_batch(texts, names, parallel=args.parallel, edges=args.edges)
    if args.report:
        out = summary.to_json() + "\n" if str(args.report).endswith(".json") else summary.to_csv()
        _write_out(args.report, out)
    print(format_real(summary.means["accuracy"]))
    return EXIT_OK


def cmd_decode(args) -> int:
    skel = load_skeleton(args.path)
    params = DecodeParams(grid_resolution=args.resolution, relax_iters=args.relax_iters)
    mesh = decode(skel, params)
    report = check_mesh(mesh)
    out = Path(args.output)
    if out.suffix.lower() == ".ply":
        export_ply(mesh, out)
    else:
        export_obj(mesh, out)
    text = _dump(report.to_dict())
    if args.report:
        _write_out(args.report, text + "\n")
    print(text)
    return EXIT_OK


def _node_range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("..")
    try:
        a, b = (int(lo), int(hi)) if sep else (int(lo), int(lo))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a..b, got {text!r}") from None
    if not 1 <= a <= b:
        raise argparse.ArgumentTypeError(f"need 1 <= a <= b, got {text!r}")
    return a, b


def cmd_gen(args) -> int:
    lo, hi = args.nodes
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(args.count - 1)))
    for k in range(args.count):
        # one independent stream per file, so file k does not depend on --count
        skel = random_skeleton([args.seed, k], min_nodes=lo, max_nodes=hi,
                               coord_system=CoordSystem(args.coords))
        (out / f"skel_{k:0{width}d}.txt").write_text(serialize_text(skel), encoding="utf-8")
    log.info("wrote %d skeletons to %s", args.count, out)
    return EXIT_OK


def cmd_convert(args) -> int:
    skel = load_skeleton(args.path)
    if args.coords:
        skel = convert_coords(skel, args.coords)
    text = to_json(skel) + "\n" if args.format == "json" else serialize_text(skel)
    _write_out(args.output, text)
    return EXIT_OK


def cmd_loss(args) -> int:
    beta = beta_for_stage(args.stage) if args.stage is not None else args.beta
    print(format_real(s2ms_loss(args.ce, args.accuracy, beta)))
    return EXIT_OK


# ---------------------------------------------------------------- wiring

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="minsurf", description="Skeleton scoring and minimal-surface decoding.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("validate", help="check a skeleton file and print the report")
    s.add_argument("path")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("score", help="score one prediction against ground truth")
    s.add_argument("pred")
    s.add_argument("gt")
    fmt = s.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true", help="JSON output (default)")
    fmt.add_argument("--csv", action="store_true")
    s.add_argument("--edges", choices=["union", "solid", "virtual"], default="union")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("batch-eval", help="score every <stem>.pred.txt / <stem>.gt.txt pair in a directory")
    s.add_argument("dir")
    s.add_argument("--pattern", default="*", help="glob for stems (default: *)")
    s.add_argument("--report", help="write the per-sample report (.csv, or .json by suffix)")
    s.add_argument("--parallel", type=int, default=1)
    s.add_argument("--manifest", help="JSONL file of {name, pred, gt} entries relative to DIR")
    s.add_argument("--edges", choices=["union", "solid", "virtual"], default="union")
    s.set_defaults(func=cmd_batch_eval)

    s = sub.add_parser("decode", help="decode a skeleton to a triangle mesh")
    s.add_argument("path")
    s.add_argument("-o", "--output", required=True, help="mesh file (.obj or .ply)")
    s.add_argument("--resolution", type=int, default=64)
    s.add_argument("--relax-iters", type=int, default=200)
    s.add_argument("--report", help="also write the mesh report JSON here")
    s.set_defaults(func=cmd_decode)

    s = sub.add_parser("gen", help="generate seeded random skeletons")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--nodes", type=_node_range, default=(2, 8), help="node count range a..b")
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--coords", choices=[c.value for c in CoordSystem], default="camera")
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("convert", help="change coordinate system or file format")
    s.add_argument("path")
    s.add_argument("--coords", choices=[c.value for c in CoordSystem])
    s.add_argument("--format", choices=["text", "json"], default="text")
    s.add_argument("-o", "--output", help="destination (default: stdout)")
    s.set_defaults(func=cmd_convert)

    s = sub.add_parser("loss", help="cross-entropy scaled by the structural multiplier")
    s.add_argument("--accuracy", type=float, required=True)
    b = s.add_mutually_exclusive_group(required=True)
    b.add_argument("--beta", type=float)
    b.add_argument("--stage", type=int, choices=[1, 2])
    s.add_argument("--ce", type=float, required=True)
    s.set_defaults(func=cmd_loss)
    return p


class _StderrHandler(logging.StreamHandler):
    # look sys.stderr up on every record so redirection after setup still works
    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


def _setup_logging():
    level = _LEVELS.get(os.environ.get("MINSURF_LOG", "warn").lower(), logging.WARNING)
    handler = _StderrHandler()
    handler.setFormatter(logging.Formatter("minsurf: %(levelname)s: %(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(level)
    log.propagate = False


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "parallel", 1) < 1 or getattr(args, "count", 1) < 0:
        print("minsurf: error: --parallel and --count must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (ParseError, SkeletonError, BatchError, MeshError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_DATA
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

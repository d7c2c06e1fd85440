"""
Command line front end.

    spinemorph measure  --manifest M [M ...] --out DIR [--max-angle 45] [--fallback-single] [--csv]
    spinemorph generate --out DIR --count 50 --seed 7 [--resolution 0.16]
    spinemorph evaluate --pred DIR|FILE --truth FILE --out DIR

Exit codes: 0 success, 1 top-level error, 2 some vertebrae failed.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import SpineMorphError
from .evaluation import evaluate, load_predictions, load_reference
from .fileio import atomic_write_bytes
from .morphometry import DEFAULT_MAX_ANGLE, MeasureOptions, measure_manifest
from .report import dumps, write_report
from .synthetic import DEFAULT_RESOLUTION, DatasetRanges, LORDOSIS_RANGE, generate_dataset

log = logging.getLogger("spinemorph")

EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2


def _angle(text: str) -> float:
    value = float(text)
    if not 0 < value < 90:
        raise argparse.ArgumentTypeError("max angle must be in (0, 90) degrees")
    return value


def _count(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("count must be >= 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinemorph", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    m = sub.add_parser("measure", help="measure vertebral bodies of one or more spines")
    m.add_argument("--manifest", nargs="+", required=True, type=Path)
    m.add_argument("--out", required=True, type=Path)
    m.add_argument("--max-angle", type=_angle, default=DEFAULT_MAX_ANGLE)
    m.add_argument("--fallback-single", action="store_true",
                   help="allow spines with fewer than 3 vertebrae (up = global S)")
    m.add_argument("--csv", action="store_true", help="also write one CSV per spine")

    g = sub.add_parser("generate", help="write a synthetic spine dataset")
    g.add_argument("--out", required=True, type=Path)
    g.add_argument("--count", type=_count, default=50)
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--resolution", type=float, default=DEFAULT_RESOLUTION)
    g.add_argument("--lordosis-min", type=float, default=LORDOSIS_RANGE[0])
    g.add_argument("--lordosis-max", type=float, default=LORDOSIS_RANGE[1])

    e = sub.add_parser("evaluate", help="compare predictions with reference measurements")
    e.add_argument("--pred", required=True, type=Path)
    e.add_argument("--truth", required=True, type=Path)
    e.add_argument("--out", required=True, type=Path)
    return parser


def _spine_ids(manifests) -> list[str]:
    ids, seen = [], {}
    for m in manifests:
        base = m.resolve().parent.name or m.stem
        seen[base] = seen.get(base, 0) + 1
        ids.append(base if seen[base] == 1 else f"{base}_{seen[base]}")
    return ids


def cmd_measure(args) -> int:
    for m in args.manifest:
        if not m.is_file():
            log.error("manifest not found: %s", m)
            return EXIT_ERROR
    options = MeasureOptions(max_angle=args.max_angle, fallback_single=args.fallback_single)
    partial = False
    for manifest, spine_id in zip(args.manifest, _spine_ids(args.manifest)):
        try:
            results = measure_manifest(manifest, options)
        except (OSError, SpineMorphError) as exc:
            log.error("%s", exc)
            return EXIT_ERROR
        write_report(results, args.out, spine_id, with_csv=args.csv)
        failed = [lab for lab, r in results.items() if not r.ok]
        for lab in failed:
            log.warning("%s/%s: %s", spine_id, lab, results[lab].error["message"])
        partial |= bool(failed)
        log.info("%s: %d/%d vertebrae measured", spine_id, len(results) - len(failed), len(results))
    return EXIT_PARTIAL if partial else EXIT_OK


def cmd_generate(args) -> int:
    if args.lordosis_min > args.lordosis_max:
        log.error("--lordosis-min exceeds --lordosis-max")
        return EXIT_ERROR
    ranges = DatasetRanges(lordosis=(args.lordosis_min, args.lordosis_max))
    try:
        manifest = generate_dataset(args.count, args.seed, args.out, args.resolution, ranges)
    except (OSError, SpineMorphError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR
    log.info("wrote %d spines to %s", manifest["count"], args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        predictions = load_predictions(args.pred)
        reference = load_reference(args.truth)
        report = evaluate(predictions, reference)
    except (OSError, SpineMorphError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR
    atomic_write_bytes(args.out / "evaluation.json", dumps(report.to_dict()))
    atomic_write_bytes(args.out / "evaluation.csv", report.to_csv().encode("utf-8"))
    print(report.table())
    for w in report.warnings:
        log.warning("%s", w)
    return EXIT_OK


COMMANDS = {"measure": cmd_measure, "generate": cmd_generate, "evaluate": cmd_evaluate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(message)s", stream=sys.stderr)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())

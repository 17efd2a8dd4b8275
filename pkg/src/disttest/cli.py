"""``disttest`` command line entry point."""

from __future__ import annotations

import argparse
import json
import sys

from .distributions import PreconditionError, norms
from .estimators import EstimatorFailure
from .harness import (
    SUBCOMMANDS,
    ExperimentSpec,
    InstanceError,
    emit,
    pair_to_json,
    resolve_instance,
    run_spec,
)

EXIT_OK = 0
EXIT_PRECONDITION = 2
EXIT_IO = 3


def _parse_override(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=val, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def _parse_s(text: str):
    return text if text == "auto" else int(text)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="disttest", description="Seeded distribution-testing experiments.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--instance", action="append", default=None,
                    help="gen:hard:N, gen:same:N, gen:uniform:N, a pair JSON file, or give twice for P and Q files")
    ap.add_argument("--s", type=_parse_s, default=None, help='sample-size parameter or "auto"')
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0, help="master seed")
    ap.add_argument("--out", default=None, help="output path (stdout if omitted)")
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("--override", action="append", type=_parse_override, default=[],
                    metavar="KEY=VAL", help="l, train_l, repeats, c, s_values, weights, bridge_s, timing, ...")
    return ap


def spec_from_args(args) -> ExperimentSpec:
    return ExperimentSpec(
        subcommand=args.subcommand,
        instance=tuple(args.instance or ["gen:hard:1024"]),
        s=args.s,
        trials=args.trials,
        master_seed=args.seed,
        output=args.out,
        format=args.format,
        overrides=dict(args.override),
    )


def _write(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = spec_from_args(args)
    try:
        if spec.subcommand == "generate":
            p, q = resolve_instance(spec.instance)
            _write(json.dumps(pair_to_json(p, q)) + "\n", spec.output)
            return EXIT_OK
        if spec.subcommand == "norms" and spec.format == "json":
            p, q = resolve_instance(spec.instance)
            _write(json.dumps(norms(p, q).to_json(), indent=1) + "\n", spec.output)
            return EXIT_OK
        rows, extra = run_spec(spec)
        text = emit(rows, spec, extra)
        if not spec.output:
            sys.stdout.write(text)
        return EXIT_OK
    except (PreconditionError, EstimatorFailure) as exc:
        print(f"disttest: precondition refused: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (InstanceError, OSError) as exc:
        print(f"disttest: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit status: 0 success, 1 diagnostics, 2 verification failures, 3 internal
error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .pipeline import (
    EXIT_DIAGNOSTICS, EXIT_INTERNAL, EXIT_OK, STAGES, PipelineConfig, check_program,
    load_program, run_pipeline,
)


def _switch(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return value == "on"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vimpforge",
                                description="Translate .vmp programs into Boogie.")
    p.add_argument("inputs", nargs="+", type=Path, help="input .vmp files")
    p.add_argument("--out", type=Path, help="output .bpl path (default: next to the input)")
    p.add_argument("--map-out", type=Path, help="source map path (default: <out>.map.json)")
    p.add_argument("--implicit-null", type=_switch, default=False, metavar="{on,off}",
                   help="guard dereferences with NullPointerException checks")
    p.add_argument("--implicit-bounds", type=_switch, default=False, metavar="{on,off}",
                   help="guard array accesses with IndexOutOfBoundsException checks")
    p.add_argument("--smoke", action="store_true",
                   help="inject a failing assertion into every basic block")
    p.add_argument("--dump-after", choices=STAGES, help="write the IR after this stage")
    p.add_argument("--dump-out", type=Path,
                   help="where --dump-after writes (default: standard output)")
    p.add_argument("--resume-after", choices=STAGES,
                   help="input is a dump of this stage; run only the later ones")
    p.add_argument("--boogie", help="Boogie executable (default: $VIMPFORGE_BOOGIE)")
    p.add_argument("--exec", nargs="+", metavar=("METHOD", "ARGS"),
                   help="interpret METHOD (Class.name) on integer/true/false/null arguments")
    return p


def _parse_value(text: str):
    if text in ("true", "false"):
        return text == "true"
    if text == "null":
        return None
    return int(text)


def _exec(args, inputs: list[Path]) -> int:
    from .interp import Config, StuckError, run_method

    sources = [(str(p), p.read_text(encoding="utf-8")) for p in inputs]
    program = load_program(sources)
    spec, diags = check_program(program)
    for d in diags:
        print(d, file=sys.stderr)
    if any(d.severity == "error" for d in diags):
        return EXIT_DIAGNOSTICS
    method, *raw = args.exec
    values = [_parse_value(v) for v in raw]
    config = Config(check_specs=True, contracts=spec.contracts,
                    null_checks=args.implicit_null, bounds_checks=args.implicit_bounds)
    if method not in spec.program.method_table:
        print(f"unknown method {method}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    try:
        print(run_method(spec.program, method, values, config))
    except StuckError as err:
        print(f"stuck: {err}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.exec:
            return _exec(args, args.inputs)
    except Exception as err:  # noqa: BLE001 - reported as an internal error
        print(f"internal error: {err!r}", file=sys.stderr)
        return EXIT_INTERNAL
    config = PipelineConfig(
        inputs=args.inputs, out=args.out, map_out=args.map_out,
        null_checks=args.implicit_null, bounds_checks=args.implicit_bounds,
        smoke=args.smoke, dump_after=args.dump_after, dump_out=args.dump_out,
        resume_after=args.resume_after, boogie=args.boogie,
    )
    result = run_pipeline(config)
    for d in result.diagnostics:
        print(d, file=sys.stderr)
    for msg in result.messages:
        print(msg, file=sys.stderr)
    for v in result.verdicts:
        print(f"{v.where}: {v.message}", file=sys.stderr)
    if result.dump is not None and args.dump_out is None:
        sys.stdout.write(result.dump)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())

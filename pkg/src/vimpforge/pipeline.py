"""The fixed stage order from source text to a Boogie unit.

parse, validate, resolve contracts, lower exceptions, aggregate
specifications, translate Boolean encodings, expand loop invariants, emit.
"""

from __future__ import annotations

import os
import re
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from . import agg, exc, inst, loops
from .boogie import BoogieUnit, EmitError, EmitOptions, emit_program
from .ir import Diagnostic, Program, VimpError, errors
from .spec import ResolvedSpec, resolve_specs
from .syntax import ParseError, parse_program, render_program
from .validate import validate_program

STAGES = ("exc", "agg", "inst", "loop")

EXIT_OK = 0
EXIT_DIAGNOSTICS = 1
EXIT_VERIFICATION = 2
EXIT_INTERNAL = 3


@dataclass
class PipelineConfig:
    inputs: list[Path]
    out: Optional[Path] = None
    map_out: Optional[Path] = None
    null_checks: bool = False
    bounds_checks: bool = False
    smoke: bool = False
    dump_after: Optional[str] = None
    dump_out: Optional[Path] = None
    resume_after: Optional[str] = None
    boogie: Optional[str] = None
    write: bool = True

    def bpl_path(self) -> Path:
        return self.out or self.inputs[0].with_suffix(".bpl")

    def map_path(self) -> Path:
        return self.map_out or self.bpl_path().with_suffix(".map.json")


@dataclass
class Verdict:
    bpl_line: int
    message: str
    where: str


@dataclass
class PipelineResult:
    exit_code: int
    diagnostics: list[Diagnostic] = field(default_factory=list)
    unit: Optional[BoogieUnit] = None
    dump: Optional[str] = None
    stage_programs: dict[str, Program] = field(default_factory=dict)
    verdicts: list[Verdict] = field(default_factory=list)
    messages: list[str] = field(default_factory=list)
    seconds: float = 0.0


def load_program(sources: list[tuple[str, str]]) -> Program:
    """Parse and merge several source texts into one program."""
    progs = [parse_program(text) for _, text in sources]
    if len(progs) == 1:
        return progs[0]
    return Program(tuple(c for p in progs for c in p.classes),
                   tuple(m for p in progs for m in p.methods))


def check_program(program: Program) -> tuple[ResolvedSpec, list[Diagnostic]]:
    diags = validate_program(program)
    if errors(diags):
        return ResolvedSpec(program), diags
    spec = resolve_specs(program)
    return spec, diags + spec.diagnostics


def transform(program: Program, null_checks: bool = False, bounds_checks: bool = False,
              resume_after: Optional[str] = None,
              on_stage: Optional[Callable[[str, Program], None]] = None) -> Program:
    passes = {
        "exc": lambda p: exc.transform_program(p, null_checks, bounds_checks),
        "agg": agg.aggregate_program,
        "inst": inst.transform_program,
        "loop": loops.transform_program,
    }
    start = STAGES.index(resume_after) + 1 if resume_after else 0
    for name in STAGES[start:]:
        program = passes[name](program)
        if on_stage is not None:
            on_stage(name, program)
    return program


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def compile_text(text: str, config: Optional[PipelineConfig] = None,
                 source_name: str = "<input>") -> PipelineResult:
    """Run every stage on ``text`` without touching the filesystem."""
    config = config or PipelineConfig(inputs=[Path(source_name)], write=False)
    return _compile([(source_name, text)], config)


def _compile(sources: list[tuple[str, str]], config: PipelineConfig) -> PipelineResult:
    started = time.perf_counter()
    result = PipelineResult(EXIT_OK)
    try:
        program = load_program(sources)
    except ParseError as err:
        result.diagnostics = err.diagnostics
        result.exit_code = EXIT_DIAGNOSTICS
        return result
    spec, diags = check_program(program)
    result.diagnostics = diags
    if errors(diags):
        result.exit_code = EXIT_DIAGNOSTICS
        return result

    def on_stage(name: str, prog: Program) -> None:
        result.stage_programs[name] = prog
        if name == config.dump_after:
            result.dump = render_program(prog)

    try:
        final = transform(spec.program, config.null_checks, config.bounds_checks,
                          config.resume_after, on_stage)
        options = EmitOptions(smoke=config.smoke, source_name=sources[0][0])
        result.unit = emit_program(final, spec.contracts, options)
    except VimpError as err:
        result.diagnostics = diags + err.diagnostics
        result.exit_code = EXIT_DIAGNOSTICS
    except (EmitError, RecursionError) as err:
        result.messages.append(f"internal error: {err}")
        result.exit_code = EXIT_INTERNAL
    result.seconds = time.perf_counter() - started
    return result


_BOOGIE_LINE = re.compile(r"\((\d+),(\d+)\): (Error[^:]*|Related location): (.*)")
_SUMMARY = re.compile(r"finished with (\d+) verified, (\d+) errors?")


def find_boogie(explicit: Optional[str]) -> Optional[str]:
    return explicit or os.environ.get("VIMPFORGE_BOOGIE") or None


def run_boogie(binary: str, bpl: Path, unit: BoogieUnit, smoke: bool,
               timeout: float = 600.0) -> tuple[int, list[Verdict], list[str]]:
    """Verify ``bpl`` and map every reported failure back to the IR."""
    proc = subprocess.run([binary, str(bpl)], capture_output=True, text=True, timeout=timeout)
    verdicts, notes = [], []
    errors_reported = None
    for line in proc.stdout.splitlines():
        m = _BOOGIE_LINE.search(line)
        if m and m.group(3).startswith("Error"):
            n = int(m.group(1))
            entry = unit.lookup(n)
            where = (f"{entry.method} at {unit.source_name}:{entry.pos}"
                     if entry else f"line {n} of {bpl.name}")
            verdicts.append(Verdict(n, m.group(4).strip(), where))
        s = _SUMMARY.search(line)
        if s:
            errors_reported = int(s.group(2))
    if errors_reported is None:
        notes.append(proc.stdout.strip() or proc.stderr.strip() or "verifier produced no summary")
        return EXIT_INTERNAL, verdicts, notes
    if smoke:
        injected = {e.bpl_line for e in unit.source_map if e.kind == "smoke"}
        failed = {v.bpl_line for v in verdicts}
        missed = sorted(injected - failed)
        unexpected = sorted(failed - injected)
        for n in missed:
            notes.append(f"smoke assertion at line {n} was not reported (unreachable or "
                         "inconsistent encoding)")
        for n in unexpected:
            notes.append(f"non-smoke failure at line {n}")
        return (EXIT_VERIFICATION if missed or unexpected else EXIT_OK), verdicts, notes
    return (EXIT_VERIFICATION if errors_reported else EXIT_OK), verdicts, notes


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Compile the configured inputs, write artifacts, optionally verify."""
    try:
        sources = [(str(p), Path(p).read_text(encoding="utf-8")) for p in config.inputs]
    except OSError as err:
        return PipelineResult(EXIT_DIAGNOSTICS, [Diagnostic("IO", str(err))])
    try:
        result = _compile(sources, config)
    except Exception as err:  # a bug in some stage, reported as such
        return PipelineResult(EXIT_INTERNAL, messages=[f"internal error: {err!r}"])
    if result.exit_code != EXIT_OK or result.unit is None:
        return result
    if config.write:
        if result.dump is not None and config.dump_out is not None:
            atomic_write(config.dump_out, result.dump)
        atomic_write(config.bpl_path(), result.unit.text)
        atomic_write(config.map_path(), result.unit.source_map_json())
    binary = find_boogie(config.boogie)
    if binary and config.write:
        try:
            code, verdicts, notes = run_boogie(binary, config.bpl_path(), result.unit,
                                               config.smoke)
        except (OSError, subprocess.SubprocessError) as err:
            result.exit_code = EXIT_INTERNAL
            result.messages.append(f"could not run {binary}: {err}")
            return result
        result.exit_code = code
        result.verdicts = verdicts
        result.messages.extend(notes)
    return result

"""Checking that exception lowering preserves behaviour, by running both.

Run with ``python3 walkthroughs/04_differential_check.py``.
"""

from dataclasses import replace
from pathlib import Path

from vimpforge.exc import transform_program
from vimpforge.interp import differential_check, run_method
from vimpforge.ir import Goto, Return
from vimpforge.syntax import parse_program

SOURCE = Path(__file__).resolve().parent.parent / "corpus" / "throw_catch.vmp"
program = parse_program(SOURCE.read_text())


def box(n):
    """An argument builder: allocates a Box whose size() is n."""
    def build(interp):
        ref = interp.new_object("Box")
        interp.heap[ref.id].fields["n"] = n
        return ref
    return build


for n in (0, 3):
    print(f"size {n}: {run_method(program, 'Box.run', [box(n)])}")

inputs = [(box(n),) for n in range(-2, 5)]
print("\nlowered vs original:", differential_check(program, "Box.run", inputs))

# Break the lowering on purpose: the handler jump becomes a return, so the
# exception now escapes.  The checker reports the first input that differs.
lowered = transform_program(program)
m = lowered.method("Box.run")
body = tuple(replace(ln, instr=Return()) if ln.instr == Goto("hE") else ln for ln in m.body)
broken = lowered.replace_method(replace(m, body=body))
report = differential_check(program, "Box.run", inputs, transformed=broken)
print("broken vs original:", "ok" if report.ok else f"diverges after {report.runs} runs: "
      f"{report.divergence[1]} vs {report.divergence[2]}")

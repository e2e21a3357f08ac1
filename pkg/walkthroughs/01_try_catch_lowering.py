"""From a trap table to explicit exception flow.

Run with ``python3 walkthroughs/01_try_catch_lowering.py``.
"""

from pathlib import Path

from vimpforge.exc import transform_program
from vimpforge.syntax import parse_program, render_method

SOURCE = Path(__file__).resolve().parent.parent / "corpus" / "throw_catch.vmp"

program = parse_program(SOURCE.read_text())
before = program.method("Box.run")

print("A call and a throw guarded by one trap:\n")
print(render_method(before))

# The trap says: an E raised anywhere in l1..l5 continues at hE.  Lowering
# removes the table.  After the call, @thrown is tested and either jumps to
# the handler or returns to the caller.  The throw of a fresh E is caught by
# the first trap for certain, so its chain ends with the jump.
after = transform_program(program).method("Box.run")

print("\nThe same method with every exceptional edge written out:\n")
print(render_method(after))

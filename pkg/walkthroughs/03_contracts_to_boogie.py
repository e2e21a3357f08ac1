"""Annotations, desugared contracts and the emitted Boogie procedure.

Run with ``python3 walkthroughs/03_contracts_to_boogie.py``.
"""

from pathlib import Path

from vimpforge.pipeline import compile_text
from vimpforge.spec import resolve_specs
from vimpforge.syntax import parse_program, render_expr

SOURCE = Path(__file__).resolve().parent.parent / "corpus" / "read_into.vmp"
text = SOURCE.read_text()

# @raise and @returns are shorthands.  Each becomes one postcondition whose
# condition is evaluated in the pre-state.
spec = resolve_specs(parse_program(text))
contract = spec.contracts["Reader.into"]
for clause in contract.requires:
    print(f"requires {render_expr(clause.expr)}    from {clause.origin}")
for clause in contract.ensures:
    print(f"ensures  {render_expr(clause.expr)}    from {clause.origin}")

result = compile_text(text, source_name=SOURCE.name)
lines = result.unit.text.splitlines()
start = next(i for i, ln in enumerate(lines) if ln.startswith("procedure Reader.into("))
end = lines.index("}", start)
print("\nEmitted procedure:\n")
print("\n".join(lines[start:end + 1]))

print("\nFirst source-map entries:")
for entry in result.unit.source_map[:5]:
    print(f"  bpl line {entry.bpl_line}: {entry.kind} in {entry.method} at {entry.pos}")

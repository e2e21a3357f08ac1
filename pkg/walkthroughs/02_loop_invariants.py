"""Loop invariants become asserts on entry, on the back edge and on exit.

Run with ``python3 walkthroughs/02_loop_invariants.py``.
"""

from vimpforge.loops import detect_loops, expand_invariants
from vimpforge.syntax import parse_program, render_method

SOURCE = """class C {}
method C.m(int X): int {
  var int k;
  k := 0;
  head: invariant k <= 10 && k <= X;
  if k >= 10 goto exit;
  if k == X goto exit;
  k := k + 1;
  back: goto head;
  exit: return k;
}
"""

method = parse_program(SOURCE).method("C.m")
(loop,) = detect_loops(method)
labels = {i: lb for lb, i in method.label_index().items()}

print("Loop found at", labels[loop.header])
print("  back edges:", [(labels.get(u, u), labels[v]) for u, v in loop.back_edges])
print("  exit edges:", [(u, labels[v]) for u, v in loop.exit_edges])

# Entry and every iteration both pass the header, so one assert there covers
# both.  The invariant statement itself turns into an assumption, and the
# shared exit target gets a final assert because only loop lines reach it.
print("\nExpanded:\n")
print(render_method(expand_invariants(method, [loop])))

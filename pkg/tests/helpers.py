"""Random program generators shared by the property and acceptance tests."""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Optional

from vimpforge.ir import (
    INT, Assign, Binary, BoolLit, CaughtBind, ClassDecl, Conditional, Goto, IfGoto,
    IntLit, InvariantStmt, Invoke, Line, Local, MethodDecl, NewObject, Nop, Pos,
    Program, RefType, Return, Throw, Trap, Unary,
)

EXCEPTIONS = (
    ("E1", "Throwable"),
    ("E2", "E1"),
    ("E3", "E1"),
    ("F1", "Throwable"),
)
EXC_NAMES = tuple(name for name, _ in EXCEPTIONS)


@dataclass
class GenProgram:
    text: str
    entry: str
    null_checks: bool
    bounds_checks: bool


def _atom(rng: random.Random, ints: list[str]) -> str:
    if rng.random() < 0.3:
        return str(rng.randint(-3, 5))
    return rng.choice(ints)


def _arith(rng: random.Random, ints: list[str]) -> str:
    op = rng.choice(["+", "-", "*"])
    return f"{_atom(rng, ints)} {op} {_atom(rng, ints)}"


def _index(rng: random.Random, ints: list[str]) -> str:
    return str(rng.randint(0, 1)) if rng.random() < 0.6 else _atom(rng, ints)


def _cond(rng: random.Random, ints: list[str]) -> str:
    op = rng.choice(["<", "<=", "==", "!=", ">", ">="])
    return f"{_atom(rng, ints)} {op} {_atom(rng, ints)}"


def _straight(rng: random.Random, callees: list[str], n_main: int,
              ints: list[str]) -> list[str]:
    """Main-path statements; every line gets a label so traps can cover it."""
    out: list[str] = []
    for k in range(n_main):
        roll = rng.random()
        if roll < 0.30:
            stmt = f"{rng.choice(['x', 'y', 'z'])} := {_arith(rng, ints)};"
        elif roll < 0.42:
            target = rng.randint(k + 1, n_main)
            stmt = f"if {_cond(rng, ints)} goto L{target};"
        elif roll < 0.52:
            exc = rng.choice(EXC_NAMES)
            stmt = f"if {_cond(rng, ints)} goto L{k + 1};\n  ex := new {exc}();\n  throw ex;"
        elif roll < 0.64 and callees:
            callee = rng.choice(callees)
            stmt = f"{rng.choice(['x', 'y'])} := this.{callee}({_atom(rng, ints)}, {_atom(rng, ints)}, o);"
        elif roll < 0.72:
            stmt = f"z := o.f + {_atom(rng, ints)};"
        elif roll < 0.78:
            stmt = f"o.f := {_atom(rng, ints)};"
        elif roll < 0.86:
            stmt = f"arr := new int[{rng.randint(0, 3)}];"
        elif roll < 0.93:
            stmt = f"y := arr[{_index(rng, ints)}];"
        else:
            stmt = f"arr[{_index(rng, ints)}] := {_atom(rng, ints)};"
        out.append(f"L{k}: {stmt}")
    return out


def gen_method(rng: random.Random, name: str, callees: list[str]) -> str:
    """One method ``P.name(int a, int b, P o): int`` with up to three nested traps.

    Bodies stay under 40 instructions.
    """
    ints = ["a", "b", "x", "y", "z"]
    n_main = rng.randint(3, 9)
    main = _straight(rng, callees, n_main, ints)
    n_traps = rng.randint(0, 3)
    traps, handlers = [], []
    lo, hi = 0, n_main
    for t in range(n_traps):
        if hi - lo < 1:
            break
        begin = rng.randint(lo, hi - 1)
        end = rng.randint(begin + 1, hi)
        exc = rng.choice(EXC_NAMES + ("Throwable", "NullPointerException",
                                      "IndexOutOfBoundsException"))
        traps.append((begin, end, exc, f"H{t}"))
        lo, hi = begin, end
        if rng.random() < 0.25:
            rethrow = rng.choice(EXC_NAMES)
            tail = f"  ex := new {rethrow}();\n  throw ex;"
        elif rng.random() < 0.5:
            tail = f"  x := x + {rng.randint(1, 9)};\n  goto L{n_main};"
        else:
            tail = f"  return {rng.randint(10, 99)};"
        handlers.append(f"H{t}: cx := @caught;\n{tail}")
    # table order lists inner traps first, like a compiler does
    traps.reverse()
    lines = [
        f"method P.{name}(int a, int b, P o): int {{",
        "  var int x;", "  var int y;", "  var int z;", "  var int[] arr;",
        "  var Throwable ex;", "  var Throwable cx;",
        "  x := a;", "  y := b;", "  z := 0;", "  arr := new int[2];",
    ]
    lines += ["  " + s for s in main]
    lines.append(f"  L{n_main}: return x + y + z;")
    lines += ["  " + h for h in handlers]
    lines.append("}")
    if traps:
        lines.append("traps {")
        for begin, end, exc, h in traps:
            lines.append(f"  trap L{begin}..L{end} catch {exc} goto {h};")
        lines.append("}")
    return "\n".join(lines)


def gen_program(rng: random.Random, max_methods: int = 4) -> GenProgram:
    """A random exception-heavy program; methods only call later methods."""
    n = rng.randint(1, max_methods)
    names = [f"m{i}" for i in range(n)]
    parts = [f"class {c} extends {p}" for c, p in EXCEPTIONS]
    parts.append("class P {\n  int f;\n}")
    for i, name in enumerate(names):
        parts.append(gen_method(rng, name, names[i + 1:]))
    return GenProgram("\n\n".join(parts) + "\n", "P.m0",
                      rng.random() < 0.5, rng.random() < 0.5)


def gen_inputs(rng: random.Random, n: int = 10) -> list[tuple]:
    out = []
    for _ in range(n):
        o = None if rng.random() < 0.2 else (lambda interp: interp.new_object("P"))
        out.append((rng.randint(-4, 6), rng.randint(-4, 6), o))
    return out


# ---------------------------------------------------------------------------
# control-flow graphs with loops


def gen_cfg_method(rng: random.Random, n_blocks: Optional[int] = None,
                   exceptional: bool = False) -> MethodDecl:
    """A method of ``n_blocks`` basic blocks with arbitrary jumps.

    Each block starts with a ``nop`` (a slot for an invariant) and ends in a
    conditional jump, a jump, a fall-through or a return.  With
    ``exceptional`` set, blocks may also call or throw under traps whose
    handlers are other blocks, so that exception lowering adds propagating
    returns inside loops.
    """
    n_blocks = n_blocks or rng.randint(1, 12)
    handlers = set()
    if exceptional and n_blocks > 1:
        handlers = set(rng.sample(range(1, n_blocks), rng.randint(0, min(2, n_blocks - 1))))
    lines: list[Line] = []
    for b in range(n_blocks):
        if b in handlers:
            lines.append(Line((f"B{b}",), CaughtBind(Local("cx"))))
        else:
            lines.append(Line((f"B{b}",), Nop()))
        lines.append(Line((), Assign(Local("x"), Binary("add", Local("x"), IntLit(1)))))
        if exceptional and rng.random() < 0.3:
            lines.append(Line((), Assign(Local("x"), Invoke(Local("this"), None, "g", (Local("x"),)))))
        roll = rng.random()
        last = b == n_blocks - 1
        if exceptional and roll < 0.1:
            lines.append(Line((), Assign(Local("ex"), NewObject("E1"))))
            lines.append(Line((), Throw(Local("ex"))))
        elif roll < 0.45:
            cond = Binary("lt", Local("x"), IntLit(rng.randint(0, 9)))
            lines.append(Line((), IfGoto(cond, f"B{rng.randrange(n_blocks)}")))
            if last:
                lines.append(Line((), Return(Local("x"))))
        elif roll < 0.70:
            lines.append(Line((), Goto(f"B{rng.randrange(n_blocks)}")))
        elif roll < 0.85 or last:
            lines.append(Line((), Return(Local("x"))))
    traps = []
    for h in sorted(handlers):
        begin = rng.randrange(n_blocks)
        end = rng.randint(begin + 1, n_blocks)
        end_label = f"B{end}" if end < n_blocks else "END"
        traps.append(Trap(f"B{begin}", end_label, rng.choice(("E1", "Throwable")), f"B{h}"))
    if traps:
        lines.append(Line(("END",), Return(Local("x"))))
    return MethodDecl("G", "g", (("x", INT),), INT,
                      locals=(("cx", RefType("Throwable")), ("ex", RefType("E1"))),
                      body=tuple(lines), traps=tuple(traps))


def cfg_program(method: MethodDecl) -> Program:
    return Program((ClassDecl("E1", "Throwable"), ClassDecl("G")), (method,))


def renumber(method: MethodDecl) -> MethodDecl:
    """Give every line a distinct position so transformed lines can be traced."""
    body = tuple(Line(ln.labels, ln.instr, Pos(i + 1, 1)) for i, ln in enumerate(method.body))
    return replace(method, body=body)


def with_invariants(method: MethodDecl, headers: list[int]) -> MethodDecl:
    """Replace the ``nop`` opening each header block by a distinct invariant."""
    body = list(method.body)
    for h in headers:
        ln = body[h]
        if isinstance(ln.instr, Nop):
            inv = Binary("le", Local("x"), IntLit(100 + h))
            body[h] = Line(ln.labels, InvariantStmt(inv), ln.pos)
    return replace(method, body=tuple(body))


# ---------------------------------------------------------------------------
# exception trees


def gen_tree(rng: random.Random, max_nodes: int = 16) -> dict[str, Optional[str]]:
    """A random rooted tree as a child -> parent map; the root is ``Throwable``."""
    n = rng.randint(1, max_nodes)
    parents: dict[str, Optional[str]] = {"Throwable": None}
    names = ["Throwable"]
    for i in range(1, n):
        name = f"X{i}"
        parents[name] = rng.choice(names)
        names.append(name)
    return parents


def tree_program_text(parents: dict[str, Optional[str]]) -> str:
    lines = []
    for name, parent in parents.items():
        if parent is not None:
            lines.append(f"class {name} extends {parent}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Boolean-position expressions over 0/1 integer encodings


def gen_bool_int_expr(rng: random.Random, depth: int = 3, loose: bool = True):
    """An expression in the 0/1 integer encoding a compiler produces.

    Leaves are Boolean locals ``p``/``q``/``r`` (read as 0/1), the integer
    literals 0 and 1, and integer comparisons.  Inner nodes are ``neg``
    (Boolean complement in this encoding), ``&&``, ``||``, ``==``, ``!=``
    and conditionals.  With ``loose`` false the result is never a bare
    literal shape, so an equality it takes part in is clearly Boolean.
    """
    if depth == 0 or rng.random() < 0.25:
        roll = rng.random()
        if roll < 0.4:
            return Local(rng.choice("pqr"))
        if roll < 0.7 and loose:
            return IntLit(rng.choice((0, 1)))
        op = rng.choice(("lt", "le", "gt", "ge"))
        return Binary(op, Local(rng.choice("ijk")), IntLit(rng.randint(-2, 2)))
    roll = rng.random()
    if roll < 0.2:
        return Unary("neg", gen_bool_int_expr(rng, depth - 1, loose))
    if roll < 0.5:
        op = rng.choice(("and", "or"))
        return Binary(op, gen_bool_int_expr(rng, depth - 1), gen_bool_int_expr(rng, depth - 1))
    if roll < 0.75:
        op = rng.choice(("eq", "ne"))
        sides = [gen_bool_int_expr(rng, depth - 1, False), gen_bool_int_expr(rng, depth - 1)]
        rng.shuffle(sides)
        return Binary(op, *sides)
    return Conditional(gen_bool_int_expr(rng, depth - 1),
                       gen_bool_int_expr(rng, depth - 1, loose),
                       gen_bool_int_expr(rng, depth - 1))


def eval_01(e, env: dict[str, int]) -> int:
    """The 0/1 integer semantics: every Boolean is the integer 0 or 1."""
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, BoolLit):
        return int(e.value)
    if isinstance(e, Local):
        return env[e.name]
    if isinstance(e, Unary):
        v = eval_01(e.arg, env)
        return 1 - v
    if isinstance(e, Conditional):
        return eval_01(e.then, env) if eval_01(e.cond, env) >= 1 else eval_01(e.other, env)
    a, b = eval_01(e.left, env), eval_01(e.right, env)
    ops = {
        "and": lambda: int(a >= 1 and b >= 1), "or": lambda: int(a >= 1 or b >= 1),
        "eq": lambda: int(a == b), "ne": lambda: int(a != b),
        "lt": lambda: int(a < b), "le": lambda: int(a <= b),
        "gt": lambda: int(a > b), "ge": lambda: int(a >= b),
    }
    return ops[e.op]()


__all__ = [
    "EXCEPTIONS", "GenProgram", "PlacementReport", "cfg_program", "check_loop_placement", "eval_01", "gen_bool_int_expr",
    "gen_cfg_method", "gen_inputs", "gen_method", "gen_program", "gen_tree", "renumber",
    "tree_program_text", "with_invariants",
]


# ---------------------------------------------------------------------------
# loop-placement checking by path segments


@dataclass
class PlacementReport:
    segments: int
    failures: list[str]
    edges_seen: set


def _inserted(body) -> set[int]:
    """Lines the loop pass added: asserts, and the jumps closing exit blocks."""
    out = set()
    in_tail = False
    for i, ln in enumerate(body):
        if any(lbl.startswith("exit$") for lbl in ln.labels):
            in_tail = True
        if in_tail:
            out.add(i)
            if isinstance(ln.instr, Goto):
                in_tail = False
        elif type(ln.instr).__name__ == "AssertStmt":
            out.add(i)
    return out


def check_loop_placement(reference: MethodDecl, transformed: MethodDecl, loops) -> PlacementReport:
    """Every path of ``transformed``, cut at original lines, checked edge by edge.

    ``reference`` is the input of the loop pass with distinct line positions
    and ``loops`` its loop information.  A path of the transformed method is
    a chain of segments that run from one original line to the next through
    inserted lines only.  Segments are finite and acyclic, so enumerating all
    of them enumerates every path.  Each segment realizes one edge of the
    reference CFG; entry, back and exit edges of a loop with invariant ``I``
    must pass an ``assert I`` inside the segment.
    """
    from vimpforge.loops import CFG

    body = transformed.body
    ins = _inserted(body)
    orig = {i: ln.pos.line - 1 for i, ln in enumerate(body) if i not in ins}
    tcfg = CFG.of(transformed)
    ref_cfg = CFG.of(reference)
    failures: list[str] = []
    edges_seen: set = set()
    count = 0

    def asserted(path, inv) -> bool:
        return any(type(body[k].instr).__name__ == "AssertStmt" and body[k].instr.expr == inv
                   for k in path)

    def classify(u, v):
        need = []
        for lp in loops:
            if lp.invariant is None:
                continue
            inside_u = u is not None and u in lp.body
            if v == lp.header:
                need.append(lp.invariant)
            elif inside_u and (v is None or v not in lp.body):
                need.append(lp.invariant)
        return need

    def walk(start_line, u):
        nonlocal count
        stack = [(start_line, [])] if start_line is not None else []
        while stack:
            t, path = stack.pop()
            if t in orig:
                v = orig[t]
                count += 1
                edges_seen.add((u, v))
                for inv in classify(u, v):
                    if not asserted(path, inv):
                        failures.append(f"edge {u}->{v} misses assert {inv}")
                continue
            succ = tcfg.succ[t]
            if not succ:
                count += 1
                edges_seen.add((u, None))
                for inv in classify(u, None):
                    if not asserted(path + [t], inv):
                        failures.append(f"exit from {u} misses assert {inv}")
                continue
            for w in succ:
                stack.append((w, path + [t]))

    walk(0, None)
    for t, u in orig.items():
        succ = tcfg.succ[t]
        if not succ:
            edges_seen.add((u, None))
            count += 1
            for inv in classify(u, None):
                failures.append(f"return at {u} inside a loop misses assert {inv}")
            continue
        for w in succ:
            walk(w, u)
    # every reference edge must be realized and nothing else
    expected = {(None, 0)} | {(u, v) for u in ref_cfg.reachable() for v in ref_cfg.succ[u]}
    expected |= {(u, None) for u in ref_cfg.reachable() if not ref_cfg.succ[u]}
    reach = set(ref_cfg.reachable())
    reach_edges = {e for e in edges_seen if e[0] is None or e[0] in reach}
    if reach_edges != expected:
        failures.append(f"edge sets differ: {sorted(reach_edges ^ expected, key=str)}")
    return PlacementReport(count, failures, edges_seen)

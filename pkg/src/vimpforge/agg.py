"""Expression aggregation for specification code.

Specification expressions arrive in three-address form, one operator per
temporary.  This pass folds each such chain back into one compound
expression: the straight-line pure prefix feeding a spec statement, and the
whole body of a predicate.  Executable code is left alone.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Iterable, Optional

from .ir import (
    Assign, Binding, CaughtBind, Diagnostic, Expr, Invoke, Line, Local, MethodDecl,
    NewArray, NewObject, Program, Return, SPEC_STMTS, Throw, VimpError, free_locals,
    instr_exprs, map_instr_exprs, substitute,
)


def is_pure_assign(ins) -> bool:
    return (isinstance(ins, Assign) and isinstance(ins.lhs, Local)
            and not isinstance(ins.rhs, (Invoke, NewObject, NewArray)))


def aggregate_region(instrs: Iterable, root: Expr) -> Expr:
    """Fold a pure straight-line slice into ``root``.

    ``instrs`` are executed in order before ``root`` is evaluated; the result
    mentions only the values live on entry to the slice.  Temporaries used
    more than once are duplicated, which is sound because nothing here has
    side effects.
    """
    env: dict[str, Expr] = {}
    for ins in instrs:
        if isinstance(ins, Line):
            ins = ins.instr
        if not is_pure_assign(ins):
            raise VimpError([Diagnostic("G1", "specification region is not pure")])
        env[ins.lhs.name] = substitute(ins.rhs, env) if env else ins.rhs
    return substitute(root, env) if env else root


def _occurrences(lines: list[Line]) -> dict[str, list[int]]:
    occ: dict[str, list[int]] = {}
    for i, ln in enumerate(lines):
        names: set[str] = set()
        ins = ln.instr
        if isinstance(ins, Assign) and isinstance(ins.lhs, Local):
            names.add(ins.lhs.name)
        for _, e in instr_exprs(ins):
            names |= free_locals(e)
        if isinstance(ins, Assign) and not isinstance(ins.lhs, Local):
            names |= free_locals(ins.lhs)
        if isinstance(ins, Throw):
            names.add(ins.arg.name)
        if isinstance(ins, CaughtBind) and isinstance(ins.lhs, Local):
            names.add(ins.lhs.name)
        for n in names:
            occ.setdefault(n, []).append(i)
    return occ


def _drop(lines: list[Line], dead: set[int]) -> list[Line]:
    """Remove ``dead`` indices, moving their labels onto the next survivor."""
    out: list[Line] = []
    carry: tuple[str, ...] = ()
    for i, ln in enumerate(lines):
        if i in dead:
            carry += ln.labels
            continue
        if carry:
            ln = replace(ln, labels=carry + ln.labels)
            carry = ()
        out.append(ln)
    assert not carry, "labels dropped off the end"
    return out


def _inline_bindings(lines: list[Line]) -> list[Line]:
    """Replace every use of a ``binding T v`` local by its marker."""
    markers: dict[str, Binding] = {}
    defs: dict[str, int] = {}
    for ln in lines:
        ins = ln.instr
        if isinstance(ins, Assign) and isinstance(ins.lhs, Local):
            defs[ins.lhs.name] = defs.get(ins.lhs.name, 0) + 1
            if isinstance(ins.rhs, Binding):
                markers[ins.lhs.name] = ins.rhs
    occ = _occurrences(lines)
    # an unused binding stays put and is rejected by the caller
    markers = {k: v for k, v in markers.items() if defs[k] == 1 and len(occ[k]) > 1}
    if not markers:
        return lines
    dead = set()
    out = []
    for i, ln in enumerate(lines):
        ins = ln.instr
        if isinstance(ins, Assign) and isinstance(ins.lhs, Local) and ins.lhs.name in markers:
            dead.add(i)
        else:
            ins = map_instr_exprs(ins, lambda _s, e: substitute(e, markers))
        out.append(replace(ln, instr=ins))
    return _drop(out, dead)


def _block_start(lines: list[Line], j: int) -> int:
    """Index of the earliest line that falls straight through to ``j``."""
    s = j
    while s > 0 and not lines[s].labels and is_pure_assign(lines[s - 1].instr):
        s -= 1
    return s


def _aggregate_at(lines: list[Line], j: int) -> list[Line]:
    s = _block_start(lines, j)
    if s == j:
        return lines
    region = lines[s:j]
    spec = lines[j].instr
    folded = aggregate_region(region, spec.expr)
    new_spec = type(spec)(folded)
    lines = lines[:j] + [replace(lines[j], instr=new_spec)] + lines[j + 1:]

    # a region line can go once its target is never mentioned elsewhere and
    # no surviving region line still reads it
    occ = _occurrences(lines)
    candidates = {}
    for k in range(s, j):
        v = lines[k].instr.lhs.name
        if all(s <= p < j for p in occ.get(v, [])):
            candidates.setdefault(v, []).append(k)
    changed = True
    while changed:
        changed = False
        kept_reads: set[str] = set()
        for k in range(s, j):
            v = lines[k].instr.lhs.name
            if v not in candidates:
                kept_reads |= free_locals(lines[k].instr.rhs)
        for v in list(candidates):
            if v in kept_reads:
                del candidates[v]
                changed = True
    dead = {k for ks in candidates.values() for k in ks}
    return _drop(lines, dead)


def aggregate_method(method: MethodDecl) -> MethodDecl:
    if method.body is None:
        return method
    lines = _inline_bindings(list(method.body))
    for ln in lines:
        ins = ln.instr
        if isinstance(ins, Assign) and isinstance(ins.rhs, Binding):
            raise VimpError([Diagnostic("Q1", f"binding {ins.rhs.var!r} is not used by a "
                                        "quantifier", ln.pos)])
    if method.is_predicate:
        return _aggregate_predicate(method, lines)
    j = len(lines) - 1
    while j >= 0:
        if isinstance(lines[j].instr, SPEC_STMTS):
            before = len(lines)
            lines = _aggregate_at(lines, j)
            j -= before - len(lines)
        j -= 1
    return replace(method, body=tuple(lines))


def _aggregate_predicate(method: MethodDecl, lines: list[Line]) -> MethodDecl:
    ret: Optional[Line] = lines[-1] if lines else None
    if ret is None or not isinstance(ret.instr, Return) or ret.instr.value is None:
        raise VimpError([Diagnostic("G1", f"predicate {method.qname} must end in a "
                                    "value return", method.pos)])
    for ln in lines[:-1]:
        if not is_pure_assign(ln.instr) or (ln.labels and ln is not lines[0]):
            raise VimpError([Diagnostic("G1", f"predicate {method.qname} body is not "
                                        "pure straight-line code", ln.pos)])
    value = aggregate_region(lines[:-1], ret.instr.value)
    labels = lines[0].labels
    used = free_locals(value)
    locals_ = tuple((n, t) for n, t in method.locals if n in used)
    return replace(method, locals=locals_,
                   body=(Line(labels, Return(value), ret.pos),))


def aggregate_program(program: Program) -> Program:
    return program.with_methods(aggregate_method(m) for m in program.methods)

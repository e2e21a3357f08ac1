"""Exception lowering: trap tables become explicit ``@thrown`` traffic.

After :func:`transform_body` a method has no trap table.  Every throw,
every call and every guarded implicit-exception site is followed by an
explicit dispatch chain that tests ``@thrown`` against the covering traps in
table order and either jumps to a handler or returns to the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

from .ir import (
    ArrayLength, ArrayRead, Assign, Binary, CaughtBind, Diagnostic, Expr,
    FieldRead, Goto, IfGoto, InstanceOf, IntLit, Invoke, Line, Local, Lowered,
    MethodDecl, NewArray, NewObject, NullLit, Old, Pos, Program, Quantifier,
    RefType, Return, Thrown, Throw, Trap, Unary, VimpError, VoidLit, IOOBE, NPE,
    NOPOS, children,
)


@dataclass(frozen=True)
class PeiRule:
    """An implicit-exception rule: ``guard`` builds the failure condition."""

    kind: str  # "null" | "bounds"
    exc: str


NULL_RULE = PeiRule("null", NPE)
BOUNDS_RULE = PeiRule("bounds", IOOBE)
PEI_RULES = (NULL_RULE, BOUNDS_RULE)


def null_condition(target: Expr) -> Expr:
    return Binary("eq", target, NullLit())


def bounds_condition(target: Expr, index: Expr) -> Expr:
    inside = Binary("and", Binary("le", IntLit(0), index),
                    Binary("lt", index, ArrayLength(target)))
    return Unary("not", inside)


def negate(cond: Expr) -> Expr:
    if isinstance(cond, Unary) and cond.op == "not":
        return cond.arg
    return Unary("not", cond)


class Fresh:
    """Per-method supply of collision-free labels and locals."""

    def __init__(self, method: MethodDecl):
        self.taken = set(method.var_types)
        for ln in method.body or ():
            self.taken.update(ln.labels)
        self.counter = 0

    def name(self, prefix: str) -> str:
        while True:
            self.counter += 1
            cand = f"{prefix}${self.counter}"
            if cand not in self.taken:
                self.taken.add(cand)
                return cand


class _Out:
    """Output buffer; labels queued with :meth:`mark` land on the next line."""

    def __init__(self):
        self.lines: list[Line] = []
        self.pending: list[str] = []

    def emit(self, ins, pos: Pos = NOPOS, labels: tuple[str, ...] = ()) -> None:
        self.lines.append(Line(tuple(self.pending) + tuple(labels), ins, pos))
        self.pending = []

    def mark(self, label: str) -> None:
        self.pending.append(label)


# Answers "is every non-null object of class C an instance of E?".
Subtype = Callable[[str, str], bool]


def _dispatch(out: _Out, traps: list[Trap], fresh: Fresh, pos: Pos,
              known: Optional[str] = None, subtype: Optional[Subtype] = None) -> None:
    """Test ``@thrown`` against each trap; uncaught exceptions return.

    ``known`` is the exact class of a freshly allocated exception.  Once a
    trap certainly catches it, the remaining tests and the propagating
    return are dead and are left out; the skip label then falls through to
    the next line.
    """
    for t in traps:
        skip = fresh.name("skip")
        out.emit(IfGoto(Unary("not", InstanceOf(Thrown(), t.exc)), skip), pos)
        out.emit(Goto(t.handler), pos)
        out.mark(skip)
        if known is not None and subtype is not None and subtype(known, t.exc):
            return
    out.emit(Return(), pos)


def lower_throw(value: Optional[Expr], traps: list[Trap], fresh: Fresh,
                pos: Pos = NOPOS, known: Optional[str] = None,
                subtype: Optional[Subtype] = None) -> tuple[list[Line], list[str]]:
    """``@thrown := value`` followed by the dispatch chain over ``traps``.

    ``value=None`` elides the assignment (``@thrown`` already holds the
    exception, as after a call).  Returns the lines and the labels left for
    the following line, which are non-empty only when the chain ends early.
    """
    out = _Out()
    if value is not None:
        out.emit(Assign(Thrown(), value), pos)
    _dispatch(out, traps, fresh, pos, known, subtype)
    return out.lines, out.pending


def _throw_into(out: _Out, value: Optional[Expr], traps, fresh, pos,
                known: Optional[str] = None, subtype: Optional[Subtype] = None) -> None:
    lines, carry = lower_throw(value, traps, fresh, pos, known, subtype)
    for ln in lines:
        out.emit(ln.instr, ln.pos, ln.labels)
    out.pending += carry


def lower_invoke(line: Line, traps: list[Trap], fresh: Fresh) -> tuple[list[Line], str]:
    """The call, then a check of ``@thrown`` that rethrows on failure.

    Returns the lines and the label the continuation must carry.
    """
    out = _Out()
    out.emit(line.instr, line.pos, line.labels)
    skip = fresh.name("skip")
    out.emit(IfGoto(Binary("eq", Thrown(), VoidLit()), skip), line.pos)
    _throw_into(out, None, traps, fresh, line.pos)
    return out.lines, skip


def _expr_guards(e: Expr) -> list[tuple[PeiRule, Expr]]:
    """Implicit-exception conditions of ``e`` in evaluation order."""
    if isinstance(e, (Quantifier, Old)):
        return []
    if isinstance(e, FieldRead):
        return _expr_guards(e.target) + [(NULL_RULE, null_condition(e.target))]
    if isinstance(e, ArrayLength):
        return _expr_guards(e.target) + [(NULL_RULE, null_condition(e.target))]
    if isinstance(e, ArrayRead):
        return (_expr_guards(e.target) + _expr_guards(e.index)
                + [(NULL_RULE, null_condition(e.target)),
                   (BOUNDS_RULE, bounds_condition(e.target, e.index))])
    out = []
    for k in children(e):
        out.extend(_expr_guards(k))
    return out


def instruction_guards(ins) -> list[tuple[PeiRule, Expr]]:
    """Every implicit-exception condition of ``ins``, in JVM evaluation order."""
    out: list[tuple[PeiRule, Expr]] = []
    if isinstance(ins, Assign):
        lhs, rhs = ins.lhs, ins.rhs
        if isinstance(lhs, FieldRead):
            out += _expr_guards(lhs.target)
        elif isinstance(lhs, ArrayRead):
            out += _expr_guards(lhs.target) + _expr_guards(lhs.index)
        if isinstance(rhs, Invoke):
            if rhs.receiver is not None:
                out += _expr_guards(rhs.receiver)
            for a in rhs.args:
                out += _expr_guards(a)
            if rhs.receiver is not None:
                out.append((NULL_RULE, null_condition(rhs.receiver)))
        elif isinstance(rhs, NewArray):
            out += _expr_guards(rhs.length)
        elif not isinstance(rhs, NewObject):
            out += _expr_guards(rhs)
        if isinstance(lhs, FieldRead):
            out.append((NULL_RULE, null_condition(lhs.target)))
        elif isinstance(lhs, ArrayRead):
            out.append((NULL_RULE, null_condition(lhs.target)))
            out.append((BOUNDS_RULE, bounds_condition(lhs.target, lhs.index)))
    elif isinstance(ins, IfGoto):
        out += _expr_guards(ins.cond)
    elif isinstance(ins, Return) and ins.value is not None:
        out += _expr_guards(ins.value)
    elif isinstance(ins, Throw):
        out.append((NULL_RULE, null_condition(ins.arg)))
    deduped, seen = [], set()
    for g in out:
        if g not in seen:
            seen.add(g)
            deduped.append(g)
    return deduped


def lower_pei(line: Line, null_on: bool, bounds_on: bool, traps: list[Trap],
              fresh: Fresh, new_locals: list,
              subtype: Optional[Subtype] = None) -> tuple[list[Line], list[str]]:
    """Guards for the enabled implicit checks, each throwing a fresh exception.

    Returns the guard lines and the labels the guarded instruction must carry.
    """
    out = _Out()
    out.pending = list(line.labels)
    for rule, cond in instruction_guards(line.instr):
        if not (null_on if rule.kind == "null" else bounds_on):
            continue
        normal = fresh.name("normal")
        out.emit(IfGoto(negate(cond), normal), line.pos)
        exc_var = fresh.name("e")
        new_locals.append((exc_var, RefType(rule.exc)))
        out.emit(Assign(Local(exc_var), NewObject(rule.exc)), line.pos)
        _throw_into(out, Local(exc_var), traps, fresh, line.pos, rule.exc, subtype)
        out.mark(normal)
    return out.lines, out.pending


def covering_traps(method: MethodDecl, index: int) -> list[Trap]:
    labels = method.label_index()
    return [t for t in method.traps if labels[t.begin] <= index < labels[t.end]]


def _checks(method: MethodDecl, null_default: bool, bounds_default: bool) -> tuple[bool, bool]:
    c = method.checks
    if c is not None:
        return c.null, c.bounds
    return null_default, bounds_default


def _jump_targets(method: MethodDecl) -> set[str]:
    out = {t.handler for t in method.traps}
    for ln in method.body or ():
        if isinstance(ln.instr, (Goto, IfGoto)):
            out.add(ln.instr.target)
    return out


def _fresh_allocation(method: MethodDecl, i: int, targets: set[str]) -> Optional[str]:
    """Exact class of the thrown local when the line before allocated it.

    Only holds when no jump lands on the throw, so control must come from
    the allocation.
    """
    ins = method.body[i].instr
    if i == 0 or not isinstance(ins.arg, Local) or set(method.body[i].labels) & targets:
        return None
    prev = method.body[i - 1].instr
    if (isinstance(prev, Assign) and prev.lhs == ins.arg
            and isinstance(prev.rhs, NewObject)):
        return prev.rhs.cls
    return None


def transform_body(method: MethodDecl, null_checks: bool = False,
                   bounds_checks: bool = False,
                   subtype: Optional[Subtype] = None) -> MethodDecl:
    """Make all exceptional control flow of ``method`` explicit.

    Predicates, contract-only methods and already-lowered bodies are
    returned unchanged.  With ``subtype`` given, dispatch chains for
    exceptions of statically known class stop at the first trap that must
    catch them.
    """
    if method.body is None or method.is_predicate or method.lowered:
        return method
    labels = method.label_index()
    for t in method.traps:
        h = labels.get(t.handler)
        if h is None or not isinstance(method.body[h].instr, CaughtBind):
            raise VimpError([Diagnostic("E1", f"handler {t.handler!r} does not start with "
                                        "@caught", t.pos)])
    null_on, bounds_on = _checks(method, null_checks, bounds_checks)
    targets = _jump_targets(method)
    fresh = Fresh(method)
    new_locals: list = []
    out = _Out()
    for i, ln in enumerate(method.body):
        traps = covering_traps(method, i)
        ins = ln.instr
        guards, carry = lower_pei(ln, null_on, bounds_on, traps, fresh, new_locals, subtype)
        for g in guards:
            out.emit(g.instr, g.pos, g.labels)
        out.pending += carry
        if isinstance(ins, CaughtBind):
            out.emit(Assign(ins.lhs, Thrown()), ln.pos)
            out.emit(Assign(Thrown(), VoidLit()), ln.pos)
        elif isinstance(ins, Throw):
            known = _fresh_allocation(method, i, targets) if subtype else None
            _throw_into(out, ins.arg, traps, fresh, ln.pos, known, subtype)
        elif isinstance(ins, Assign) and isinstance(ins.rhs, Invoke):
            lines, skip = lower_invoke(Line((), ins, ln.pos), traps, fresh)
            for g in lines:
                out.emit(g.instr, g.pos, g.labels)
            out.mark(skip)
        else:
            out.emit(ins, ln.pos)
    if out.pending:
        # a call or a statically caught throw ended the body
        out.emit(Return(), NOPOS)
    annotations = method.annotations + (Lowered(),)
    return replace(method, body=tuple(out.lines), traps=(),
                   locals=method.locals + tuple(new_locals), annotations=annotations)


def transform_program(program: Program, null_checks: bool = False,
                      bounds_checks: bool = False) -> Program:
    def subtype(sub: str, sup: str) -> bool:
        return sup in program.ancestors(sub)

    return program.with_methods(transform_body(m, null_checks, bounds_checks, subtype)
                                for m in program.methods)

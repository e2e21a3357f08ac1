"""Structural checks over a parsed program, plus static expression types."""

from __future__ import annotations

from typing import Optional

from .ir import (
    ARITH_OPS, SPEC_OPERATORS, ArrayLength, ArrayRead, ArrayType, Assign, Binary,
    Binding, BoolLit, CaughtBind, Conditional, Diagnostic, Exc, Expr, FieldRead,
    InstanceOf, IntLit, Invoke, IsVoid, Line, Local, MethodDecl, NewArray,
    NewObject, NullLit, Old, PredicateApply, Program, Quantifier, Raise, RefType,
    Require, Ensure, Result, ReturnWhen, Thrown, Throw, TypeExpr, Unary, VoidLit,
    VoidType, BUILTIN_CLASSES, BOOL, INT, THROWABLE_T, children, falls_through,
    instr_exprs, jump_targets,
)

NULL_T = RefType("$null")


def expr_type(e: Expr, env: dict[str, TypeExpr], program: Program,
              ret: Optional[TypeExpr] = None) -> Optional[TypeExpr]:
    """Static type of ``e``; None when it cannot be determined."""
    if isinstance(e, IntLit):
        return INT
    if isinstance(e, BoolLit):
        return BOOL
    if isinstance(e, NullLit):
        return NULL_T
    if isinstance(e, (VoidLit, Thrown, Exc)):
        return THROWABLE_T
    if isinstance(e, Result):
        return ret
    if isinstance(e, Local):
        return env.get(e.name)
    if isinstance(e, Binding):
        return e.var_type
    if isinstance(e, FieldRead):
        t = expr_type(e.target, env, program, ret)
        if isinstance(t, RefType):
            hit = program.lookup_field(t.name, e.field)
            return hit[1] if hit else None
        return None
    if isinstance(e, ArrayRead):
        t = expr_type(e.target, env, program, ret)
        return t.elem if isinstance(t, ArrayType) else None
    if isinstance(e, ArrayLength):
        return INT
    if isinstance(e, Unary):
        return expr_type(e.arg, env, program, ret) if e.op == "neg" else BOOL
    if isinstance(e, Binary):
        return INT if e.op in ARITH_OPS else BOOL
    if isinstance(e, Conditional):
        return expr_type(e.then, env, program, ret)
    if isinstance(e, (InstanceOf, IsVoid, Quantifier)):
        return BOOL
    if isinstance(e, Old):
        return expr_type(e.arg, env, program, ret)
    if isinstance(e, PredicateApply):
        if e.name == "conditional" and len(e.args) == 3:
            return expr_type(e.args[1], env, program, ret)
        return BOOL
    return None


def field_owner(e: FieldRead, env: dict[str, TypeExpr], program: Program) -> Optional[str]:
    """Declaring class of the field read by ``e``."""
    t = expr_type(e.target, env, program)
    if isinstance(t, RefType):
        hit = program.lookup_field(t.name, e.field)
        return hit[0] if hit else None
    return None


def resolve_invoke(call: Invoke, env: dict[str, TypeExpr], program: Program) -> Optional[MethodDecl]:
    if call.receiver is not None:
        t = expr_type(call.receiver, env, program)
        if not isinstance(t, RefType):
            return None
        return program.lookup_method(t.name, call.name)
    if call.cls is None:
        return None
    return program.lookup_method(call.cls, call.name)


def resolve_predicate(name: str, owner: str, program: Program) -> Optional[MethodDecl]:
    qname = name if "." in name else f"{owner}.{name}"
    if "." in name:
        cls, pname = name.split(".", 1)
        m = program.lookup_method(cls, pname)
    else:
        m = program.lookup_method(owner, name)
    if m is None:
        m = program.method_table.get(qname)
    return m if m is not None and m.is_predicate else None


def _check_hierarchy(program: Program) -> list[Diagnostic]:
    diags = []
    seen: dict[str, object] = {c.name: c for c in BUILTIN_CLASSES}
    for c in program.classes:
        if c.name in seen:
            diags.append(Diagnostic("V3", f"duplicate class {c.name!r}", c.pos))
        seen[c.name] = c
    table = program.class_table
    for c in program.classes:
        if c.parent is not None and c.parent not in table:
            diags.append(Diagnostic("V1", f"unknown class {c.parent!r}", c.pos))
    reported: set[str] = set()
    for c in program.classes:
        path = []
        cur = c.name
        while cur is not None and cur in table and cur not in path:
            path.append(cur)
            cur = table[cur].parent
        if cur is not None and cur in path:
            cycle = frozenset(path[path.index(cur):])
            if not cycle & reported:
                reported |= cycle
                names = " -> ".join(sorted(cycle))
                diags.append(Diagnostic("V2", f"cyclic hierarchy: {names}", c.pos))
    for c in program.classes:
        names = [f for f, _ in c.fields]
        for f, t in c.fields:
            if names.count(f) > 1:
                diags.append(Diagnostic("V3", f"duplicate field {c.name}.{f}", c.pos))
                break
        for f, t in c.fields:
            diags.extend(_check_type(t, program, c.pos))
    return diags


def _check_type(t: TypeExpr, program: Program, pos) -> list[Diagnostic]:
    if isinstance(t, ArrayType):
        if isinstance(t.elem, ArrayType):
            return [Diagnostic("V21", "nested array types are not supported", pos)]
        return _check_type(t.elem, program, pos)
    if isinstance(t, RefType) and t.name not in program.class_table:
        return [Diagnostic("V1", f"unknown class {t.name!r}", pos)]
    return []


def _is_exception_type(t: Optional[TypeExpr], program: Program) -> bool:
    return (isinstance(t, RefType) and t.name in program.class_table
            and program.is_exception(t.name))


def _check_method(m: MethodDecl, program: Program) -> list[Diagnostic]:
    diags: list[Diagnostic] = []
    pos = m.pos
    if m.owner not in program.class_table:
        diags.append(Diagnostic("V1", f"unknown class {m.owner!r}", pos))
    for _, t in m.params + m.locals:
        diags.extend(_check_type(t, program, pos))
    if not isinstance(m.ret, VoidType):
        diags.extend(_check_type(m.ret, program, pos))
    names = ["this"] + [n for n, _ in m.params] + [n for n, _ in m.locals]
    dup = {n for n in names if names.count(n) > 1}
    for n in sorted(dup):
        diags.append(Diagnostic("V10", f"duplicate variable {n!r}", pos))

    for a in m.annotations:
        preds = []
        if isinstance(a, (Require, Ensure)):
            preds.append(a.pred)
        elif isinstance(a, Raise):
            preds.append(a.when)
            if a.exc not in program.class_table or not program.is_exception(a.exc):
                diags.append(Diagnostic("V7", f"@raise class {a.exc!r} is not an exception", pos))
        elif isinstance(a, ReturnWhen) and a.when is not None:
            preds.append(a.when)
        for p in preds:
            if resolve_predicate(p, m.owner, program) is None:
                diags.append(Diagnostic("V11", f"unknown predicate {p!r}", pos))

    if m.body is None:
        return diags
    env = m.var_types
    labels: dict[str, int] = {}
    for i, ln in enumerate(m.body):
        for lb in ln.labels:
            if lb in labels:
                diags.append(Diagnostic("V5", f"duplicate label {lb!r}", ln.pos))
            labels.setdefault(lb, i)

    handler_starts = set()
    for t in m.traps:
        tpos = t.pos
        for lb in (t.begin, t.end, t.handler):
            if lb not in labels:
                diags.append(Diagnostic("V4", f"unknown label {lb!r} in trap", tpos))
        if t.exc not in program.class_table or not program.is_exception(t.exc):
            diags.append(Diagnostic("V7", f"trap type {t.exc!r} is not an exception", tpos))
        if t.begin in labels and t.end in labels and t.handler in labels:
            b, e, h = labels[t.begin], labels[t.end], labels[t.handler]
            if b >= e:
                diags.append(Diagnostic("V6", "trap range is empty", tpos))
            elif b <= h < e:
                diags.append(Diagnostic("V6", "trap handler lies inside its range", tpos))
            handler_starts.add(h)

    for i, ln in enumerate(m.body):
        ins = ln.instr
        for lb in jump_targets(ins):
            if lb not in labels:
                diags.append(Diagnostic("V4", f"unknown label {lb!r}", ln.pos))
        if isinstance(ins, Throw):
            t = env.get(ins.arg.name)
            if t is None:
                diags.append(Diagnostic("V10", f"unknown local {ins.arg.name!r}", ln.pos))
            elif not _is_exception_type(t, program):
                diags.append(Diagnostic("V8", "thrown value is not a Throwable", ln.pos))
        if isinstance(ins, CaughtBind):
            if i not in handler_starts:
                diags.append(Diagnostic("V9", "@caught outside a handler entry", ln.pos))
            if ins.lhs.name not in env:
                diags.append(Diagnostic("V10", f"unknown local {ins.lhs.name!r}", ln.pos))
        if isinstance(ins, Assign):
            diags.extend(_check_assign(ins, m, program, ln))
        for _, e in instr_exprs(ins):
            diags.extend(_check_expr(e, m, program, ln, set()))
    if m.body and falls_through(m.body[-1].instr):
        diags.append(Diagnostic("V13", "control can fall off the end of the body",
                                m.body[-1].pos))
    if not m.body:
        diags.append(Diagnostic("V13", "empty body", pos))
    return diags


def _check_assign(ins: Assign, m: MethodDecl, program: Program, ln: Line) -> list[Diagnostic]:
    diags = []
    env = m.var_types
    lhs, rhs = ins.lhs, ins.rhs
    if isinstance(lhs, Local) and lhs.name not in env:
        diags.append(Diagnostic("V10", f"unknown local {lhs.name!r}", ln.pos))
    if lhs is not None and not isinstance(lhs, Local) and isinstance(rhs, (Invoke, NewObject, NewArray)):
        diags.append(Diagnostic("V20", "calls and allocations must assign a local", ln.pos))
    if isinstance(lhs, (FieldRead, ArrayRead)):
        diags.extend(_check_expr(lhs, m, program, ln, set()))
    if isinstance(rhs, NewObject) and rhs.cls not in program.class_table:
        diags.append(Diagnostic("V1", f"unknown class {rhs.cls!r}", ln.pos))
    if isinstance(rhs, NewArray):
        diags.extend(_check_type(ArrayType(rhs.elem), program, ln.pos))
    if isinstance(rhs, Invoke):
        callee = resolve_invoke(rhs, env, program)
        if callee is None:
            where = rhs.cls if rhs.receiver is None else "receiver"
            diags.append(Diagnostic("V12", f"unknown method {rhs.name!r} on {where}", ln.pos))
        else:
            if len(callee.params) != len(rhs.args):
                diags.append(Diagnostic("V12", f"{callee.qname} expects {len(callee.params)} "
                                        f"arguments, got {len(rhs.args)}", ln.pos))
            if callee.is_predicate:
                diags.append(Diagnostic("V19", f"predicate {callee.qname} cannot be invoked",
                                        ln.pos))
            if lhs is not None and isinstance(callee.ret, VoidType):
                diags.append(Diagnostic("V20", f"{callee.qname} returns no value", ln.pos))
    return diags


def _check_expr(e: Expr, m: MethodDecl, program: Program, ln: Line,
                bound: set[str]) -> list[Diagnostic]:
    diags = []
    env = m.var_types
    if isinstance(e, Local) and e.name not in env and e.name not in bound:
        diags.append(Diagnostic("V10", f"unknown local {e.name!r}", ln.pos))
    elif isinstance(e, Old) and not m.is_predicate:
        diags.append(Diagnostic("V14", "old() is only allowed in postcondition predicates",
                                ln.pos))
    elif isinstance(e, Quantifier):
        if e.var in bound:
            diags.append(Diagnostic("V15", f"bound variable {e.var!r} shadows an "
                                    "enclosing binder", ln.pos))
        return diags + _check_expr(e.body, m, program, ln, bound | {e.var})
    elif isinstance(e, FieldRead):
        t = expr_type(e.target, {**env, **{b: INT for b in bound}}, program)
        if isinstance(t, RefType) and program.lookup_field(t.name, e.field) is None:
            diags.append(Diagnostic("V17", f"unknown field {t.name}.{e.field}", ln.pos))
    elif isinstance(e, InstanceOf) and e.cls not in program.class_table:
        diags.append(Diagnostic("V1", f"unknown class {e.cls!r}", ln.pos))
    elif isinstance(e, PredicateApply):
        arity = SPEC_OPERATORS.get(e.name)
        if arity is not None:
            if arity != len(e.args):
                diags.append(Diagnostic("V12", f"{e.name} expects {arity} arguments", ln.pos))
        elif resolve_predicate(e.name, m.owner, program) is None:
            diags.append(Diagnostic("V11", f"unknown predicate {e.name!r}", ln.pos))
    for k in children(e):
        diags.extend(_check_expr(k, m, program, ln, bound))
    return diags


def validate_program(program: Program) -> list[Diagnostic]:
    """All structural diagnostics of ``program`` (empty when well-formed).

    Deterministic: the result depends only on the program's structure and
    positions, so validating twice gives identical lists.
    """
    diags = _check_hierarchy(program)
    seen: set[str] = set()
    for m in program.methods:
        if m.qname in seen:
            diags.append(Diagnostic("V16", f"duplicate method {m.qname}", m.pos))
        seen.add(m.qname)
        diags.extend(_check_method(m, program))
    return diags

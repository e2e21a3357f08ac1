"""Contract resolution: attachment, shorthand desugaring, predicate checks.

Annotations name predicate methods.  This module turns them into
``Contract`` objects whose clauses are expressions over the method's
parameters plus the ``@result``/``@exc`` binders, and checks that every
predicate involved is well formed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from .ir import (
    SPEC_OPERATORS, THROWABLE_T, TRUE, ArrayLength, ArrayRead, Attach, Binary, BoolType,
    Diagnostic, FieldRead, Ensure,
    Exc, Expr, InstanceOf, IsVoid, Local, MethodDecl, Old, PredicateApply, Program,
    Quantifier, Raise, Require, Result, ReturnWhen, TypeExpr, VimpError, VoidType,
    CONTRACT_ANNOTATIONS, map_expr, substitute, walk,
)
from .validate import resolve_predicate


@dataclass(frozen=True)
class Clause:
    expr: Expr
    origin: str  # rendered annotation, for error reports


@dataclass(frozen=True)
class Contract:
    requires: tuple[Clause, ...] = ()
    ensures: tuple[Clause, ...] = ()

    @property
    def empty(self) -> bool:
        return not self.requires and not self.ensures


@dataclass(frozen=True)
class PredicateInfo:
    qname: str
    params: tuple[tuple[str, TypeExpr], ...]
    body: Expr


@dataclass
class ResolvedSpec:
    program: Program
    contracts: dict[str, Contract] = field(default_factory=dict)
    predicates: dict[str, PredicateInfo] = field(default_factory=dict)
    diagnostics: list[Diagnostic] = field(default_factory=list)


# ---------------------------------------------------------------------------
# predicates


def predicate_body(pred: MethodDecl, program: Program) -> Expr:
    """The single Boolean expression a predicate computes."""
    from .agg import aggregate_method
    from .inst import transform_instructions

    m = transform_instructions(aggregate_method(pred), program)
    return m.body[0].instr.value


def _callees(e: Expr) -> list[str]:
    return [x.name for x in walk(e)
            if isinstance(x, PredicateApply) and SPEC_OPERATORS.get(x.name) != len(x.args)]


def _is_throwable(t: TypeExpr) -> bool:
    return t == THROWABLE_T


def binder_layout(pred: MethodDecl, method: MethodDecl) -> Optional[tuple[bool, bool]]:
    """Which of (result, exc) the extra trailing parameters of ``pred`` bind.

    None when ``pred`` does not fit ``method`` as a postcondition.
    """
    base = [t for _, t in method.params]
    ps = [t for _, t in pred.params]
    if ps[:len(base)] != base:
        return None
    extra = ps[len(base):]
    has_result = not isinstance(method.ret, VoidType)
    if not extra:
        return (False, False)
    if len(extra) == 1:
        if has_result and extra[0] == method.ret and not _is_throwable(extra[0]):
            return (True, False)
        if _is_throwable(extra[0]):
            return (False, True)
        if has_result and extra[0] == method.ret:
            return (True, False)
        return None
    if len(extra) == 2 and has_result and extra[0] == method.ret and _is_throwable(extra[1]):
        return (True, True)
    return None


def check_predicate(pred: MethodDecl, program: Program, method: Optional[MethodDecl] = None,
                    usage: str = "require", _stack: tuple[str, ...] = ()) -> list[Diagnostic]:
    """Well-formedness of ``pred`` as used by ``method`` in ``usage`` position.

    P1: not Boolean.  P2: signature does not fit the method.  P3: the body
    is not one pure straight-line expression.  P4: a predicate it calls is
    missing, ill-formed, or part of a recursive cycle.
    """
    out: list[Diagnostic] = []
    if not isinstance(pred.ret, BoolType):
        out.append(Diagnostic("P1", f"predicate {pred.qname} must return bool", pred.pos))
    if method is not None:
        if usage == "ensure":
            ok = binder_layout(pred, method) is not None
        else:
            ok = [t for _, t in pred.params] == [t for _, t in method.params]
        if not ok:
            out.append(Diagnostic("P2", f"predicate {pred.qname} does not match the "
                                  f"signature of {method.qname} ({usage})", pred.pos))
    if pred.body is None:
        out.append(Diagnostic("P3", f"predicate {pred.qname} has no body", pred.pos))
        return out
    try:
        body = predicate_body(pred, program)
    except VimpError as err:
        out.append(Diagnostic("P3", f"predicate {pred.qname} is not a single aggregable "
                              f"expression ({err.diagnostics[0].code})", pred.pos))
        return out
    stack = _stack + (pred.qname,)
    for name in _callees(body):
        callee = resolve_predicate(name, pred.owner, program)
        if callee is None:
            out.append(Diagnostic("P4", f"{pred.qname} calls {name}, which is not a "
                                  "predicate", pred.pos))
        elif callee.qname in stack:
            out.append(Diagnostic("P4", f"recursive predicate {callee.qname}", pred.pos))
        elif check_predicate(callee, program, None, usage, stack):
            out.append(Diagnostic("P4", f"{pred.qname} calls ill-formed predicate "
                                  f"{callee.qname}", pred.pos))
    return out


# ---------------------------------------------------------------------------
# desugaring


def _args(method: MethodDecl) -> tuple[Expr, ...]:
    return tuple(Local(n) for n, _ in method.params)


def _resolve(name: str, method: MethodDecl, program: Program) -> MethodDecl:
    pred = resolve_predicate(name, method.owner, program)
    if pred is None:
        raise VimpError([Diagnostic("V11", f"unknown predicate {name!r} in contract of "
                                    f"{method.qname}", method.pos)])
    return pred


def _apply_pre(name: str, method: MethodDecl, program: Program) -> Expr:
    pred = _resolve(name, method, program)
    if [t for _, t in pred.params] != [t for _, t in method.params]:
        raise VimpError([Diagnostic("P2", f"predicate {name} does not take the parameters "
                                    f"of {method.qname}", method.pos)])
    return PredicateApply(name, _args(method))


def desugar_shorthand(annotation, method: MethodDecl, program: Program) -> Expr:
    """The clause an annotation stands for.

    ``@raise(E, p)``: if ``p`` held on entry, an ``E`` escapes.
    ``@returns(p)``: if ``p`` held on entry, the method returns normally.
    """
    if isinstance(annotation, Raise):
        when = Old(_apply_pre(annotation.when, method, program))
        return Binary("implies", when, InstanceOf(Exc(), annotation.exc))
    if isinstance(annotation, ReturnWhen):
        if annotation.when is None:
            when = Old(TRUE)
        else:
            when = Old(_apply_pre(annotation.when, method, program))
        return Binary("implies", when, IsVoid(Exc()))
    if isinstance(annotation, Require):
        return _apply_pre(annotation.pred, method, program)
    if isinstance(annotation, Ensure):
        pred = _resolve(annotation.pred, method, program)
        layout = binder_layout(pred, method)
        if layout is None:
            raise VimpError([Diagnostic("P2", f"predicate {annotation.pred} does not fit "
                                        f"the postcondition of {method.qname}", method.pos)])
        args = _args(method) + ((Result(),) if layout[0] else ()) + ((Exc(),) if layout[1] else ())
        return PredicateApply(annotation.pred, args)
    raise TypeError(f"not a contract annotation: {annotation!r}")


def _origin(a) -> str:
    from .syntax import render_annotation
    return render_annotation(a)


def build_contract(method: MethodDecl, program: Program) -> tuple[Contract, list[Diagnostic]]:
    requires, ensures, diags = [], [], []
    for a in method.annotations:
        if not isinstance(a, CONTRACT_ANNOTATIONS):
            continue
        names = []
        if isinstance(a, (Require, Ensure)):
            names.append(a.pred)
        elif isinstance(a, Raise) or (isinstance(a, ReturnWhen) and a.when):
            names.append(a.when)
        usage = "ensure" if isinstance(a, Ensure) else "require"
        bad = False
        for name in names:
            pred = resolve_predicate(name, method.owner, program)
            if pred is None:
                diags.append(Diagnostic("V11", f"unknown predicate {name!r}", method.pos))
                bad = True
                continue
            found = check_predicate(pred, program, method, usage)
            diags.extend(found)
            bad = bad or bool(found)
        if bad:
            continue
        clause = Clause(desugar_shorthand(a, method, program), _origin(a))
        (requires if isinstance(a, Require) else ensures).append(clause)
    return Contract(tuple(requires), tuple(ensures)), diags


# ---------------------------------------------------------------------------
# attachment


def _signature(m: MethodDecl):
    return (m.name, tuple(t for _, t in m.params), m.ret)


def _qualify(a, spec_cls: str):
    def q(name):
        return name if name is None or "." in name else f"{spec_cls}.{name}"

    if isinstance(a, Require):
        return Require(q(a.pred))
    if isinstance(a, Ensure):
        return Ensure(q(a.pred))
    if isinstance(a, Raise):
        return Raise(a.exc, q(a.when))
    if isinstance(a, ReturnWhen):
        return ReturnWhen(q(a.when))
    return a


def resolve_attach(program: Program) -> tuple[Program, list[Diagnostic]]:
    """Copy contracts from ``@attach(I)`` classes onto ``I``'s methods.

    Only contracts move; bodies and predicate status stay where they are.
    Attaching the same contract twice is harmless, so the operation is
    idempotent.
    """
    diags: list[Diagnostic] = []
    incoming: dict[str, tuple[str, tuple]] = {}
    for cls in program.classes:
        for a in cls.annotations:
            if not isinstance(a, Attach):
                continue
            if a.cls not in program.class_table:
                diags.append(Diagnostic("A1", f"{cls.name} attaches to undefined class "
                                        f"{a.cls}", cls.pos))
                continue
            targets = {_signature(m): m for m in program.methods if m.owner == a.cls}
            matched = False
            for sm in program.methods:
                if sm.owner != cls.name:
                    continue
                tm = targets.get(_signature(sm))
                if sm.is_predicate:
                    if tm is not None:
                        diags.append(Diagnostic("A3", f"attaching predicate {sm.qname} is "
                                                "not supported", sm.pos, "warning"))
                    continue
                contract = tuple(_qualify(x, cls.name) for x in sm.annotations
                                 if isinstance(x, CONTRACT_ANNOTATIONS))
                if tm is None or not contract:
                    continue
                matched = True
                prev = incoming.get(tm.qname)
                if prev is not None and prev[1] != contract:
                    diags.append(Diagnostic("A2", f"{tm.qname} receives different contracts "
                                            f"from {prev[0]} and {cls.name}", cls.pos))
                    continue
                incoming[tm.qname] = (cls.name, contract)
            if not matched:
                diags.append(Diagnostic("A3", f"@attach({a.cls}) on {cls.name} matches no "
                                        "method", cls.pos, "warning"))
    methods = []
    for m in program.methods:
        got = incoming.get(m.qname)
        if got is None:
            methods.append(m)
            continue
        own = tuple(x for x in m.annotations if isinstance(x, CONTRACT_ANNOTATIONS))
        if own and own != got[1]:
            diags.append(Diagnostic("A2", f"{m.qname} has its own contract and an attached "
                                    f"one from {got[0]}", m.pos))
            methods.append(m)
            continue
        if own == got[1]:
            methods.append(m)
            continue
        methods.append(replace(m, annotations=m.annotations + got[1]))
    return program.with_methods(methods), diags


def resolve_specs(program: Program) -> ResolvedSpec:
    """Attach, check and desugar every contract of ``program``."""
    program, diags = resolve_attach(program)
    spec = ResolvedSpec(program, diagnostics=diags)
    for m in program.methods:
        if m.is_predicate:
            found = check_predicate(m, program)
            spec.diagnostics.extend(found)
            if not found:
                spec.predicates[m.qname] = PredicateInfo(m.qname, m.params,
                                                         predicate_body(m, program))
            continue
        contract, found = build_contract(m, program)
        spec.diagnostics.extend(found)
        if not contract.empty:
            spec.contracts[m.qname] = contract
    # several clauses can share one bad predicate
    seen, unique = set(), []
    for d in spec.diagnostics:
        key = (d.code, d.message, d.pos)
        if key not in seen:
            seen.add(key)
            unique.append(d)
    spec.diagnostics = unique
    return spec


# ---------------------------------------------------------------------------
# comparison


def unfold_predicates(e: Expr, owner: str, program: Program) -> Expr:
    """Inline every predicate application, recursively."""
    counter = [0]

    def fn(x: Expr) -> Optional[Expr]:
        if isinstance(x, PredicateApply) and SPEC_OPERATORS.get(x.name) != len(x.args):
            pred = resolve_predicate(x.name, owner, program)
            if pred is None:
                return None
            body = _freshen(predicate_body(pred, program), counter)
            env = {n: unfold_predicates(a, owner, program)
                   for (n, _), a in zip(pred.params, x.args)}
            return unfold_predicates(substitute(body, env), pred.owner, program)
        return None

    return map_expr(e, fn)


def _freshen(e: Expr, counter: list[int]) -> Expr:
    def fn(x: Expr) -> Optional[Expr]:
        if isinstance(x, Quantifier):
            counter[0] += 1
            new = f"{x.var}$u{counter[0]}"
            body = _freshen(substitute(x.body, {x.var: Local(new)}), counter)
            return Quantifier(x.kind, new, x.var_type, body)
        return None

    return map_expr(e, fn)


def _reads_heap(e: Expr) -> bool:
    return any(isinstance(x, (FieldRead, ArrayRead, ArrayLength)) for x in walk(e))


def canonical(e: Expr, depth: int = 0) -> Expr:
    """Bound variables renamed by depth, nested ``old`` collapsed.

    ``old`` around a heap-free expression is dropped: parameters in a
    contract always denote their entry values.
    """
    def fn(x: Expr) -> Optional[Expr]:
        if isinstance(x, Quantifier):
            name = f"$q{depth}"
            body = substitute(x.body, {x.var: Local(name)})
            return Quantifier(x.kind, name, x.var_type, canonical(body, depth + 1))
        if isinstance(x, Old):
            inner = canonical(strip_old(x.arg), depth)
            return inner if not _reads_heap(inner) else Old(inner)
        return None

    return map_expr(e, fn)


def strip_old(e: Expr) -> Expr:
    """Drop ``old`` wrappers; used under an enclosing ``old``."""
    return map_expr(e, lambda x: strip_old(x.arg) if isinstance(x, Old) else None)


def alpha_equivalent(a: Expr, b: Expr, owner: str, program: Program) -> bool:
    return canonical(unfold_predicates(a, owner, program)) == \
        canonical(unfold_predicates(b, owner, program))

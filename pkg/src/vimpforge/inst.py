"""Expected types, integer-to-Boolean translation and quantifier lifting.

Bytecode has no Boolean type, so specification code reaches us written with
integer conventions: constants ``0``/``1`` stand for truth values, unary
minus doubles as negation, and the spec library's named operators (``lte``,
``implies``...) stand for native ones.  This pass decides, for every
expression occurrence, whether its context wants an ``int`` or a ``bool``
and rewrites it accordingly.  Instructions keep their shape.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Optional

from .ir import (
    ARITH_OPS, CMP_OPS, LOGIC_OPS, SPEC_OPERATORS, ArrayLength, ArrayRead, ArrayType,
    Assign, Binary, Binding, BoolLit, BoolType, Conditional, Diagnostic,
    Exc, Expr, FieldRead, IfGoto, IntLit, IntType, Invoke, Local,
    MethodDecl, NewArray, NullLit, Old, PredicateApply, Program, Quantifier, RefType,
    Result, Return, SPEC_STMTS, Thrown, TypeExpr, Unary, VimpError, VoidLit,
    BOOL, INT, THROWABLE_T, children, map_expr, map_instr_exprs, walk, with_children,
)
from .validate import NULL_T, resolve_invoke, resolve_predicate

Path = tuple[int, ...]
ExpectedTypeMap = dict[tuple[int, str], dict[Path, TypeExpr]]


class _Flex:
    """Natural type of integer constants: whatever the context asks for."""

    def __repr__(self) -> str:
        return "FLEX"


FLEX = _Flex()

_NATIVE = {"lt": "lt", "lte": "le", "gt": "gt", "gte": "ge", "eq": "eq", "neq": "ne"}
_INT_CMP = ("lt", "lte", "gt", "gte")


def _clash(nat, exp) -> bool:
    if nat is FLEX or nat is None or exp is None:
        return False
    prim = (IntType, BoolType)
    if isinstance(nat, prim) or isinstance(exp, prim):
        return type(nat) is not type(exp)
    return False


class _Typer:
    def __init__(self, method: MethodDecl, program: Program):
        self.method = method
        self.program = program
        self.env = method.var_types
        self.ret = BOOL if method.is_predicate else method.ret

    def natural(self, e: Expr):
        if isinstance(e, IntLit):
            return FLEX
        if isinstance(e, BoolLit):
            return BOOL
        if isinstance(e, NullLit):
            return NULL_T
        if isinstance(e, (VoidLit, Thrown, Exc)):
            return THROWABLE_T
        if isinstance(e, Result):
            return self.ret
        if isinstance(e, Local):
            return self.env.get(e.name)
        if isinstance(e, Binding):
            return e.var_type
        if isinstance(e, FieldRead):
            t = self.natural(e.target)
            if isinstance(t, RefType):
                hit = self.program.lookup_field(t.name, e.field)
                return hit[1] if hit else None
            return None
        if isinstance(e, ArrayRead):
            t = self.natural(e.target)
            return t.elem if isinstance(t, ArrayType) else None
        if isinstance(e, ArrayLength):
            return INT
        if isinstance(e, Unary):
            return self.natural(e.arg) if e.op == "neg" else BOOL
        if isinstance(e, Binary):
            return INT if e.op in ARITH_OPS else BOOL
        if isinstance(e, Conditional):
            return self._join(e.then, e.other)
        if isinstance(e, Old):
            return self.natural(e.arg)
        if isinstance(e, PredicateApply) and e.name == "conditional" and len(e.args) == 3:
            return self._join(e.args[1], e.args[2])
        return BOOL  # instanceof, isvoid, quantifiers, predicates, comparisons

    def _join(self, a: Expr, b: Expr):
        ta = self.natural(a)
        return self.natural(b) if ta is FLEX else ta

    def _eq_operand(self, a: Expr, b: Expr) -> Optional[TypeExpr]:
        for side in (a, b):
            t = self.natural(side)
            if t is not FLEX:
                return t if isinstance(t, (IntType, BoolType)) else None
        return INT

    def demand(self, e: Expr, exp: Optional[TypeExpr], path: Path,
               out: dict[Path, TypeExpr], where) -> None:
        nat = self.natural(e)
        if _clash(nat, exp):
            raise VimpError([Diagnostic(
                "T1", f"expression expected to be {exp} but is {nat}", where)])
        eff = exp if exp is not None and (nat is FLEX or nat is None) else nat
        if eff is FLEX:
            eff = INT
        if eff is not None:
            out[path] = eff
        for i, (kid, kexp) in enumerate(zip(children(e), self._child_demands(e, eff))):
            self.demand(kid, kexp, path + (i,), out, where)

    def _child_demands(self, e: Expr, eff) -> list:
        n = len(children(e))
        if isinstance(e, ArrayRead):
            return [None, INT]
        if isinstance(e, Unary):
            return [eff if e.op == "neg" else BOOL]
        if isinstance(e, Binary):
            if e.op in ARITH_OPS or e.op in CMP_OPS:
                return [INT, INT]
            if e.op in LOGIC_OPS:
                return [BOOL, BOOL]
            t = self._eq_operand(e.left, e.right)
            return [t, t]
        if isinstance(e, Conditional):
            return [BOOL, eff, eff]
        if isinstance(e, Old):
            return [eff]
        if isinstance(e, Quantifier):
            return [BOOL]
        if isinstance(e, PredicateApply):
            name = e.name
            if name in SPEC_OPERATORS and SPEC_OPERATORS[name] == n:
                if name in _INT_CMP:
                    return [INT, INT]
                if name in ("eq", "neq"):
                    t = self._eq_operand(e.args[0], e.args[1])
                    return [t, t]
                if name in ("not", "implies"):
                    return [BOOL] * n
                if name == "conditional":
                    return [BOOL, eff, eff]
                return [None, BOOL]  # forall / exists
            pm = resolve_predicate(name, self.method.owner, self.program)
            if pm is not None and len(pm.params) == n:
                return [t for _, t in pm.params]
        return [None] * n

    def slot_demands(self, ins) -> dict[str, Optional[TypeExpr]]:
        out: dict[str, Optional[TypeExpr]] = {}
        if isinstance(ins, Assign):
            lhs, rhs = ins.lhs, ins.rhs
            target = None
            if isinstance(lhs, Local):
                target = self.env.get(lhs.name)
            elif isinstance(lhs, FieldRead):
                out["lhs.0"] = None
                target = self.natural(lhs)
            elif isinstance(lhs, ArrayRead):
                out["lhs.0"], out["lhs.1"] = None, INT
                target = self.natural(lhs)
            if isinstance(rhs, Invoke):
                out["recv"] = None
                callee = resolve_invoke(rhs, self.env, self.program)
                params = [t for _, t in callee.params] if callee else []
                for i in range(len(rhs.args)):
                    out[f"arg.{i}"] = params[i] if i < len(params) else None
            elif isinstance(rhs, NewArray):
                out["len"] = INT
            else:
                out["rhs"] = target
        elif isinstance(ins, IfGoto):
            out["cond"] = BOOL
        elif isinstance(ins, Return):
            out["value"] = self.ret
        elif isinstance(ins, SPEC_STMTS):
            out["spec"] = BOOL
        return out


def _slots(ins) -> dict[str, Expr]:
    from .ir import instr_exprs
    return dict(instr_exprs(ins))


def infer_expected_types(method: MethodDecl, program: Program) -> ExpectedTypeMap:
    """Expected type of every expression occurrence, keyed by line and slot.

    Each slot maps paths (child-index tuples from the slot's root) to types.
    """
    typer = _Typer(method, program)
    result: ExpectedTypeMap = {}
    for i, ln in enumerate(method.body or ()):
        if _is_binding_decl(ln.instr):
            continue
        demands = typer.slot_demands(ln.instr)
        for slot, e in _slots(ln.instr).items():
            out: dict[Path, TypeExpr] = {}
            typer.demand(e, demands.get(slot), (), out, ln.pos)
            result[(i, slot)] = out
    return result


def _is_binding_decl(ins) -> bool:
    return isinstance(ins, Assign) and isinstance(ins.rhs, Binding)


def to_boolean_expr(expr: Expr, expected: dict[Path, TypeExpr], path: Path = ()) -> Expr:
    """Rewrite integer encodings according to ``expected``.

    Spec-library operators become native operators everywhere.  In Boolean
    positions, constants ``k >= 1`` become true, smaller ones false, and
    unary minus becomes negation (also when applied to a constant).
    """
    want_bool = isinstance(expected.get(path), BoolType)
    if want_bool and isinstance(expr, IntLit):
        return BoolLit(expr.value >= 1)
    kids = tuple(to_boolean_expr(k, expected, path + (i,))
                 for i, k in enumerate(children(expr)))
    if want_bool and isinstance(expr, Unary) and expr.op == "neg":
        return Unary("not", kids[0])
    if isinstance(expr, PredicateApply) and SPEC_OPERATORS.get(expr.name) == len(kids):
        name = expr.name
        if name in _NATIVE:
            return Binary(_NATIVE[name], kids[0], kids[1])
        if name == "not":
            return Unary("not", kids[0])
        if name == "implies":
            return Binary("implies", kids[0], kids[1])
        if name == "conditional":
            return Conditional(*kids)
        return PredicateApply(name, kids)
    return with_children(expr, kids) if kids else expr


def lift_quantifiers(expr: Expr, where=None, seen: Optional[set] = None) -> Expr:
    """Turn ``forall(binding T v, body)`` intrinsics into quantifier nodes.

    Inner quantifiers are resolved first.  A binding that ends up bound by
    two quantifiers, or that survives outside any quantifier, is an error.
    """
    from .ir import NOPOS
    where = where or NOPOS
    seen = set() if seen is None else seen

    def lift(e: Expr) -> Expr:
        kids = tuple(lift(k) for k in children(e))
        if isinstance(e, PredicateApply) and e.name in ("forall", "exists") and len(kids) == 2:
            binder = kids[0]
            if not isinstance(binder, Binding):
                raise VimpError([Diagnostic("Q1", f"{e.name} needs a binding as its "
                                            "first argument", where)])
            if binder.var in seen:
                raise VimpError([Diagnostic("Q1", f"binding {binder.var!r} is used by two "
                                            "quantifiers", where)])
            seen.add(binder.var)
            body = map_expr(kids[1], lambda x: Local(binder.var) if x == binder else None)
            return Quantifier(e.name, binder.var, binder.var_type, body)
        return with_children(e, kids) if kids else e

    out = lift(expr)
    for x in walk(out):
        if isinstance(x, Binding):
            raise VimpError([Diagnostic("Q1", f"binding {x.var!r} is not used by a "
                                        "quantifier", where)])
    return out


def transform_instructions(method: MethodDecl, program: Program) -> MethodDecl:
    """Apply the Boolean translation and quantifier lifting to every slot."""
    if method.body is None:
        return method
    for ln in method.body:
        if _is_binding_decl(ln.instr):
            raise VimpError([Diagnostic("Q1", f"binding {ln.instr.lhs.name!r} is not used "
                                        "by a quantifier", ln.pos)])
    expected = infer_expected_types(method, program)
    seen: set[str] = set()
    lines = []
    for i, ln in enumerate(method.body):
        def fn(slot: str, e: Expr, i=i, ln=ln) -> Expr:
            e = to_boolean_expr(e, expected.get((i, slot), {}))
            return lift_quantifiers(e, ln.pos, seen)
        lines.append(replace(ln, instr=map_instr_exprs(ln.instr, fn)))
    return replace(method, body=tuple(lines))


def transform_program(program: Program) -> Program:
    return program.with_methods(transform_instructions(m, program) for m in program.methods)

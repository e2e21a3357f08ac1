"""Boogie code generation.

The heap is one polymorphic map from (reference, field) pairs to values.
Array elements live in the same map under the injective field families
``$elem_int``, ``$elem_bool`` and ``$elem_ref``, so ``old`` only ever has to
switch a single heap.  Exception types are constants of sort ``Type``
ordered by Boogie's ``<:``; :func:`exception_axioms` pins that order down to
exactly the declared tree.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

from .ir import (
    ArrayLength, ArrayRead, ArrayType, AssertStmt, Assign, AssumeStmt, Binary,
    Binding, BoolLit, BoolType, ClassDecl, Conditional, Exc, Expr, FieldRead,
    Goto, IfGoto, InstanceOf, IntLit, IntType, Invoke, IsVoid, Line,
    Local, MethodDecl, NewArray, NewObject, Nop, NullLit, Old, Pos, PredicateApply, Program,
    Quantifier, RefType, Result, Return, Thrown, Throw, TypeExpr, Unary,
    VoidLit, VoidType, THROWABLE, jump_targets,
)
from .validate import expr_type, resolve_invoke, resolve_predicate

# ---------------------------------------------------------------------------
# subtype axioms


@dataclass(frozen=True)
class EdgeAxiom:
    child: str
    parent: str


@dataclass(frozen=True)
class DisjointAxiom:
    parent: str
    left: str
    right: str


@dataclass(frozen=True)
class OrderAxiom:
    kind: str  # reflexive | transitive | antisymmetric


ORDER_AXIOMS = (OrderAxiom("reflexive"), OrderAxiom("transitive"), OrderAxiom("antisymmetric"))


def tree_children(parents: dict[str, Optional[str]]) -> dict[str, list[str]]:
    kids: dict[str, list[str]] = {name: [] for name in parents}
    for name, parent in parents.items():
        if parent is not None:
            kids[parent].append(name)
    for v in kids.values():
        v.sort()
    return kids


def exception_axioms(parents: dict[str, Optional[str]]) -> list:
    """Axioms describing the tree given as a child -> parent mapping.

    One edge axiom per parent link and one disjointness axiom per unordered
    pair of siblings.  The order axioms common to every tree are not
    included (see :data:`ORDER_AXIOMS`).
    """
    kids = tree_children(parents)
    out: list = []
    for node in _preorder(parents, kids):
        for child in kids[node]:
            out.append(EdgeAxiom(child, node))
        for x, y in combinations(kids[node], 2):
            out.append(DisjointAxiom(node, x, y))
    return out


def _preorder(parents, kids) -> list[str]:
    roots = sorted(n for n, p in parents.items() if p is None)
    order: list[str] = []
    stack = roots[::-1]
    while stack:
        n = stack.pop()
        order.append(n)
        stack.extend(reversed(kids[n]))
    return order


def class_parents(program: Program) -> dict[str, Optional[str]]:
    return {c.name: c.parent for c in program.class_table.values()}


def exception_parents(program: Program) -> dict[str, Optional[str]]:
    return {c.name: (c.parent if c.name != THROWABLE else None)
            for c in program.class_table.values() if program.is_exception(c.name)}


def type_const(cls: str) -> str:
    return f"T.{cls}"


def render_axiom(ax) -> str:
    if isinstance(ax, EdgeAxiom):
        return f"axiom {type_const(ax.child)} <: {type_const(ax.parent)};"
    if isinstance(ax, DisjointAxiom):
        x, y = type_const(ax.left), type_const(ax.right)
        return (f"axiom (forall x: Type, y: Type :: x <: {x} && y <: {y} "
                f"==> !(x <: y) && !(y <: x));")
    if ax.kind == "reflexive":
        return "axiom (forall t: Type :: t <: t);"
    if ax.kind == "transitive":
        return "axiom (forall a: Type, b: Type, c: Type :: a <: b && b <: c ==> a <: c);"
    return "axiom (forall a: Type, b: Type :: a <: b && b <: a ==> a == b);"


def emit_exception_axioms(program: Program) -> list[str]:
    return [render_axiom(a) for a in exception_axioms(exception_parents(program))]


# ---------------------------------------------------------------------------
# output unit


@dataclass(frozen=True)
class MapEntry:
    bpl_line: int
    kind: str  # assert | smoke | requires | ensures | call
    method: str
    pos: Pos
    detail: str = ""


@dataclass
class BoogieUnit:
    lines: list[str] = field(default_factory=list)
    source_map: list[MapEntry] = field(default_factory=list)
    source_name: str = "<input>"

    @property
    def text(self) -> str:
        return "\n".join(self.lines) + "\n"

    def source_map_json(self) -> str:
        data = {
            "version": 1,
            "source": self.source_name,
            "entries": [
                {"bpl_line": e.bpl_line, "kind": e.kind, "method": e.method,
                 "ir": f"{self.source_name}:{e.pos.line}:{e.pos.col}", "detail": e.detail}
                for e in self.source_map
            ],
        }
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    def lookup(self, bpl_line: int) -> Optional[MapEntry]:
        for e in self.source_map:
            if e.bpl_line == bpl_line:
                return e
        return None


@dataclass
class EmitOptions:
    smoke: bool = False
    source_name: str = "<input>"


PRELUDE = """\
// heap and references
type Ref;
type Field a;
type Heap = <a>[Ref, Field a]a;
type Type;

const null: Ref;
const Void: Ref;
axiom null != Void;

var heap: Heap;
var thrown: Ref;

const unique $alloc: Field bool;
function typeof(r: Ref): Type;
function instanceof(r: Ref, t: Type): bool
{ r != null && r != Void && typeof(r) <: t }

// arrays
function $arrlen(r: Ref): int;
axiom (forall r: Ref :: $arrlen(r) >= 0);
function $elem_int(i: int): Field int;
function $elem_bool(i: int): Field bool;
function $elem_ref(i: int): Field Ref;
axiom (forall i: int, j: int :: $elem_int(i) == $elem_int(j) ==> i == j);
axiom (forall i: int, j: int :: $elem_bool(i) == $elem_bool(j) ==> i == j);
axiom (forall i: int, j: int :: $elem_ref(i) == $elem_ref(j) ==> i == j);
axiom (forall i: int :: $elem_bool(i) != $alloc);

// truncating integer division
function $div(a: int, b: int): int;
function $mod(a: int, b: int): int;
axiom (forall a: int, b: int :: a >= 0 && b > 0 ==> $div(a, b) == a div b && $mod(a, b) == a mod b);
axiom (forall a: int, b: int :: a < 0 && b > 0 ==> $div(a, b) == -((-a) div b) && $mod(a, b) == -((-a) mod b));
axiom (forall a: int, b: int :: a >= 0 && b < 0 ==> $div(a, b) == -(a div (-b)) && $mod(a, b) == a mod (-b));
axiom (forall a: int, b: int :: a < 0 && b < 0 ==> $div(a, b) == (-a) div (-b) && $mod(a, b) == -((-a) mod (-b)));
"""

RESERVED = {
    "heap", "thrown", "null", "Void", "typeof", "instanceof", "result", "old",
    "type", "const", "function", "axiom", "var", "procedure", "implementation",
    "requires", "ensures", "modifies", "returns", "call", "havoc", "assume",
    "assert", "goto", "return", "if", "else", "then", "while", "invariant",
    "free", "forall", "exists", "lambda", "true", "false", "int", "bool",
    "real", "unique", "complete", "extends", "where", "break", "Ref", "Field",
    "Heap", "Type", "h", "h0", "div", "mod", "finite", "yield", "par", "async",
    "atomic", "left", "right", "both", "linear", "pure", "uses", "datatype",
}


def ident(name: str) -> str:
    return name + "#" if name in RESERVED else name


def field_const(owner: str, name: str) -> str:
    return f"F.{owner}.{name}"


def pred_func(qname: str) -> str:
    return f"P.{qname}"


def btype(t: TypeExpr) -> str:
    if isinstance(t, IntType):
        return "int"
    if isinstance(t, BoolType):
        return "bool"
    return "Ref"


def _elem_fn(t: TypeExpr) -> str:
    return "$elem_" + {"int": "int", "bool": "bool"}.get(btype(t), "ref")


def _default(t: TypeExpr) -> str:
    return {"int": "0", "bool": "false"}.get(btype(t), "null")


_BINOPS = {
    "add": "+", "sub": "-", "mul": "*", "lt": "<", "le": "<=", "gt": ">", "ge": ">=",
    "eq": "==", "ne": "!=", "and": "&&", "or": "||", "implies": "==>",
}


class EmitError(Exception):
    """An IR shape the backend cannot express; a bug in an earlier stage."""


# ---------------------------------------------------------------------------
# expressions


@dataclass
class _Ctx:
    program: Program
    owner: str
    env: dict[str, TypeExpr]
    names: dict[str, str]
    ret: Optional[TypeExpr]
    heap: str = "heap"
    old_heap: str = "old(heap)"


def emit_expr(e: Expr, ctx: _Ctx) -> str:
    if isinstance(e, IntLit):
        return str(e.value) if e.value >= 0 else f"({e.value})"
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, NullLit):
        return "null"
    if isinstance(e, VoidLit):
        return "Void"
    if isinstance(e, (Thrown, Exc)):
        return "thrown"
    if isinstance(e, Result):
        return "result"
    if isinstance(e, Local):
        return ctx.names.get(e.name, ident(e.name))
    if isinstance(e, FieldRead):
        t = expr_type(e.target, ctx.env, ctx.program, ctx.ret)
        hit = ctx.program.lookup_field(t.name, e.field) if isinstance(t, RefType) else None
        if hit is None:
            raise EmitError(f"cannot resolve field {e.field}")
        return f"{ctx.heap}[{emit_expr(e.target, ctx)}, {field_const(hit[0], e.field)}]"
    if isinstance(e, ArrayRead):
        t = expr_type(e.target, ctx.env, ctx.program, ctx.ret)
        if not isinstance(t, ArrayType):
            raise EmitError("indexing a non-array")
        return (f"{ctx.heap}[{emit_expr(e.target, ctx)}, "
                f"{_elem_fn(t.elem)}({emit_expr(e.index, ctx)})]")
    if isinstance(e, ArrayLength):
        return f"$arrlen({emit_expr(e.target, ctx)})"
    if isinstance(e, Unary):
        op = "-" if e.op == "neg" else "!"
        return f"{op}({emit_expr(e.arg, ctx)})"
    if isinstance(e, Binary):
        a, b = emit_expr(e.left, ctx), emit_expr(e.right, ctx)
        if e.op in ("div", "mod"):
            return f"${e.op}({a}, {b})"
        return f"({a} {_BINOPS[e.op]} {b})"
    if isinstance(e, Conditional):
        return (f"(if {emit_expr(e.cond, ctx)} then {emit_expr(e.then, ctx)} "
                f"else {emit_expr(e.other, ctx)})")
    if isinstance(e, InstanceOf):
        return f"instanceof({emit_expr(e.arg, ctx)}, {type_const(e.cls)})"
    if isinstance(e, IsVoid):
        return f"({emit_expr(e.arg, ctx)} == Void)"
    if isinstance(e, Old):
        inner = _Ctx(ctx.program, ctx.owner, ctx.env, ctx.names, ctx.ret,
                     heap=ctx.old_heap, old_heap=ctx.old_heap)
        return emit_expr(e.arg, inner)
    if isinstance(e, Quantifier):
        env = dict(ctx.env)
        env[e.var] = e.var_type
        names = dict(ctx.names)
        names[e.var] = ident(e.var)
        inner = _Ctx(ctx.program, ctx.owner, env, names, ctx.ret, ctx.heap, ctx.old_heap)
        return (f"({e.kind} {ident(e.var)}: {btype(e.var_type)} :: "
                f"{emit_expr(e.body, inner)})")
    if isinstance(e, PredicateApply):
        pred = resolve_predicate(e.name, ctx.owner, ctx.program)
        if pred is None:
            raise EmitError(f"unresolved predicate {e.name}")
        args = [ctx.old_heap, ctx.heap, ctx.names.get("this", "this")]
        args += [emit_expr(a, ctx) for a in e.args]
        return f"{pred_func(pred.qname)}({', '.join(args)})"
    if isinstance(e, Binding):
        raise EmitError(f"unlifted binding {e.var}")
    raise EmitError(f"unsupported expression {e!r}")


# ---------------------------------------------------------------------------
# declarations


class _Writer:
    def __init__(self, unit: BoogieUnit):
        self.unit = unit

    def line(self, text: str = "") -> int:
        self.unit.lines.append(text)
        return len(self.unit.lines)

    def mapped(self, text: str, kind: str, method: str, pos: Pos, detail: str = "") -> None:
        n = self.line(text)
        self.unit.source_map.append(MapEntry(n, kind, method, pos, detail))


def _class_preorder(program: Program) -> list[ClassDecl]:
    parents = class_parents(program)
    order = _preorder(parents, tree_children(parents))
    return [program.class_table[n] for n in order]


def _emit_types(w: _Writer, program: Program) -> None:
    classes = _class_preorder(program)
    w.line("// types")
    for c in classes:
        w.line(f"const unique {type_const(c.name)}: Type;")
    w.line("// exception hierarchy")
    for ax in ORDER_AXIOMS:
        w.line(render_axiom(ax))
    for line in emit_exception_axioms(program):
        w.line(line)
    others = {c.name: c.parent for c in program.class_table.values()
              if not program.is_exception(c.name)}
    if others:
        w.line("// other classes")
        for ax in exception_axioms(others):
            w.line(render_axiom(ax))
    fields = [(c.name, f, t) for c in classes for f, t in c.fields]
    if fields:
        w.line("// fields")
    for owner, f, t in fields:
        w.line(f"const unique {field_const(owner, f)}: Field {btype(t)};")
    for owner, f, t in fields:
        w.line(f"axiom (forall i: int :: {_elem_fn(t)}(i) != {field_const(owner, f)});")


def _method_env(m: MethodDecl) -> dict[str, TypeExpr]:
    return dict(m.var_types)


def emit_predicate(w: _Writer, m: MethodDecl, program: Program) -> None:
    from .spec import predicate_body

    body = predicate_body(m, program)
    params = ["h0: Heap", "h: Heap", "this: Ref"]
    params += [f"{ident(n)}: {btype(t)}" for n, t in m.params]
    ctx = _Ctx(program, m.owner, _method_env(m), {}, m.ret, heap="h", old_heap="h0")
    w.line(f"function {pred_func(m.qname)}({', '.join(params)}): bool")
    w.line("{ " + emit_expr(body, ctx) + " }")
    w.line()


def _assigned_params(m: MethodDecl) -> set[str]:
    names = {n for n, _ in m.params}
    out = set()
    for ln in m.body or ():
        ins = ln.instr
        if isinstance(ins, Assign) and isinstance(ins.lhs, Local) and ins.lhs.name in names:
            out.add(ins.lhs.name)
    return out


def _leaders(body: tuple[Line, ...], labels: dict[str, int]) -> list[int]:
    lead = {0} if body else set()
    for i, ln in enumerate(body):
        for t in jump_targets(ln.instr):
            lead.add(labels[t])
        if isinstance(ln.instr, (IfGoto, Goto, Return, Throw)) and i + 1 < len(body):
            lead.add(i + 1)
    return sorted(lead)


def basic_blocks(body: tuple[Line, ...], labels: dict[str, int]) -> list[range]:
    """Basic blocks of ``body`` as index ranges."""
    lead = _leaders(body, labels)
    return [range(s, e) for s, e in zip(lead, lead[1:] + [len(body)])]


def emit_procedure(w: _Writer, m: MethodDecl, contract, program: Program,
                   smoke: bool = False, counter: Optional[list[int]] = None) -> None:
    counter = counter if counter is not None else [0]
    params = ["this: Ref"] + [f"{ident(n)}: {btype(t)}" for n, t in m.params]
    head = f"procedure {m.qname}({', '.join(params)})"
    if not isinstance(m.ret, VoidType):
        head += f" returns (result: {btype(m.ret)})"
    w.line(head + ";" if m.body is None else head)
    w.line("  modifies heap, thrown;")
    w.line("  requires thrown == Void;")
    env = _method_env(m)
    pre_ctx = _Ctx(program, m.owner, env, {}, m.ret, heap="heap", old_heap="heap")
    post_ctx = _Ctx(program, m.owner, env, {}, m.ret, heap="heap", old_heap="old(heap)")
    if contract is not None:
        for c in contract.requires:
            w.mapped(f"  requires {emit_expr(c.expr, pre_ctx)};", "requires", m.qname,
                     m.pos, c.origin)
        for c in contract.ensures:
            w.mapped(f"  ensures {emit_expr(c.expr, post_ctx)};", "ensures", m.qname,
                     m.pos, c.origin)
    if m.body is None:
        w.line()
        return

    reassigned = _assigned_params(m)
    names = {n: ident(n) + "#l" for n in sorted(reassigned)}
    ctx = _Ctx(program, m.owner, env, names, m.ret)
    w.line("{")
    for n, t in m.locals:
        w.line(f"  var {ident(n)}: {btype(t)};")
    for n in sorted(reassigned):
        w.line(f"  var {names[n]}: {btype(env[n])};")
    discards = _discard_types(m, program)
    for t in discards:
        w.line(f"  var $discard#{t}: {t};")
    for n in sorted(reassigned):
        w.line(f"  {names[n]} := {ident(n)};")

    labels = m.label_index()
    blocks = basic_blocks(m.body, labels)
    for blk in blocks:
        last = blk[-1]
        for i in blk:
            ln = m.body[i]
            for lb in ln.labels:
                w.line(f"  {ident(lb)}:")
            is_term = isinstance(ln.instr, (IfGoto, Goto, Return))
            if smoke and i == last and is_term:
                _smoke(w, m, ln, counter)
            _emit_instr(w, m, ln, ctx, program)
            if smoke and i == last and not is_term:
                _smoke(w, m, ln, counter)
    w.line("}")
    w.line()


def _smoke(w: _Writer, m: MethodDecl, ln: Line, counter: list[int]) -> None:
    counter[0] += 1
    w.mapped(f"    if (*) {{ assert {{:msg \"smoke {counter[0]}\"}} false; }}", "smoke",
             m.qname, ln.pos, f"smoke {counter[0]}")


def _discard_types(m: MethodDecl, program: Program) -> list[str]:
    out = set()
    for ln in m.body or ():
        ins = ln.instr
        if isinstance(ins, Assign) and ins.lhs is None and isinstance(ins.rhs, Invoke):
            callee = resolve_invoke(ins.rhs, m.var_types, program)
            if callee is not None and not isinstance(callee.ret, VoidType):
                out.add(btype(callee.ret))
    return sorted(out)


def _alloc(target: str, extra: list[str]) -> list[str]:
    facts = [f"{target} != null", f"{target} != Void", f"!heap[{target}, $alloc]"] + extra
    return [f"havoc {target};", f"assume {' && '.join(facts)};",
            f"heap := heap[{target}, $alloc := true];"]


def _emit_instr(w: _Writer, m: MethodDecl, ln: Line, ctx: _Ctx, program: Program) -> None:
    ins = ln.instr
    ind = "    "
    if isinstance(ins, Assign):
        for s in _emit_assign(ins, m, ctx, program):
            w.line(ind + s)
    elif isinstance(ins, IfGoto):
        w.line(f"{ind}if ({emit_expr(ins.cond, ctx)}) {{ goto {ident(ins.target)}; }}")
    elif isinstance(ins, Goto):
        w.line(f"{ind}goto {ident(ins.target)};")
    elif isinstance(ins, Return):
        if ins.value is not None:
            w.line(f"{ind}result := {emit_expr(ins.value, ctx)};")
        w.line(f"{ind}return;")
    elif isinstance(ins, AssertStmt):
        from .syntax import render_expr
        msg = f"assertion {render_expr(ins.expr)}".replace('"', "'")
        w.mapped(f"{ind}assert {{:msg \"{msg}\"}} {emit_expr(ins.expr, ctx)};", "assert",
                 m.qname, ln.pos)
    elif isinstance(ins, AssumeStmt):
        w.line(f"{ind}assume {emit_expr(ins.expr, ctx)};")
    elif isinstance(ins, Nop):
        w.line(f"{ind}assume true;")
    else:
        raise EmitError(f"{type(ins).__name__} must be lowered before emission ({m.qname})")


def _emit_assign(ins: Assign, m: MethodDecl, ctx: _Ctx, program: Program) -> list[str]:
    lhs, rhs = ins.lhs, ins.rhs
    if isinstance(rhs, Invoke):
        callee = resolve_invoke(rhs, m.var_types, program)
        if callee is None:
            raise EmitError(f"unresolved call {rhs.name}")
        recv = emit_expr(rhs.receiver, ctx) if rhs.receiver is not None else "null"
        args = ", ".join([recv] + [emit_expr(a, ctx) for a in rhs.args])
        if lhs is None:
            if isinstance(callee.ret, VoidType):
                return [f"call {callee.qname}({args});"]
            return [f"call $discard#{btype(callee.ret)} := {callee.qname}({args});"]
        return [f"call {emit_expr(lhs, ctx)} := {callee.qname}({args});"]
    if isinstance(rhs, NewObject):
        target = emit_expr(lhs, ctx)
        out = _alloc(target, [f"typeof({target}) == {type_const(rhs.cls)}"])
        for owner, f, t in program.all_fields(rhs.cls):
            out.append(f"heap := heap[{target}, {field_const(owner, f)} := {_default(t)}];")
        return out
    if isinstance(rhs, NewArray):
        target = emit_expr(lhs, ctx)
        length = emit_expr(rhs.length, ctx)
        out = _alloc(target, [f"$arrlen({target}) == {length}"])
        out.append(f"assume (forall i: int :: heap[{target}, {_elem_fn(rhs.elem)}(i)] == "
                   f"{_default(rhs.elem)});")
        return out
    value = emit_expr(rhs, ctx)
    if isinstance(lhs, Thrown):
        return [f"thrown := {value};"]
    if isinstance(lhs, Local):
        return [f"{emit_expr(lhs, ctx)} := {value};"]
    if isinstance(lhs, FieldRead):
        t = expr_type(lhs.target, ctx.env, program, ctx.ret)
        hit = program.lookup_field(t.name, lhs.field) if isinstance(t, RefType) else None
        if hit is None:
            raise EmitError(f"cannot resolve field {lhs.field}")
        return [f"heap := heap[{emit_expr(lhs.target, ctx)}, "
                f"{field_const(hit[0], lhs.field)} := {value}];"]
    if isinstance(lhs, ArrayRead):
        t = expr_type(lhs.target, ctx.env, program, ctx.ret)
        if not isinstance(t, ArrayType):
            raise EmitError("storing into a non-array")
        return [f"heap := heap[{emit_expr(lhs.target, ctx)}, "
                f"{_elem_fn(t.elem)}({emit_expr(lhs.index, ctx)}) := {value}];"]
    raise EmitError(f"unsupported assignment target {lhs!r}")


def emit_program(program: Program, contracts: Optional[dict] = None,
                 options: Optional[EmitOptions] = None) -> BoogieUnit:
    """The whole Boogie unit for a fully transformed program."""
    options = options or EmitOptions()
    contracts = contracts or {}
    unit = BoogieUnit(source_name=options.source_name)
    w = _Writer(unit)
    for line in PRELUDE.rstrip("\n").split("\n"):
        w.line(line)
    w.line()
    _emit_types(w, program)
    w.line()
    methods = sorted(program.methods, key=lambda m: m.qname)
    preds = [m for m in methods if m.is_predicate]
    if preds:
        w.line("// predicates")
    for m in preds:
        emit_predicate(w, m, program)
    counter = [0]
    for m in methods:
        if not m.is_predicate:
            emit_procedure(w, m, contracts.get(m.qname), program, options.smoke, counter)
    while unit.lines and unit.lines[-1] == "":
        unit.lines.pop()
    return unit

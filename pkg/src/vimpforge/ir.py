"""Core data model shared by every pass.

Programs are trees of frozen dataclasses.  Nothing in here mutates: passes
build new nodes with :func:`dataclasses.replace` or the ``map_*`` helpers.

Source positions ride along on methods, classes and instruction lines but are
excluded from equality, so two programs compare equal when they have the same
structure regardless of where they were parsed from.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Iterator, Optional, Union


# ---------------------------------------------------------------------------
# positions and diagnostics


@dataclass(frozen=True)
class Pos:
    line: int = 0
    col: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


NOPOS = Pos()


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    pos: Pos = NOPOS
    severity: str = "error"  # or "warning"

    def __str__(self) -> str:
        return f"{self.pos}: {self.severity} {self.code}: {self.message}"


def errors(diags: list[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diags if d.severity == "error"]


class VimpError(Exception):
    """Raised when a stage cannot proceed; carries the diagnostics."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class IntType:
    def __str__(self) -> str:
        return "int"


@dataclass(frozen=True)
class BoolType:
    def __str__(self) -> str:
        return "bool"


@dataclass(frozen=True)
class RefType:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class ArrayType:
    elem: TypeExpr

    def __str__(self) -> str:
        return f"{self.elem}[]"


@dataclass(frozen=True)
class VoidType:
    """Return type of methods that produce no value."""

    def __str__(self) -> str:
        return "void"


TypeExpr = Union[IntType, BoolType, RefType, ArrayType, VoidType]

INT = IntType()
BOOL = BoolType()
VOID_T = VoidType()

THROWABLE = "Throwable"
NPE = "NullPointerException"
IOOBE = "IndexOutOfBoundsException"
THROWABLE_T = RefType(THROWABLE)


def is_ref(t: TypeExpr) -> bool:
    return isinstance(t, (RefType, ArrayType))


# ---------------------------------------------------------------------------
# expressions


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class NullLit:
    pass


@dataclass(frozen=True)
class VoidLit:
    """The distinguished non-exception marker held by ``@thrown``."""


@dataclass(frozen=True)
class Local:
    name: str


@dataclass(frozen=True)
class FieldRead:
    target: Expr
    field: str


@dataclass(frozen=True)
class ArrayRead:
    target: Expr
    index: Expr


@dataclass(frozen=True)
class ArrayLength:
    target: Expr


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" | "not"
    arg: Expr


@dataclass(frozen=True)
class Binary:
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Conditional:
    cond: Expr
    then: Expr
    other: Expr


@dataclass(frozen=True)
class InstanceOf:
    arg: Expr
    cls: str


@dataclass(frozen=True)
class IsVoid:
    arg: Expr


@dataclass(frozen=True)
class Old:
    arg: Expr


@dataclass(frozen=True)
class Quantifier:
    kind: str  # "forall" | "exists"
    var: str
    var_type: TypeExpr
    body: Expr


@dataclass(frozen=True)
class PredicateApply:
    """Application of a predicate method or of a built-in spec operator.

    Names in :data:`SPEC_OPERATORS` are the spec library's aggregable
    operators (``lt``, ``implies``, ``forall``...); everything else names a
    predicate method, either bare (owner's predicate) or ``Class.name``.
    """

    name: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class Binding:
    """Marker for a quantifier variable before quantifiers are lifted."""

    var: str
    var_type: TypeExpr


@dataclass(frozen=True)
class Thrown:
    """The ``@thrown`` register."""


@dataclass(frozen=True)
class Result:
    """Binder for the returned value inside contracts."""


@dataclass(frozen=True)
class Exc:
    """Binder for the thrown exception (or void) inside contracts."""


Expr = Union[
    IntLit, BoolLit, NullLit, VoidLit, Local, FieldRead, ArrayRead, ArrayLength,
    Unary, Binary, Conditional, InstanceOf, IsVoid, Old, Quantifier,
    PredicateApply, Binding, Thrown, Result, Exc,
]

ARITH_OPS = ("add", "sub", "mul", "div", "mod")
CMP_OPS = ("lt", "le", "gt", "ge")
EQ_OPS = ("eq", "ne")
LOGIC_OPS = ("and", "or", "implies")
BINARY_OPS = ARITH_OPS + CMP_OPS + EQ_OPS + LOGIC_OPS

# spec-library operator name -> arity
SPEC_OPERATORS = {
    "lt": 2, "lte": 2, "eq": 2, "neq": 2, "gte": 2, "gt": 2,
    "not": 1, "implies": 2, "conditional": 3, "forall": 2, "exists": 2,
}

TRUE = BoolLit(True)
FALSE = BoolLit(False)


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, (FieldRead, ArrayLength)):
        return (e.target,)
    if isinstance(e, ArrayRead):
        return (e.target, e.index)
    if isinstance(e, (Unary, InstanceOf, IsVoid, Old)):
        return (e.arg,)
    if isinstance(e, Binary):
        return (e.left, e.right)
    if isinstance(e, Conditional):
        return (e.cond, e.then, e.other)
    if isinstance(e, Quantifier):
        return (e.body,)
    if isinstance(e, PredicateApply):
        return e.args
    return ()


def with_children(e: Expr, kids: tuple[Expr, ...]) -> Expr:
    if isinstance(e, FieldRead):
        return FieldRead(kids[0], e.field)
    if isinstance(e, ArrayLength):
        return ArrayLength(kids[0])
    if isinstance(e, ArrayRead):
        return ArrayRead(kids[0], kids[1])
    if isinstance(e, Unary):
        return Unary(e.op, kids[0])
    if isinstance(e, InstanceOf):
        return InstanceOf(kids[0], e.cls)
    if isinstance(e, IsVoid):
        return IsVoid(kids[0])
    if isinstance(e, Old):
        return Old(kids[0])
    if isinstance(e, Binary):
        return Binary(e.op, kids[0], kids[1])
    if isinstance(e, Conditional):
        return Conditional(*kids)
    if isinstance(e, Quantifier):
        return Quantifier(e.kind, e.var, e.var_type, kids[0])
    if isinstance(e, PredicateApply):
        return PredicateApply(e.name, tuple(kids))
    return e


def map_expr(e: Expr, fn: Callable[[Expr], Optional[Expr]]) -> Expr:
    """Rebuild ``e`` top-down; ``fn`` returns a replacement or None to recurse."""
    out = fn(e)
    if out is not None:
        return out
    kids = children(e)
    if not kids:
        return e
    return with_children(e, tuple(map_expr(k, fn) for k in kids))


def walk(e: Expr) -> Iterator[Expr]:
    yield e
    for k in children(e):
        yield from walk(k)


def free_locals(e: Expr) -> set[str]:
    if isinstance(e, Local):
        return {e.name}
    if isinstance(e, Quantifier):
        return free_locals(e.body) - {e.var}
    out: set[str] = set()
    for k in children(e):
        out |= free_locals(k)
    return out


def substitute(e: Expr, env: dict[str, Expr]) -> Expr:
    """Capture-avoiding enough for our use: bound variables shadow ``env``."""

    def fn(x: Expr) -> Optional[Expr]:
        if isinstance(x, Local):
            return env.get(x.name, x)
        if isinstance(x, Quantifier) and x.var in env:
            inner = {k: v for k, v in env.items() if k != x.var}
            return Quantifier(x.kind, x.var, x.var_type, substitute(x.body, inner))
        return None

    return map_expr(e, fn)


def conjoin(parts: list[Expr]) -> Expr:
    if not parts:
        return TRUE
    out = parts[0]
    for p in parts[1:]:
        out = Binary("and", out, p)
    return out


# ---------------------------------------------------------------------------
# instructions


@dataclass(frozen=True)
class NewObject:
    cls: str


@dataclass(frozen=True)
class NewArray:
    elem: TypeExpr
    length: Expr


@dataclass(frozen=True)
class Invoke:
    """Call ``receiver.name(args)`` or, with no receiver, ``cls.name(args)``."""

    receiver: Optional[Expr]
    cls: Optional[str]
    name: str
    args: tuple[Expr, ...]


Rhs = Union[Expr, NewObject, NewArray, Invoke]
Lhs = Union[Local, FieldRead, ArrayRead, Thrown]


@dataclass(frozen=True)
class Assign:
    lhs: Optional[Lhs]  # None only for a call whose result is dropped
    rhs: Rhs


@dataclass(frozen=True)
class IfGoto:
    cond: Expr
    target: str


@dataclass(frozen=True)
class Goto:
    target: str


@dataclass(frozen=True)
class Return:
    value: Optional[Expr] = None


@dataclass(frozen=True)
class Throw:
    arg: Local


@dataclass(frozen=True)
class CaughtBind:
    lhs: Local


@dataclass(frozen=True)
class InvariantStmt:
    expr: Expr


@dataclass(frozen=True)
class AssertStmt:
    expr: Expr


@dataclass(frozen=True)
class AssumeStmt:
    expr: Expr


@dataclass(frozen=True)
class Nop:
    pass


Instruction = Union[
    Assign, IfGoto, Goto, Return, Throw, CaughtBind, InvariantStmt, AssertStmt,
    AssumeStmt, Nop,
]

SPEC_STMTS = (InvariantStmt, AssertStmt, AssumeStmt)


@dataclass(frozen=True)
class Line:
    """One instruction with the labels that name its position."""

    labels: tuple[str, ...]
    instr: Instruction
    pos: Pos = field(default=NOPOS, compare=False)


def instr_exprs(ins: Instruction) -> list[tuple[str, Expr]]:
    """Expression payloads of an instruction, keyed by slot name."""
    out: list[tuple[str, Expr]] = []
    if isinstance(ins, Assign):
        if isinstance(ins.lhs, (FieldRead, ArrayRead)):
            out.extend(("lhs." + str(i), k) for i, k in enumerate(children(ins.lhs)))
        rhs = ins.rhs
        if isinstance(rhs, Invoke):
            if rhs.receiver is not None:
                out.append(("recv", rhs.receiver))
            out.extend((f"arg.{i}", a) for i, a in enumerate(rhs.args))
        elif isinstance(rhs, NewArray):
            out.append(("len", rhs.length))
        elif not isinstance(rhs, NewObject):
            out.append(("rhs", rhs))
    elif isinstance(ins, IfGoto):
        out.append(("cond", ins.cond))
    elif isinstance(ins, Return) and ins.value is not None:
        out.append(("value", ins.value))
    elif isinstance(ins, SPEC_STMTS):
        out.append(("spec", ins.expr))
    return out


def map_instr_exprs(ins: Instruction, fn: Callable[[str, Expr], Expr]) -> Instruction:
    """Rewrite every expression slot of ``ins`` (shape preserved)."""
    if isinstance(ins, Assign):
        lhs = ins.lhs
        if isinstance(lhs, FieldRead):
            lhs = FieldRead(fn("lhs.0", lhs.target), lhs.field)
        elif isinstance(lhs, ArrayRead):
            lhs = ArrayRead(fn("lhs.0", lhs.target), fn("lhs.1", lhs.index))
        rhs = ins.rhs
        if isinstance(rhs, Invoke):
            recv = None if rhs.receiver is None else fn("recv", rhs.receiver)
            rhs = Invoke(recv, rhs.cls, rhs.name,
                         tuple(fn(f"arg.{i}", a) for i, a in enumerate(rhs.args)))
        elif isinstance(rhs, NewArray):
            rhs = NewArray(rhs.elem, fn("len", rhs.length))
        elif not isinstance(rhs, NewObject):
            rhs = fn("rhs", rhs)
        return Assign(lhs, rhs)
    if isinstance(ins, IfGoto):
        return IfGoto(fn("cond", ins.cond), ins.target)
    if isinstance(ins, Return) and ins.value is not None:
        return Return(fn("value", ins.value))
    if isinstance(ins, SPEC_STMTS):
        return type(ins)(fn("spec", ins.expr))
    return ins


def jump_targets(ins: Instruction) -> tuple[str, ...]:
    if isinstance(ins, (IfGoto, Goto)):
        return (ins.target,)
    return ()


def falls_through(ins: Instruction) -> bool:
    return not isinstance(ins, (Goto, Return, Throw))


# ---------------------------------------------------------------------------
# annotations, traps, declarations


@dataclass(frozen=True)
class Require:
    pred: str


@dataclass(frozen=True)
class Ensure:
    pred: str


@dataclass(frozen=True)
class Raise:
    exc: str
    when: str


@dataclass(frozen=True)
class ReturnWhen:
    when: Optional[str] = None  # None is the bare ``@returns``


@dataclass(frozen=True)
class PredicateMark:
    pass


@dataclass(frozen=True)
class Attach:
    cls: str


@dataclass(frozen=True)
class Checks:
    null: bool
    bounds: bool


@dataclass(frozen=True)
class Lowered:
    """Marks a body whose exceptional control flow is already explicit."""


Annotation = Union[Require, Ensure, Raise, ReturnWhen, PredicateMark, Attach, Checks, Lowered]
CONTRACT_ANNOTATIONS = (Require, Ensure, Raise, ReturnWhen)


@dataclass(frozen=True)
class Trap:
    begin: str
    end: str
    exc: str
    handler: str
    pos: Pos = field(default=NOPOS, compare=False)


@dataclass(frozen=True)
class ClassDecl:
    name: str
    parent: Optional[str] = None
    fields: tuple[tuple[str, TypeExpr], ...] = ()
    annotations: tuple[Annotation, ...] = ()
    pos: Pos = field(default=NOPOS, compare=False)


@dataclass(frozen=True)
class MethodDecl:
    owner: str
    name: str
    params: tuple[tuple[str, TypeExpr], ...]
    ret: TypeExpr
    locals: tuple[tuple[str, TypeExpr], ...] = ()
    body: Optional[tuple[Line, ...]] = None  # None: contract-only method
    traps: tuple[Trap, ...] = ()
    annotations: tuple[Annotation, ...] = ()
    pos: Pos = field(default=NOPOS, compare=False)

    @property
    def qname(self) -> str:
        return f"{self.owner}.{self.name}"

    @property
    def is_predicate(self) -> bool:
        return any(isinstance(a, PredicateMark) for a in self.annotations)

    @property
    def lowered(self) -> bool:
        return any(isinstance(a, Lowered) for a in self.annotations)

    @property
    def is_opaque(self) -> bool:
        return self.body is None

    @property
    def checks(self) -> Optional[Checks]:
        for a in self.annotations:
            if isinstance(a, Checks):
                return a
        return None

    @cached_property
    def var_types(self) -> dict[str, TypeExpr]:
        out = {"this": RefType(self.owner)}
        out.update(self.params)
        out.update(self.locals)
        return out

    def label_index(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for i, ln in enumerate(self.body or ()):
            for lb in ln.labels:
                out.setdefault(lb, i)
        return out


BUILTIN_CLASSES = (
    ClassDecl(THROWABLE),
    ClassDecl(NPE, THROWABLE),
    ClassDecl(IOOBE, THROWABLE),
)


@dataclass(frozen=True)
class Program:
    classes: tuple[ClassDecl, ...] = ()
    methods: tuple[MethodDecl, ...] = ()

    @cached_property
    def class_table(self) -> dict[str, ClassDecl]:
        out = {c.name: c for c in BUILTIN_CLASSES}
        for c in self.classes:
            out.setdefault(c.name, c)
        return out

    @cached_property
    def method_table(self) -> dict[str, MethodDecl]:
        out: dict[str, MethodDecl] = {}
        for m in self.methods:
            out.setdefault(m.qname, m)
        return out

    def method(self, qname: str) -> MethodDecl:
        return self.method_table[qname]

    def lookup_method(self, cls: str, name: str) -> Optional[MethodDecl]:
        """Find ``name`` in ``cls`` or the nearest ancestor declaring it."""
        seen = set()
        cur: Optional[str] = cls
        while cur is not None and cur not in seen:
            seen.add(cur)
            m = self.method_table.get(f"{cur}.{name}")
            if m is not None:
                return m
            decl = self.class_table.get(cur)
            cur = decl.parent if decl else None
        return None

    def lookup_field(self, cls: str, name: str) -> Optional[tuple[str, TypeExpr]]:
        """Return (declaring class, type) of field ``name`` visible in ``cls``."""
        seen = set()
        cur: Optional[str] = cls
        while cur is not None and cur not in seen:
            seen.add(cur)
            decl = self.class_table.get(cur)
            if decl is None:
                return None
            for fname, ftype in decl.fields:
                if fname == name:
                    return cur, ftype
            cur = decl.parent
        return None

    def all_fields(self, cls: str) -> list[tuple[str, str, TypeExpr]]:
        """(declaring class, name, type) for every field an object of ``cls`` has."""
        chain = self.ancestors(cls)
        out = []
        for c in reversed(chain):
            for fname, ftype in self.class_table[c].fields:
                out.append((c, fname, ftype))
        return out

    def ancestors(self, cls: str) -> list[str]:
        """``cls`` followed by its parents up to the root (cycle-safe)."""
        out: list[str] = []
        cur: Optional[str] = cls
        while cur is not None and cur not in out and cur in self.class_table:
            out.append(cur)
            cur = self.class_table[cur].parent
        return out

    def children_of(self, cls: Optional[str]) -> list[str]:
        return [c.name for c in self.class_table.values() if c.parent == cls]

    def is_exception(self, cls: str) -> bool:
        return THROWABLE in self.ancestors(cls)

    def replace_method(self, m: MethodDecl) -> Program:
        return replace(self, methods=tuple(m if x.qname == m.qname else x
                                           for x in self.methods))

    def with_methods(self, methods) -> Program:
        return replace(self, methods=tuple(methods))


def subtype_of(a: str, b: str, program: Program) -> bool:
    """Reflexive-transitive closure of the ``extends`` relation."""
    table = program.class_table
    for name in (a, b):
        if name not in table:
            raise VimpError([Diagnostic("V1", f"unknown class {name!r}")])
    return b in program.ancestors(a)


def type_conforms(t: TypeExpr, target: TypeExpr, program: Program) -> bool:
    if isinstance(t, RefType) and isinstance(target, RefType):
        return t.name in program.class_table and subtype_of(t.name, target.name, program)
    return t == target

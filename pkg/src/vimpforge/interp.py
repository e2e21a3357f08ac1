"""Concrete executor for the IR, before and after exception lowering.

Bodies that still carry trap tables dispatch exceptions implicitly: a
``throw``, a failed implicit check or an exception escaping a callee jumps to
the first covering trap (table order) whose type matches.  Bodies marked
``@lowered`` only move through explicit jumps and the ``@thrown`` register;
in either form a method whose exit leaves ``@thrown`` non-void terminated
exceptionally.

Anything the source semantics leave undefined (division by zero, a null
dereference with checks disabled, a missing stub) raises :class:`StuckError`
rather than producing an outcome.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Union

from .ir import (
    ArrayLength, ArrayRead, AssertStmt, Assign, AssumeStmt, Binary, Binding,
    BoolLit, BoolType, CaughtBind, Conditional, Exc, Expr, FieldRead, Goto,
    IfGoto, InstanceOf, IntLit, IntType, InvariantStmt, Invoke, IsVoid, Local,
    MethodDecl, NewArray, NewObject, Nop, NullLit, Old, PredicateApply, Program,
    Quantifier, Result, Return, Thrown, Throw, TypeExpr, Unary, VoidLit, IOOBE,
    NPE, SPEC_OPERATORS,
)


class _VoidValue:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "void"

    def __deepcopy__(self, memo):
        return self


VOID = _VoidValue()


@dataclass(frozen=True)
class Ref:
    id: int

    def __repr__(self) -> str:
        return f"#{self.id}"


Value = Union[int, bool, None, Ref, _VoidValue]


@dataclass
class Obj:
    cls: str
    fields: dict[str, Value]


@dataclass
class Arr:
    elem: TypeExpr
    items: list[Value]


# ---------------------------------------------------------------------------
# outcomes


def _tag(v: Value) -> tuple:
    return (type(v).__name__, v)


@dataclass(frozen=True, eq=False)
class Normal:
    value: Value = VOID

    def __eq__(self, other):
        return isinstance(other, Normal) and _tag(self.value) == _tag(other.value)

    def __hash__(self):
        return hash(("normal", _tag(self.value)))


@dataclass(frozen=True)
class Exceptional:
    cls: str
    ref: Optional[Ref] = field(default=None, compare=False)


@dataclass(frozen=True)
class CheckViolation:
    kind: str  # assert | invariant-entry | invariant-iter | invariant-exit | precondition | postcondition
    site: str


@dataclass(frozen=True)
class Diverged:
    pass


Outcome = Union[Normal, Exceptional, CheckViolation, Diverged]


class StuckError(Exception):
    """Execution reached a state the IR semantics leave undefined."""

    def __init__(self, kind: str, detail: str = ""):
        self.kind = kind
        super().__init__(f"{kind}: {detail}" if detail else kind)


class _Violation(Exception):
    def __init__(self, kind: str, site: str):
        self.outcome = CheckViolation(kind, site)


class _OutOfSteps(Exception):
    pass


class _JavaThrow(Exception):
    """Raised by stubs (via :meth:`Interpreter.throw_new`) to throw."""

    def __init__(self, ref: Ref):
        self.ref = ref


@dataclass(frozen=True)
class LoopCheck:
    """Runtime instrumentation of one loop of an untransformed body."""

    header: int
    body: frozenset[int]
    invariant: Expr


@dataclass
class Config:
    step_budget: int = 100_000
    check_specs: bool = False
    null_checks: bool = False
    bounds_checks: bool = False
    stubs: dict[str, Callable] = field(default_factory=dict)
    contracts: dict[str, Any] = field(default_factory=dict)  # qname -> Contract
    loop_checks: dict[str, list[LoopCheck]] = field(default_factory=dict)
    quantifier_range: Optional[range] = range(-8, 9)
    max_depth: int = 400


@dataclass
class _Frame:
    method: MethodDecl
    env: dict[str, Value]
    caught: Value = None
    old_heap: Optional[dict] = None
    params0: Optional[dict] = None


class Interpreter:
    """One store plus the machinery to run methods against it."""

    def __init__(self, program: Program, config: Optional[Config] = None):
        self.program = program
        self.config = config or Config()
        self.heap: dict[int, Union[Obj, Arr]] = {}
        self.next_id = 1
        self.thrown: Value = VOID
        self.steps = 0
        self.depth = 0

    # -- store ---------------------------------------------------------

    def new_object(self, cls: str) -> Ref:
        if cls not in self.program.class_table:
            raise StuckError("unknown-class", cls)
        fields = {name: _default(t) for _, name, t in self.program.all_fields(cls)}
        return self._alloc(Obj(cls, fields))

    def new_array(self, elem: TypeExpr, items: Union[int, Iterable[Value]]) -> Ref:
        if isinstance(items, int):
            if items < 0:
                raise StuckError("negative-array-size", str(items))
            items = [_default(elem)] * items
        return self._alloc(Arr(elem, list(items)))

    def _alloc(self, obj) -> Ref:
        ref = Ref(self.next_id)
        self.next_id += 1
        self.heap[ref.id] = obj
        return ref

    def get_field(self, ref: Ref, name: str, heap=None) -> Value:
        obj = (heap if heap is not None else self.heap).get(ref.id)
        if not isinstance(obj, Obj) or name not in obj.fields:
            raise StuckError("bad-field", f"{ref}.{name}")
        return obj.fields[name]

    def array(self, ref: Ref, heap=None) -> Arr:
        obj = (heap if heap is not None else self.heap).get(ref.id)
        if not isinstance(obj, Arr):
            raise StuckError("not-an-array", repr(ref))
        return obj

    def class_of(self, ref: Ref) -> str:
        obj = self.heap.get(ref.id)
        return obj.cls if isinstance(obj, Obj) else "$array"

    def throw_new(self, cls: str):
        """For stubs: allocate an exception of ``cls`` and throw it."""
        raise _JavaThrow(self.new_object(cls))

    def snapshot(self) -> dict:
        return copy.deepcopy(self.heap)

    # -- entry point ---------------------------------------------------

    def call(self, qname: str, receiver: Value, args: list[Value]) -> Outcome:
        """Run ``qname`` from a normal state and classify how it ended."""
        m = self.program.method(qname)
        self.thrown = VOID
        if self.steps >= self.config.step_budget:
            return Diverged()
        try:
            value = self._invoke(m, receiver, list(args), site=f"{qname}:entry")
        except _OutOfSteps:
            return Diverged()
        except _Violation as v:
            return v.outcome
        if self.thrown is not VOID:
            ref = self.thrown
            return Exceptional(self.class_of(ref), ref)
        return Normal(value)

    # -- method execution ----------------------------------------------

    def _invoke(self, m: MethodDecl, this: Value, args: list[Value], site: str) -> Value:
        if self.depth >= self.config.max_depth:
            raise _OutOfSteps()
        cfg = self.config
        contract = cfg.contracts.get(m.qname) if cfg.check_specs else None
        env: dict[str, Value] = {"this": this}
        for (name, _), value in zip(m.params, args):
            env[name] = value
        frame = _Frame(m, env)
        if contract is not None:
            frame.old_heap = self.snapshot()
            frame.params0 = dict(env)
            for clause in contract.requires:
                if not self._truth(self._spec_eval(_clause_expr(clause), frame, None, VOID)):
                    raise _Violation("precondition", site)
        self.depth += 1
        try:
            if m.body is None:
                value = self._run_stub(m, this, args)
            else:
                for name, t in m.locals:
                    env[name] = _default(t)
                value = self._run_body(frame)
        finally:
            self.depth -= 1
        if contract is not None:
            for i, clause in enumerate(contract.ensures):
                if not self._truth(self._spec_eval(_clause_expr(clause), frame, value, self.thrown)):
                    raise _Violation("postcondition", f"{m.qname}:ensures#{i}")
        return value

    def _run_stub(self, m: MethodDecl, this: Value, args: list[Value]) -> Value:
        stub = self.config.stubs.get(m.qname)
        if stub is None:
            raise StuckError("missing-stub", m.qname)
        self._tick()
        try:
            value = stub(self, this, args)
        except _JavaThrow as t:
            self.thrown = t.ref
            return None
        return VOID if value is None else value

    def _tick(self) -> None:
        self.steps += 1
        if self.steps > self.config.step_budget:
            raise _OutOfSteps()

    def _checks(self, m: MethodDecl) -> tuple[bool, bool]:
        c = m.checks
        if c is not None:
            return c.null, c.bounds
        return self.config.null_checks, self.config.bounds_checks

    def _run_body(self, frame: _Frame) -> Value:
        m = frame.method
        body = m.body
        labels = m.label_index()
        implicit = not m.lowered
        null_on, bounds_on = self._checks(m) if implicit else (False, False)
        loops = self.config.loop_checks.get(m.qname, ()) if self.config.check_specs else ()
        pc = 0
        for lc in sorted(loops, key=lambda lc: -len(lc.body)):
            if lc.header == 0:
                self._loop_check(lc, frame, "invariant-entry", f"{m.qname}:0")
        while True:
            if pc >= len(body):
                raise StuckError("fell-off-end", m.qname)
            self._tick()
            ln = body[pc]
            ins = ln.instr
            site = f"{m.qname}:{pc}"
            nxt = pc + 1
            try:
                if isinstance(ins, Assign):
                    self._assign(ins, frame, null_on, bounds_on, implicit)
                elif isinstance(ins, IfGoto):
                    cond = self._eval(ins.cond, frame, null_on, bounds_on)
                    if self._truth(cond):
                        nxt = labels[ins.target]
                elif isinstance(ins, Goto):
                    nxt = labels[ins.target]
                elif isinstance(ins, Return):
                    value = VOID
                    if ins.value is not None:
                        value = self._eval(ins.value, frame, null_on, bounds_on)
                    for lc in loops:
                        if pc in lc.body:
                            self._loop_check(lc, frame, "invariant-exit", site)
                    return value
                elif isinstance(ins, Throw):
                    ref = frame.env[ins.arg.name]
                    if ref is None:
                        if not null_on:
                            raise StuckError("throw-null", site)
                        ref = self.new_object(NPE)
                    raise _JavaThrow(ref)
                elif isinstance(ins, CaughtBind):
                    frame.env[ins.lhs.name] = frame.caught
                elif isinstance(ins, (AssertStmt, InvariantStmt)):
                    if self.config.check_specs and isinstance(ins, AssertStmt):
                        if not self._truth(self._spec_eval(ins.expr, frame, None, VOID)):
                            raise _Violation("assert", site)
                elif isinstance(ins, (AssumeStmt, Nop)):
                    pass
                else:
                    raise StuckError("bad-instruction", repr(ins))
            except _JavaThrow as t:
                if not implicit:
                    raise StuckError("implicit-throw-in-lowered-body", site)
                handler = self._dispatch(m, pc, t.ref, labels)
                if handler is None:
                    self.thrown = t.ref
                    for lc in loops:
                        if pc in lc.body:
                            self._loop_check(lc, frame, "invariant-exit", site)
                    return None
                frame.caught = t.ref
                self.thrown = VOID
                nxt = handler
            if loops:
                self._edge_checks(loops, pc, nxt, frame, site)
            pc = nxt

    def _dispatch(self, m: MethodDecl, pc: int, ref: Ref, labels: dict[str, int]) -> Optional[int]:
        cls = self.class_of(ref)
        for t in m.traps:
            if labels[t.begin] <= pc < labels[t.end] and t.exc in self.program.ancestors(cls):
                return labels[t.handler]
        return None

    def _edge_checks(self, loops, src: int, dst: int, frame: _Frame, site: str) -> None:
        # exits innermost first, then entries / back edges
        for lc in sorted(loops, key=lambda lc: len(lc.body)):
            if src in lc.body and dst not in lc.body:
                self._loop_check(lc, frame, "invariant-exit", site)
        for lc in sorted(loops, key=lambda lc: -len(lc.body)):
            if dst == lc.header:
                kind = "invariant-iter" if src in lc.body else "invariant-entry"
                self._loop_check(lc, frame, kind, site)

    def _loop_check(self, lc: LoopCheck, frame: _Frame, kind: str, site: str) -> None:
        if not self._truth(self._spec_eval(lc.invariant, frame, None, VOID)):
            raise _Violation(kind, site)

    # -- instructions --------------------------------------------------

    def _assign(self, ins: Assign, frame: _Frame, null_on: bool, bounds_on: bool,
                implicit: bool) -> None:
        lhs, rhs = ins.lhs, ins.rhs
        ev = lambda e: self._eval(e, frame, null_on, bounds_on)
        # the store target's subexpressions are evaluated first, as the JVM does
        target = index = None
        if isinstance(lhs, FieldRead):
            target = ev(lhs.target)
        elif isinstance(lhs, ArrayRead):
            target = ev(lhs.target)
            index = ev(lhs.index)

        if isinstance(rhs, Invoke):
            recv = ev(rhs.receiver) if rhs.receiver is not None else None
            args = [ev(a) for a in rhs.args]
            if rhs.receiver is not None and recv is None:
                self._null_fault(null_on)
            callee = self._resolve(rhs, frame)
            value = self._invoke(callee, recv, args, site=f"{frame.method.qname}:call")
            if self.thrown is not VOID:
                if implicit:
                    ref = self.thrown
                    self.thrown = VOID
                    raise _JavaThrow(ref)
                return
            if lhs is None:
                return
        elif isinstance(rhs, NewObject):
            value = self.new_object(rhs.cls)
        elif isinstance(rhs, NewArray):
            value = self.new_array(rhs.elem, _as_int(ev(rhs.length)))
        else:
            value = ev(rhs)

        if isinstance(lhs, Local):
            frame.env[lhs.name] = value
        elif isinstance(lhs, Thrown):
            self.thrown = value
        elif isinstance(lhs, FieldRead):
            if target is None:
                self._null_fault(null_on)
            obj = self.heap.get(target.id)
            if not isinstance(obj, Obj) or lhs.field not in obj.fields:
                raise StuckError("bad-field", lhs.field)
            obj.fields[lhs.field] = value
        elif isinstance(lhs, ArrayRead):
            if target is None:
                self._null_fault(null_on)
            arr = self.array(target)
            i = _as_int(index)
            if not 0 <= i < len(arr.items):
                self._bounds_fault(bounds_on)
            arr.items[i] = value

    def _resolve(self, call: Invoke, frame: _Frame) -> MethodDecl:
        from .validate import resolve_invoke
        m = resolve_invoke(call, frame.method.var_types, self.program)
        if m is None:
            raise StuckError("unknown-method", call.name)
        return m

    def _null_fault(self, on: bool):
        if not on:
            raise StuckError("null-dereference")
        raise _JavaThrow(self.new_object(NPE))

    def _bounds_fault(self, on: bool):
        if not on:
            raise StuckError("index-out-of-bounds")
        raise _JavaThrow(self.new_object(IOOBE))

    # -- expressions ---------------------------------------------------

    def _truth(self, v: Value) -> bool:
        if isinstance(v, bool):
            return v
        if isinstance(v, int):
            return v >= 1
        raise StuckError("not-a-condition", repr(v))

    def _eval(self, e: Expr, frame: _Frame, null_on: bool, bounds_on: bool,
              heap=None, spec: Optional[dict] = None) -> Value:
        """Evaluate ``e``.  ``spec`` carries binders when checking contracts."""
        ev = lambda x: self._eval(x, frame, null_on, bounds_on, heap, spec)
        if isinstance(e, IntLit):
            return e.value
        if isinstance(e, BoolLit):
            return e.value
        if isinstance(e, NullLit):
            return None
        if isinstance(e, VoidLit):
            return VOID
        if isinstance(e, Local):
            if spec is not None and e.name in spec:
                return spec[e.name]
            if e.name not in frame.env:
                raise StuckError("unbound-local", e.name)
            return frame.env[e.name]
        if isinstance(e, Thrown):
            return self.thrown
        if isinstance(e, Result):
            return spec["$result"]
        if isinstance(e, Exc):
            return spec["$exc"]
        if isinstance(e, FieldRead):
            target = ev(e.target)
            if target is None:
                self._null_fault(null_on)
            return self.get_field(target, e.field, heap)
        if isinstance(e, ArrayRead):
            target = ev(e.target)
            i = _as_int(ev(e.index))
            if target is None:
                self._null_fault(null_on)
            arr = self.array(target, heap)
            if not 0 <= i < len(arr.items):
                self._bounds_fault(bounds_on)
            return arr.items[i]
        if isinstance(e, ArrayLength):
            target = ev(e.target)
            if target is None:
                self._null_fault(null_on)
            return len(self.array(target, heap).items)
        if isinstance(e, Unary):
            v = ev(e.arg)
            if e.op == "not" or isinstance(v, bool):
                return not self._truth(v)
            return -_as_int(v)
        if isinstance(e, Binary):
            return self._binary(e.op, e.left, e.right, ev, strict=spec is None)
        if isinstance(e, Conditional):
            if spec is None:
                # executable code evaluates every operand, as bytecode would
                c, t, o = ev(e.cond), ev(e.then), ev(e.other)
                return t if self._truth(c) else o
            return ev(e.then) if self._truth(ev(e.cond)) else ev(e.other)
        if isinstance(e, InstanceOf):
            v = ev(e.arg)
            if not isinstance(v, Ref):
                return False
            return e.cls in self.program.ancestors(self.class_of(v))
        if isinstance(e, IsVoid):
            return ev(e.arg) is VOID
        if isinstance(e, Old):
            if frame.old_heap is None:
                raise StuckError("old-outside-contract")
            scope = dict(spec or {})
            scope.update(frame.params0 or {})
            return self._eval(e.arg, frame, null_on, bounds_on, frame.old_heap, scope)
        if isinstance(e, PredicateApply):
            if e.name in SPEC_OPERATORS:
                return self._spec_operator(e, frame, ev, heap, spec)
            return self._apply_predicate(e, frame, [ev(a) for a in e.args], heap)
        if isinstance(e, Quantifier):
            dom = self._domain(e.var_type)
            results = []
            for v in dom:
                scope = dict(spec or {})
                scope[e.var] = v
                results.append(self._truth(self._eval(e.body, frame, null_on, bounds_on,
                                                      heap, scope)))
            return all(results) if e.kind == "forall" else any(results)
        if isinstance(e, Binding):
            return e
        raise StuckError("bad-expression", repr(e))

    def _binary(self, op: str, left: Expr, right: Expr, ev, strict: bool = False) -> Value:
        if strict and op in ("and", "or", "implies"):
            a, b = self._truth(ev(left)), self._truth(ev(right))
            return {"and": a and b, "or": a or b, "implies": (not a) or b}[op]
        if op == "and":
            return self._truth(ev(left)) and self._truth(ev(right))
        if op == "or":
            return self._truth(ev(left)) or self._truth(ev(right))
        if op == "implies":
            return (not self._truth(ev(left))) or self._truth(ev(right))
        a, b = ev(left), ev(right)
        if op in ("eq", "ne"):
            same = _values_equal(a, b)
            return same if op == "eq" else not same
        a, b = _as_int(a), _as_int(b)
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        if op == "mul":
            return a * b
        if op in ("div", "mod"):
            if b == 0:
                raise StuckError("division-by-zero")
            q = abs(a) // abs(b)
            if (a < 0) != (b < 0):
                q = -q
            return q if op == "div" else a - b * q
        return {"lt": a < b, "le": a <= b, "gt": a > b, "ge": a >= b}[op]

    def _spec_operator(self, e: PredicateApply, frame, ev, heap, spec) -> Value:
        name, args = e.name, e.args
        strict = spec is None
        if name == "not":
            return not self._truth(ev(args[0]))
        if name == "implies":
            return self._binary("implies", args[0], args[1], ev, strict)
        if name == "conditional":
            return self._eval(Conditional(*args), frame, False, False, heap, spec) \
                if not strict else self._strict_cond(args, ev)
        if name in ("forall", "exists"):
            binder = args[0]
            if isinstance(binder, Local):
                binder = frame.env.get(binder.name)
            if not isinstance(binder, Binding):
                raise StuckError("bad-binding", name)
            q = Quantifier(name, binder.var, binder.var_type,
                           _unbind(args[1], binder))
            return self._eval(q, frame, False, False, heap, spec)
        op = {"lt": "lt", "lte": "le", "gt": "gt", "gte": "ge", "eq": "eq", "neq": "ne"}[name]
        return self._binary(op, args[0], args[1], ev, strict)

    def _strict_cond(self, args, ev) -> Value:
        c, t, o = ev(args[0]), ev(args[1]), ev(args[2])
        return t if self._truth(c) else o

    def _apply_predicate(self, e: PredicateApply, frame: _Frame, args: list[Value], heap):
        from .validate import resolve_predicate
        pm = resolve_predicate(e.name, frame.method.owner, self.program)
        if pm is None or pm.body is None:
            raise StuckError("unknown-predicate", e.name)
        env = {"this": frame.env.get("this")}
        for (name, _), v in zip(pm.params, args):
            env[name] = v
        for name, t in pm.locals:
            env[name] = _default(t)
        inner = _Frame(pm, env, old_heap=frame.old_heap, params0=dict(env))
        for ln in pm.body:
            ins = ln.instr
            if isinstance(ins, Assign) and isinstance(ins.lhs, Local):
                if isinstance(ins.rhs, Binding):
                    env[ins.lhs.name] = ins.rhs
                else:
                    env[ins.lhs.name] = self._eval(ins.rhs, inner, False, False, heap)
            elif isinstance(ins, Return) and ins.value is not None:
                return self._eval(ins.value, inner, False, False, heap)
            elif not isinstance(ins, Nop):
                raise StuckError("impure-predicate", pm.qname)
        raise StuckError("predicate-without-return", pm.qname)

    def _domain(self, t: TypeExpr) -> list[Value]:
        if isinstance(t, BoolType):
            return [False, True]
        if isinstance(t, IntType):
            if self.config.quantifier_range is None:
                raise StuckError("unbounded-quantifier")
            return list(self.config.quantifier_range)
        refs: list[Value] = [None]
        refs += [Ref(i) for i in sorted(self.heap)]
        return refs

    def _spec_eval(self, e: Expr, frame: _Frame, result: Value, exc: Value) -> Value:
        scope = {"$result": result, "$exc": exc}
        if frame.params0 is not None:
            scope.update(frame.params0)
        try:
            return self._eval(e, frame, False, False, None, scope)
        except _JavaThrow:
            raise StuckError("exception-in-specification")


def _unbind(body: Expr, b: Binding) -> Expr:
    from .ir import map_expr

    def fn(x):
        if x == b:
            return Local(b.var)
        return None

    return map_expr(body, fn)


def _clause_expr(clause) -> Expr:
    """Contracts hold clause records; bare expressions are accepted too."""
    return getattr(clause, "expr", clause)


def _default(t: TypeExpr) -> Value:
    if isinstance(t, IntType):
        return 0
    if isinstance(t, BoolType):
        return False
    return None


def _as_int(v: Value) -> int:
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, int):
        return v
    raise StuckError("not-an-integer", repr(v))


def _values_equal(a: Value, b: Value) -> bool:
    if isinstance(a, bool) and isinstance(b, int) and not isinstance(b, bool):
        return a == (b >= 1)
    if isinstance(b, bool) and isinstance(a, int) and not isinstance(a, bool):
        return b == (a >= 1)
    if isinstance(a, Ref) or isinstance(b, Ref) or a is None or b is None or a is VOID or b is VOID:
        return a is b or (isinstance(a, Ref) and a == b)
    return a == b


# ---------------------------------------------------------------------------
# convenience API


ArgSpec = Union[Value, Callable[[Interpreter], Value]]


def _materialize(interp: Interpreter, arg: ArgSpec) -> Value:
    return arg(interp) if callable(arg) else arg


def run_method(program: Program, method: str, args: Iterable[ArgSpec] = (),
               config: Optional[Config] = None, receiver: ArgSpec = "fresh") -> Outcome:
    """Run ``method`` (qualified name) on a fresh store.

    ``receiver`` defaults to a freshly allocated object of the owner class.
    Arguments may be plain values or callables that build heap values.
    """
    interp = Interpreter(program, config)
    return _run(interp, method, args, receiver)[0]


def _run(interp: Interpreter, method: str, args, receiver) -> tuple[Outcome, Interpreter]:
    m = interp.program.method(method)
    if receiver == "fresh":
        recv = interp.new_object(m.owner) if m.owner in interp.program.class_table else None
    else:
        recv = _materialize(interp, receiver)
    values = [_materialize(interp, a) for a in args]
    return interp.call(method, recv, values), interp


@dataclass
class DifferentialReport:
    ok: bool
    runs: int
    divergence: Optional[tuple] = None  # (input, original outcome, transformed outcome)

    def __bool__(self) -> bool:
        return self.ok


def heap_view(interp: Interpreter) -> dict:
    """Comparable rendering of the whole store."""
    out = {}
    for k, obj in interp.heap.items():
        if isinstance(obj, Obj):
            out[k] = (obj.cls, tuple(sorted((f, _tag(v)) for f, v in obj.fields.items())))
        else:
            out[k] = (str(obj.elem), tuple(_tag(v) for v in obj.items))
    return out


def _guarded(interp: Interpreter, method: str, args, receiver):
    try:
        outcome, _ = _run(interp, method, args, receiver)
        return outcome, heap_view(interp)
    except StuckError as exc:
        return ("stuck", exc.kind), None


def differential_check(program: Program, method: str, inputs: Iterable[tuple],
                       config: Optional[Config] = None, transformed: Optional[Program] = None,
                       compare_heaps: bool = True) -> DifferentialReport:
    """Compare the original program with its exception-lowered form.

    Each input is an argument tuple (values or heap-building callables).
    Stuck executions count as agreeing only when both sides get stuck the
    same way.
    """
    if transformed is None:
        from .exc import transform_program
        cfg = config or Config()
        transformed = transform_program(program, cfg.null_checks, cfg.bounds_checks)
    n = 0
    for inp in inputs:
        n += 1
        a = _guarded(Interpreter(program, config), method, inp, "fresh")
        b = _guarded(Interpreter(transformed, config), method, inp, "fresh")
        same = a[0] == b[0] and (not compare_heaps or a[1] == b[1])
        if not same:
            return DifferentialReport(False, n, (inp, a[0], b[0]))
    return DifferentialReport(True, n)

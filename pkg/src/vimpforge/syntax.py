"""Reader and writer for the ``.vmp`` textual IR.

The format is one three-address instruction per ``;``, optionally prefixed by
labels, inside ``method Owner.name(params): ret { ... }`` blocks.  Exception
tables follow a body as ``traps { trap b..e catch E goto h; }``.

:func:`render_program` emits a normalized form that :func:`parse_program`
reads back to a structurally equal :class:`~vimpforge.ir.Program`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Optional, Union

from .ir import (
    ArrayLength, ArrayRead, ArrayType, AssertStmt, Assign, AssumeStmt, Attach,
    Binary, Binding, BoolLit, CaughtBind, Checks, ClassDecl, Conditional,
    Diagnostic, Ensure, Exc, Expr, FieldRead, Goto, IfGoto, InstanceOf,
    IntLit, InvariantStmt, Invoke, IsVoid, Line, Local, Lowered, MethodDecl,
    NewArray, NewObject, Nop, NullLit, Old, Pos, PredicateApply, PredicateMark,
    Program, Quantifier, Raise, RefType, Require, Result, Return,
    ReturnWhen, Thrown, Throw, Trap, TypeExpr, Unary, VimpError, VoidLit, INT,
    BOOL, VOID_T,
)

KEYWORDS = {
    "old", "isvoid", "instanceof", "forall", "exists", "void", "null", "caught",
    "binding", "true", "false", "if", "goto", "return", "throw", "invariant",
    "assert", "assume", "nop", "new", "var", "method", "class", "extends",
    "traps", "trap", "catch", "length",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n\f\v]+)
  | (?P<comment>//[^\n]*)
  | (?P<at>@[A-Za-z_][A-Za-z0-9_]*)
  | (?P<int>[0-9]+)
  | (?P<ident>[A-Za-z_$][A-Za-z0-9_$]*)
  | (?P<op>==>|::|:=|\.\.|==|!=|<=|>=|&&|\|\||[(){}\[\];,.:<>+\-*/%!&|?])
""", re.VERBOSE)


@dataclass
class Token:
    kind: str  # "int" | "ident" | "at" | "op" | "eof"
    text: str
    pos: Pos


class ParseError(VimpError):
    """Syntax errors; ``program`` holds whatever declarations did parse."""

    def __init__(self, diagnostics: list[Diagnostic], program: Program):
        super().__init__(diagnostics)
        self.program = program


class _Fail(Exception):
    def __init__(self, diag: Diagnostic):
        self.diag = diag


def tokenize(text: str) -> tuple[list[Token], list[Diagnostic]]:
    toks: list[Token] = []
    diags: list[Diagnostic] = []
    line, line_start, i = 1, 0, 0
    n = len(text)
    while i < n:
        m = _TOKEN_RE.match(text, i)
        if m is None:
            diags.append(Diagnostic("S1", f"unexpected character {text[i]!r}",
                                    Pos(line, i - line_start + 1)))
            i += 1
            continue
        kind = m.lastgroup
        tok = m.group()
        if kind not in ("ws", "comment"):
            toks.append(Token(kind, tok, Pos(line, i - line_start + 1)))
        nl = tok.count("\n")
        if nl:
            line += nl
            line_start = i + tok.rindex("\n") + 1
        i = m.end()
    toks.append(Token("eof", "", Pos(line, i - line_start + 1)))
    return toks, diags


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, toks: list[Token]):
        self.toks = toks
        self.i = 0

    # token helpers

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        t = self.tok
        return t.text == text and t.kind in ("op", "ident", "at")

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def fail(self, msg: str, tok: Optional[Token] = None) -> _Fail:
        tok = tok or self.tok
        shown = tok.text or "end of input"
        return _Fail(Diagnostic("S2", f"{msg} (found {shown!r})", tok.pos))

    def expect(self, text: str) -> Token:
        if not self.at(text):
            raise self.fail(f"expected {text!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self, what: str = "identifier", allow_kw: bool = False) -> str:
        t = self.tok
        if t.kind != "ident" or (t.text in KEYWORDS and not allow_kw):
            raise self.fail(f"expected {what}")
        self.i += 1
        return t.text

    def qualified(self) -> str:
        name = self.ident()
        if self.at(".") and self.peek().kind == "ident":
            self.i += 1
            name += "." + self.ident()
        return name

    # declarations

    def program(self) -> tuple[Program, list[Diagnostic]]:
        classes: list[ClassDecl] = []
        methods: list[MethodDecl] = []
        diags: list[Diagnostic] = []
        while self.tok.kind != "eof":
            start = self.i
            try:
                annots = self.annotations()
                if self.at("class"):
                    classes.append(self.class_decl(annots))
                elif self.at("method"):
                    methods.append(self.method_decl(annots))
                else:
                    raise self.fail("expected 'class' or 'method'")
            except _Fail as f:
                diags.append(f.diag)
                self.recover(start)
        return Program(tuple(classes), tuple(methods)), diags

    def recover(self, start: int) -> None:
        if self.i == start:
            self.i += 1
        depth = 0
        while self.tok.kind != "eof":
            t = self.tok
            if depth == 0 and (t.text in ("class", "method") and t.kind == "ident"
                               or t.kind == "at"):
                return
            if t.text == "{" and t.kind == "op":
                depth += 1
            elif t.text == "}" and t.kind == "op":
                depth = max(0, depth - 1)
            self.i += 1

    def annotations(self) -> list:
        out = []
        while self.tok.kind == "at":
            t = self.tok
            name = t.text[1:]
            self.i += 1
            if name == "require":
                out.append(Require(self._paren_name()))
            elif name == "ensure":
                out.append(Ensure(self._paren_name()))
            elif name == "raise":
                self.expect("(")
                exc = self.ident("exception class")
                self.expect(",")
                when = self.qualified()
                self.expect(")")
                out.append(Raise(exc, when))
            elif name == "returns":
                out.append(ReturnWhen(self._paren_name() if self.at("(") else None))
            elif name == "predicate":
                out.append(PredicateMark())
            elif name == "attach":
                out.append(Attach(self._paren_name()))
            elif name == "lowered":
                out.append(Lowered())
            elif name == "checks":
                self.expect("(")
                words = []
                while not self.at(")"):
                    words.append(self.ident("check name", allow_kw=True))
                    self.accept(",")
                self.expect(")")
                bad = [w for w in words if w not in ("null", "bounds", "none")]
                if bad or not words:
                    raise self.fail("expected null, bounds or none in @checks", t)
                out.append(Checks("null" in words, "bounds" in words))
            else:
                raise self.fail(f"unknown annotation @{name}", t)
        return out

    def _paren_name(self) -> str:
        self.expect("(")
        name = self.qualified()
        self.expect(")")
        return name

    def class_decl(self, annots: list) -> ClassDecl:
        pos = self.expect("class").pos
        name = self.ident("class name")
        parent = None
        if self.accept("extends"):
            parent = self.ident("class name")
        fields = []
        if self.accept("{"):
            while not self.accept("}"):
                ftype = self.type_expr()
                fields.append((self.ident("field name"), ftype))
                self.expect(";")
        return ClassDecl(name, parent, tuple(fields), tuple(annots), pos)

    def type_expr(self, allow_void: bool = False) -> TypeExpr:
        t = self.tok
        if t.kind != "ident" or (t.text in KEYWORDS and t.text != "void"):
            raise self.fail("expected type")
        self.i += 1
        if t.text == "int":
            base: TypeExpr = INT
        elif t.text == "bool":
            base = BOOL
        elif t.text == "void":
            if not allow_void:
                raise self.fail("void is not a value type", t)
            return VOID_T
        else:
            base = RefType(t.text)
        if self.at("[") and self.peek().text == "]":
            self.i += 2
            return ArrayType(base)
        return base

    def method_decl(self, annots: list) -> MethodDecl:
        pos = self.expect("method").pos
        owner = self.ident("class name")
        self.expect(".")
        name = self.ident("method name")
        self.expect("(")
        params = []
        while not self.at(")"):
            ptype = self.type_expr()
            params.append((self.ident("parameter name"), ptype))
            if not self.accept(","):
                break
        self.expect(")")
        self.expect(":")
        ret = self.type_expr(allow_void=True)
        m = MethodDecl(owner, name, tuple(params), ret, annotations=tuple(annots), pos=pos)
        if self.accept(";"):
            return m
        self.expect("{")
        self.locals: list[tuple[str, TypeExpr]] = []
        lines: list[Line] = []
        while not self.accept("}"):
            if self.tok.kind == "eof":
                raise self.fail("unterminated method body")
            if self.at("var"):
                self.i += 1
                vtype = self.type_expr()
                vname = self.ident("local name")
                self.expect(";")
                self._declare(vname, vtype)
                continue
            lines.append(self.line())
        traps = []
        if self.accept("traps"):
            self.expect("{")
            while not self.accept("}"):
                tpos = self.expect("trap").pos
                begin = self.ident("label")
                self.expect("..")
                end = self.ident("label")
                self.expect("catch")
                exc = self.ident("exception class")
                self.expect("goto")
                handler = self.ident("label")
                self.expect(";")
                traps.append(Trap(begin, end, exc, handler, tpos))
        known = {"this"} | {p for p, _ in params} | {v for v, _ in self.locals}
        lines = [_resolve_static_calls(ln, known) for ln in lines]
        return replace(m, locals=tuple(self.locals), body=tuple(lines), traps=tuple(traps))

    def _declare(self, name: str, vtype: TypeExpr) -> None:
        for n, t in self.locals:
            if n == name:
                if t != vtype:
                    raise self.fail(f"conflicting declarations of local {name!r}")
                return
        self.locals.append((name, vtype))

    # instructions

    def line(self) -> Line:
        labels = []
        pos = self.tok.pos
        while (self.tok.kind == "ident" and self.tok.text not in KEYWORDS
               and self.peek().text == ":" and self.peek().kind == "op"):
            labels.append(self.tok.text)
            self.i += 2
        ins = self.instruction()
        return Line(tuple(labels), ins, pos)

    def instruction(self):
        t = self.tok
        if self.accept("if"):
            cond = self.expr()
            self.expect("goto")
            target = self.ident("label")
            self.expect(";")
            return IfGoto(cond, target)
        if self.accept("goto"):
            target = self.ident("label")
            self.expect(";")
            return Goto(target)
        if self.accept("return"):
            value = None if self.at(";") else self.expr()
            self.expect(";")
            return Return(value)
        if self.accept("throw"):
            name = self.ident("local")
            self.expect(";")
            return Throw(Local(name))
        for kw, cls in (("invariant", InvariantStmt), ("assert", AssertStmt),
                        ("assume", AssumeStmt)):
            if self.accept(kw):
                e = self.expr()
                self.expect(";")
                return cls(e)
        if self.accept("nop"):
            self.expect(";")
            return Nop()
        if self.accept("binding"):
            vtype = self.type_expr()
            name = self.ident("binding name")
            self.expect(";")
            self._declare(name, vtype)
            return Assign(Local(name), Binding(name, vtype))
        if t.kind == "at" and t.text == "@thrown":
            self.i += 1
            self.expect(":=")
            rhs = self.expr()
            self.expect(";")
            return Assign(Thrown(), rhs)
        if self._at_call():
            call = self.call()
            self.expect(";")
            return Assign(None, call)
        lhs = self.postfix()
        if not isinstance(lhs, (Local, FieldRead, ArrayRead)) or isinstance(lhs, ArrayLength):
            raise self.fail("expected assignable location", t)
        self.expect(":=")
        if self.tok.kind == "at" and self.tok.text == "@caught":
            self.i += 1
            self.expect(";")
            if not isinstance(lhs, Local):
                raise self.fail("@caught must be bound to a local", t)
            return CaughtBind(lhs)
        if self.accept("new"):
            tname = self.ident("type name")
            if self.accept("["):
                length = self.expr()
                self.expect("]")
                elem = {"int": INT, "bool": BOOL}.get(tname) or RefType(tname)
                rhs: object = NewArray(elem, length)
            else:
                if self.accept("("):
                    self.expect(")")
                rhs = NewObject(tname)
        elif self._at_call():
            rhs = self.call()
        else:
            rhs = self.expr()
        self.expect(";")
        return Assign(lhs, rhs)

    def _take(self) -> str:
        t = self.tok.text
        self.i += 1
        return t

    def _at_call(self) -> bool:
        return (self.tok.kind == "ident" and self.tok.text not in KEYWORDS
                and self.peek().text == "." and self.peek(2).kind == "ident"
                and self.peek(3).text == "(")

    def call(self) -> Invoke:
        recv = self.ident()
        self.expect(".")
        name = self.ident("method name")
        args = self.args()
        # receiver-vs-class is settled once all locals are known
        return Invoke(Local(recv), None, name, args)

    def args(self) -> tuple[Expr, ...]:
        self.expect("(")
        out = []
        while not self.at(")"):
            out.append(self.expr())
            if not self.accept(","):
                break
        self.expect(")")
        return tuple(out)

    # expressions

    def expr(self) -> Expr:
        t = self.tok
        if t.text in ("forall", "exists") and t.kind == "ident" and self.peek().text != "(":
            self.i += 1
            vtype = self.type_expr()
            var = self.ident("bound variable")
            self.expect("::")
            body = self.expr()
            return Quantifier(t.text, var, vtype, body)
        return self.ternary()

    def ternary(self) -> Expr:
        cond = self.implies()
        if self.accept("?"):
            then = self.expr()
            self.expect(":")
            other = self.expr()
            return Conditional(cond, then, other)
        return cond

    def implies(self) -> Expr:
        left = self.disj()
        if self.accept("==>"):
            return Binary("implies", left, self.implies())
        return left

    def disj(self) -> Expr:
        left = self.conj()
        while self.at("||") or self.at("|"):
            self.i += 1
            left = Binary("or", left, self.conj())
        return left

    def conj(self) -> Expr:
        left = self.equality()
        while self.at("&&") or self.at("&"):
            self.i += 1
            left = Binary("and", left, self.equality())
        return left

    def equality(self) -> Expr:
        left = self.relation()
        while self.at("==") or self.at("!="):
            op = "eq" if self._take() == "==" else "ne"
            left = Binary(op, left, self.relation())
        return left

    _REL = {"<": "lt", "<=": "le", ">": "gt", ">=": "ge"}

    def relation(self) -> Expr:
        left = self.additive()
        while True:
            if self.tok.kind == "op" and self.tok.text in self._REL:
                op = self._REL[self._take()]
                left = Binary(op, left, self.additive())
            elif self.accept("instanceof"):
                left = InstanceOf(left, self.ident("class name"))
            else:
                return left

    def additive(self) -> Expr:
        left = self.multiplicative()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = "add" if self._take() == "+" else "sub"
            left = Binary(op, left, self.multiplicative())
        return left

    def multiplicative(self) -> Expr:
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("*", "/", "%"):
            op = {"*": "mul", "/": "div", "%": "mod"}[self._take()]
            left = Binary(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text == "-":
            self.i += 1
            if self.tok.kind == "int":
                return IntLit(-int(self._take()))
            return Unary("neg", self.unary())
        if self.tok.kind == "op" and self.tok.text == "!":
            self.i += 1
            return Unary("not", self.unary())
        return self.postfix()

    def postfix(self) -> Expr:
        e = self.primary()
        while True:
            if self.at(".") and self.peek().kind == "ident":
                self.i += 1
                if self.accept("length"):
                    e = ArrayLength(e)
                else:
                    e = FieldRead(e, self.ident("field name"))
            elif self.at("["):
                self.i += 1
                idx = self.expr()
                self.expect("]")
                e = ArrayRead(e, idx)
            else:
                return e

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "int":
            self.i += 1
            return IntLit(int(t.text))
        if t.kind == "at" and t.text == "@thrown":
            self.i += 1
            return Thrown()
        if t.kind == "at" and t.text in ("@result", "@exc"):
            self.i += 1
            return Result() if t.text == "@result" else Exc()
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if t.kind != "ident":
            raise self.fail("expected expression")
        word = t.text
        if word in ("true", "false"):
            self.i += 1
            return BoolLit(word == "true")
        if word == "null":
            self.i += 1
            return NullLit()
        if word == "void":
            self.i += 1
            return VoidLit()
        if word in ("old", "isvoid"):
            self.i += 1
            self.expect("(")
            arg = self.expr()
            self.expect(")")
            return Old(arg) if word == "old" else IsVoid(arg)
        if word == "binding":
            self.i += 1
            vtype = self.type_expr()
            return Binding(self.ident("binding name"), vtype)
        if word in ("forall", "exists"):
            self.i += 1
            return PredicateApply(word, self.args())
        if word in KEYWORDS:
            raise self.fail("expected expression")
        self.i += 1
        if self.at("("):
            return PredicateApply(word, self.args())
        if (self.at(".") and self.peek().kind == "ident" and self.peek(2).text == "("
                and self.peek().text not in KEYWORDS):
            self.i += 1
            name = word + "." + self.ident()
            return PredicateApply(name, self.args())
        return Local(word)


def _resolve_static_calls(ln: Line, known: set[str]) -> Line:
    ins = ln.instr
    if isinstance(ins, Assign) and isinstance(ins.rhs, Invoke):
        call = ins.rhs
        if isinstance(call.receiver, Local) and call.receiver.name not in known:
            call = Invoke(None, call.receiver.name, call.name, call.args)
            return replace(ln, instr=Assign(ins.lhs, call))
    return ln


def parse_program(text: Union[str, bytes]) -> Program:
    """Parse ``.vmp`` source; raises :class:`ParseError` on syntax errors.

    The parser is total: any input either parses or raises ParseError, which
    carries one diagnostic per failed declaration and the partial program.
    """
    diags: list[Diagnostic] = []
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            diags.append(Diagnostic("S0", f"invalid UTF-8 at byte {exc.start}"))
            text = text.decode("utf-8", errors="replace")
    toks, lex_diags = tokenize(text)
    diags.extend(lex_diags)
    try:
        program, parse_diags = _Parser(toks).program()
    except RecursionError:
        program, parse_diags = Program(), [Diagnostic("S3", "expression nesting too deep")]
    diags.extend(parse_diags)
    if diags:
        raise ParseError(diags, program)
    return program


# ---------------------------------------------------------------------------
# renderer

_PREC = {
    "implies": 2, "or": 3, "and": 4, "eq": 5, "ne": 5,
    "lt": 6, "le": 6, "gt": 6, "ge": 6,
    "add": 7, "sub": 7, "mul": 8, "div": 8, "mod": 8,
}
_SYM = {
    "implies": "==>", "or": "||", "and": "&&", "eq": "==", "ne": "!=",
    "lt": "<", "le": "<=", "gt": ">", "ge": ">=",
    "add": "+", "sub": "-", "mul": "*", "div": "/", "mod": "%",
}


def _prec(e: Expr) -> int:
    if isinstance(e, Quantifier):
        return 0
    if isinstance(e, Conditional):
        return 1
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, InstanceOf):
        return 6
    if isinstance(e, Unary) or (isinstance(e, IntLit) and e.value < 0):
        return 9
    if isinstance(e, Binding):
        return 9
    return 10


def _wrap(e: Expr, need: bool) -> str:
    s = render_expr(e)
    return f"({s})" if need else s


def render_expr(e: Expr) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, NullLit):
        return "null"
    if isinstance(e, VoidLit):
        return "void"
    if isinstance(e, Local):
        return e.name
    if isinstance(e, Thrown):
        return "@thrown"
    if isinstance(e, Result):
        return "@result"
    if isinstance(e, Exc):
        return "@exc"
    if isinstance(e, FieldRead):
        return f"{_wrap(e.target, _prec(e.target) < 10)}.{e.field}"
    if isinstance(e, ArrayLength):
        return f"{_wrap(e.target, _prec(e.target) < 10)}.length"
    if isinstance(e, ArrayRead):
        return f"{_wrap(e.target, _prec(e.target) < 10)}[{render_expr(e.index)}]"
    if isinstance(e, Unary):
        sym = "-" if e.op == "neg" else "!"
        arg = e.arg
        need = _prec(arg) < 9 or isinstance(arg, (Unary, IntLit)) and e.op == "neg"
        return sym + _wrap(arg, need)
    if isinstance(e, Binary):
        p = _PREC[e.op]
        if e.op == "implies":
            left = _wrap(e.left, _prec(e.left) <= p)
            right = _wrap(e.right, _prec(e.right) < p)
        else:
            left = _wrap(e.left, _prec(e.left) < p)
            right = _wrap(e.right, _prec(e.right) <= p)
        return f"{left} {_SYM[e.op]} {right}"
    if isinstance(e, InstanceOf):
        return f"{_wrap(e.arg, _prec(e.arg) < 7)} instanceof {e.cls}"
    if isinstance(e, Conditional):
        return (f"{_wrap(e.cond, _prec(e.cond) <= 1)} ? {render_expr(e.then)}"
                f" : {render_expr(e.other)}")
    if isinstance(e, IsVoid):
        return f"isvoid({render_expr(e.arg)})"
    if isinstance(e, Old):
        return f"old({render_expr(e.arg)})"
    if isinstance(e, Quantifier):
        return f"{e.kind} {e.var_type} {e.var} :: {render_expr(e.body)}"
    if isinstance(e, PredicateApply):
        return f"{e.name}({', '.join(render_expr(a) for a in e.args)})"
    if isinstance(e, Binding):
        return f"binding {e.var_type} {e.var}"
    raise TypeError(f"not an expression: {e!r}")


def _render_rhs(rhs) -> str:
    if isinstance(rhs, NewObject):
        return f"new {rhs.cls}()"
    if isinstance(rhs, NewArray):
        return f"new {rhs.elem}[{render_expr(rhs.length)}]"
    if isinstance(rhs, Invoke):
        head = render_expr(rhs.receiver) if rhs.receiver is not None else rhs.cls
        return f"{head}.{rhs.name}({', '.join(render_expr(a) for a in rhs.args)})"
    return render_expr(rhs)


def render_instruction(ins) -> str:
    if isinstance(ins, Assign):
        if isinstance(ins.rhs, Binding) and ins.lhs == Local(ins.rhs.var):
            return f"binding {ins.rhs.var_type} {ins.rhs.var};"
        if ins.lhs is None:
            return f"{_render_rhs(ins.rhs)};"
        return f"{render_expr(ins.lhs)} := {_render_rhs(ins.rhs)};"
    if isinstance(ins, IfGoto):
        return f"if {render_expr(ins.cond)} goto {ins.target};"
    if isinstance(ins, Goto):
        return f"goto {ins.target};"
    if isinstance(ins, Return):
        return "return;" if ins.value is None else f"return {render_expr(ins.value)};"
    if isinstance(ins, Throw):
        return f"throw {ins.arg.name};"
    if isinstance(ins, CaughtBind):
        return f"{ins.lhs.name} := @caught;"
    if isinstance(ins, InvariantStmt):
        return f"invariant {render_expr(ins.expr)};"
    if isinstance(ins, AssertStmt):
        return f"assert {render_expr(ins.expr)};"
    if isinstance(ins, AssumeStmt):
        return f"assume {render_expr(ins.expr)};"
    if isinstance(ins, Nop):
        return "nop;"
    raise TypeError(f"not an instruction: {ins!r}")


def render_annotation(a) -> str:
    if isinstance(a, Require):
        return f"@require({a.pred})"
    if isinstance(a, Ensure):
        return f"@ensure({a.pred})"
    if isinstance(a, Raise):
        return f"@raise({a.exc}, {a.when})"
    if isinstance(a, ReturnWhen):
        return "@returns" if a.when is None else f"@returns({a.when})"
    if isinstance(a, PredicateMark):
        return "@predicate"
    if isinstance(a, Attach):
        return f"@attach({a.cls})"
    if isinstance(a, Lowered):
        return "@lowered"
    if isinstance(a, Checks):
        words = [w for w, on in (("null", a.null), ("bounds", a.bounds)) if on]
        return f"@checks({' '.join(words) or 'none'})"
    raise TypeError(f"not an annotation: {a!r}")


def render_line(ln: Line) -> str:
    prefix = "".join(f"{lb}: " for lb in ln.labels)
    return prefix + render_instruction(ln.instr)


def render_method(m: MethodDecl) -> str:
    out = [render_annotation(a) for a in m.annotations]
    params = ", ".join(f"{t} {n}" for n, t in m.params)
    head = f"method {m.owner}.{m.name}({params}): {m.ret}"
    if m.body is None:
        out.append(head + ";")
        return "\n".join(out)
    out.append(head + " {")
    out.extend(f"  var {t} {n};" for n, t in m.locals)
    out.extend("  " + render_line(ln) for ln in m.body)
    out.append("}")
    if m.traps:
        out.append("traps {")
        out.extend(f"  trap {t.begin}..{t.end} catch {t.exc} goto {t.handler};"
                   for t in m.traps)
        out.append("}")
    return "\n".join(out)


def render_class(c: ClassDecl) -> str:
    out = [render_annotation(a) for a in c.annotations]
    head = f"class {c.name}" + (f" extends {c.parent}" if c.parent else "")
    if c.fields:
        out.append(head + " {")
        out.extend(f"  {t} {n};" for n, t in c.fields)
        out.append("}")
    else:
        out.append(head)
    return "\n".join(out)


def render_program(program: Program) -> str:
    """Normalized text: classes then methods, each in declaration order."""
    parts = [render_class(c) for c in program.classes]
    parts += [render_method(m) for m in program.methods]
    return "\n\n".join(parts) + ("\n" if parts else "")

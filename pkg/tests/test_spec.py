
from conftest import CORPUS
from vimpforge.ir import (
    Binary, Exc, InstanceOf, IsVoid, Local, NullLit, Old, PredicateApply, Raise, ReturnWhen,
    TRUE, errors,
)
from vimpforge.spec import (
    alpha_equivalent, check_predicate, desugar_shorthand, resolve_attach, resolve_specs,
)
from vimpforge.syntax import parse_program, render_expr

READ_INTO = parse_program((CORPUS / "read_into.vmp").read_text())
EXC_POST = parse_program((CORPUS / "exceptional_post.vmp").read_text())


def codes(diags) -> list[str]:
    return [d.code for d in diags]


def test_raise_on_into():
    into = READ_INTO.method("Reader.into")
    clause = desugar_shorthand(Raise("NullPointerException", "rIsNull"), into, READ_INTO)
    assert clause == Binary(
        "implies", Old(PredicateApply("rIsNull", (Local("r"), Local("a")))),
        InstanceOf(Exc(), "NullPointerException"))
    hand = Binary("implies", Old(Binary("eq", Local("r"), NullLit())),
                  InstanceOf(Exc(), "NullPointerException"))
    assert alpha_equivalent(clause, hand, "Reader", READ_INTO)


def test_bare_returns():
    m = EXC_POST.method("C.m")
    assert desugar_shorthand(ReturnWhen(None), m, EXC_POST) == \
        Binary("implies", Old(TRUE), IsVoid(Exc()))


def test_returns_when_matches_hand_written_predicate():
    src = (CORPUS / "exceptional_post.vmp").read_text() + (
        "\n@predicate\nmethod C.y_nonpos(int y): bool {\n  return lte(y, 0);\n}\n")
    p = parse_program(src)
    m = p.method("C.m")
    shorthand = desugar_shorthand(ReturnWhen("y_nonpos"), m, p)
    explicit = PredicateApply("y_neg", (Local("y"), Exc()))
    assert alpha_equivalent(shorthand, explicit, "C", p)
    wrong = PredicateApply("x_pos", (Local("y"), Exc()))
    assert not alpha_equivalent(shorthand, wrong, "C", p)


def test_contract_clause_order():
    spec = resolve_specs(READ_INTO)
    c = spec.contracts["Reader.into"]
    assert [cl.origin for cl in c.requires] == ["@require(openOrNull)"]
    assert [cl.origin for cl in c.ensures] == [
        "@raise(NullPointerException, rIsNull)", "@returns(bothPresent)"]
    ensures = [cl.origin for cl in resolve_specs(EXC_POST).contracts["C.m"].ensures]
    assert ensures == ["@ensure(x_eq_y)", "@ensure(x_pos)", "@ensure(y_neg)"]


def test_postcondition_binders():
    spec = resolve_specs(EXC_POST)
    exprs = [cl.expr for cl in spec.contracts["C.m"].ensures]
    assert exprs[0] == PredicateApply("x_eq_y", (Local("y"),))
    assert exprs[2] == PredicateApply("y_neg", (Local("y"), Exc()))


def test_desugaring_never_alters_bodies():
    for path in sorted(CORPUS.glob("*.vmp")):
        p = parse_program(path.read_text())
        spec = resolve_specs(p)
        before = {m.qname: (m.body, m.traps) for m in p.methods}
        after = {m.qname: (m.body, m.traps) for m in spec.program.methods}
        assert before == after, path.name


def test_corpus_has_no_spec_errors():
    for path in sorted(CORPUS.glob("*.vmp")):
        assert errors(resolve_specs(parse_program(path.read_text())).diagnostics) == [], path


PRED_SRC = """class C {{
  int x;
}}
method C.m(int y): void {{
  return;
}}
@predicate
method C.p(int y): {ret} {{
{body}
}}
"""


def pred_diags(body: str, ret: str = "bool", usage: str = "require") -> list[str]:
    p = parse_program(PRED_SRC.format(body=body, ret=ret))
    return codes(check_predicate(p.method("C.p"), p, p.method("C.m"), usage))


def test_well_formed_predicate():
    assert pred_diags("  return eq(this.x, y);") == []


def test_int_predicate_is_p1():
    assert "P1" in pred_diags("  return y;", ret="int")


def test_field_write_is_p3():
    assert "P3" in pred_diags("  this.x := y;\n  return true;")


def test_branching_predicate_is_p3():
    assert "P3" in pred_diags("  if y > 0 goto a;\n  return false;\n  a: return true;")


def test_signature_mismatch_is_p2():
    p = parse_program(PRED_SRC.format(body="  return true;", ret="bool").replace(
        "method C.p(int y)", "method C.p(int y, int z)"))
    assert "P2" in codes(check_predicate(p.method("C.p"), p, p.method("C.m"), "require"))
    # an extra int is neither a result binder (void method) nor an exception binder
    assert "P2" in codes(check_predicate(p.method("C.p"), p, p.method("C.m"), "ensure"))


def test_recursive_predicates_are_p4():
    src = """class C {}
@predicate
method C.a(int y): bool {
  return b(y);
}
@predicate
method C.b(int y): bool {
  return a(y);
}
"""
    p = parse_program(src)
    assert "P4" in codes(check_predicate(p.method("C.a"), p))


def test_calling_a_non_predicate_is_reported():
    src = """class C {}
@predicate
method C.a(int y): bool {
  return b(y);
}
method C.b(int y): bool {
  return true;
}
"""
    p = parse_program(src)
    diags = resolve_specs(p).diagnostics
    assert any(code in ("P4", "V19", "V11") for code in codes(diags))


ATTACH = (CORPUS / "attach_interface.vmp").read_text()


def test_attach_moves_contract():
    p = parse_program(ATTACH)
    out, diags = resolve_attach(p)
    assert errors(diags) == []
    pop = out.method("Stack.pop")
    assert Raise("IllegalState", "StackSpec.empty") in pop.annotations
    assert pop.body is None
    assert out.method("StackSpec.pop") == p.method("StackSpec.pop")
    spec = resolve_specs(p)
    assert len(spec.contracts["Stack.pop"].ensures) == 2


def test_attach_is_idempotent():
    once, _ = resolve_attach(parse_program(ATTACH))
    twice, diags = resolve_attach(once)
    assert twice == once and errors(diags) == []


def test_attach_without_matches_warns():
    p = parse_program("class I {}\n@attach(I)\nclass S {}\n"
                      "@returns\nmethod S.other(): int;\n")
    out, diags = resolve_attach(p)
    assert out == p
    assert codes(diags) == ["A3"] and diags[0].severity == "warning"


def test_attach_undefined_target():
    _, diags = resolve_attach(parse_program("@attach(Nope)\nclass S {}\n"))
    assert codes(diags) == ["A1"]


def test_conflicting_attachments_are_a2():
    src = ATTACH + """
@attach(Stack)
class OtherSpec extends Stack {
}

@returns
method OtherSpec.pop(): int;
"""
    _, diags = resolve_attach(parse_program(src))
    assert "A2" in codes(diags)


def test_attaching_a_predicate_warns():
    src = ATTACH.replace("method Stack.pop(): int;",
                         "method Stack.pop(): int;\n\nmethod Stack.empty(): bool;")
    _, diags = resolve_attach(parse_program(src))
    assert any(d.code == "A3" and "predicate" in d.message for d in diags)


def test_unknown_predicate_in_contract():
    p = parse_program("class C {}\n@raise(Throwable, nope)\nmethod C.m(): int {\n"
                      "  return 0;\n}\n")
    assert "V11" in codes(resolve_specs(p).diagnostics)


def test_rendered_clause():
    spec = resolve_specs(READ_INTO)
    raise_clause = spec.contracts["Reader.into"].ensures[0].expr
    assert render_expr(raise_clause) == \
        "old(rIsNull(r, a)) ==> @exc instanceof NullPointerException"


def test_raise_over_field_is_not_x_pos():
    src = (CORPUS / "exceptional_post.vmp").read_text() + (
        "\n@predicate\nmethod C.x_gt(int y): bool {\n  return gt(this.x, 0);\n}\n")
    p = parse_program(src)
    shorthand = desugar_shorthand(Raise("PosXExc", "x_gt"), p.method("C.m"), p)
    explicit = PredicateApply("x_pos", (Local("y"), Exc()))
    assert not alpha_equivalent(shorthand, explicit, "C", p)

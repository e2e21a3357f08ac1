import random

import pytest
from hypothesis import given, settings, strategies as st

from helpers import gen_tree, tree_program_text
from vimpforge.ir import (
    Binary, ClassDecl, FieldRead, IntLit, Line, Local, MethodDecl, Nop, Program, Quantifier,
    Return, VimpError, conjoin, free_locals, subtype_of, substitute, walk, INT, TRUE,
)
from vimpforge.syntax import parse_program


def tree_program(seed: int, max_nodes: int = 32) -> tuple[dict, Program]:
    parents = gen_tree(random.Random(seed), max_nodes)
    return parents, parse_program(tree_program_text(parents))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_subtype_is_a_partial_order(seed):
    parents, program = tree_program(seed)
    names = list(parents)
    rng = random.Random(seed)
    for _ in range(40):
        a, b, c = (rng.choice(names) for _ in range(3))
        assert subtype_of(a, a, program)
        if subtype_of(a, b, program) and subtype_of(b, a, program):
            assert a == b
        if subtype_of(a, b, program) and subtype_of(b, c, program):
            assert subtype_of(a, c, program)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_sibling_subtrees_are_disjoint(seed):
    parents, program = tree_program(seed)
    names = list(parents)
    for p in names:
        kids = [c for c in names if parents[c] == p]
        for i, x in enumerate(kids):
            for y in kids[i + 1:]:
                for n in names:
                    assert not (subtype_of(n, x, program) and subtype_of(n, y, program))


def test_builtin_exceptions_extend_throwable():
    p = Program()
    assert subtype_of("NullPointerException", "Throwable", p)
    assert not subtype_of("Throwable", "IndexOutOfBoundsException", p)
    assert p.ancestors("NullPointerException") == ["NullPointerException", "Throwable"]


def test_subtype_unknown_class_raises():
    with pytest.raises(VimpError):
        subtype_of("Nope", "Throwable", Program())


def test_field_lookup_walks_ancestors():
    p = Program(classes=(ClassDecl("A", None, (("f", INT),)), ClassDecl("B", "A")))
    assert p.lookup_field("B", "f") == ("A", INT)
    assert p.lookup_field("B", "g") is None
    assert [n for _, n, _ in p.all_fields("B")] == ["f"]


def test_label_index_keeps_first_occurrence():
    body = (Line(("a",), Nop()), Line(("b", "c"), Nop()), Line((), Return(IntLit(0))))
    m = MethodDecl("C", "m", (), INT, body=body)
    assert m.label_index() == {"a": 0, "b": 1, "c": 1}
    assert m.qname == "C.m"
    assert not m.is_opaque


def test_free_locals_respect_binders():
    e = Quantifier("forall", "i", INT, Binary("lt", Local("i"), Local("n")))
    assert free_locals(e) == {"n"}


def test_substitute_does_not_touch_bound_variables():
    e = Binary("add", Local("x"),
               Quantifier("exists", "x", INT, Binary("eq", Local("x"), Local("y"))))
    out = substitute(e, {"x": IntLit(3), "y": IntLit(4)})
    assert out.left == IntLit(3)
    assert out.right.body == Binary("eq", Local("x"), IntLit(4))


def test_conjoin_and_walk():
    assert conjoin([]) == TRUE
    e = conjoin([Local("a"), Local("b"), Local("c")])
    assert e == Binary("and", Binary("and", Local("a"), Local("b")), Local("c"))
    assert sum(isinstance(x, Local) for x in walk(e)) == 3
    assert list(walk(FieldRead(Local("o"), "f")))[1] == Local("o")

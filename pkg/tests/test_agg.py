import random

import pytest
from hypothesis import given, settings, strategies as st

from vimpforge.agg import aggregate_method, aggregate_program, aggregate_region
from vimpforge.interp import run_method
from vimpforge.ir import Assign, Binary, IntLit, Local, Return, VimpError, walk
from vimpforge.syntax import parse_program, render_expr, render_method

PRED = """class C {}
@predicate
method C.p(int i, int n): bool {
  var bool t1;
  var bool t2;
  var bool c;
  t1 := lte(0, i);
  t2 := lte(i, n);
  c := t1 & t2;
  return c;
}
"""


def test_paper_chain_collapses():
    m = aggregate_method(parse_program(PRED).method("C.p"))
    assert len(m.body) == 1
    assert render_expr(m.body[0].instr.value) == "lte(0, i) && lte(i, n)"
    assert m.locals == ()


def test_single_instruction_is_identity():
    root = Binary("eq", Local("x"), Local("y"))
    assert aggregate_region([], root) == root
    assert aggregate_region([Assign(Local("c"), root)], Local("c")) == root


def test_multi_use_temporary_is_duplicated():
    t = Binary("add", Local("i"), IntLit(1))
    out = aggregate_region([Assign(Local("t"), t)], Binary("mul", Local("t"), Local("t")))
    assert out == Binary("mul", t, t)


def test_spec_statement_argument_is_aggregated():
    src = ("class C {}\nmethod C.q(int i): int {\n  var int t;\n  var int u;\n"
           "  t := i + 1;\n  u := t * t;\n  assert u > 0;\n  return i;\n}\n")
    m = aggregate_method(parse_program(src).method("C.q"))
    text = render_method(m)
    assert "assert (i + 1) * (i + 1) > 0;" in text
    assert "t := " not in text


def test_executable_code_is_untouched():
    src = ("class C {}\nmethod C.q(int i): int {\n  var int t;\n"
           "  t := i + 1;\n  return t;\n}\n")
    m = parse_program(src).method("C.q")
    assert aggregate_method(m) == m


def test_impure_region_is_rejected():
    src = ("class C {\n  int f;\n}\n@predicate\nmethod C.p(int i): bool {\n"
           "  this.f := i;\n  return true;\n}\n")
    with pytest.raises(VimpError) as info:
        aggregate_method(parse_program(src).method("C.p"))
    assert info.value.diagnostics[0].code == "G1"
    with pytest.raises(VimpError):
        aggregate_region([Return(IntLit(0))], Local("x"))


def test_predicate_value_preserved_by_interpreter():
    p = parse_program(PRED)
    a = aggregate_program(p)
    for i in range(-3, 4):
        for n in range(-3, 4):
            assert run_method(p, "C.p", [i, n]) == run_method(a, "C.p", [i, n])


def test_aggregation_is_idempotent():
    once = aggregate_program(parse_program(PRED))
    assert aggregate_program(once) == once


OPS = {"add": lambda x, y: x + y, "sub": lambda x, y: x - y, "mul": lambda x, y: x * y}


def random_chain(rng: random.Random, length: int):
    names = ["a", "b"]
    instrs = []
    for k in range(length):
        op = rng.choice(list(OPS))
        pick = lambda: Local(rng.choice(names)) if rng.random() < 0.8 else IntLit(rng.randint(-3, 3))
        instrs.append(Assign(Local(f"t{k}"), Binary(op, pick(), pick())))
        names.append(f"t{k}")
    return instrs, Local(names[-1])


def run_slice(instrs, root, store):
    env = dict(store)
    val = lambda e: env[e.name] if isinstance(e, Local) else e.value
    for ins in instrs:
        env[ins.lhs.name] = OPS[ins.rhs.op](val(ins.rhs.left), val(ins.rhs.right))
    return env[root.name]


def eval_tree(e, store):
    if isinstance(e, Local):
        return store[e.name]
    if isinstance(e, IntLit):
        return e.value
    return OPS[e.op](eval_tree(e.left, store), eval_tree(e.right, store))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5))
def test_value_preservation(seed, length):
    rng = random.Random(seed)
    instrs, root = random_chain(rng, length)
    agg = aggregate_region(instrs, root)
    assert not any(isinstance(x, Local) and x.name.startswith("t") for x in walk(agg))
    for _ in range(20):
        store = {"a": rng.randint(-50, 50), "b": rng.randint(-50, 50)}
        assert eval_tree(agg, store) == run_slice(instrs, root, store)
    assert aggregate_region([], agg) == agg

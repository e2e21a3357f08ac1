import random
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from helpers import check_loop_placement, gen_cfg_method, renumber, with_invariants
from vimpforge.agg import aggregate_program
from vimpforge.exc import transform_program as lower
from vimpforge.inst import transform_program as translate
from vimpforge.interp import CheckViolation, Config, LoopCheck, run_method
from vimpforge.ir import AssumeStmt, InvariantStmt, Program, VimpError
from vimpforge.loops import CFG, detect_loops, dominators, expand_invariants, expand_method
from vimpforge.syntax import parse_program, render_line

FIGURE = """class C {}
method C.m(int X): int {
  var int k;
  k := 0;
  head: invariant k <= 10 && k <= X;
  if k >= 10 goto exit;
  if k == X goto exit;
  k := k + 1;
  back: goto head;
  exit: return k;
}
"""


def method_of(src: str, qname: str = "C.m"):
    return parse_program(src).method(qname)


def texts(m) -> list[str]:
    return [render_line(ln) for ln in m.body]


def test_figure_loop_detected():
    m = method_of(FIGURE)
    (lp,) = detect_loops(m)
    labels = m.label_index()
    assert lp.header == labels["head"] and lp.header_label == "head"
    assert lp.back_edges == [(labels["back"], labels["head"])]
    assert sorted(v for _, v in lp.exit_edges) == [labels["exit"]] * 2
    assert lp.invariant_lines == [labels["head"]]


def test_figure_loop_expanded():
    assert texts(expand_method(method_of(FIGURE))) == [
        "k := 0;",
        "head: assert k <= 10 && k <= X;",
        "assume k <= 10 && k <= X;",
        "if k >= 10 goto exit;",
        "if k == X goto exit;",
        "k := k + 1;",
        "back: goto head;",
        "exit: assert k <= 10 && k <= X;",
        "return k;",
    ]


def test_straight_line_has_no_loops():
    m = method_of("class C {}\nmethod C.m(int a): int {\n  var int b;\n  b := a + 1;\n"
                  "  return b;\n}\n")
    assert detect_loops(m) == []
    assert expand_method(m) == m


TWO_LOOPS = """class C {}
method C.m(int n): int {
  var int i;
  i := 0;
  a: if i >= n goto b0;
  i := i + 1;
  goto a;
  b0: i := 0;
  b: if i >= n goto done;
  i := i + 2;
  goto b;
  done: return i;
}
"""


def test_two_sequential_loops_are_disjoint():
    loops = detect_loops(method_of(TWO_LOOPS))
    assert len(loops) == 2
    assert not (loops[0].body & loops[1].body)


def test_nested_loops_nest():
    src = """class C {}
method C.m(int n): int {
  var int i;
  var int j;
  i := 0;
  outer: invariant i >= 0;
  if i >= n goto done;
  j := 0;
  inner: invariant j >= 0;
  if j >= n goto next;
  j := j + 1;
  goto inner;
  next: i := i + 1;
  goto outer;
  done: return i;
}
"""
    m = method_of(src)
    outer, inner = detect_loops(m)
    assert inner.body < outer.body
    labels = m.label_index()
    assert outer.invariant_lines == [labels["outer"]]
    assert inner.invariant_lines == [labels["inner"]]


def test_loops_without_invariants_untouched():
    m = method_of(TWO_LOOPS)
    assert expand_method(m) == m


def test_two_invariants_are_conjoined():
    src = FIGURE.replace("head: invariant k <= 10 && k <= X;",
                         "head: invariant k <= 10;\n  invariant k <= X;")
    out = texts(expand_method(method_of(src)))
    assert out[1] == "head: assert k <= 10 && k <= X;"
    assert out[2] == out[3] == "assume k <= 10 && k <= X;"
    assert out[-2] == "exit: assert k <= 10 && k <= X;"


THROWING = """class E extends Throwable
class C {}
method C.m(int n, int bad): int {
  var int k;
  var E e;
  k := 0;
  head: invariant k <= n;
  if k >= n goto exit;
  if k != bad goto cont;
  e := new E();
  throw e;
  cont: k := k + 1;
  goto head;
  exit: return k;
}
"""


def pipeline(src: str) -> Program:
    return translate(aggregate_program(lower(parse_program(src))))


def test_propagating_return_in_loop_gets_assert():
    m = expand_method(pipeline(THROWING).method("C.m"))
    out = texts(m)
    branch = out.index("if k != bad goto cont;")
    ret = out.index("return;")
    assert out[branch + 1] == "assert k <= n;"
    assert out[branch + 1:ret + 1] == [
        "assert k <= n;", "e := new E();", "@thrown := e;", "return;"]


def test_invariant_outside_loop_is_l1():
    src = "class C {}\nmethod C.m(int a): int {\n  invariant a > 0;\n  return a;\n}\n"
    with pytest.raises(VimpError) as info:
        detect_loops(method_of(src))
    assert info.value.diagnostics[0].code == "L1"


def test_invariant_in_irreducible_cycle_is_l1():
    src = """class C {}
method C.m(int a): int {
  if a > 0 goto two;
  one: invariant a > 0;
  a := a - 1;
  two: if a > 5 goto one;
  return a;
}
"""
    with pytest.raises(VimpError) as info:
        detect_loops(method_of(src))
    assert info.value.diagnostics[0].code == "L1"


def test_dominators_of_figure():
    m = method_of(FIGURE)
    dom = dominators(CFG.of(m))
    labels = m.label_index()
    assert dom[labels["exit"]] >= {0, labels["head"]}
    assert all(0 in d for d in dom.values())


def test_placement_checker_catches_a_dropped_assert():
    reference = renumber(method_of(FIGURE))
    loops = detect_loops(reference)
    good = expand_invariants(reference, loops)
    assert check_loop_placement(reference, good, loops).failures == []
    # drop the exit assert, keeping its label on the return
    body = list(good.body)
    i = next(k for k, ln in enumerate(body) if "exit" in ln.labels)
    body[i + 1] = replace(body[i + 1], labels=body[i].labels)
    del body[i]
    bad = replace(good, body=tuple(body))
    assert check_loop_placement(reference, bad, loops).failures


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6))
def test_placement_on_random_cfgs(seed):
    rng = random.Random(seed)
    method = gen_cfg_method(rng)
    headers = [lp.header for lp in detect_loops(method)]
    try:
        reference = renumber(with_invariants(method, headers))
        loops = detect_loops(reference)
    except VimpError:
        return
    report = check_loop_placement(reference, expand_invariants(reference, loops), loops)
    assert report.failures == []


def instrumented(program: Program, qname: str) -> Config:
    m = program.method(qname)
    checks = [LoopCheck(lp.header, lp.body, lp.invariant)
              for lp in detect_loops(m) if lp.invariant is not None]
    return Config(check_specs=True, loop_checks={qname: checks})


def violated(outcome) -> bool:
    return isinstance(outcome, CheckViolation)


@pytest.mark.parametrize("src, qname, inputs", [
    (FIGURE, "C.m", [(x,) for x in range(-3, 14)]),
    (THROWING, "C.m", [(n, bad) for n in range(-2, 6) for bad in range(-1, 6)]),
])
def test_runtime_agreement(src, qname, inputs):
    # direct instrumentation of the untransformed loop
    reference = translate(aggregate_program(parse_program(src)))
    ref_cfg = instrumented(reference, qname)
    expanded = expand_method(pipeline(src).method(qname))
    program = pipeline(src).replace_method(expanded)
    plain = Config(check_specs=True)
    seen = set()
    for args in inputs:
        expected = run_method(reference, qname, args, ref_cfg)
        actual = run_method(program, qname, args, plain)
        assert violated(expected) == violated(actual), (args, expected, actual)
        if not violated(expected):
            assert expected == actual
        seen.add(violated(actual))
    assert seen == {True, False}


@pytest.mark.parametrize("src", [FIGURE, THROWING])
def test_assumes_are_redundant_at_runtime(src):
    full = pipeline(src)
    full = full.replace_method(expand_method(full.method("C.m")))
    m = full.method("C.m")
    body = tuple(ln for ln in m.body if not isinstance(ln.instr, AssumeStmt) or ln.labels)
    stripped = full.replace_method(replace(m, body=body))
    arity = len(m.params)
    for args in [(a,) * arity for a in range(-2, 12)] + [(3, 1)[:arity], (5, 9)[:arity]]:
        for cfg in (Config(check_specs=True), Config()):
            assert run_method(full, "C.m", args, cfg) == run_method(stripped, "C.m", args, cfg)


def test_invariant_statements_are_gone():
    m = expand_method(method_of(FIGURE))
    assert not any(isinstance(ln.instr, InvariantStmt) for ln in m.body)

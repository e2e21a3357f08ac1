import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import CORPUS
from helpers import gen_program
from vimpforge.ir import errors
from vimpforge.syntax import parse_program
from vimpforge.validate import validate_program


def codes(src: str) -> list[str]:
    return [d.code for d in errors(validate_program(parse_program(src)))]


def messages(src: str) -> list[str]:
    return [d.message for d in validate_program(parse_program(src))]


def test_two_class_program_is_clean():
    src = ("class A {\n  int f;\n}\nclass B extends A\n"
           "method B.get(): int {\n  return this.f;\n}\n")
    assert validate_program(parse_program(src)) == []


def test_undefined_handler_label():
    src = ("class C {}\nmethod C.m(): int {\n  a: return 0;\n}\n"
           "traps {\n  trap a..a catch Throwable goto nowhere;\n}\n")
    assert any("unknown label" in m for m in messages(src))


def test_cyclic_hierarchy():
    assert any("cyclic hierarchy" in m for m in messages("class A extends B\nclass B extends A\n"))


@pytest.mark.parametrize("src, code", [
    ("class C extends Missing\n", "V1"),
    ("class C {}\nclass C {}\n", "V3"),
    ("class C {}\nmethod C.m(): int {\n  a: nop;\n  a: return 0;\n}\n", "V5"),
    ("class C {}\nmethod C.m(): int {\n  var int x;\n  x := 1;\n}\n", "V13"),
    ("class C {}\nmethod C.m(): int {\n  return y;\n}\n", "V10"),
    ("class C {}\nmethod C.m(): int {\n  var C c;\n  throw c;\n}\n", "V8"),
    ("class C {}\nmethod C.m(): int {\n  var Throwable t;\n  t := @caught;\n  return 0;\n}\n", "V9"),
    ("class C {}\n@require(nope)\nmethod C.m(): int {\n  return 0;\n}\n", "V11"),
    ("class C {}\nmethod C.m(): int {\n  return this.g;\n}\n", "V17"),
    ("class C {}\nmethod C.m(): int {\n  return 0;\n}\nmethod C.m(): int {\n  return 1;\n}\n", "V16"),
])
def test_error_codes(src, code):
    assert code in codes(src)


def test_diagnostics_carry_positions():
    diags = validate_program(parse_program("class C {}\nmethod C.m(): int {\n  goto missing;\n}\n"))
    assert diags and diags[0].pos.line == 3


@pytest.mark.parametrize("path", sorted(CORPUS.glob("*.vmp")), ids=lambda p: p.stem)
def test_corpus_validates(path):
    assert errors(validate_program(parse_program(path.read_text()))) == []


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_validation_deterministic_and_idempotent(seed):
    p = parse_program(gen_program(random.Random(seed)).text)
    first = validate_program(p)
    assert validate_program(p) == first
    assert [str(d) for d in validate_program(p)] == [str(d) for d in first]


def test_broken_program_idempotent():
    p = parse_program("class A extends B\nclass B extends A\nclass C {}\n"
                      "method C.m(): int {\n  goto x;\n}\n")
    assert validate_program(p) == validate_program(p)

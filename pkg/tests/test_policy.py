"""Policy language: grammar, canonicalization, comparison compiler, encoding.

The comparison compiler's oracle is plain integer comparison: for every
comparator and every (value, threshold) pair, a value's expanded
bit-attributes satisfy the compiled subtree exactly when the integer
comparison holds. The full 8-bit exhaustive sweep lives in the
acceptance gate; here hypothesis drives randomized widths as well.
"""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locauth.abe.policy import (
    COMPARATORS,
    Gate,
    Leaf,
    PolicyError,
    canonicalize_attribute,
    compile_comparison,
    expand_attributes,
    parse_policy,
    render_tree,
    satisfies,
    tree_from_bytes,
    tree_leaves,
    tree_node_count,
    tree_to_bytes,
)

_CMP_PY = {
    "<": lambda v, k: v < k,
    "<=": lambda v, k: v <= k,
    ">": lambda v, k: v > k,
    ">=": lambda v, k: v >= k,
    "==": lambda v, k: v == k,
}


# ---------------------------------------------------------------------------
# Attribute canonicalization


def test_canonicalize_basic():
    assert canonicalize_attribute("  Firm:XYZ ") == "firm:xyz"
    assert canonicalize_attribute("dept:financial") == "dept:financial"
    assert canonicalize_attribute("clearance=4") == "clearance=4"
    assert canonicalize_attribute("clearance:bit3=1") == "clearance:bit3=1"


def test_canonicalize_idempotent():
    for raw in ("Firm:XYZ", "a-b_c.d", "x=12"):
        once = canonicalize_attribute(raw)
        assert canonicalize_attribute(once) == once


@pytest.mark.parametrize("bad", ["", "   ", "has space", "semi;colon", "AND", "or",
                                 "a=b", "=5", "x" * 300])
def test_canonicalize_rejects(bad):
    with pytest.raises(PolicyError):
        canonicalize_attribute(bad)


def test_expand_attributes_numeric():
    attrs = expand_attributes(["clearance=4", "firm:xyz"])
    assert "firm:xyz" in attrs
    assert "clearance:bit2=1" in attrs
    assert "clearance:bit0=0" in attrs
    assert len(attrs) == 9  # 8 bits + 1 plain
    # Expansion is idempotent: feeding the result back changes nothing.
    assert expand_attributes(attrs) == attrs


def test_expand_attributes_range_check():
    with pytest.raises(PolicyError):
        expand_attributes(["clearance=256"])
    expand_attributes(["clearance=255"])  # max fits


# ---------------------------------------------------------------------------
# Parser


def test_parse_single_attribute():
    assert parse_policy("zone:lab") == Leaf("zone:lab")


def test_parse_and_or_precedence():
    # AND binds tighter: a OR b AND c == a OR (b AND c)
    tree = parse_policy("a OR b AND c")
    assert tree == Gate(1, (Leaf("a"), Gate(2, (Leaf("b"), Leaf("c")))))


def test_parse_parentheses_override():
    tree = parse_policy("(a OR b) AND c")
    assert tree == Gate(2, (Gate(1, (Leaf("a"), Leaf("b"))), Leaf("c")))


def test_parse_flattens_chains():
    assert parse_policy("a AND b AND c") == Gate(3, (Leaf("a"), Leaf("b"), Leaf("c")))
    assert parse_policy("a OR b OR c") == Gate(1, (Leaf("a"), Leaf("b"), Leaf("c")))


def test_parse_case_insensitive_keywords():
    assert parse_policy("a and b") == parse_policy("a AND b")
    assert parse_policy("a or b") == parse_policy("a OR b")


def test_parse_comparison_produces_bit_subtree():
    tree = parse_policy("clearance > 3")
    leaves = tree_leaves(tree)
    assert all(l.startswith("clearance:bit") for l in leaves)


@pytest.mark.parametrize("bad", [
    "", "   ", "AND", "a AND", "a OR", "(a", "a)", "a b", "a AND (b OR", ")",
    "clearance >", "clearance > x", "clearance > 256", "a ; b", "x=5",
    "a AND x=5",
])
def test_parse_rejects_malformed(bad):
    with pytest.raises(PolicyError):
        parse_policy(bad)


def test_parse_error_carries_position():
    with pytest.raises(PolicyError) as exc:
        parse_policy("a AND ;")
    assert exc.value.position == 6


def test_render_tree_readable():
    assert render_tree(parse_policy("a AND b")) == "AND(a, b)"
    assert render_tree(parse_policy("a OR b")) == "OR(a, b)"
    assert render_tree(Gate(2, (Leaf("a"), Leaf("b"), Leaf("c")))) == "2-of-3(a, b, c)"
    assert render_tree(Leaf("solo")) == "solo"


# ---------------------------------------------------------------------------
# Gate validation


def test_gate_threshold_bounds():
    with pytest.raises(PolicyError):
        Gate(0, (Leaf("a"),))
    with pytest.raises(PolicyError):
        Gate(3, (Leaf("a"), Leaf("b")))
    with pytest.raises(PolicyError):
        Gate(1, tuple(Leaf(f"a{i}") for i in range(256)))


# ---------------------------------------------------------------------------
# Satisfaction semantics


def test_satisfies_threshold_gate():
    tree = Gate(2, (Leaf("a"), Leaf("b"), Leaf("c")))
    assert satisfies(frozenset({"a", "b"}), tree)
    assert satisfies(frozenset({"a", "c"}), tree)
    assert not satisfies(frozenset({"a"}), tree)
    assert satisfies(frozenset({"a", "b", "c"}), tree)


def test_satisfies_nested():
    tree = parse_policy("firm:xyz AND (dept:financial OR dept:executive)")
    assert satisfies(expand_attributes(["firm:xyz", "dept:financial"]), tree)
    assert satisfies(expand_attributes(["firm:xyz", "dept:executive"]), tree)
    assert not satisfies(expand_attributes(["firm:xyz", "dept:intern"]), tree)
    assert not satisfies(expand_attributes(["dept:financial"]), tree)


@given(st.sampled_from(COMPARATORS), st.integers(0, 255), st.integers(0, 255))
@settings(max_examples=300, deadline=None)
def test_comparison_compiler_matches_integer_oracle(cmp, value, k):
    tree = compile_comparison("level", cmp, k)
    attrs = expand_attributes([f"level={value}"])
    assert satisfies(attrs, tree) == _CMP_PY[cmp](value, k)


@given(st.sampled_from(COMPARATORS), st.integers(0, 15), st.integers(0, 15))
@settings(max_examples=200, deadline=None)
def test_comparison_compiler_matches_oracle_width_4(cmp, value, k):
    tree = compile_comparison("level", cmp, k, width=4)
    attrs = expand_attributes([f"level={value}"], width=4)
    assert satisfies(attrs, tree) == _CMP_PY[cmp](value, k)


def test_comparison_never_satisfied_by_other_attribute_values():
    # v > 3 compiled over 'level' must ignore other numeric names entirely.
    tree = compile_comparison("level", ">", 3)
    assert not satisfies(expand_attributes(["grade=200"]), tree)


def test_comparison_rejects_bad_inputs():
    with pytest.raises(PolicyError):
        compile_comparison("level", "!=", 3)
    with pytest.raises(PolicyError):
        compile_comparison("level", ">", 256)
    with pytest.raises(PolicyError):
        compile_comparison("level", ">", -1)
    with pytest.raises(PolicyError):
        compile_comparison("level=3", ">", 1)


# ---------------------------------------------------------------------------
# Canonical encoding


_attr_names = st.from_regex(r"[a-z][a-z0-9:_.-]{0,10}", fullmatch=True).map(
    canonicalize_attribute
)


def _trees(depth=3):
    if depth == 0:
        return _attr_names.map(Leaf)
    children = st.lists(_trees(depth - 1), min_size=1, max_size=4)
    return st.one_of(
        _attr_names.map(Leaf),
        children.flatmap(
            lambda cs: st.integers(1, len(cs)).map(lambda k: Gate(k, tuple(cs)))
        ),
    )


@given(_trees())
@settings(max_examples=150, deadline=None)
def test_tree_encoding_roundtrip(tree):
    raw = tree_to_bytes(tree)
    decoded, consumed = tree_from_bytes(raw)
    assert decoded == tree
    assert consumed == len(raw)


def test_tree_encoding_roundtrip_compiled_policy():
    tree = parse_policy("firm:xyz AND dept:financial AND clearance > 3")
    decoded, consumed = tree_from_bytes(tree_to_bytes(tree))
    assert decoded == tree


def test_tree_from_bytes_rejects_malformed():
    tree = parse_policy("a AND b")
    raw = tree_to_bytes(tree)
    with pytest.raises(PolicyError):
        tree_from_bytes(raw[:-1])  # truncated
    with pytest.raises(PolicyError):
        tree_from_bytes(b"\x07" + raw[1:])  # unknown tag
    with pytest.raises(PolicyError):
        tree_from_bytes(b"")
    # non-canonical leaf attribute text
    bad = bytearray(tree_to_bytes(Leaf("abc")))
    bad[2] = ord("A")
    with pytest.raises(PolicyError):
        tree_from_bytes(bytes(bad))
    # gate with zero children
    with pytest.raises(PolicyError):
        tree_from_bytes(bytes([1, 1, 0]))


def test_tree_from_bytes_depth_and_size_caps():
    # 70 nested 1-of-1 gates exceed the depth cap.
    deep = bytes([1, 1, 1]) * 70 + tree_to_bytes(Leaf("a"))
    with pytest.raises(PolicyError):
        tree_from_bytes(deep)


def test_tree_leaves_preorder():
    tree = parse_policy("(a OR b) AND c")
    assert tree_leaves(tree) == ["a", "b", "c"]


def test_tree_node_count():
    tree = parse_policy("(a OR b) AND c")
    assert tree_node_count(tree) == 5

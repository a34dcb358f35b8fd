"""Access-tree policy language: parsing, numeric comparisons, evaluation.

An attribute is a canonical string: lowercase, no whitespace, optionally
namespaced with colons ("firm:xyz", "dept:financial").  Numeric user
attributes are written "name=value" in attribute sets and expand to one
bit-attribute per position ("clearance:bit3=0"); policies express numeric
tests as comparisons ("clearance > 3") which compile to threshold gates
over the same bit-attributes, so a value's attribute set satisfies the
compiled subtree exactly when the integer comparison holds.

Trees are threshold gates: AND is n-of-n, OR is 1-of-n, children are
ordered and 1-indexed (the indices feed the secret-sharing polynomials).
"""

import re
from dataclasses import dataclass
from typing import Union

DEFAULT_WIDTH = 8
_MAX_ARITY = 255
_MAX_NAME = 255
_MAX_NODES = 4096
_MAX_DEPTH = 64


class PolicyError(ValueError):
    """Malformed attribute, policy text, or tree encoding."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


@dataclass(frozen=True)
class Leaf:
    attr: str


@dataclass(frozen=True)
class Gate:
    k: int
    children: tuple

    def __post_init__(self):
        n = len(self.children)
        if not 1 <= self.k <= n:
            raise PolicyError(f"gate threshold {self.k} outside 1..{n}")
        if n > _MAX_ARITY:
            raise PolicyError(f"gate arity {n} exceeds {_MAX_ARITY}")


AccessTree = Union[Leaf, Gate]


_ATTR_RE = re.compile(r"[a-z0-9:_.=-]+\Z")
_BIT_ATTR_RE = re.compile(r".+:bit\d+=[01]\Z")
_NUMERIC_RE = re.compile(r"(?P<name>[^=]+)=(?P<value>[0-9]+)\Z")


def canonicalize_attribute(name):
    """Normalize an attribute to canonical form; idempotent."""
    canonical = name.strip().lower()
    if not canonical:
        raise PolicyError("empty attribute name")
    if not _ATTR_RE.match(canonical):
        raise PolicyError(f"attribute {name!r} has characters outside [a-z0-9:_.=-]")
    if len(canonical.encode("utf-8")) > _MAX_NAME:
        raise PolicyError("attribute name too long")
    if canonical in ("and", "or"):
        raise PolicyError(f"{canonical!r} is a reserved word")
    if "=" in canonical and not _BIT_ATTR_RE.match(canonical) and not _NUMERIC_RE.match(canonical):
        raise PolicyError(f"attribute {name!r} misuses '='")
    return canonical


def expand_attributes(attrs, width=DEFAULT_WIDTH):
    """Canonicalize a user attribute set, expanding numeric sugar.

    "clearance=4" becomes the `width` bit-attributes of the value; plain
    attributes pass through canonicalization.  Expansion is idempotent.
    """
    out = set()
    for raw in attrs:
        attr = canonicalize_attribute(raw)
        m = None if _BIT_ATTR_RE.match(attr) else _NUMERIC_RE.match(attr)
        if m:
            value = int(m.group("value"))
            if value >= 1 << width:
                raise PolicyError(f"numeric attribute {attr!r} exceeds {width}-bit range")
            name = m.group("name")
            for i in range(width):
                out.add(f"{name}:bit{i}={(value >> i) & 1}")
        else:
            out.add(attr)
    return frozenset(out)


# ---------------------------------------------------------------------------
# Numeric comparisons as threshold subtrees over bit-attributes.

COMPARATORS = ("<", "<=", ">", ">=", "==")


def _bit_leaf(name, i, bit):
    return Leaf(f"{name}:bit{i}={bit}")


def _always(name, width):
    # Exactly one of bit{w-1}=0 / bit{w-1}=1 is in any value's expansion.
    return Gate(1, (_bit_leaf(name, width - 1, 0), _bit_leaf(name, width - 1, 1)))


def _never(name, width):
    del width
    return Gate(2, (_bit_leaf(name, 0, 0), _bit_leaf(name, 0, 1)))


def _strict_cmp(name, k, width, want_greater):
    """Subtree for v > k (want_greater) or v < k, MSB-first comparison."""
    pivot_bit = 0 if want_greater else 1
    branches = []
    for i in range(width - 1, -1, -1):
        if (k >> i) & 1 != pivot_bit:
            continue
        fixed = [_bit_leaf(name, j, (k >> j) & 1) for j in range(width - 1, i, -1)]
        fixed.append(_bit_leaf(name, i, 1 - pivot_bit))
        branches.append(Gate(len(fixed), tuple(fixed)))
    if not branches:
        return _never(name, width)
    return Gate(1, tuple(branches))


def compile_comparison(name, cmp, k, width=DEFAULT_WIDTH):
    """Compile `name cmp k` to a subtree over the name's bit-attributes."""
    name = canonicalize_attribute(name)
    if "=" in name:
        raise PolicyError(f"numeric comparison on non-plain attribute {name!r}")
    if cmp not in COMPARATORS:
        raise PolicyError(f"unknown comparator {cmp!r}")
    if not 0 <= k < 1 << width:
        raise PolicyError(f"comparison value {k} outside [0, {1 << width})")
    if cmp == "==":
        leaves = tuple(_bit_leaf(name, i, (k >> i) & 1) for i in range(width - 1, -1, -1))
        return Gate(width, leaves)
    if cmp == ">":
        return _strict_cmp(name, k, width, want_greater=True)
    if cmp == "<":
        return _strict_cmp(name, k, width, want_greater=False)
    if cmp == ">=":
        return _always(name, width) if k == 0 else _strict_cmp(name, k - 1, width, want_greater=True)
    # cmp == "<="
    if k == (1 << width) - 1:
        return _always(name, width)
    return _strict_cmp(name, k + 1, width, want_greater=False)


# ---------------------------------------------------------------------------
# Policy text parser.  Grammar (AND binds tighter than OR):
#   expr   := term ('OR' term)*
#   term   := factor ('AND' factor)*
#   factor := attribute | name cmp integer | '(' expr ')'

_TOKEN_RE = re.compile(r"(\()|(\))|(<=|>=|==|<|>)|([A-Za-z0-9:_.=-]+)|(\S)")


def _tokenize(text):
    tokens = []
    for m in _TOKEN_RE.finditer(text):
        pos = m.start()
        if m.group(1):
            tokens.append(("(", "(", pos))
        elif m.group(2):
            tokens.append((")", ")", pos))
        elif m.group(3):
            tokens.append(("cmp", m.group(3), pos))
        elif m.group(4):
            word = m.group(4)
            if word.upper() in ("AND", "OR"):
                tokens.append((word.upper(), word, pos))
            elif word.isdigit():
                tokens.append(("int", int(word), pos))
            else:
                tokens.append(("name", word, pos))
        else:
            raise PolicyError(f"unexpected character {m.group(5)!r}", pos)
    return tokens


class _Parser:
    def __init__(self, text, width):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.width = width
        self.text_len = len(text)

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else (None, None, self.text_len)

    def take(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def expr(self):
        terms = [self.term()]
        while self.peek()[0] == "OR":
            self.take()
            terms.append(self.term())
        return terms[0] if len(terms) == 1 else Gate(1, tuple(terms))

    def term(self):
        factors = [self.factor()]
        while self.peek()[0] == "AND":
            self.take()
            factors.append(self.factor())
        return factors[0] if len(factors) == 1 else Gate(len(factors), tuple(factors))

    def factor(self):
        kind, value, pos = self.take()
        if kind == "(":
            inner = self.expr()
            kind, _, pos = self.take()
            if kind != ")":
                raise PolicyError("expected ')'", pos)
            return inner
        if kind != "name":
            raise PolicyError(f"expected attribute or '(', got {value!r}", pos)
        if self.peek()[0] != "cmp":
            try:
                attr = canonicalize_attribute(value)
            except PolicyError as exc:
                raise PolicyError(str(exc), pos) from None
            if not _BIT_ATTR_RE.match(attr) and "=" in attr:
                raise PolicyError("use a comparison (name > k) for numeric tests", pos)
            return Leaf(attr)
        _, cmp, _ = self.take()
        kind, k, kpos = self.take()
        if kind != "int":
            raise PolicyError(f"expected integer after {cmp!r}", kpos)
        try:
            return compile_comparison(value, cmp, k, self.width)
        except PolicyError as exc:
            raise PolicyError(str(exc), pos) from None


def parse_policy(text, width=DEFAULT_WIDTH):
    """Parse policy text into an access tree; raises PolicyError with position."""
    parser = _Parser(text, width)
    if parser.peek()[0] is None:
        raise PolicyError("empty policy", 0)
    tree = parser.expr()
    kind, value, pos = parser.peek()
    if kind is not None:
        raise PolicyError(f"unexpected trailing token {value!r}", pos)
    return tree


# ---------------------------------------------------------------------------
# Evaluation and traversal.


def satisfies(attrs, tree):
    """Pure predicate: can `attrs` (canonical strings) satisfy the tree?"""
    if isinstance(tree, Leaf):
        return tree.attr in attrs
    hits = sum(1 for child in tree.children if satisfies(attrs, child))
    return hits >= tree.k


def tree_leaves(tree):
    """Leaf attributes in preorder — the ciphertext component order."""
    if isinstance(tree, Leaf):
        return [tree.attr]
    out = []
    for child in tree.children:
        out.extend(tree_leaves(child))
    return out


def tree_node_count(tree):
    if isinstance(tree, Leaf):
        return 1
    return 1 + sum(tree_node_count(child) for child in tree.children)


def render_tree(tree):
    """Readable one-line rendering: AND/OR for n-of-n/1-of-n, k-of-n otherwise."""
    if isinstance(tree, Leaf):
        return tree.attr
    n = len(tree.children)
    if tree.k == n:
        label = "AND"
    elif tree.k == 1:
        label = "OR"
    else:
        label = f"{tree.k}-of-{n}"
    return f"{label}({', '.join(render_tree(c) for c in tree.children)})"


# ---------------------------------------------------------------------------
# Canonical byte encoding: gate = 0x01 k n children..., leaf = 0x02 len name.

_TAG_GATE = 1
_TAG_LEAF = 2


def tree_to_bytes(tree):
    out = bytearray()

    def emit(node):
        if isinstance(node, Leaf):
            raw = node.attr.encode("utf-8")
            out.append(_TAG_LEAF)
            out.append(len(raw))
            out.extend(raw)
        else:
            out.append(_TAG_GATE)
            out.append(node.k)
            out.append(len(node.children))
            for child in node.children:
                emit(child)

    emit(tree)
    return bytes(out)


def tree_from_bytes(data, offset=0):
    """Decode one tree from `data` at `offset`; returns (tree, next_offset)."""
    count = 0

    def parse(off, depth):
        nonlocal count
        count += 1
        if count > _MAX_NODES:
            raise PolicyError("tree too large")
        if depth > _MAX_DEPTH:
            raise PolicyError("tree too deep")
        if off >= len(data):
            raise PolicyError("truncated tree encoding")
        tag = data[off]
        if tag == _TAG_LEAF:
            if off + 2 > len(data):
                raise PolicyError("truncated leaf")
            length = data[off + 1]
            end = off + 2 + length
            if end > len(data):
                raise PolicyError("truncated leaf name")
            try:
                name = data[off + 2 : end].decode("utf-8")
            except UnicodeDecodeError:
                raise PolicyError("leaf name not valid UTF-8") from None
            attr = canonicalize_attribute(name)
            if attr != name:
                raise PolicyError(f"non-canonical leaf attribute {name!r}")
            return Leaf(attr), end
        if tag == _TAG_GATE:
            if off + 3 > len(data):
                raise PolicyError("truncated gate")
            k, n = data[off + 1], data[off + 2]
            if n == 0:
                raise PolicyError("empty gate")
            children = []
            cur = off + 3
            for _ in range(n):
                child, cur = parse(cur, depth + 1)
                children.append(child)
            return Gate(k, tuple(children)), cur
        raise PolicyError(f"unknown tree tag {tag}")

    return parse(offset, 0)

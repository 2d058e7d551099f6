"""Hash-consed boolean expression DAGs over nonce, key and round-constant bits.

XOR nodes are n-ary and kept flat: nested XORs are spliced, repeated terms
cancel in pairs and literal ones fold into a single ``1`` term.  AND/OR are
binary.  There is no NOT; a literal ``1`` under XOR plays that role.
"""

from __future__ import annotations

from typing import Dict, Iterable, NamedTuple

from .permutation import ROUND_CONSTANT

# Round constant whose bits the symbolic constant leaves stand for.
CONSTANT_WORD = ROUND_CONSTANT ^ 24


class BitRef(NamedTuple):
    source: str  # 'n' nonce word, 'k' key word, 'c' round-constant bit
    word: int
    bit: int

    def __str__(self):
        if self.source == "c":
            return f"c{self.bit}"
        return f"{self.source}{self.word}.{self.bit}"

    @classmethod
    def parse(cls, text: str) -> "BitRef":
        if text[0] == "c":
            return cls("c", 0, int(text[1:]))
        word, bit = text[1:].split(".")
        return cls(text[0], int(word), int(bit))

    def constant_value(self) -> int:
        return (CONSTANT_WORD >> self.bit) & 1


def nonce_bit(word: int, bit: int) -> BitRef:
    return BitRef("n", word, bit)


def key_bit(word: int, bit: int) -> BitRef:
    return BitRef("k", word, bit)


def constant_bit(bit: int) -> BitRef:
    return BitRef("c", 0, bit)


class Node:
    __slots__ = ("op", "args", "ref", "uid", "pool", "_leaves")

    def __init__(self, op, args, ref, uid, pool):
        self.op = op        # 'const', 'var', 'xor', 'and', 'or'
        self.args = args    # child nodes (sorted by uid); (value,) for const
        self.ref = ref      # BitRef for 'var'
        self.uid = uid      # unique within ``pool``
        self.pool = pool
        self._leaves = None

    def __repr__(self):
        return f"<{self.op} #{self.uid}>"

    @property
    def leaves(self) -> frozenset:
        if self._leaves is None:
            if self.op == "var":
                self._leaves = frozenset((self.ref,))
            elif self.op == "const":
                self._leaves = frozenset()
            else:
                self._leaves = frozenset().union(*(a.leaves for a in self.args))
        return self._leaves

    def key_leaves(self) -> frozenset:
        return frozenset(r for r in self.leaves if r.source == "k")

    def nonce_leaves(self) -> frozenset:
        return frozenset(r for r in self.leaves if r.source == "n")

    @property
    def has_nonce(self) -> bool:
        return any(r.source == "n" for r in self.leaves)

    @property
    def has_key(self) -> bool:
        return any(r.source == "k" for r in self.leaves)


class ExprPool:
    """Interning table; structurally equal expressions are the same object."""

    def __init__(self):
        self._table: Dict[tuple, Node] = {}
        self.zero = self._intern(("const", 0), "const", (0,), None)
        self.one = self._intern(("const", 1), "const", (1,), None)

    def _intern(self, key, op, args, ref):
        node = self._table.get(key)
        if node is None:
            node = Node(op, args, ref, len(self._table), self)
            self._table[key] = node
        return node

    def __len__(self):
        return len(self._table)

    def const(self, value: int) -> Node:
        return self.one if value else self.zero

    def var(self, ref: BitRef) -> Node:
        return self._intern(("var", ref), "var", (), ref)

    def xor(self, *terms: Node) -> Node:
        odd: Dict[int, Node] = {}
        parity = 0

        def add(t):
            nonlocal parity
            if t.op == "const":
                parity ^= t.args[0]
            elif t.op == "xor":
                for u in t.args:
                    add(u)
            elif t.uid in odd:
                del odd[t.uid]
            else:
                odd[t.uid] = t

        for t in terms:
            add(t)
        args = sorted(odd.values(), key=lambda n: n.uid)
        if parity:
            args.insert(0, self.one)
        if not args:
            return self.zero
        if len(args) == 1:
            return args[0]
        args = tuple(args)
        return self._intern(("xor",) + tuple(a.uid for a in args), "xor", args, None)

    def and_(self, x: Node, y: Node) -> Node:
        if x.op == "const":
            return y if x.args[0] else self.zero
        if y.op == "const":
            return x if y.args[0] else self.zero
        if x is y:
            return x
        if y.uid < x.uid:
            x, y = y, x
        return self._intern(("and", x.uid, y.uid), "and", (x, y), None)

    def or_(self, x: Node, y: Node) -> Node:
        if x.op == "const":
            return self.one if x.args[0] else y
        if y.op == "const":
            return self.one if y.args[0] else x
        if x is y:
            return x
        if y.uid < x.uid:
            x, y = y, x
        return self._intern(("or", x.uid, y.uid), "or", (x, y), None)


def topo_order(root: Node) -> list:
    """Nodes reachable from ``root``, children before parents."""
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if node.uid in seen:
            continue
        seen.add(node.uid)
        stack.append((node, True))
        for a in node.args if node.op in ("xor", "and", "or") else ():
            if a.uid not in seen:
                stack.append((a, False))
    return order


def evaluate_expr(root: Node, env, ones=1):
    """Evaluate with ``env`` mapping BitRef -> value.

    Values may be ints (0/1, or bit-packed over many samples) or numpy
    integer arrays; ``ones`` is the all-ones value of that domain.  Constant
    leaves missing from ``env`` take their round-constant value.
    """
    vals = {}
    for node in topo_order(root):
        if node.op == "const":
            v = ones if node.args[0] else 0 * ones
        elif node.op == "var":
            if node.ref in env:
                v = env[node.ref]
            elif node.ref.source == "c":
                v = ones if node.ref.constant_value() else 0 * ones
            else:
                raise KeyError(f"no value for {node.ref}")
        elif node.op == "xor":
            args = node.args
            v = vals[args[0].uid]
            for a in args[1:]:
                v = v ^ vals[a.uid]
        elif node.op == "and":
            v = vals[node.args[0].uid] & vals[node.args[1].uid]
        else:
            v = vals[node.args[0].uid] | vals[node.args[1].uid]
        vals[node.uid] = v
    return vals[root.uid]


def to_prefix(node: Node) -> str:
    if node.op == "const":
        return str(node.args[0])
    if node.op == "var":
        return str(node.ref)
    return "(" + node.op + " " + " ".join(to_prefix(a) for a in node.args) + ")"


def to_infix(node: Node) -> str:
    """Readable infix form; ``^`` binds loosest, AND/OR are parenthesised."""
    if node.op == "const":
        return str(node.args[0])
    if node.op == "var":
        return str(node.ref)
    if node.op == "xor":
        return " ^ ".join(_infix_term(a) for a in node.args)
    sym = " & " if node.op == "and" else " | "
    return _infix_term(node.args[0]) + sym + _infix_term(node.args[1])


def _infix_term(node: Node) -> str:
    if node.op in ("and", "or", "xor"):
        return "(" + to_infix(node) + ")"
    return to_infix(node)


def parse_prefix(text: str, pool: ExprPool) -> Node:
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def parse():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            op = tokens[pos]
            pos += 1
            args = []
            while tokens[pos] != ")":
                args.append(parse())
            pos += 1
            if op == "xor":
                return pool.xor(*args)
            if op == "and":
                return pool.and_(*args)
            if op == "or":
                return pool.or_(*args)
            raise ValueError(f"unknown operator {op!r}")
        if tok in ("0", "1"):
            return pool.const(int(tok))
        return pool.var(BitRef.parse(tok))

    node = parse()
    if pos != len(tokens):
        raise ValueError("trailing tokens in expression")
    return node


def leaves_of(nodes: Iterable[Node]) -> frozenset:
    return frozenset().union(*(n.leaves for n in nodes))

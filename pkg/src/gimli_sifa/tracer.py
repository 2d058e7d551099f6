"""Bit-level dependency tracing through the first rounds of the permutation.

A target names one state bit *before* round ``r`` (i.e. right after round
``r + 1`` completed).  :func:`trace` rebuilds it symbolically from the
initial state (nonce in row ``a``, key in rows ``b`` and ``c``) and the
round-24 constant.  :func:`reduce_layout` turns the expression into the
small set of key-derived parameters an attacker has to guess.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .aead import Key, Nonce, init_state
from .expr import (BitRef, ExprPool, Node, constant_bit, evaluate_expr, key_bit,
                   nonce_bit, to_infix, topo_order)
from .permutation import (ROUND_CONSTANT, ROWS, permute_batch, permute_hooked,
                          spbox_shift)

SUPPORTED_ROUNDS = (23, 22, 21, 20)


@dataclass(frozen=True)
class Target:
    round: int   # state before this round of the first permutation
    row: str
    col: int
    bit: int

    def __post_init__(self):
        if self.row not in ROWS or not 0 <= self.col < 4 or not 0 <= self.bit < 32:
            raise ValueError(f"bad target {self}")

    @property
    def boundary(self) -> int:
        """Round boundary (round just completed) at which this bit exists."""
        return self.round + 1

    def __str__(self):
        return f"{self.row}^{self.round}_{self.col},{self.bit}"


class _Tracer:
    def __init__(self, pool: ExprPool, variant: str):
        self.pool = pool
        self.sh = spbox_shift(variant)
        self.memo: Dict[tuple, Node] = {}

    def get(self, rnd: int, row: str, col: int, i: int) -> Node:
        key = (rnd, row, col, i)
        node = self.memo.get(key)
        if node is None:
            node = self._build(rnd, row, col, i)
            self.memo[key] = node
        return node

    def _build(self, rnd, row, col, i):
        p = self.pool
        if rnd == 24:
            if row == "a":
                return p.var(nonce_bit(col, i))
            return p.var(key_bit(col if row == "b" else 4 + col, i))
        rr = rnd + 1  # round that produced this state
        src = col
        extra = None
        if row == "a":
            if rr % 4 == 0:
                src = col ^ 1
                if col == 0:
                    if rr == 24:
                        extra = p.var(constant_bit(i))
                    else:
                        extra = p.const((ROUND_CONSTANT ^ rr) >> i & 1)
            elif rr % 4 == 2:
                src = col ^ 2
        node = self._spbox_bit(rr, row, src, i)
        return p.xor(node, extra) if extra is not None else node

    def _spbox_bit(self, rr, row, c, i):
        p = self.pool

        def x(j):
            return self.get(rr, "a", c, (j + 8) % 32)

        def y(j):
            return self.get(rr, "b", c, (j + 23) % 32)

        def z(j):
            return self.get(rr, "c", c, j)

        if row == "c":
            terms = [x(i)]
            if i >= 1:
                terms.append(z(i - 1))
            if i >= self.sh:
                terms.append(p.and_(y(i - self.sh), z(i - self.sh)))
        elif row == "b":
            terms = [y(i), x(i)]
            if i >= 1:
                terms.append(p.or_(x(i - 1), z(i - 1)))
        else:
            terms = [z(i), y(i)]
            if i >= 3:
                terms.append(p.and_(x(i - 3), y(i - 3)))
        return p.xor(*terms)


def trace(target: Target, variant: str = "official", pool: Optional[ExprPool] = None) -> Node:
    if target.round not in SUPPORTED_ROUNDS:
        raise ValueError(f"tracing supports rounds {SUPPORTED_ROUNDS}, got {target.round}")
    return _Tracer(pool or ExprPool(), variant).get(target.round, target.row, target.col, target.bit)


def key_bit_count(expr: Node) -> int:
    return len(expr.key_leaves())


# -- ground truth -------------------------------------------------------------

def oracle_bit(key: Key, nonce: Nonce, target: Target, variant: str = "official") -> int:
    s = permute_hooked(init_state(key, nonce), None, variant, stop_after=target.boundary)
    return s.bit(target.row, target.col, target.bit)


def oracle_bits(keys: np.ndarray, nonces: np.ndarray, target: Target,
                variant: str = "official") -> np.ndarray:
    """Vectorised :func:`oracle_bit` over ``(n, 8)`` keys and ``(n, 4)`` nonces."""
    keys = np.asarray(keys, dtype=np.uint32)
    nonces = np.asarray(nonces, dtype=np.uint32)
    if keys.ndim == 1:
        keys = np.broadcast_to(keys, (len(nonces), 8))
    st = permute_batch(np.concatenate([nonces, keys], axis=1), None, variant,
                       stop_after=target.boundary)
    w = st[:, 4 * ROWS.index(target.row) + target.col]
    return ((w >> np.uint32(target.bit)) & np.uint32(1)).astype(np.uint8)


# -- hypothesis layout --------------------------------------------------------

@dataclass
class HypothesisLayout:
    """Parameters an attacker guesses for one traced bit.

    ``unique_bits`` are single key bits; each entry of ``groups`` is a
    key-only sub-expression that enters the target as one bit.  Parameter
    ``j`` is bit ``j`` of a hypothesis index: unique bits first, then groups.
    """

    expr: Node
    unique_bits: Tuple[BitRef, ...]
    groups: Tuple[Node, ...]
    # uid of every key-only block -> ('group', j) or ('derived', None)
    blocks: Dict[int, Tuple[str, Optional[int]]] = field(repr=False)

    @property
    def parameter_count(self) -> int:
        return len(self.unique_bits) + len(self.groups)

    @property
    def n_keybits(self) -> int:
        return len(self.expr.key_leaves())

    @property
    def absorbed_bits(self) -> frozenset:
        """Key bits only recoverable through a group."""
        return self.expr.key_leaves() - frozenset(self.unique_bits)

    def parameter_names(self) -> List[str]:
        return [str(r) for r in self.unique_bits] + [to_infix(g) for g in self.groups]


def _blocks(root: Node, pool: ExprPool) -> Tuple[List[Node], Dict[int, Node]]:
    """Maximal key-only sub-expressions, in first-visit order.

    Returns the distinct blocks and a map from the uid of each XOR node to the
    block formed by its key-only terms.
    """
    blocks: Dict[int, Node] = {}
    xor_block: Dict[int, Node] = {}
    seen = set()

    def add(b):
        blocks.setdefault(b.uid, b)

    def visit(node):
        if node.uid in seen:
            return
        seen.add(node.uid)
        if node.op == "xor":
            kterms = [t for t in node.args if t.has_key and not t.has_nonce]
            if kterms:
                b = pool.xor(*kterms)
                xor_block[node.uid] = b
                add(b)
            for t in node.args:
                if t.has_nonce:
                    visit(t)
        elif node.op in ("and", "or"):
            for t in node.args:
                if t.has_nonce:
                    visit(t)
                elif t.has_key:
                    add(t)

    if root.has_key and not root.has_nonce:
        add(root)
    else:
        visit(root)
    return list(blocks.values()), xor_block


def _linear_free_bit(block: Node, free: frozenset) -> Optional[BitRef]:
    """The free bit if ``block`` is that bit XOR terms not involving it."""
    if len(free) != 1:
        return None
    (f,) = free
    if block.op == "var":
        return f if block.ref == f else None
    if block.op != "xor":
        return None
    direct = [t for t in block.args if t.op == "var" and t.ref == f]
    others = [t for t in block.args if not (t.op == "var" and t.ref == f)]
    if len(direct) == 1 and all(f not in t.leaves for t in others):
        return f
    return None


def reduce_layout(expr: Node) -> HypothesisLayout:
    """Collapse key-only sub-expressions into parameters.

    A block that is a lone key bit makes that bit a unique parameter.  A
    compound block whose key bits are all unique parameters is computable and
    adds nothing; one with exactly one other key bit, entering linearly, is
    re-parametrised by that bit (it becomes unique).  Every other compound
    block is a group parameter.
    """
    blocks, _ = _blocks(expr, expr.pool)
    unique = {b.ref for b in blocks if b.op == "var"}
    compound = [b for b in blocks if b.op != "var"]
    changed = True
    while changed:
        changed = False
        for b in compound:
            f = _linear_free_bit(b, b.key_leaves() - unique)
            if f is not None and f not in unique:
                unique.add(f)
                changed = True
    groups = [b for b in compound if b.key_leaves() - unique]
    groups.sort(key=lambda g: sorted(g.key_leaves()))
    gindex = {g.uid: j for j, g in enumerate(groups)}
    info = {b.uid: (("group", gindex[b.uid]) if b.uid in gindex else ("derived", None))
            for b in blocks}
    return HypothesisLayout(expr, tuple(sorted(unique)), tuple(groups), info)


def induced_hypothesis(layout: HypothesisLayout, key: Key) -> int:
    """Hypothesis index whose parameters are the true values under ``key``."""
    env = {key_bit(w, b): key.bit(w, b) for w in range(8) for b in range(32)}
    h = 0
    for j, ref in enumerate(layout.unique_bits):
        h |= key.bit(ref.word, ref.bit) << j
    base = len(layout.unique_bits)
    for j, g in enumerate(layout.groups):
        h |= int(evaluate_expr(g, env)) << (base + j)
    return h


def hypothesis_parameters(layout: HypothesisLayout, h: int) -> List[int]:
    return [(h >> j) & 1 for j in range(layout.parameter_count)]


# -- compiled evaluation ------------------------------------------------------

class CompiledBit:
    """Straight-line program for one target bit under a layout.

    Registers hold values of any type supporting ``^ & |``: Python ints for
    scalar or bit-packed evaluation, numpy uint64 arrays for bulk hypothesis
    enumeration (shape ``(H, 1)`` for parameters, ``(1, W)`` for nonces).
    """

    def __init__(self, layout: HypothesisLayout):
        self.layout = layout
        _, xor_block = _blocks(layout.expr, layout.expr.pool)
        unique_slot = {r: j for j, r in enumerate(layout.unique_bits)}
        base = len(layout.unique_bits)
        self.nonce_refs: List[BitRef] = []
        nonce_slot: Dict[BitRef, int] = {}
        self.code: List[tuple] = []
        reg: Dict[tuple, int] = {}

        def emit(key, instr):
            r = reg.get(key)
            if r is None:
                r = len(self.code)
                self.code.append(instr)
                reg[key] = r
            return r

        def leaf(ref: BitRef):
            if ref.source == "c":
                return emit(("const", ref.constant_value()), ("const", ref.constant_value()))
            if ref.source == "n":
                if ref not in nonce_slot:
                    nonce_slot[ref] = len(self.nonce_refs)
                    self.nonce_refs.append(ref)
                return emit(("nonce", ref), ("nonce", nonce_slot[ref]))
            if ref not in unique_slot:
                raise AssertionError(f"key bit {ref} is neither unique nor inside a group")
            return emit(("param", unique_slot[ref]), ("param", unique_slot[ref]))

        def block(b: Node):
            kind, j = layout.blocks[b.uid]
            if kind == "group":
                return emit(("param", base + j), ("param", base + j))
            return plain(b)

        def combine(node, regs):
            if node.op == "xor":
                return emit(("xor",) + tuple(sorted(regs)), ("xor", tuple(sorted(regs))))
            a, b = sorted(regs)
            return emit((node.op, a, b), (node.op, a, b))

        def plain(node: Node):
            # key-only structure with unique bits as inputs
            if node.op == "const":
                return emit(("const", node.args[0]), ("const", node.args[0]))
            if node.op == "var":
                return leaf(node.ref)
            return combine(node, [plain(a) for a in node.args])

        memo: Dict[int, int] = {}

        def walk(node: Node):
            if node.uid in memo:
                return memo[node.uid]
            if not node.has_nonce:
                r = block(node) if node.has_key else plain(node)
            elif node.op == "var":
                r = leaf(node.ref)
            elif node.op == "xor":
                regs = [walk(t) for t in node.args if t.has_nonce]
                regs += [plain(t) for t in node.args if not t.has_nonce and not t.has_key]
                if node.uid in xor_block:
                    regs.append(block(xor_block[node.uid]))
                r = regs[0] if len(regs) == 1 else combine(node, regs)
            else:
                r = combine(node, [walk(a) for a in node.args])
            memo[node.uid] = r
            return r

        self.out = walk(layout.expr)

    @property
    def parameter_count(self) -> int:
        return self.layout.parameter_count

    def run(self, params: Sequence, nonces: Sequence, ones=1):
        vals = []
        for instr in self.code:
            op = instr[0]
            if op == "param":
                v = params[instr[1]]
            elif op == "nonce":
                v = nonces[instr[1]]
            elif op == "const":
                v = ones if instr[1] else 0 * ones
            elif op == "xor":
                regs = instr[1]
                v = vals[regs[0]]
                for r in regs[1:]:
                    v = v ^ vals[r]
            elif op == "and":
                v = vals[instr[1]] & vals[instr[2]]
            else:
                v = vals[instr[1]] | vals[instr[2]]
            vals.append(v)
        return vals[self.out]


def evaluate(expr: Node, layout: HypothesisLayout, h: int, nonce: Nonce,
             compiled: Optional[CompiledBit] = None) -> int:
    """Predicted target bit for hypothesis ``h`` and one nonce."""
    if layout.expr is not expr:
        raise ValueError("layout was built for a different expression")
    if not 0 <= h < 1 << layout.parameter_count:
        raise ValueError("hypothesis index out of range")
    cb = compiled or CompiledBit(layout)
    params = hypothesis_parameters(layout, h)
    nv = [nonce.bit(r.word, r.bit) for r in cb.nonce_refs]
    return int(cb.run(params, nv))


def pack_nonce_bits(refs: Sequence[BitRef], nonces: np.ndarray) -> List[int]:
    """Bit-pack each referenced nonce bit across ``nonces`` into a Python int
    (sample ``j`` in bit ``j``)."""
    nonces = np.asarray(nonces, dtype=np.uint32)
    out = []
    for r in refs:
        bits = ((nonces[:, r.word] >> np.uint32(r.bit)) & np.uint32(1)).astype(np.uint8)
        out.append(int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little"))
    return out


def predict_bits(cb: CompiledBit, h: int, nonces: np.ndarray) -> np.ndarray:
    """Predicted bit for hypothesis ``h`` over an ``(n, 4)`` nonce array."""
    n = len(nonces)
    ones = (1 << n) - 1
    params = [ones if b else 0 for b in hypothesis_parameters(cb.layout, h)]
    v = cb.run(params, pack_nonce_bits(cb.nonce_refs, nonces), ones)
    raw = np.frombuffer(int(v).to_bytes((n + 7) // 8, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:n]


def evaluate_with_keys(cb: CompiledBit, keys: np.ndarray, nonces: np.ndarray) -> np.ndarray:
    """Predicted bit per row of ``(n, 8)`` keys and ``(n, 4)`` nonces, each row
    using the hypothesis its own key induces."""
    keys = np.asarray(keys, dtype=np.uint32)
    nonces = np.asarray(nonces, dtype=np.uint32)

    def bits(arr, r):
        return ((arr[:, r.word] >> np.uint32(r.bit)) & np.uint32(1)).astype(np.uint8)

    lay = cb.layout
    env = {r: bits(keys, r) for r in lay.expr.key_leaves()}
    params = [env[r] for r in lay.unique_bits]
    params += [np.asarray(evaluate_expr(g, env, np.uint8(1)), dtype=np.uint8) for g in lay.groups]
    nv = [bits(nonces, r) for r in cb.nonce_refs]
    out = cb.run(params, nv, np.uint8(1))
    return np.broadcast_to(np.asarray(out, dtype=np.uint8), (len(nonces),)).copy()


# -- windows and rendering ----------------------------------------------------

@dataclass
class TargetBit:
    target: Target
    expr: Node
    layout: HypothesisLayout
    compiled: CompiledBit


def target_window(base: Target, width: int, variant: str = "official",
                  pool: Optional[ExprPool] = None) -> List[TargetBit]:
    if width < 1 or base.bit + width > 32:
        raise ValueError("window must lie within one word")
    pool = pool or ExprPool()
    out = []
    for i in range(base.bit, base.bit + width):
        t = Target(base.round, base.row, base.col, i)
        e = trace(t, variant, pool)
        lay = reduce_layout(e)
        out.append(TargetBit(t, e, lay, CompiledBit(lay)))
    return out


def render_dependency_map(expr: Node) -> str:
    """Initial-state grid marking involved bits with '1' (bit 31 leftmost)."""
    marked = expr.leaves
    lines = []
    for row in ROWS:
        words = []
        for col in range(4):
            ref = (lambda i: nonce_bit(col, i)) if row == "a" else \
                  (lambda i: key_bit(col if row == "b" else 4 + col, i))
            words.append("".join("1" if ref(i) in marked else "-" for i in range(31, -1, -1)))
        lines.append(f"{row}: " + " ".join(words))
    return "\n".join(lines)


def marked_bits(grid: str) -> int:
    return sum(line.split(":", 1)[1].count("1") for line in grid.splitlines())

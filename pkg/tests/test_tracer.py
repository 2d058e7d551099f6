import numpy as np
import pytest

from gimli_sifa.aead import Key, Nonce
from gimli_sifa.expr import (BitRef, ExprPool, evaluate_expr, key_bit, nonce_bit, parse_prefix,
                             to_infix, to_prefix)
from gimli_sifa.tracer import (CompiledBit, Target, evaluate, evaluate_with_keys, hypothesis_parameters,
                               induced_hypothesis, key_bit_count, marked_bits, oracle_bit, oracle_bits,
                               predict_bits, reduce_layout, render_dependency_map, target_window, trace)

B7 = {r: Target(r, "b", 0, 7) for r in (23, 22, 21, 20)}


def rand_words(rng, n, k):
    return rng.integers(0, 1 << 32, (n, k), dtype=np.uint64).astype(np.uint32)


def full_env(key_row, nonce_row):
    env = {key_bit(w, b): int(key_row[w] >> b & 1) for w in range(8) for b in range(32)}
    env.update({nonce_bit(w, b): int(nonce_row[w] >> b & 1) for w in range(4) for b in range(32)})
    return env


def test_r23_structure():
    e = trace(B7[23])
    assert key_bit_count(e) == 2 and len(e.nonce_leaves()) == 2
    assert e.op == "xor"
    ops = sorted(a.op for a in e.args)
    assert ops == ["or", "var", "var"]
    (orn,) = [a for a in e.args if a.op == "or"]
    assert {r.source for r in orn.leaves} == {"n", "k"}
    assert {a.ref.source for a in e.args if a.op == "var"} == {"n", "k"}


def test_r23_expression():
    # the oracle decides the leaf index
    assert to_infix(trace(B7[23])) == "k0.30 ^ n0.15 ^ (n0.14 | k4.6)"


def test_r22_key_bits():
    assert key_bit_count(trace(B7[22])) == 11


@pytest.mark.parametrize("variant", ["official", "shift3"])
def test_key_leaf_set_matches_oracle_influence(variant):
    rng = np.random.default_rng(3)
    n = 3000
    for r in (23, 22, 21):
        t = B7[r]
        leaves = trace(t, variant).key_leaves()
        keys, nonces = rand_words(rng, n, 8), rand_words(rng, n, 4)
        base = oracle_bits(keys, nonces, t, variant)
        influential = set()
        for w in range(8):
            for b in range(32):
                k2 = keys.copy()
                k2[:, w] ^= np.uint32(1 << b)
                if (oracle_bits(k2, nonces, t, variant) != base).any():
                    influential.add(key_bit(w, b))
        assert influential == set(leaves)


def test_unsupported_round():
    with pytest.raises(ValueError):
        trace(Target(19, "b", 0, 7))
    with pytest.raises(ValueError):
        Target(22, "d", 0, 7)


def test_r22_layout():
    lay = reduce_layout(trace(B7[22]))
    assert lay.parameter_count == 6
    assert [str(r) for r in lay.unique_bits] == ["k1.2", "k1.3", "k4.29"]
    assert lay.parameter_names()[3:] == ["k0.21 ^ k5.15 ^ k1.6", "k4.5 ^ (k0.27 & k4.4)", "k5.14 ^ k1.5"]


def test_r21_layout():
    lay = reduce_layout(trace(B7[21]))
    assert len(lay.unique_bits) == 15 and len(lay.groups) == 7 and lay.parameter_count == 22


def test_r23_layout():
    lay = reduce_layout(trace(B7[23]))
    assert [str(r) for r in lay.unique_bits] == ["k0.30", "k4.6"] and lay.groups == ()


@pytest.mark.parametrize("r", [23, 22, 21])
def test_layout_partitions_key_bits(r):
    lay = reduce_layout(trace(B7[r]))
    in_groups = set().union(*(g.key_leaves() for g in lay.groups)) if lay.groups else set()
    assert set(lay.unique_bits) | in_groups == set(lay.expr.key_leaves())
    assert lay.absorbed_bits == in_groups - set(lay.unique_bits)
    assert lay.parameter_count == len(lay.unique_bits) + len(lay.groups)


@pytest.mark.parametrize("variant", ["official", "shift3"])
@pytest.mark.parametrize("r", [23, 22, 21])
def test_soundness_window(variant, r):
    rng = np.random.default_rng(r)
    keys, nonces = rand_words(rng, 10 ** 4, 8), rand_words(rng, 10 ** 4, 4)
    for tb in target_window(Target(r, "b", 0, 0), 8, variant):
        truth = oracle_bits(keys, nonces, tb.target, variant)
        assert np.array_equal(evaluate_with_keys(tb.compiled, keys, nonces), truth)


@pytest.mark.parametrize("r", [23, 22, 21, 20])
def test_expression_equals_oracle_with_full_assignment(r):
    rng = np.random.default_rng(40 + r)
    keys, nonces = rand_words(rng, 300, 8), rand_words(rng, 300, 4)
    e = trace(B7[r])
    truth = oracle_bits(keys, nonces, B7[r])
    got = [evaluate_expr(e, full_env(k, n)) for k, n in zip(keys, nonces)]
    assert got == truth.tolist()


@pytest.mark.parametrize("r", [23, 22, 21])
def test_completeness_untraced_bits(r):
    # flipping any of the 384 input bits outside the leaf set never changes the window bits
    rng = np.random.default_rng(100 + r)
    window = target_window(Target(r, "b", 0, 0), 8)
    keys, nonces = rand_words(rng, 64, 8), rand_words(rng, 64, 4)
    base = {tb.target: oracle_bits(keys, nonces, tb.target) for tb in window}
    for src, count in (("k", 8), ("n", 4)):
        for w in range(count):
            for b in range(32):
                k2, n2 = keys.copy(), nonces.copy()
                (k2 if src == "k" else n2)[:, w] ^= np.uint32(1 << b)
                ref = BitRef(src, w, b)
                for tb in window:
                    if ref not in tb.expr.leaves:
                        assert np.array_equal(oracle_bits(k2, n2, tb.target), base[tb.target])


def test_oracle_scalar_matches_batch():
    rng = np.random.default_rng(5)
    keys, nonces = rand_words(rng, 30, 8), rand_words(rng, 30, 4)
    batch = oracle_bits(keys, nonces, B7[22])
    for k, n, b in zip(keys, nonces, batch):
        assert oracle_bit(Key(tuple(map(int, k))), Nonce(tuple(map(int, n))), B7[22]) == b


def test_zero_key_zero_nonce_is_constant_only():
    e = trace(B7[22])
    env = {r: 0 for r in e.leaves if r.source != "c"}
    assert evaluate_expr(e, env) == oracle_bit(Key((0,) * 8), Nonce((0,) * 4), B7[22])
    lay = reduce_layout(e)
    assert evaluate(e, lay, 0, Nonce((0,) * 4)) == oracle_bit(Key((0,) * 8), Nonce((0,) * 4), B7[22])


def test_induced_hypothesis_scalar():
    rng = np.random.default_rng(8)
    e = trace(B7[22])
    lay = reduce_layout(e)
    cb = CompiledBit(lay)
    for _ in range(30):
        key = Key(tuple(int(x) for x in rand_words(rng, 1, 8)[0]))
        h = induced_hypothesis(lay, key)
        assert len(hypothesis_parameters(lay, h)) == 6
        nonces = rand_words(rng, 50, 4)
        truth = oracle_bits(np.array(key.words), nonces, B7[22])
        assert np.array_equal(predict_bits(cb, h, nonces), truth)
        n0 = Nonce(tuple(int(x) for x in nonces[0]))
        assert evaluate(e, lay, h, n0, cb) == truth[0]


def test_bulk_evaluation_order_independent():
    rng = np.random.default_rng(9)
    cb = target_window(B7[21], 1)[0].compiled
    nonces = rand_words(rng, 200, 4)
    perm = rng.permutation(200)
    for h in (0, 12345, (1 << 22) - 1):
        assert np.array_equal(predict_bits(cb, h, nonces)[perm], predict_bits(cb, h, nonces[perm]))


def test_evaluate_range_checks():
    e = trace(B7[22])
    lay = reduce_layout(e)
    with pytest.raises(ValueError):
        evaluate(e, lay, 64, Nonce((0,) * 4))
    with pytest.raises(ValueError):
        evaluate(trace(B7[23]), lay, 0, Nonce((0,) * 4))


def test_target_window_singleton():
    (tb,) = target_window(B7[22], 1)
    assert to_prefix(tb.expr) == to_prefix(trace(B7[22]))
    with pytest.raises(ValueError):
        target_window(Target(22, "b", 0, 30), 4)


def test_window_parameter_counts():
    counts = [tb.layout.parameter_count for tb in target_window(Target(22, "b", 0, 0), 8)]
    assert counts[7] == 6 and max(counts) == 6


def test_r22_bit7_aliasing():
    # With k1.2 = 0 the OR-term either swallows the k4.5 group or turns it into a
    # second complementing term, so pairs of hypotheses predict identically.
    tb = target_window(B7[22], 1)[0]
    nonces = rand_words(np.random.default_rng(4), 2000, 4)
    classes = {}
    for h in range(64):
        classes.setdefault(predict_bits(tb.compiled, h, nonces).tobytes(), []).append(h)
    sizes = sorted(len(c) for c in classes.values())
    assert sizes == [1] * 32 + [2] * 16
    for c in classes.values():
        if len(c) == 2:
            assert all(h & 1 == 0 for h in c)


def test_dependency_map_r23():
    grid = render_dependency_map(trace(B7[23]))
    assert marked_bits(grid) == 4
    lines = grid.splitlines()
    assert [ln[:2] for ln in lines] == ["a:", "b:", "c:"]
    assert all(len(w) == 32 for ln in lines for w in ln[3:].split())
    # n0.15 and n0.14 sit at positions 31-15 and 31-14 of the first a word
    assert lines[0][3:35] == "-" * 16 + "11" + "-" * 14


def test_dependency_map_r22():
    e = trace(B7[22])
    grid = render_dependency_map(e)
    key_marks = sum(ln.split(":", 1)[1].count("1") for ln in grid.splitlines()[1:])
    assert key_marks == 11
    assert marked_bits(grid) == len([r for r in e.leaves if r.source != "c"])


def test_prefix_roundtrip():
    e = trace(B7[22])
    pool = ExprPool()
    assert to_prefix(parse_prefix(to_prefix(e), pool)) == to_prefix(e)

import math

import numpy as np
import pytest

from gimli_sifa.aead import Key, Nonce
from gimli_sifa.campaign import (FaultSpec, TraceSet, TrialBudgetExceeded, collect_ineffective,
                                 count_ineffective, encrypt_fixed, fast_trials, faulted_decrypt,
                                 full_trials, intermediate_histogram, random_key, random_nonces,
                                 trial_stream)
from gimli_sifa.faults import FaultModel, analytic_rate
from gimli_sifa.stats import DistributionCounts, sei
from gimli_sifa.tracer import oracle_bits

PBF = FaultModel.parse("prob-bitflip")
KEY = random_key(7)


def spec(model="prob-bitflip", w=8, boundary=23, off=0):
    return FaultSpec(FaultModel.parse(model), w, boundary, "b", 0, off)


def within_3_sigma(hits, trials, rate):
    return abs(hits / trials - rate) <= 3 * math.sqrt(rate * (1 - rate) / trials)


def test_spec_validation():
    with pytest.raises(ValueError):
        FaultSpec(PBF, 8, 23, "b", 0, 25)
    with pytest.raises(ValueError):
        FaultSpec(PBF, 0, 23)
    with pytest.raises(ValueError):
        FaultSpec(PBF, 8, 25)
    with pytest.raises(ValueError):
        FaultSpec(PBF, 8, 23, "d")
    assert spec().target().round == 22


def test_bitflip_always_effective():
    s = spec("bitflip", 3, 20, 5)
    r = trial_stream(1, 0)
    for _ in range(20):
        n = Nonce(tuple(int(x) for x in random_nonces(r, 1)[0]))
        ct, tag = encrypt_fixed(KEY, n)
        assert faulted_decrypt(KEY, n, b"", ct, tag, s, r) == (None, False)
        assert faulted_decrypt(KEY, n, b"", ct, tag, s, r, fast=True) == (None, False)


def test_zero_mask_is_ineffective():
    s = FaultSpec(FaultModel("prob-bitflip", 0, 0), 8, 23)
    n = Nonce((1, 2, 3, 4))
    ct, tag = encrypt_fixed(KEY, n)
    out, ineff = faulted_decrypt(KEY, n, b"", ct, tag, s, trial_stream(0, 0))
    assert ineff and out == b"\x00" * 16


def test_scalar_paths_agree():
    s = spec("random-and", 2)
    fast, full = trial_stream(5, 0), trial_stream(5, 0)
    seen = set()
    for i in range(150):
        n = Nonce((i, 2 * i, 3, 4))
        ct, tag = encrypt_fixed(KEY, n)
        a = faulted_decrypt(KEY, n, b"", ct, tag, s, fast, fast=True)
        b = faulted_decrypt(KEY, n, b"", ct, tag, s, full)
        assert a == b
        seen.add(a[1])
    assert seen == {True, False}


@pytest.mark.parametrize("model,w", [("prob-bitflip", 8), ("random-and", 4), ("stuck-at-0", 1),
                                     ("random-or", 2)])
def test_batch_paths_agree(model, w):
    s = spec(model, w)
    r1, r2 = trial_stream(9, 0), trial_stream(9, 0)
    n = random_nonces(r1, 10 ** 4)
    random_nonces(r2, 10 ** 4)
    _, fast = fast_trials(KEY, n, s, r1)
    full = full_trials(KEY, n, s, r2)
    assert np.array_equal(fast, full) and fast.any()


def test_collect_rate_within_3_sigma():
    s = spec("random-and", 8)
    ts = collect_ineffective(KEY, s, 2000, 11)
    assert ts.n_ineff == 2000
    assert within_3_sigma(ts.n_ineff, ts.trials, float(analytic_rate(s.model, 8)))


def test_stuck_at_zero_forces_oracle_bit():
    s = spec("stuck-at-0", 1, off=7)
    ts = collect_ineffective(KEY, s, 300, 3)
    bits = oracle_bits(np.array(KEY.words), ts.nonces, s.target())
    assert not bits.any()


def test_collect_deterministic_and_schedule_free():
    a = collect_ineffective(KEY, spec(), 50, 4)
    b = collect_ineffective(KEY, spec(), 50, 4, jobs=3)
    assert a.dumps() == b.dumps()
    c = collect_ineffective(KEY, spec(), 50, 5)
    assert a.dumps() != c.dumps()


def test_collect_prefix_of_longer_run():
    a = collect_ineffective(KEY, spec(), 30, 4)
    b = collect_ineffective(KEY, spec(), 60, 4)
    assert np.array_equal(a.nonces, b.nonces[:30]) and a.trials <= b.trials


def test_collect_target_zero():
    ts = collect_ineffective(KEY, spec(), 0, 1)
    assert ts.n_ineff == 0 and ts.dumps().count("\n") == 1


def test_collect_bitflip_refused():
    with pytest.raises(ValueError):
        collect_ineffective(KEY, spec("bitflip"), 1, 0)


def test_trial_cap():
    with pytest.raises(TrialBudgetExceeded) as e:
        collect_ineffective(KEY, spec("prob-bitflip", 16), 10, 0, cap=5000)
    part = e.value.partial
    assert part.trials == 5000 and part.n_ineff < 10


def test_last_trial_is_ineffective():
    ts = collect_ineffective(KEY, spec("stuck-at-0", 4), 25, 8)
    # replaying exactly ts.trials trials finds the same nonces
    assert count_ineffective(KEY, ts.spec, ts.trials, 8) == 25
    assert count_ineffective(KEY, ts.spec, ts.trials - 1, 8) == 24


def test_traceset_roundtrip(tmp_path):
    ts = collect_ineffective(KEY, spec(), 20, 2)
    p = tmp_path / "t.txt"
    ts.save(p)
    back = TraceSet.load(p)
    assert back.dumps() == ts.dumps() and np.array_equal(back.nonces, ts.nonces)
    assert back.spec == ts.spec and back.trials == ts.trials


def test_traceset_format():
    ts = TraceSet(spec(), 5, np.array([[0x04030201, 0, 0, 0xFFFFFFFF]], dtype=np.uint32), 9)
    lines = ts.dumps().splitlines()
    assert lines[0] == ("model=prob-bitflip:2/3,1/3 w=8 boundary=23 row=b col=0 off=0 "
                        "seed=5 trials=9")
    assert lines[1] == "01020304" + "0" * 16 + "ffffffff"


def test_traceset_shift3_variant_token():
    ts = TraceSet(spec(), 5, trials=1, variant="shift3")
    assert ts.dumps().split()[-1] == "spbox=shift3"
    assert TraceSet.loads(ts.dumps()).variant == "shift3"


def test_traceset_errors():
    good = TraceSet(spec(), 5, np.zeros((2, 4), dtype=np.uint32), 9).dumps()
    lines = good.splitlines()
    with pytest.raises(ValueError, match="line 3"):
        TraceSet.loads("\n".join([lines[0], lines[1], "zz" + lines[2][2:]]))
    with pytest.raises(ValueError, match="line 2"):
        TraceSet.loads("\n".join([lines[0], lines[1][:-1]]))
    with pytest.raises(ValueError, match="line 1"):
        TraceSet.loads("model=bitflip w=8\n")
    with pytest.raises(ValueError):
        TraceSet(spec(), 1, np.zeros((3, 4), dtype=np.uint32), 2)


def test_histogram_no_fault_uniform():
    clean, _ = intermediate_histogram(KEY, spec(w=1, off=7), 10 ** 5, 1)
    assert clean.sum() == 10 ** 5
    assert abs(clean[0] / 10 ** 5 - 0.5) < 0.01


def test_histogram_two_to_one():
    _, ineff = intermediate_histogram(KEY, spec(w=1, off=7), 10 ** 5, 2)
    # survival 2/3 for a 0 and 1/3 for a 1
    n = ineff.sum()
    assert abs(ineff[0] / n - 2 / 3) < 3 * math.sqrt(2 / 9 / n)


def test_histogram_bitflip_empty():
    clean, ineff = intermediate_histogram(KEY, spec("bitflip", 4), 5000, 0)
    assert clean.sum() == 5000 and ineff.sum() == 0


def test_histogram_width_limit():
    with pytest.raises(ValueError):
        intermediate_histogram(KEY, spec(w=17), 10, 0)


def test_histogram_w8_biased():
    clean, ineff = intermediate_histogram(KEY, spec(), 2 * 10 ** 5, 3)
    assert sei(DistributionCounts(ineff)) > 10 * sei(DistributionCounts(clean))


def test_random_key_deterministic():
    assert random_key(3) == random_key(3) != random_key(4)
    assert isinstance(random_key(3), Key)

import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gimli_sifa.aead import (Key, Nonce, aead_decrypt, aead_decrypt_batch, aead_encrypt,
                             aead_encrypt_batch, init_state)
from gimli_sifa.kat import check_vector, parse_kat

KAT_PATH = os.path.join(os.path.dirname(__file__), "data", "LWC_AEAD_KAT_256_128.txt")
COUNT_KEY = Key.from_bytes(bytes(range(32)))
COUNT_NONCE = Nonce.from_bytes(bytes(range(16)))


def test_reference_kat_count_1():
    # first record of the designers' gimli24v1 known-answer file
    r = aead_encrypt(COUNT_KEY, COUNT_NONCE, b"", b"")
    assert r.ciphertext == b""
    assert r.tag.hex().upper() == "14DA9BB7120BF58B985A8E00FDEBA15B"
    assert aead_decrypt(COUNT_KEY, COUNT_NONCE, b"", b"", r.tag) == b""


def test_kat_fixture_all_vectors():
    with open(KAT_PATH) as f:
        vectors = parse_kat(f.read())
    assert len(vectors) == 33 * 33
    assert all(check_vector(v).passed for v in vectors)


def test_init_state_zero():
    assert init_state(Key((0,) * 8), Nonce((0,) * 4)).words == [0] * 12


def test_init_state_placement():
    s = init_state(Key(tuple(range(8))), Nonce((100, 101, 102, 103)))
    assert s.a == (100, 101, 102, 103)
    assert s.b == (0, 1, 2, 3)
    assert s.c == (4, 5, 6, 7)
    assert s.b + s.c == tuple(range(8))


def test_key_nonce_validation():
    with pytest.raises(ValueError):
        Key((0,) * 7)
    with pytest.raises(ValueError):
        Nonce.from_bytes(b"\x00" * 15)
    with pytest.raises(ValueError):
        Key((1 << 32,) + (0,) * 7)


def test_nonce_hex_roundtrip():
    n = Nonce((0x04030201, 5, 6, 0xFFFFFFFF))
    assert n.hex().startswith("01020304")
    assert Nonce.from_hex(n.hex()) == n


@settings(max_examples=60, deadline=None)
@given(st.binary(min_size=32, max_size=32), st.binary(min_size=16, max_size=16),
       st.binary(max_size=40), st.binary(max_size=40))
def test_roundtrip(k, n, ad, m):
    key, nonce = Key.from_bytes(k), Nonce.from_bytes(n)
    r = aead_encrypt(key, nonce, ad, m)
    assert len(r.ciphertext) == len(m) and len(r.tag) == 16
    assert aead_decrypt(key, nonce, ad, r.ciphertext, r.tag) == m
    assert aead_encrypt(key, nonce, ad, m) == r


@pytest.mark.parametrize("bit", [0, 7, 64, 127])
def test_tag_bitflip_rejected(bit):
    r = aead_encrypt(COUNT_KEY, COUNT_NONCE, b"ad", b"message body that spans blocks")
    tag = bytearray(r.tag)
    tag[bit // 8] ^= 1 << (bit % 8)
    assert aead_decrypt(COUNT_KEY, COUNT_NONCE, b"ad", r.ciphertext, bytes(tag)) is None


def test_ciphertext_tamper_rejected():
    r = aead_encrypt(COUNT_KEY, COUNT_NONCE, b"", b"0123456789abcdef0")
    ct = bytes([r.ciphertext[0] ^ 1]) + r.ciphertext[1:]
    assert aead_decrypt(COUNT_KEY, COUNT_NONCE, b"", ct, r.tag) is None


def test_bad_tag_length():
    with pytest.raises(ValueError):
        aead_decrypt(COUNT_KEY, COUNT_NONCE, b"", b"", b"\x00" * 15)


@pytest.mark.parametrize("adlen,mlen", [(0, 0), (5, 16), (16, 33), (31, 7)])
def test_batch_matches_scalar(adlen, mlen):
    rng = np.random.default_rng(adlen * 100 + mlen)
    keys = rng.integers(0, 1 << 32, (20, 8), dtype=np.uint64).astype(np.uint32)
    nonces = rng.integers(0, 1 << 32, (20, 4), dtype=np.uint64).astype(np.uint32)
    ad, msg = bytes(range(adlen)), bytes(range(100, 100 + mlen))
    ct, tags = aead_encrypt_batch(keys, nonces, ad, msg)
    for i in range(20):
        r = aead_encrypt(Key(tuple(map(int, keys[i]))), Nonce(tuple(map(int, nonces[i]))), ad, msg)
        assert ct[i].tobytes() == r.ciphertext and tags[i].tobytes() == r.tag
    pt, ok = aead_decrypt_batch(keys, nonces, ad, ct, tags)
    assert ok.all() and all(p.tobytes() == msg for p in pt)
    tags[3, 0] ^= 1
    _, ok = aead_decrypt_batch(keys, nonces, ad, ct, tags)
    assert not ok[3] and ok.sum() == 19

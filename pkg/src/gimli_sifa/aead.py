"""Gimli-24-Cipher authenticated encryption (NIST LWC byte-level framing).

Rate is row ``a`` (16 bytes), capacity rows ``b`` and ``c``.  Domain
separation XORs 1 into the last state byte before the permutation that ends
the AD phase and the message phase.
"""

from __future__ import annotations

import hmac
import struct
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .permutation import GimliState, Hook, BatchHook, permute_batch, permute_hooked

RATE = 16
TAG_BYTES = 16

if sys.byteorder != "little":  # pragma: no cover
    raise ImportError("the batched AEAD uses native little-endian uint32 views")


@dataclass(frozen=True)
class Key:
    words: tuple

    def __post_init__(self):
        if len(self.words) != 8 or any(not 0 <= w <= 0xFFFFFFFF for w in self.words):
            raise ValueError("a key is 8 words of 32 bits")

    @classmethod
    def from_bytes(cls, data: bytes) -> "Key":
        if len(data) != 32:
            raise ValueError("a key is 32 bytes")
        return cls(struct.unpack("<8I", data))

    @classmethod
    def from_hex(cls, text: str) -> "Key":
        return cls.from_bytes(bytes.fromhex(text))

    def to_bytes(self) -> bytes:
        return struct.pack("<8I", *self.words)

    def hex(self) -> str:
        return self.to_bytes().hex()

    def bit(self, word: int, bit: int) -> int:
        return (self.words[word] >> bit) & 1


@dataclass(frozen=True)
class Nonce:
    words: tuple

    def __post_init__(self):
        if len(self.words) != 4 or any(not 0 <= w <= 0xFFFFFFFF for w in self.words):
            raise ValueError("a nonce is 4 words of 32 bits")

    @classmethod
    def from_bytes(cls, data: bytes) -> "Nonce":
        if len(data) != 16:
            raise ValueError("a nonce is 16 bytes")
        return cls(struct.unpack("<4I", data))

    @classmethod
    def from_hex(cls, text: str) -> "Nonce":
        return cls.from_bytes(bytes.fromhex(text))

    def to_bytes(self) -> bytes:
        return struct.pack("<4I", *self.words)

    def hex(self) -> str:
        return self.to_bytes().hex()

    def bit(self, word: int, bit: int) -> int:
        return (self.words[word] >> bit) & 1


@dataclass(frozen=True)
class AeadResult:
    ciphertext: bytes
    tag: bytes


def init_state(key: Key, nonce: Nonce) -> GimliState:
    return GimliState(list(nonce.words) + list(key.words))


class _Sponge:
    def __init__(self, key: Key, nonce: Nonce, variant: str, first_hook: Optional[Hook]):
        self.buf = bytearray(init_state(key, nonce).to_bytes())
        self.variant = variant
        self.permute(first_hook)

    def permute(self, hook: Optional[Hook] = None) -> None:
        s = permute_hooked(GimliState.from_bytes(bytes(self.buf)), hook, self.variant)
        self.buf[:] = s.to_bytes()

    def absorb_ad(self, ad: bytes) -> None:
        while len(ad) >= RATE:
            for i in range(RATE):
                self.buf[i] ^= ad[i]
            self.permute()
            ad = ad[RATE:]
        for i, x in enumerate(ad):
            self.buf[i] ^= x
        self.buf[len(ad)] ^= 1
        self.buf[47] ^= 1
        self.permute()

    def finish_block(self, n: int) -> None:
        self.buf[n] ^= 1
        self.buf[47] ^= 1
        self.permute()


def aead_encrypt(key: Key, nonce: Nonce, ad: bytes, msg: bytes, variant: str = "official",
                 first_hook: Optional[Hook] = None) -> AeadResult:
    sp = _Sponge(key, nonce, variant, first_hook)
    sp.absorb_ad(ad)
    out = bytearray()
    while len(msg) >= RATE:
        for i in range(RATE):
            sp.buf[i] ^= msg[i]
        out += sp.buf[:RATE]
        sp.permute()
        msg = msg[RATE:]
    for i, x in enumerate(msg):
        sp.buf[i] ^= x
    out += sp.buf[:len(msg)]
    sp.finish_block(len(msg))
    return AeadResult(bytes(out), bytes(sp.buf[:TAG_BYTES]))


def aead_decrypt(key: Key, nonce: Nonce, ad: bytes, ct: bytes, tag: bytes,
                 variant: str = "official", first_hook: Optional[Hook] = None) -> Optional[bytes]:
    """Return the plaintext, or ``None`` (the rejection symbol) on a tag mismatch."""
    if len(tag) != TAG_BYTES:
        raise ValueError("tag must be 16 bytes")
    sp = _Sponge(key, nonce, variant, first_hook)
    sp.absorb_ad(ad)
    out = bytearray()
    while len(ct) >= RATE:
        block = bytes(ct[:RATE])
        for i in range(RATE):
            out.append(sp.buf[i] ^ block[i])
            sp.buf[i] = block[i]
        sp.permute()
        ct = ct[RATE:]
    for i, x in enumerate(ct):
        out.append(sp.buf[i] ^ x)
        sp.buf[i] = x
    sp.finish_block(len(ct))
    if not hmac.compare_digest(bytes(sp.buf[:TAG_BYTES]), bytes(tag)):
        return None
    return bytes(out)


# -- batched (same AD / message length for every row) -------------------------

def _batch_permute(st: np.ndarray, variant: str, hook: Optional[BatchHook] = None) -> None:
    st[:] = permute_batch(st, hook, variant)


def _batch_start(keys: np.ndarray, nonces: np.ndarray, ad: bytes, variant: str,
                 first_hook: Optional[BatchHook]) -> np.ndarray:
    keys = np.asarray(keys, dtype=np.uint32)
    nonces = np.asarray(nonces, dtype=np.uint32)
    n = len(nonces)
    if keys.ndim == 1:
        keys = np.broadcast_to(keys, (n, 8))
    st = np.concatenate([nonces, keys], axis=1).astype(np.uint32)
    _batch_permute(st, variant, first_hook)
    b = st.view(np.uint8)
    adb = np.frombuffer(ad, dtype=np.uint8)
    while len(adb) >= RATE:
        b[:, :RATE] ^= adb[:RATE]
        _batch_permute(st, variant)
        adb = adb[RATE:]
    b[:, :len(adb)] ^= adb
    b[:, len(adb)] ^= 1
    b[:, 47] ^= 1
    _batch_permute(st, variant)
    return st


def aead_encrypt_batch(keys, nonces, ad: bytes, msg: bytes, variant: str = "official",
                       first_hook: Optional[BatchHook] = None):
    """Encrypt one message under many (key, nonce) pairs.

    ``keys`` is ``(n, 8)`` or a single ``(8,)`` row of words, ``nonces`` is
    ``(n, 4)``.  Returns ``(ciphertexts, tags)`` as uint8 arrays.
    """
    st = _batch_start(keys, nonces, ad, variant, first_hook)
    b = st.view(np.uint8)
    m = np.frombuffer(msg, dtype=np.uint8)
    ct = np.empty((len(st), len(m)), dtype=np.uint8)
    pos = 0
    while len(m) - pos >= RATE:
        b[:, :RATE] ^= m[pos:pos + RATE]
        ct[:, pos:pos + RATE] = b[:, :RATE]
        _batch_permute(st, variant)
        pos += RATE
    rest = len(m) - pos
    b[:, :rest] ^= m[pos:]
    ct[:, pos:] = b[:, :rest]
    b[:, rest] ^= 1
    b[:, 47] ^= 1
    _batch_permute(st, variant)
    return ct, b[:, :TAG_BYTES].copy()


def aead_decrypt_batch(keys, nonces, ad: bytes, ct: np.ndarray, tags: np.ndarray,
                       variant: str = "official", first_hook: Optional[BatchHook] = None):
    """Batched decryption; returns ``(plaintexts, ok)`` where ``ok`` marks rows
    whose tag verified.  Plaintext rows with ``ok == False`` must be discarded."""
    st = _batch_start(keys, nonces, ad, variant, first_hook)
    b = st.view(np.uint8)
    ct = np.asarray(ct, dtype=np.uint8)
    pt = np.empty_like(ct)
    pos, length = 0, ct.shape[1]
    while length - pos >= RATE:
        pt[:, pos:pos + RATE] = b[:, :RATE] ^ ct[:, pos:pos + RATE]
        b[:, :RATE] = ct[:, pos:pos + RATE]
        _batch_permute(st, variant)
        pos += RATE
    rest = length - pos
    pt[:, pos:] = b[:, :rest] ^ ct[:, pos:]
    b[:, :rest] = ct[:, pos:]
    b[:, rest] ^= 1
    b[:, 47] ^= 1
    _batch_permute(st, variant)
    ok = np.all(b[:, :TAG_BYTES] == np.asarray(tags, dtype=np.uint8), axis=1)
    return pt, ok

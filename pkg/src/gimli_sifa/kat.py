"""NIST LWC known-answer files (``Count / Key / Nonce / PT / AD / CT`` records)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List

from .aead import TAG_BYTES, Key, Nonce, aead_decrypt, aead_encrypt

FIELDS = ("Count", "Key", "Nonce", "PT", "AD", "CT")


class KatFormatError(ValueError):
    pass


@dataclass
class KatVector:
    count: int
    key: bytes
    nonce: bytes
    pt: bytes
    ad: bytes
    ct: bytes  # ciphertext followed by the 16-byte tag
    line: int = 0


def parse_kat(text: str) -> List[KatVector]:
    vectors, rec, start = [], {}, 0

    def flush():
        if not rec:
            return
        missing = [f for f in FIELDS if f not in rec]
        if missing:
            raise KatFormatError(f"record at line {start}: missing {', '.join(missing)}")
        v = KatVector(rec["Count"], rec["Key"], rec["Nonce"], rec["PT"], rec["AD"], rec["CT"], start)
        for name, size in (("key", 32), ("nonce", 16)):
            if len(getattr(v, name)) != size:
                raise KatFormatError(f"record at line {start}: {name} must be {size} bytes")
        vectors.append(v)
        rec.clear()

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            flush()
            continue
        if "=" not in line:
            raise KatFormatError(f"line {lineno}: expected 'Field = value'")
        name, value = (p.strip() for p in line.split("=", 1))
        if name not in FIELDS:
            raise KatFormatError(f"line {lineno}: unknown field {name!r}")
        if name == "Count":
            flush()
            start = lineno
        try:
            rec[name] = int(value) if name == "Count" else bytes.fromhex(value)
        except ValueError:
            raise KatFormatError(f"line {lineno}: bad {name} value {value!r}") from None
    flush()
    return vectors


def format_kat(vectors: Iterable[KatVector]) -> str:
    out = []
    for v in vectors:
        out.append(f"Count = {v.count}\n"
                   f"Key = {v.key.hex().upper()}\n"
                   f"Nonce = {v.nonce.hex().upper()}\n"
                   f"PT = {v.pt.hex().upper()}\n"
                   f"AD = {v.ad.hex().upper()}\n"
                   f"CT = {v.ct.hex().upper()}\n\n")
    return "".join(out)


def generate_kat(max_msg: int = 32, max_ad: int = 32) -> List[KatVector]:
    """Vectors in the layout of the NIST generator: fixed counting key and
    nonce, counting PT and AD of every length pair."""
    key, nonce = bytes(range(32)), bytes(range(16))
    vectors, count = [], 1
    for mlen in range(max_msg + 1):
        for adlen in range(max_ad + 1):
            pt, ad = bytes(range(mlen)), bytes(range(adlen))
            r = aead_encrypt(Key.from_bytes(key), Nonce.from_bytes(nonce), ad, pt)
            vectors.append(KatVector(count, key, nonce, pt, ad, r.ciphertext + r.tag))
            count += 1
    return vectors


@dataclass
class KatOutcome:
    count: int
    encrypt_ok: bool
    decrypt_ok: bool

    @property
    def passed(self) -> bool:
        return self.encrypt_ok and self.decrypt_ok


def check_vector(v: KatVector, variant: str = "official") -> KatOutcome:
    key, nonce = Key.from_bytes(v.key), Nonce.from_bytes(v.nonce)
    r = aead_encrypt(key, nonce, v.ad, v.pt, variant)
    enc_ok = r.ciphertext + r.tag == v.ct
    dec_ok = False
    if len(v.ct) >= TAG_BYTES:
        body, tag = v.ct[:-TAG_BYTES], v.ct[-TAG_BYTES:]
        dec_ok = aead_decrypt(key, nonce, v.ad, body, tag, variant) == v.pt
    return KatOutcome(v.count, enc_ok, dec_ok)

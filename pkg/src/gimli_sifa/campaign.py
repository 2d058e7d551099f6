"""Fault injection into the first permutation and ineffective-fault campaigns.

Trials are processed in fixed-size blocks.  Block ``i`` of a campaign draws
its nonces and fault randomness from its own counter-based stream seeded by
``(seed, i)``, so results never depend on how blocks are scheduled.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .aead import (Key, Nonce, aead_decrypt, aead_decrypt_batch, aead_encrypt,
                   aead_encrypt_batch, init_state)
from .faults import FaultModel, analytic_rate, apply_fault, apply_fault_batch
from .permutation import ROWS, GimliState, permute_batch, permute_hooked
from .tracer import Target

BLOCK = 4096
DEFAULT_CAP = 10 ** 8
MESSAGE = b"\x00" * 16
AD = b""


class TrialBudgetExceeded(RuntimeError):
    def __init__(self, msg, partial):
        super().__init__(msg)
        self.partial = partial


@dataclass(frozen=True)
class FaultSpec:
    model: FaultModel
    width: int
    boundary: int   # round just completed when the fault hits
    row: str = "b"
    col: int = 0
    offset: int = 0

    def __post_init__(self):
        if not 1 <= self.width <= 32:
            raise ValueError("fault width must be 1..32")
        if not 1 <= self.boundary <= 24:
            raise ValueError("fault boundary must be a round 24..1 of the first permutation")
        if self.row not in ROWS or not 0 <= self.col < 4:
            raise ValueError("fault location needs row a|b|c and column 0..3")
        if not 0 <= self.offset or self.offset + self.width > 32:
            raise ValueError("fault window must lie within one word")

    @property
    def mask(self) -> int:
        return (1 << self.width) - 1

    @property
    def word_index(self) -> int:
        return 4 * ROWS.index(self.row) + self.col

    def target(self, bit: Optional[int] = None) -> Target:
        """Attacked intermediate: the faulted bit, before the next round."""
        return Target(self.boundary - 1, self.row, self.col, self.offset if bit is None else bit)

    def header(self) -> str:
        return (f"model={self.model} w={self.width} boundary={self.boundary} row={self.row} "
                f"col={self.col} off={self.offset}")


def trial_stream(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(1, block))))


def random_key(seed: int) -> Key:
    g = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(0,))))
    return Key(tuple(int(w) for w in g.integers(0, 1 << 32, 8, dtype=np.uint64)))


def random_nonces(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, 1 << 32, (n, 4), dtype=np.uint64).astype(np.uint32)


# -- single decryptions -------------------------------------------------------

def _fault_state(s: GimliState, spec: FaultSpec, rng) -> Tuple[int, int]:
    word = s.word(spec.row, spec.col)
    value = (word >> spec.offset) & spec.mask
    faulted = apply_fault(value, spec.model, spec.width, rng)
    s.set_word(spec.row, spec.col, (word & ~(spec.mask << spec.offset)) | (faulted << spec.offset))
    return value, faulted


def faulted_decrypt(key: Key, nonce: Nonce, ad: bytes, ct: bytes, tag: bytes, spec: FaultSpec,
                    rng: np.random.Generator, variant: str = "official", fast: bool = False):
    """Decrypt with a fault in the first permutation.

    Returns ``(plaintext or None, ineffective)``.  The fast path stops as soon
    as the faulted window differs from its original value.
    """
    if fast:
        s = permute_hooked(init_state(key, nonce), None, variant, stop_after=spec.boundary)
        value, faulted = _fault_state(s, spec, rng)
        if faulted != value:
            return None, False
        return aead_decrypt(key, nonce, ad, ct, tag, variant), True

    def hook(r, s):
        if r == spec.boundary:
            _fault_state(s, spec, rng)

    out = aead_decrypt(key, nonce, ad, ct, tag, variant, first_hook=hook)
    return out, out is not None


# -- batched trials -----------------------------------------------------------

def _inject(st: np.ndarray, spec: FaultSpec, rng) -> Tuple[np.ndarray, np.ndarray]:
    """Fault the window in place; returns (original values, ineffective mask)."""
    idx, off = spec.word_index, np.uint32(spec.offset)
    word = st[:, idx]
    value = ((word >> off) & np.uint32(spec.mask)).astype(np.uint64)
    faulted = apply_fault_batch(value, spec.model, spec.width, rng)
    keep = np.uint32(~(spec.mask << spec.offset) & 0xFFFFFFFF)
    st[:, idx] = (word & keep) | (faulted.astype(np.uint32) << off)
    return value, faulted == value


def fast_trials(key: Key, nonces: np.ndarray, spec: FaultSpec, rng,
                variant: str = "official") -> Tuple[np.ndarray, np.ndarray]:
    """Window values and ineffectiveness for one batch, stopping at the fault."""
    keys = np.broadcast_to(np.array(key.words, dtype=np.uint32), (len(nonces), 8))
    st = permute_batch(np.concatenate([nonces, keys], axis=1), None, variant,
                       stop_after=spec.boundary)
    return _inject(st, spec, rng)


def full_trials(key: Key, nonces: np.ndarray, spec: FaultSpec, rng, variant: str = "official",
                ad: bytes = AD, msg: bytes = MESSAGE) -> np.ndarray:
    """Ineffectiveness decided by tag verification of a faulted decryption."""
    kw = np.array(key.words, dtype=np.uint32)
    ct, tags = aead_encrypt_batch(kw, nonces, ad, msg, variant)

    def hook(r, st):
        if r == spec.boundary:
            _inject(st, spec, rng)

    pt, ok = aead_decrypt_batch(kw, nonces, ad, ct, tags, variant, first_hook=hook)
    return ok


@dataclass
class BlockResult:
    nonces: np.ndarray
    values: np.ndarray
    ineffective: np.ndarray


def run_block(key: Key, spec: FaultSpec, seed: int, block: int, variant: str = "official",
              size: int = BLOCK) -> BlockResult:
    rng = trial_stream(seed, block)
    nonces = random_nonces(rng, size)
    values, ineff = fast_trials(key, nonces, spec, rng, variant)
    return BlockResult(nonces, values, ineff)


def _blocks(key, spec, seed, variant, jobs, start=0):
    """Yield block results in index order, computing ``jobs`` blocks at a time."""
    b = start
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as ex:
        while True:
            batch = list(ex.map(lambda i: run_block(key, spec, seed, i, variant),
                                range(b, b + max(1, jobs))))
            yield from batch
            b += len(batch)


# -- trace sets ---------------------------------------------------------------

@dataclass
class TraceSet:
    spec: FaultSpec
    seed: int
    nonces: np.ndarray = field(default_factory=lambda: np.zeros((0, 4), dtype=np.uint32))
    trials: int = 0
    variant: str = "official"

    def __post_init__(self):
        self.nonces = np.asarray(self.nonces, dtype=np.uint32).reshape(-1, 4)
        if self.n_ineff > self.trials:
            raise ValueError("more ineffective faults than trials")

    @property
    def n_ineff(self) -> int:
        return len(self.nonces)

    @property
    def rate(self) -> float:
        return self.n_ineff / self.trials if self.trials else float("nan")

    def prefix(self, n: int) -> "TraceSet":
        return TraceSet(self.spec, self.seed, self.nonces[:n], self.trials, self.variant)

    def header(self) -> str:
        h = f"{self.spec.header()} seed={self.seed} trials={self.trials}"
        return h + (f" spbox={self.variant}" if self.variant != "official" else "")

    def dumps(self) -> str:
        lines = [self.header()]
        lines += [Nonce(tuple(int(w) for w in n)).hex() for n in self.nonces]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "TraceSet":
        lines = text.splitlines()
        if not lines:
            raise ValueError("line 1: missing metadata record")
        try:
            meta = dict(tok.split("=", 1) for tok in lines[0].split())
            spec = FaultSpec(FaultModel.parse(meta["model"]), int(meta["w"]), int(meta["boundary"]),
                             meta["row"], int(meta["col"]), int(meta["off"]))
            seed, trials = int(meta["seed"]), int(meta["trials"])
            variant = meta.get("spbox", "official")
        except (KeyError, ValueError) as e:
            raise ValueError(f"line 1: bad metadata record ({e})") from None
        nonces = []
        for lineno, line in enumerate(lines[1:], 2):
            line = line.strip()
            if not line:
                continue
            try:
                if len(line) != 32:
                    raise ValueError("expected 32 hex characters")
                nonces.append(Nonce.from_hex(line).words)
            except ValueError as e:
                raise ValueError(f"line {lineno}: bad nonce {line!r} ({e})") from None
        return cls(spec, seed, np.array(nonces, dtype=np.uint32).reshape(-1, 4), trials, variant)

    def save(self, path) -> None:
        with open(path, "w") as f:
            f.write(self.dumps())

    @classmethod
    def load(cls, path) -> "TraceSet":
        with open(path) as f:
            return cls.loads(f.read())


def collect_ineffective(key: Key, spec: FaultSpec, target: int, seed: int,
                        variant: str = "official", cap: int = DEFAULT_CAP, jobs: int = 1) -> TraceSet:
    """Run trials until ``target`` ineffective faults were seen.

    ``trials`` counts every decryption up to and including the one that
    produced the last collected nonce.
    """
    if target < 0:
        raise ValueError("target must be non-negative")
    if target > 0 and analytic_rate(spec.model, spec.width) == 0:
        raise ValueError(f"{spec.model} never produces ineffective faults")
    found: List[np.ndarray] = []
    n, trials = 0, 0
    if target == 0:
        return TraceSet(spec, seed, trials=0, variant=variant)
    for res in _blocks(key, spec, seed, variant, jobs):
        room = min(len(res.ineffective), cap - trials)
        idx = np.flatnonzero(res.ineffective[:room])
        if n + len(idx) >= target:
            idx = idx[:target - n]
            found.append(res.nonces[idx])
            trials += int(idx[-1]) + 1
            return TraceSet(spec, seed, np.concatenate(found), trials, variant)
        found.append(res.nonces[idx])
        n += len(idx)
        trials += room
        if trials >= cap:
            partial = TraceSet(spec, seed, np.concatenate(found), trials, variant)
            raise TrialBudgetExceeded(
                f"trial cap {cap} reached with {n} of {target} ineffective faults", partial)


def count_ineffective(key: Key, spec: FaultSpec, trials: int, seed: int,
                      variant: str = "official", jobs: int = 1) -> int:
    """Number of ineffective faults among exactly ``trials`` injections."""
    done, hits = 0, 0
    if trials <= 0:
        return 0
    for res in _blocks(key, spec, seed, variant, jobs):
        take = min(len(res.ineffective), trials - done)
        hits += int(res.ineffective[:take].sum())
        done += take
        if done >= trials:
            return hits


def intermediate_histogram(key: Key, spec: FaultSpec, trials: int, seed: int,
                           variant: str = "official", jobs: int = 1):
    """Window value counts over ``trials`` nonces, without fault and among
    the ineffective-fault trials."""
    if spec.width > 16:
        raise ValueError("histograms need w <= 16")
    size = 1 << spec.width
    clean = np.zeros(size, dtype=np.int64)
    ineff = np.zeros(size, dtype=np.int64)
    done = 0
    if trials <= 0:
        return clean, ineff
    for res in _blocks(key, spec, seed, variant, jobs):
        take = min(len(res.values), trials - done)
        v = res.values[:take].astype(np.int64)
        clean += np.bincount(v, minlength=size)
        ineff += np.bincount(v[res.ineffective[:take]], minlength=size)
        done += take
        if done >= trials:
            return clean, ineff


def encrypt_fixed(key: Key, nonce: Nonce, variant: str = "official"):
    """The valid (ciphertext, tag) pair a campaign decrypts for ``nonce``."""
    r = aead_encrypt(key, nonce, AD, MESSAGE, variant)
    return r.ciphertext, r.tag

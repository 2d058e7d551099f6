"""Key-parameter recovery from ineffective-fault nonces.

Every hypothesis for one window bit predicts that bit for each collected
nonce; the hypothesis whose predictions are the least uniform (highest SEI)
is the candidate.  Hypotheses are enumerated in chunks as numpy arrays with
the nonces bit-packed 64 per word, so one chunk of ``H`` hypotheses is an
``(H, W)`` uint64 array per program register.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .campaign import TraceSet
from .stats import sei_from_ones
from .tracer import CompiledBit, Target, TargetBit

TIE_TOL = 2.0 ** -40
CHUNK = 1 << 16
MAX_PARAMETERS = 26
ALL = np.uint64(0xFFFFFFFFFFFFFFFF)


class _Program:
    """A compiled bit split into nonce-only registers (computed once) and
    hypothesis-dependent ones (recomputed per chunk, freed after last use)."""

    def __init__(self, cb: CompiledBit, nonces: np.ndarray):
        n = len(nonces)
        self.n = n
        self.words = max(1, (n + 63) // 64)
        pad = self.words * 64
        valid = np.zeros(pad, dtype=np.uint8)
        valid[:n] = 1
        self.valid = self._pack(valid)
        self.ones = self.valid
        packed = []
        for r in cb.nonce_refs:
            bits = np.zeros(pad, dtype=np.uint8)
            bits[:n] = (nonces[:, r.word] >> np.uint32(r.bit)) & np.uint32(1)
            packed.append(self._pack(bits))

        code = cb.code
        dep = [False] * len(code)
        static: Dict[int, np.ndarray] = {}
        for i, ins in enumerate(code):
            op = ins[0]
            if op == "param":
                dep[i] = True
            elif op == "nonce":
                static[i] = packed[ins[1]]
            elif op == "const":
                static[i] = self.ones if ins[1] else np.zeros_like(self.ones)
            else:
                args = ins[1] if op == "xor" else ins[1:]
                dep[i] = any(dep[a] for a in args)
                if not dep[i]:
                    static[i] = self._apply(op, [static[a] for a in args])
        self.out = cb.out
        self.static = static
        self.dynamic = [i for i in range(len(code)) if dep[i]]
        last = {}
        for i in self.dynamic:
            ins = code[i]
            args = ins[1] if ins[0] == "xor" else ins[1:] if ins[0] != "param" else ()
            for a in args:
                last[a] = i
        self.code = code
        self.free_after = {}
        for a, i in last.items():
            if a != self.out:
                self.free_after.setdefault(i, []).append(a)

    @staticmethod
    def _pack(bits: np.ndarray) -> np.ndarray:
        return np.packbits(bits, bitorder="little").view("<u8").reshape(1, -1).astype(np.uint64)

    @staticmethod
    def _apply(op, vals):
        v = vals[0]
        if op == "xor":
            for x in vals[1:]:
                v = v ^ x
            return v
        return v & vals[1] if op == "and" else v | vals[1]

    def run(self, hyps: np.ndarray) -> np.ndarray:
        """Packed predicted bits, shape ``(len(hyps), W)``, padding cleared."""
        if self.out in self.static:
            return np.broadcast_to(self.static[self.out] & self.valid, (len(hyps), self.words)).copy()
        regs = {}
        hcol = hyps.astype(np.uint64).reshape(-1, 1)
        for i in self.dynamic:
            ins = self.code[i]
            op = ins[0]
            if op == "param":
                regs[i] = np.where((hcol >> np.uint64(ins[1])) & np.uint64(1), ALL, np.uint64(0))
            else:
                args = ins[1] if op == "xor" else ins[1:]
                regs[i] = self._apply(op, [regs[a] if a in regs else self.static[a] for a in args])
            for a in self.free_after.get(i, ()):
                regs.pop(a, None)
        out = regs[self.out]
        return np.broadcast_to(out, (len(hyps), self.words)) & self.valid

    def ones_at(self, packed: np.ndarray, prefixes: Sequence[int]) -> np.ndarray:
        """Counts of predicted ones among the first ``n`` nonces, for each prefix."""
        pc = np.bitwise_count(packed).astype(np.int64)
        cum = np.concatenate([np.zeros((len(packed), 1), dtype=np.int64), np.cumsum(pc, axis=1)], axis=1)
        out = np.empty((len(prefixes), len(packed)), dtype=np.int64)
        for k, n in enumerate(prefixes):
            full, rem = divmod(n, 64)
            c = cum[:, full].copy()
            if rem:
                c += np.bitwise_count(packed[:, full] & np.uint64((1 << rem) - 1)).astype(np.int64)
            out[k] = c
        return out


@dataclass
class PrefixStats:
    n_used: int
    best_sei: float
    chosen: int
    tie_size: int
    sei_correct: Optional[float] = None
    sei_best_wrong: Optional[float] = None


@dataclass
class BitReport:
    target: Target
    parameter_names: List[str]
    n_used: int
    sei: np.ndarray = field(repr=False)      # per hypothesis index
    ones: np.ndarray = field(repr=False)     # predicted ones per hypothesis
    chosen: int
    tie_set: np.ndarray
    prefixes: List[PrefixStats] = field(default_factory=list)
    true_index: Optional[int] = None

    @property
    def parameter_count(self) -> int:
        return len(self.parameter_names)

    @property
    def best_sei(self) -> float:
        return float(self.sei.max())

    def ranking(self) -> np.ndarray:
        """Hypothesis indices by descending SEI, ascending index on ties."""
        idx = np.arange(len(self.sei))
        return np.lexsort((idx, -self.sei))

    def rank_of(self, h: int) -> int:
        """1-based rank of ``h`` under the ranking order."""
        s = self.sei[h]
        return int(np.sum(self.sei > s) + np.sum(self.sei[:h] == s)) + 1

    def parameters(self, h: Optional[int] = None) -> List[int]:
        h = self.chosen if h is None else h
        return [(h >> j) & 1 for j in range(self.parameter_count)]

    def advantage(self, true_index: int, h: Optional[int] = None) -> int:
        h = self.chosen if h is None else h
        return advantage_bits(h, true_index, self.parameter_count)


@dataclass
class AttackReport:
    bits: List[BitReport]
    tie_break: str
    n_used: int

    def union_parameters(self) -> Dict[str, int]:
        """Recovered value of every distinct parameter across the window.

        A parameter that two bits estimate differently maps to -1.
        """
        out: Dict[str, int] = {}
        for b in self.bits:
            for name, v in zip(b.parameter_names, b.parameters()):
                out[name] = v if out.get(name, v) == v else -1
        return out


def advantage_bits(h: int, truth: int, nparams: int) -> int:
    return nparams - bin((h ^ truth) & ((1 << nparams) - 1)).count("1")


def _majority(ones, n):
    return np.where(2 * ones > n, 1, np.where(2 * ones < n, 0, -1))


def resolve_tie_break(tie_break: str, traces: TraceSet) -> Optional[int]:
    if tie_break == "index":
        return None
    bias = traces.spec.model.bias_direction()
    if tie_break == "bias" and bias is None:
        raise ValueError(f"{traces.spec.model} has no bias direction to break ties with")
    if tie_break not in ("auto", "bias"):
        raise ValueError("tie_break must be index, bias or auto")
    return bias


class _Best:
    """Running maximum with the deterministic tie-break, merged chunk by chunk."""

    def __init__(self):
        self.max = -1.0
        self.first = None        # lowest index in the tie set
        self.first_bias = None   # lowest index in the tie set agreeing with the bias
        self.size = 0

    def merge(self, sei, idx, agree, tol):
        m = float(sei.max())
        if m > self.max + tol:
            self.max, self.first, self.first_bias, self.size = m, None, None, 0
        elif m < self.max - tol:
            return
        hit = sei >= self.max - tol
        self.size += int(hit.sum())
        i = idx[hit]
        if self.first is None:
            self.first = int(i.min())
        if self.first_bias is None and agree is not None:
            a = i[agree[hit]]
            if len(a):
                self.first_bias = int(a.min())

    def chosen(self):
        return self.first_bias if self.first_bias is not None else self.first


def _scan_bit(tb: TargetBit, nonces: np.ndarray, prefixes: List[int], bias: Optional[int],
              truth: Optional[int], tol: float, jobs: int) -> BitReport:
    p = tb.layout.parameter_count
    if p > MAX_PARAMETERS:
        raise ValueError(f"{tb.target} has {p} parameters; enumeration is refused above "
                         f"{MAX_PARAMETERS}")
    prog = _Program(tb.compiled, nonces)
    H = 1 << p
    n = len(nonces)
    sei_all = np.empty(H)
    ones_all = np.empty(H, dtype=np.int64)
    best = [_Best() for _ in prefixes]
    wrong = [-1.0] * len(prefixes)
    correct: List[Optional[float]] = [None] * len(prefixes)

    def work(start):
        hyps = np.arange(start, min(H, start + CHUNK), dtype=np.int64)
        return hyps, prog.ones_at(prog.run(hyps), prefixes)

    def merge(hyps, ones):
        for k, m in enumerate(prefixes):
            s = sei_from_ones(ones[k], m)
            agree = None if bias is None else _majority(ones[k], m) == bias
            best[k].merge(s, hyps, agree, tol)
            if truth is not None:
                if hyps[0] <= truth <= hyps[-1]:
                    correct[k] = float(s[truth - hyps[0]])
                    s = s.copy()
                    s[truth - hyps[0]] = -1.0
                wrong[k] = max(wrong[k], float(s.max()))
        sei_all[hyps] = sei_from_ones(ones[-1], n)
        ones_all[hyps] = ones[-1]

    starts = range(0, H, CHUNK)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            for hyps, ones in ex.map(work, starts):
                merge(hyps, ones)
    else:
        for s in starts:
            merge(*work(s))

    stats = []
    for k, m in enumerate(prefixes):
        stats.append(PrefixStats(m, best[k].max, best[k].chosen(), best[k].size,
                                 correct[k], wrong[k] if truth is not None else None))
    top = sei_all.max()
    ties = np.flatnonzero(sei_all >= top - tol)
    return BitReport(tb.target, tb.layout.parameter_names(), n, sei_all, ones_all,
                     stats[-1].chosen, ties, stats, truth)


def _prefixes(n: int, step: Optional[int]) -> List[int]:
    if step is None:
        return [n]
    if step < 1:
        raise ValueError("step must be at least 1")
    out = list(range(step, n, step))
    return out + [n]


def attack(window: Sequence[TargetBit], traces: TraceSet, tie_break: str = "auto",
           step: Optional[int] = None, true_params: Optional[Sequence[int]] = None,
           tol: float = TIE_TOL, jobs: int = 1) -> AttackReport:
    """Rank every hypothesis of every window bit by the SEI of its predictions.

    ``tie_break`` picks the single reported hypothesis from a tie set:
    ``index`` takes the lowest index; ``bias`` first restricts the set to
    hypotheses whose majority prediction matches the fault model's favoured
    bit value; ``auto`` uses ``bias`` when the model has one.
    """
    if traces.n_ineff == 0:
        raise ValueError("the trace set is empty")
    if true_params is not None and len(true_params) != len(window):
        raise ValueError("need one true hypothesis index per window bit")
    bias = resolve_tie_break(tie_break, traces)
    prefixes = _prefixes(traces.n_ineff, step)
    bits = []
    for j, tb in enumerate(window):
        truth = None if true_params is None else int(true_params[j])
        bits.append(_scan_bit(tb, traces.nonces, prefixes, bias, truth, tol, jobs))
    return AttackReport(bits, tie_break, traces.n_ineff)


def advantage_curve(window, traces, true_params, step, tie_break="auto", jobs=1):
    """``(n_used, [advantage per bit])`` for growing trace prefixes."""
    rep = attack(window, traces, tie_break, step, true_params, jobs=jobs)
    return [(rep.bits[0].prefixes[k].n_used,
             [b.advantage(b.true_index, b.prefixes[k].chosen) for b in rep.bits])
            for k in range(len(rep.bits[0].prefixes))]


def sei_curve(window, traces, true_params, step, tie_break="auto", jobs=1):
    """``(n_used, [(sei_correct, sei_best_wrong) per bit])`` for growing prefixes."""
    rep = attack(window, traces, tie_break, step, true_params, jobs=jobs)
    return [(rep.bits[0].prefixes[k].n_used,
             [(b.prefixes[k].sei_correct, b.prefixes[k].sei_best_wrong) for b in rep.bits])
            for k in range(len(rep.bits[0].prefixes))]


# -- CSV ------------------------------------------------------------------------

def ranking_csv(report: AttackReport, top: Optional[int] = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bit", "hypothesis_index", "sei", "rank", "tied", "chosen"])
    for b in report.bits:
        order = b.ranking()
        if top is not None:
            order = order[:top]
        ties = set(b.tie_set.tolist())
        for r, h in enumerate(order, 1):
            w.writerow([b.target.bit, int(h), repr(float(b.sei[h])), r,
                        int(int(h) in ties), int(int(h) == b.chosen)])
    return buf.getvalue()


def advantage_csv(report: AttackReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n_used"] + [f"adv_bit{b.target.bit}" for b in report.bits] + ["adv_total", "max_total"])
    for k in range(len(report.bits[0].prefixes)):
        adv = [b.advantage(b.true_index, b.prefixes[k].chosen) for b in report.bits]
        w.writerow([report.bits[0].prefixes[k].n_used] + adv +
                   [sum(adv), sum(b.parameter_count for b in report.bits)])
    return buf.getvalue()


def sei_csv(report: AttackReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    head = ["n_used"]
    for b in report.bits:
        head += [f"sei_correct_bit{b.target.bit}", f"sei_best_wrong_bit{b.target.bit}"]
    w.writerow(head)
    for k in range(len(report.bits[0].prefixes)):
        row = [report.bits[0].prefixes[k].n_used]
        for b in report.bits:
            p = b.prefixes[k]
            row += [repr(p.sei_correct), repr(p.sei_best_wrong)]
        w.writerow(row)
    return buf.getvalue()

"""Command-line front end: ``gimli-sifa <command> [options]``.

Every CSV starts with ``#`` lines echoing the configuration.  Exit status is
0 on success, 1 when an experiment or check fails and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from fractions import Fraction

import numpy as np

from . import attack as atk
from .aead import Key
from .campaign import (DEFAULT_CAP, FaultSpec, TraceSet, TrialBudgetExceeded, collect_ineffective,
                       count_ineffective, intermediate_histogram, random_key)
from .faults import FaultModel, analytic_rate
from .kat import KatFormatError, check_vector, format_kat, generate_kat, parse_kat
from .stats import DistributionCounts, sei
from .tracer import (SUPPORTED_ROUNDS, Target, induced_hypothesis, reduce_layout,
                     render_dependency_map, target_window, trace)
from .expr import to_infix, to_prefix

DEFAULT_MODELS = "random-and,stuck-at-0,prob-bitflip"
DEFAULT_WIDTHS = "1,4,8,16,32"


class UsageError(Exception):
    pass


def _emit(text: str, path) -> None:
    if path:
        with open(path, "w", newline="") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _header(args, fields) -> str:
    lines = [f"# gimli-sifa {args.command}"]
    lines += [f"# {k}={getattr(args, k)}" for k in fields]
    return "\n".join(lines) + "\n"


def _key(args) -> Key:
    if args.key == "random":
        return random_key(args.seed)
    try:
        return Key.from_hex(args.key)
    except ValueError:
        raise UsageError("--key must be 64 hex digits or 'random'") from None


def _spec(args) -> FaultSpec:
    try:
        model = FaultModel.parse(args.model)
        return FaultSpec(model, args.width, args.round + 1, args.row, args.col, args.offset)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 1 << 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


# -- commands -----------------------------------------------------------------

def cmd_kat(args) -> int:
    if args.generate:
        _emit(format_kat(generate_kat(args.max_msg, args.max_ad)), args.out)
        return 0
    if not args.file:
        raise UsageError("kat needs a KAT file (or --generate)")
    try:
        with open(args.file) as f:
            vectors = parse_kat(f.read())
    except OSError as e:
        raise UsageError(f"cannot read {args.file}: {e.strerror}") from None
    except KatFormatError as e:
        raise UsageError(f"{args.file}: {e}") from None
    if not vectors:
        print(f"warning: {args.file} contains no vectors", file=sys.stderr)
        _emit("vectors=0 passed=0 failed=0\n", args.out)
        return 0
    lines, failed = [], 0
    for v in vectors:
        r = check_vector(v, args.spbox)
        failed += not r.passed
        lines.append(f"Count={v.count} {'pass' if r.passed else 'FAIL'}"
                     f" encrypt={'ok' if r.encrypt_ok else 'bad'} decrypt={'ok' if r.decrypt_ok else 'bad'}")
    lines.append(f"vectors={len(vectors)} passed={len(vectors) - failed} failed={failed}")
    _emit("\n".join(lines) + "\n", args.out)
    return 1 if failed else 0


def cmd_ineff_rate(args) -> int:
    key = _key(args)
    out = [_header(args, ["models", "widths", "trials", "cap", "round", "row", "col", "offset",
                          "key", "seed", "spbox"])]
    out.append("model,w,analytic_rate,empirical_rate,trials\n")
    try:
        models = [FaultModel.parse(m) for m in _split_models(args.models)]
        widths = [int(w) for w in args.widths.split(",")]
    except ValueError as e:
        raise UsageError(str(e)) from None
    for m in models:
        for w in widths:
            args.model, args.width = str(m), w
            spec = _spec(args)
            rate = analytic_rate(m, w)
            runnable = args.trials <= args.cap and (rate > 0 and 1 / rate <= args.cap)
            if runnable:
                hits = count_ineffective(key, spec, args.trials, args.seed, args.spbox, args.jobs)
                emp = repr(hits / args.trials)
            else:
                emp = ""
            buf = io.StringIO()
            csv.writer(buf, lineterminator="\n").writerow([m, w, repr(float(rate)), emp, args.trials])
            out.append(buf.getvalue())
    _emit("".join(out), args.out)
    return 0


def _split_models(text: str):
    """Split a comma list where prob-bitflip parameters also use commas."""
    parts, out = text.split(","), []
    i = 0
    while i < len(parts):
        p = parts[i]
        if p.startswith("prob-bitflip:") and i + 1 < len(parts):
            p, i = p + "," + parts[i + 1], i + 1
        out.append(p)
        i += 1
    return out


def cmd_histogram(args) -> int:
    spec = _spec(args)
    if spec.width > 16:
        raise UsageError("histogram needs --width <= 16")
    key = _key(args)
    clean, ineff = intermediate_histogram(key, spec, args.trials, args.seed, args.spbox, args.jobs)
    out = [_header(args, ["model", "width", "round", "row", "col", "offset", "trials", "key",
                          "seed", "spbox"])]
    out.append("bin,count_nofault,count_ineffective\n")
    out += [f"{i},{c},{e}\n" for i, (c, e) in enumerate(zip(clean, ineff))]
    _emit("".join(out), args.out)
    return 0


def cmd_collect(args) -> int:
    spec = _spec(args)
    key = _key(args)
    status = 0
    try:
        ts = collect_ineffective(key, spec, args.target, args.seed, args.spbox, args.cap, args.jobs)
    except TrialBudgetExceeded as e:
        print(f"error: {e}", file=sys.stderr)
        ts, status = e.partial, 1
    except ValueError as e:
        raise UsageError(str(e)) from None
    _emit(ts.dumps(), args.out)
    rate = analytic_rate(spec.model, spec.width)
    print(f"trials={ts.trials} ineffective={ts.n_ineff} empirical_rate={ts.rate:.6g} "
          f"analytic_rate={float(rate):.6g}", file=sys.stderr)
    return status


def cmd_attack(args) -> int:
    try:
        ts = TraceSet.load(args.trace)
    except OSError as e:
        raise UsageError(f"cannot read {args.trace}: {e.strerror}") from None
    except ValueError as e:
        raise UsageError(f"{args.trace}: {e}") from None
    s = ts.spec
    want = {"round": s.boundary - 1, "row": s.row, "col": s.col, "offset": s.offset, "width": s.width}
    given = {k: getattr(args, k) for k in want if getattr(args, k) is not None}
    if any(given[k] != want[k] for k in given) or (args.spbox and args.spbox != ts.variant):
        mine = " ".join(f"{k}={v}" for k, v in given.items())
        raise UsageError(f"trace file spec ({ts.header()}) does not match requested target ({mine}"
                         f"{' spbox=' + args.spbox if args.spbox else ''})")
    base = Target(s.boundary - 1, s.row, s.col, s.offset)
    if base.round not in SUPPORTED_ROUNDS:
        raise UsageError(f"no tracer for faults after round {s.boundary}")
    if base.round == 20:
        raise UsageError("round-20 targets are traced but not attacked (too many parameters)")
    window = target_window(base, s.width, ts.variant)
    if args.bits:
        keep = {int(b) for b in args.bits.split(",")}
        window = [tb for tb in window if tb.target.bit in keep]
        if not window:
            raise UsageError("--bits selects no bit of the faulted window")
    truth = None
    if args.key:
        key = _key(args)
        truth = [induced_hypothesis(tb.layout, key) for tb in window]
    try:
        rep = atk.attack(window, ts, args.tie_break, args.step if truth else None, truth,
                         jobs=args.jobs)
    except ValueError as e:
        raise UsageError(str(e)) from None
    head = _header(args, ["trace", "key", "step", "top", "tie_break", "bits"]) + \
        f"# trace_spec={ts.header()}\n# n_used={ts.n_ineff}\n"
    for b in rep.bits:
        head += (f"# bit={b.target.bit} parameters={b.parameter_count} chosen={b.chosen} "
                 f"tie_set={' '.join(map(str, b.tie_set[:16]))}{' ...' if len(b.tie_set) > 16 else ''} "
                 f"tie_size={len(b.tie_set)}")
        head += f" true={b.true_index}\n" if truth else "\n"
    ranking = head + atk.ranking_csv(rep, args.top)
    if args.out:
        _emit(ranking, args.out + ".ranking.csv")
        if truth:
            _emit(head + atk.advantage_csv(rep), args.out + ".advantage.csv")
            _emit(head + atk.sei_csv(rep), args.out + ".sei.csv")
    else:
        _emit(ranking, None)
    if truth:
        ok = all(b.chosen == b.true_index for b in rep.bits)
        print(f"recovered={'all' if ok else 'partial'} advantage="
              f"{sum(b.advantage(b.true_index) for b in rep.bits)}/"
              f"{sum(b.parameter_count for b in rep.bits)}", file=sys.stderr)
    return 0


def cmd_depmap(args) -> int:
    try:
        t = Target(args.round, args.row, args.col, args.offset)
        expr = trace(t, args.spbox or "official")
    except ValueError as e:
        raise UsageError(str(e)) from None
    out = [_header(args, ["round", "row", "col", "offset", "spbox"]), f"# target {t}\n"]
    out.append(render_dependency_map(expr) + "\n")
    n_keys = len(expr.key_leaves())
    out.append(f"n_keybits={n_keys}\n")
    out.append(f"n_noncebits={len(expr.nonce_leaves())}\n")
    if t.round == 20:
        out.append("enumeration=refused (parameter layout too large to attack)\n")
    else:
        lay = reduce_layout(expr)
        out.append(f"unique_bits={len(lay.unique_bits)} {' '.join(map(str, lay.unique_bits))}\n")
        out.append(f"groups={len(lay.groups)}\n")
        out += [f"  group {j}: {to_infix(g)}\n" for j, g in enumerate(lay.groups)]
        out.append(f"parameters={lay.parameter_count}\n")
    if args.prefix:
        out.append(f"expr={to_prefix(expr)}\n")
    _emit("".join(out), args.out)
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_u64, default=0, help="campaign seed (u64)")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--jobs", type=int, default=1, help="worker threads; output does not depend on it")

    spbox = argparse.ArgumentParser(add_help=False)
    spbox.add_argument("--spbox", choices=["official", "shift3"], default="official")

    fault = argparse.ArgumentParser(add_help=False)
    fault.add_argument("--model", default="prob-bitflip:2/3,1/3")
    fault.add_argument("--width", type=int, default=8)
    fault.add_argument("--round", type=int, default=22,
                       help="attacked state is before this round; the fault hits after round+1")
    fault.add_argument("--row", default="b", choices=list("abc"))
    fault.add_argument("--col", type=int, default=0)
    fault.add_argument("--offset", type=int, default=0)
    fault.add_argument("--key", default="random", help="64 hex digits or 'random' (seeded)")

    p = argparse.ArgumentParser(prog="gimli-sifa", description="Gimli-Cipher fault-injection laboratory")
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("kat", parents=[common, spbox], help="check a NIST KAT file")
    k.add_argument("file", nargs="?")
    k.add_argument("--generate", action="store_true", help="write a KAT file from this implementation")
    k.add_argument("--max-msg", type=int, default=32)
    k.add_argument("--max-ad", type=int, default=32)
    k.set_defaults(func=cmd_kat)

    r = sub.add_parser("ineff-rate", parents=[common, spbox, fault], help="ineffectiveness rates")
    r.add_argument("--models", default=DEFAULT_MODELS)
    r.add_argument("--widths", default=DEFAULT_WIDTHS)
    r.add_argument("--trials", type=int, default=10 ** 5)
    r.add_argument("--cap", type=int, default=DEFAULT_CAP)
    r.set_defaults(func=cmd_ineff_rate)

    h = sub.add_parser("histogram", parents=[common, spbox, fault], help="intermediate value histogram")
    h.add_argument("--trials", type=int, default=10 ** 5)
    h.set_defaults(func=cmd_histogram)

    c = sub.add_parser("collect", parents=[common, spbox, fault], help="collect ineffective-fault nonces")
    c.add_argument("--target", type=int, default=180)
    c.add_argument("--cap", type=int, default=DEFAULT_CAP)
    c.set_defaults(func=cmd_collect)

    a = sub.add_parser("attack", parents=[common], help="rank key hypotheses from a trace file")
    a.add_argument("trace")
    a.add_argument("--spbox", choices=["official", "shift3"], default=None)
    for name in ("round", "col", "offset", "width"):
        a.add_argument(f"--{name}", type=int, default=None)
    a.add_argument("--row", choices=list("abc"), default=None)
    a.add_argument("--key", default=None, help="true key (hex or 'random') to emit curves")
    a.add_argument("--step", type=int, default=10)
    a.add_argument("--top", type=int, default=64, help="ranking rows per bit")
    a.add_argument("--bits", default=None, help="comma list of window bits to attack")
    a.add_argument("--tie-break", choices=["auto", "bias", "index"], default="auto")
    a.set_defaults(func=cmd_attack)

    d = sub.add_parser("depmap", parents=[common, spbox], help="dependency map of one state bit")
    d.add_argument("--round", type=int, default=22)
    d.add_argument("--row", default="b", choices=list("abc"))
    d.add_argument("--col", type=int, default=0)
    d.add_argument("--offset", type=int, default=7, help="bit index")
    d.add_argument("--prefix", action="store_true", help="also print the expression in prefix form")
    d.set_defaults(func=cmd_depmap)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be at least 1")
        for name in ("trials", "target", "step", "top", "cap"):
            if getattr(args, name, None) is not None and getattr(args, name) < 0:
                raise UsageError(f"--{name} must be non-negative")
        if getattr(args, "step", None) == 0:
            raise UsageError("--step must be at least 1")
        return args.func(args)
    except UsageError as e:
        print(f"gimli-sifa {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end.

Exit codes: 0 all checks pass, 1 a check failed, 2 input error,
3 numerically indeterminate.  ``QCAUSAL_VERBOSITY`` (0, 1, 2) selects how
much of the report is rendered as text; ``--json`` prints the full
machine-readable report instead.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import documents as docs
from .equivalence import random_circuit, rewrite_circuit, switch_circuit
from .errors import InvalidProtocolError, QCausalError, UnsupportedSizeError
from .execution import EMPTY, Event, History, ProtocolRun, quantum_distribution
from .extraction import (
    EQUALITY_TOL,
    ROW_TOL,
    causal_distribution,
    extract_causal_model,
    naive_mixture_distribution,
    verify_theorem1,
)
from .fixtures import ALICE, BOB, CHARLIE, build_switch_protocol, random_protocol
from .polytope import enumerate_deterministic, game_score, gyni_game, membership
from .proofchecks import IDENTITY_TOL, MAX_EXHAUSTIVE, OVERLAP_TOL, SPLIT_TOL, check_proof_identities
from .protocol import LEAK_TOL, validate_protocol
from .simplex import FEAS_TOL

EXIT_PASS, EXIT_FAIL, EXIT_INPUT, EXIT_INDETERMINATE = 0, 1, 2, 3
VERBOSITY_ENV = "QCAUSAL_VERBOSITY"

log = logging.getLogger("qcausal")


def tier(name: str, value: float) -> dict:
    return {"tier": name, "value": value}


def _verbosity() -> int:
    raw = os.environ.get(VERBOSITY_ENV, "1")
    try:
        return max(0, min(2, int(raw)))
    except ValueError:
        return 1


class InputError(Exception):
    pass


def parse_settings(text: str) -> tuple:
    """``"0,1,1"`` -> ``(0, 1, 1)``; tokens that are not integers stay strings."""
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        if not tok:
            raise InputError(f"empty entry in setting vector {text!r}")
        out.append(int(tok) if re.fullmatch(r"-?\d+", tok) else tok)
    return tuple(out)


def _read(path: str) -> str:
    try:
        return sys.stdin.read() if path == "-" else Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


def _write_doc(doc: dict, out: str | None) -> None:
    text = docs.dumps(doc)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _dist_rows(dist) -> list:
    return [{"outcome": list(a), "p": p} for a, p in dist.items()]


# -- switch demo -------------------------------------------------------------------


def switch_demo_report() -> dict:
    """Every worked value of the three-party switch at ``x = (0, 1, 1)``."""
    spec = build_switch_protocol()
    x = (0, 1, 1)
    run = ProtocolRun(spec, x)
    model = extract_causal_model(spec, x, run=run)
    q = quantum_distribution(spec, x, run=run)
    nc = naive_mixture_distribution(spec, x)
    pc = causal_distribution(model)

    a0 = Event(ALICE, 0, 0)
    b0 = Event(BOB, 0, 1)
    h_a, h_b = History((a0,)), History((b0,))
    h_ab, h_ba = History((a0, b0)), History((b0, a0))
    rows = [
        ("p1(next=Alice | H0)", model.p_next(EMPTY, ALICE), 1 / 2),
        ("p1(next=Bob | H0)", model.p_next(EMPTY, BOB), 1 / 2),
        ("p2(next=Bob | (1,0,0))", model.p_next(h_a, BOB), 1.0),
        ("p2(next=Alice | (2,0,1))", model.p_next(h_b, ALICE), 1.0),
        ("p3(next=Charlie | (1,0,0),(2,0,1))", model.p_next(h_ab, CHARLIE), 1.0),
        ("p3(next=Charlie | (2,0,1),(1,0,0))", model.p_next(h_ba, CHARLIE), 1.0),
        ("p1(a=0 | H0, x=0)", model.p_result(EMPTY, ALICE, 0), 1.0),
        ("p1(b=0 | H0, y=1)", model.p_result(EMPTY, BOB, 0), 1 / 2),
        ("p2(a=0 | (2,0,1), x=0)", model.p_result(h_b, ALICE, 0), 1 / 2),
        ("p2(b=0 | (1,0,0), y=1)", model.p_result(h_a, BOB, 0), 1 / 2),
        ("p3(c=0 | (1,0,0),(2,0,1), z=1)", model.p_result(h_ab, CHARLIE, 0), 5 / 6),
        ("p3(c=0 | (2,0,1),(1,0,0), z=1)", model.p_result(h_ba, CHARLIE, 0), 5 / 6),
        ("p_quantum(000 | 011)", q[(0, 0, 0)], 5 / 16),
        ("p_naive(000 | 011)", nc[(0, 0, 0)], 3 / 16),
        ("p_causal(000 | 011)", pc[(0, 0, 0)], 5 / 16),
    ]
    checks = [
        {"name": n, "value": float(v), "expected": e, "deviation": abs(float(v) - e), "pass": abs(float(v) - e) <= ROW_TOL}
        for n, v, e in rows
    ]
    return {
        "command": "switch-demo",
        "x": list(x),
        "status": "pass" if all(c["pass"] for c in checks) else "fail",
        "tolerance": tier("table value", ROW_TOL),
        "checks": checks,
        "quantum_minus_naive": q[(0, 0, 0)] - nc[(0, 0, 0)],
        "notes": spec.notes,
    }


# -- subcommands ---------------------------------------------------------------------


def cmd_switch_demo(args) -> tuple[dict, int]:
    rep = switch_demo_report()
    return rep, EXIT_PASS if rep["status"] == "pass" else EXIT_FAIL


def cmd_simulate(args) -> tuple[dict, int]:
    spec = docs.parse_protocol(_read(args.doc))
    x = spec.check_settings(parse_settings(args.x))
    run = ProtocolRun(spec, x)
    leak = run.leak()
    if leak > LEAK_TOL:
        rep = {
            "command": "simulate",
            "x": list(x),
            "status": "fail",
            "error": f"invalid protocol: weight {leak:.3e} outside the all-flags-raised subspace",
            "leak": leak,
            "tolerance": tier("validity leak", LEAK_TOL),
        }
        return rep, EXIT_FAIL
    dist = run.distribution()
    total = dist.total()
    rep = {
        "command": "simulate",
        "x": list(x),
        "status": "pass" if abs(total - 1) <= EQUALITY_TOL else "fail",
        "distribution": _dist_rows(dist),
        "total": total,
        "leak": leak,
        "tolerance": tier("end-to-end normalisation", EQUALITY_TOL),
    }
    return rep, EXIT_PASS if rep["status"] == "pass" else EXIT_FAIL


def cmd_validate(args) -> tuple[dict, int]:
    spec = docs.parse_protocol(_read(args.doc))
    v = validate_protocol(spec)
    rep = {"command": "validate", "status": "pass" if v.valid else "fail", **v.as_dict()}
    return rep, EXIT_PASS if v.valid else EXIT_FAIL


def cmd_extract(args) -> tuple[dict, int]:
    spec = docs.parse_protocol(_read(args.doc))
    x = spec.check_settings(parse_settings(args.x))
    try:
        model = extract_causal_model(spec, x)
    except InvalidProtocolError as exc:
        return {"command": "extract", "status": "fail", "error": str(exc), "leak": exc.leak}, EXIT_FAIL
    doc = docs.model_to_document(model)
    if args.out:
        _write_doc(doc, args.out)
        return {"command": "extract", "status": "pass", "written": args.out, "rows": len(doc["next"]) + len(doc["result"])}, EXIT_PASS
    return {"document": doc}, EXIT_PASS


def cmd_verify(args) -> tuple[dict, int]:
    spec = docs.parse_protocol(_read(args.doc))
    v = validate_protocol(spec)
    if not v.valid:
        rep = {"command": "verify", "status": "fail", "error": "invalid protocol", "validity": v.as_dict()}
        return rep, EXIT_FAIL
    r = verify_theorem1(spec, allow_large=args.allow_large)
    rep = {"command": "verify", **r.as_dict()}
    return rep, EXIT_PASS if r.passed else EXIT_FAIL


def cmd_lemmas(args) -> tuple[dict, int]:
    spec = docs.parse_protocol(_read(args.doc))
    v = validate_protocol(spec)
    if not v.valid:
        return {"command": "lemmas", "status": "fail", "error": "invalid protocol", "validity": v.as_dict()}, EXIT_FAIL
    xs = [spec.check_settings(parse_settings(args.x))] if args.x else list(spec.setting_vectors())
    reports = [check_proof_identities(spec, x, seed=args.seed, max_histories=args.max_histories) for x in xs]
    ok = all(r.passed for r in reports)
    rep = {
        "command": "lemmas",
        "status": "pass" if ok else "fail",
        "seed": args.seed,
        "tolerances": {
            "barred-state overlaps": tier("table value", OVERLAP_TOL),
            "outcome split": tier("table value", SPLIT_TOL),
            "stage identities": tier("end-to-end", IDENTITY_TOL),
        },
        "per_setting": [r.as_dict() for r in reports],
        "failures": [f"x={list(r.x)}: {f}" for r in reports for f in r.failures],
    }
    return rep, EXIT_PASS if ok else EXIT_FAIL


def cmd_rewrite(args) -> tuple[dict, int]:
    circuit = docs.parse_circuit(_read(args.doc))
    spec = rewrite_circuit(circuit)
    doc = docs.protocol_to_document(spec)
    if args.out:
        _write_doc(doc, args.out)
        return {"command": "rewrite", "status": "pass", "written": args.out, "T": spec.T, "notes": spec.notes}, EXIT_PASS
    return {"document": doc}, EXIT_PASS


def cmd_polytope_check(args) -> tuple[dict, int]:
    scenario, p = docs.parse_distribution(_read(args.doc))
    vs = enumerate_deterministic(scenario)
    cert = membership(p, vs)
    rep = {
        "command": "polytope-check",
        "status": cert.status,
        "vertices": len(vs),
        "raw_strategies": vs.raw_count,
        "certificate": cert.as_dict(),
        "tolerance": tier("polytope feasibility", FEAS_TOL),
    }
    try:
        game = gyni_game(scenario, args.game)
    except QCausalError as exc:
        rep["game"] = {"skipped": str(exc)}
    else:
        gs = game_score(p, game, vs)
        rep["game"] = {"name": game.name, "score": gs.score, "causal_bound": gs.causal_bound, "bound_vertex": gs.optimal_vertex}
    code = {"inside": EXIT_PASS, "outside": EXIT_FAIL}.get(cert.status, EXIT_INDETERMINATE)
    return rep, code


def cmd_fixture(args) -> tuple[dict, int]:
    name = args.name
    if name == "switch":
        doc = docs.protocol_to_document(build_switch_protocol())
    elif name == "random":
        doc = docs.protocol_to_document(random_protocol(args.seed))
    elif name == "switch-circuit":
        doc = docs.circuit_to_document(switch_circuit())
    else:
        doc = docs.circuit_to_document(random_circuit(args.seed))
    if args.out:
        _write_doc(doc, args.out)
        return {"command": "fixture", "status": "pass", "written": args.out}, EXIT_PASS
    return {"document": doc}, EXIT_PASS


# -- rendering ------------------------------------------------------------------------


def _fmt(v) -> str:
    return f"{v:.12g}" if isinstance(v, float) else str(v)


def render_text(rep: dict, verbosity: int) -> str:
    lines = [f"{rep.get('command', 'qcausal')}: {rep.get('status', '?').upper()}"]
    if verbosity == 0:
        return lines[0] + "\n"
    if "error" in rep:
        lines.append(f"  error: {rep['error']}")
    t = rep.get("tolerance")
    if isinstance(t, dict) and "tier" in t:
        lines.append(f"  tolerance: {t['value']:.0e} ({t['tier']})")
    cmd = rep.get("command")
    if cmd == "switch-demo":
        for c in rep["checks"]:
            mark = "ok " if c["pass"] else "BAD"
            lines.append(f"  [{mark}] {c['name']:<38} = {c['value']:.12f}  expected {c['expected']:.12f}")
        lines.append(f"  quantum - naive = {rep['quantum_minus_naive']:.12f}")
    elif cmd == "simulate" and "distribution" in rep:
        for row in rep["distribution"]:
            lines.append(f"  a={''.join(str(v) for v in row['outcome'])}  p={row['p']:.12f}")
        lines.append(f"  total={rep['total']:.12f}  leak={rep['leak']:.3e}")
    elif cmd == "verify" and "max_deviation" in rep:
        lines.append(f"  max deviation over all settings: {rep['max_deviation']:.3e}")
        if verbosity >= 2:
            for s in rep["per_setting"]:
                lines.append(f"    x={s['x']}  {s['max_deviation']:.3e}")
    elif cmd == "lemmas" and "per_setting" in rep:
        keys = ["psi_max_overlap", "phi_max_overlap", "outcome_split_max_gap", "first_stage_gap", "final_stage_max_gap", "stage_balance_max_gap"]
        for k in keys:
            lines.append(f"  {k:<22} {max(r[k] for r in rep['per_setting']):.3e}")
        if any(r["sampled"] for r in rep["per_setting"]):
            lines.append(f"  barred-state histories sampled with seed {rep['seed']}")
        lines.extend(f"  {f}" for f in rep["failures"])
    elif cmd == "polytope-check":
        cert = rep["certificate"]
        lines.append(f"  vertices: {rep['vertices']} (from {rep['raw_strategies']} deterministic strategies)")
        if rep["status"] == "inside":
            lines.append(f"  residual {cert['residual']:.3e}, {len(cert['weights'])} vertices with weight")
        elif rep["status"] == "outside":
            lines.append(f"  separating functional value {cert['value']:.9f} > bound {cert['bound']:.9f} (margin {cert['margin']:.3e})")
        g = rep.get("game", {})
        if "score" in g:
            lines.append(f"  {g['name']}: score {g['score']:.9f}, causal bound {g['causal_bound']:.9f}")
    elif cmd == "validate":
        lines.append(f"  max leak {rep['max_leak']:.3e}, max flag wrap {rep['max_wrap']:.3e}")
    if verbosity >= 2 and cmd not in ("switch-demo",):
        lines.append(json.dumps(rep, sort_keys=True, indent=1))
    return "\n".join(lines) + "\n"


# -- entry point --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qcausal", description="Simulate coherently controlled protocols and extract causal models.")
    p.add_argument("--json", action="store_true", help="print the machine-readable report")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name: str, fn: Callable, help_: str, doc: bool = True) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(fn=fn)
        if doc:
            sp.add_argument("doc", help="document path, or - for stdin")
        sp.add_argument("--json", action="store_true", default=argparse.SUPPRESS, help="print the machine-readable report")
        return sp

    sp = add("simulate", cmd_simulate, "print the outcome distribution at one setting vector")
    sp.add_argument("--x", required=True, help="comma-separated settings, e.g. 0,1,1")
    add("validate", cmd_validate, "check that every lab fires exactly once at every setting vector")
    sp = add("extract", cmd_extract, "emit the extracted causal model at one setting vector")
    sp.add_argument("--x", required=True)
    sp.add_argument("--out")
    sp = add("verify", cmd_verify, "compare quantum and extracted causal distributions at every setting vector")
    sp.add_argument("--allow-large", action="store_true", help="lift the limit on the number of setting vectors")
    sp = add("lemmas", cmd_lemmas, "check the orthogonality lemmas and norm identities")
    sp.add_argument("--seed", type=int, default=0, help="seed for history sampling")
    sp.add_argument("--x", help="restrict to one setting vector")
    sp.add_argument("--max-histories", type=int, default=MAX_EXHAUSTIVE)
    add("switch-demo", cmd_switch_demo, "run the three-party switch end to end", doc=False)
    sp = add("rewrite", cmd_rewrite, "rewrite an individual-gate circuit as a single-control protocol")
    sp.add_argument("--out")
    sp = add("polytope-check", cmd_polytope_check, "two-party causal polytope membership of a distribution family")
    sp.add_argument("--game", choices=["average", "joint"], default="average")
    sp = add("fixture", cmd_fixture, "emit a built-in protocol or circuit document", doc=False)
    sp.add_argument("name", choices=["switch", "random", "switch-circuit", "random-circuit"])
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    return p


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_INPUT
    verbosity = _verbosity()
    logging.basicConfig(level=[logging.ERROR, logging.WARNING, logging.INFO][verbosity], format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        rep, code = args.fn(args)
    except (InputError, docs.DocumentError, QCausalError, ValueError) as exc:
        code = EXIT_INPUT
        if isinstance(exc, UnsupportedSizeError):
            msg = f"unsupported size: {exc}"
        else:
            msg = str(exc)
        rep = {"command": args.command, "status": "input-error", "error": msg}
        sys.stderr.write(f"error: {msg}\n")
        if getattr(args, "json", False):
            sys.stdout.write(docs.dumps(rep))
        return code
    if "document" in rep:
        sys.stdout.write(docs.dumps(rep["document"]))
    elif getattr(args, "json", False):
        rep.setdefault("parse_mode", docs.PARSE_MODE)
        sys.stdout.write(docs.dumps(rep))
    else:
        sys.stdout.write(render_text(rep, verbosity))
    return code


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()

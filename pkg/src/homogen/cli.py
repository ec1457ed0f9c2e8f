"""Command line entry point: ``homogen <command> [options]``.

Every command prints a human-readable report and, with ``--json PATH``,
writes the same content as a deterministic JSON record.  Exit status:
0 all expectations met, 1 counterexample found or verification failed,
2 budget exhausted, 3 invalid input.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

from . import presets
from .amalgamation import (AmalgamProblem, PriorityOrder, check_prioritised_class, classify,
                           condition1_check, prioritised_amalgam, problems_isomorphic)
from .core import CompleteStructure, Language, TriangleSet
from .errors import BudgetExhausted, InvalidInputError, LogicalFailure, ResourceLimitError
from .fraisse import SaturationBudget, Tower, build_tower, dump_tower, load_tower
from .swir import AuditBounds, DLOBackend, ForbLimitBackend, audit_all, replay

EXIT_OK, EXIT_COUNTEREXAMPLE, EXIT_BUDGET, EXIT_INVALID = 0, 1, 2, 3

DEFAULTS = {"max_size": 5, "max_base": 1, "max_vertices": 60, "seed": 0}


@dataclass
class RunConfig:
    """Validated inputs shared by every command.

    The JSON config file has the keys ``language`` ("R+-,G+-"), ``triangles``
    (a preset name such as "cherlin-8" or a list of pattern strings),
    ``priority`` ("R+ > R-"), ``budgets`` (max_size, max_base,
    max_vertices) and ``seed``.  Command-line flags override the file.
    """

    language: Language
    triangles: TriangleSet
    priority: Optional[PriorityOrder]
    max_size: int = DEFAULTS["max_size"]
    max_base: int = DEFAULTS["max_base"]
    max_vertices: int = DEFAULTS["max_vertices"]
    seed: int = DEFAULTS["seed"]
    options: dict = field(default_factory=dict)

    @classmethod
    def build(cls, raw: dict) -> "RunConfig":
        lang = Language.parse(raw["language"]) if raw.get("language") else presets.cherlin_language()
        tri = raw.get("triangles", raw.get("preset"))
        if tri is None:
            raise InvalidInputError("no triangle set: give --preset or a config with 'triangles'")
        if isinstance(tri, str):
            try:
                T = presets.preset(tri, lang)
            except (KeyError, ValueError) as e:
                raise InvalidInputError(f"unknown preset {tri!r}") from e
        else:
            T = TriangleSet(lang, list(tri), name=raw.get("name"))
        pr = PriorityOrder.parse(lang, raw["priority"]) if raw.get("priority") else None
        budgets = dict(raw.get("budgets", {}))
        vals = {k: int(raw.get(k, budgets.get(k, DEFAULTS[k]))) for k in DEFAULTS}
        if min(vals["max_size"], vals["max_vertices"]) < 1 or vals["max_base"] < 0:
            raise InvalidInputError("budgets must be positive")
        return cls(lang, T, pr, options=dict(raw.get("options", {})), **vals)


def _raw_config(args) -> dict:
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise InvalidInputError(f"cannot read config {args.config}: {e}") from e
        if not isinstance(raw, dict):
            raise InvalidInputError("config must be a JSON object")
    for key in ("preset", "priority", "max_size", "max_base", "max_vertices", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            raw["triangles" if key == "preset" else key] = val
    return raw


def _config(args, default_preset: Optional[str] = None, default_priority: Optional[str] = None) -> RunConfig:
    raw = _raw_config(args)
    if default_preset and "triangles" not in raw:
        raw["triangles"] = default_preset
    if default_priority and "priority" not in raw:
        raw["priority"] = default_priority
    return RunConfig.build(raw)


# ---------------------------------------------------------------------- records


def _problem_record(p: AmalgamProblem) -> dict:
    return {"A": p.A.to_literal(), "C": p.C.to_literal(), "B": list(p.B)}


def _problem_from_record(lang: Language, rec: dict) -> AmalgamProblem:
    return AmalgamProblem(CompleteStructure.from_literal(lang, rec["A"]),
                          CompleteStructure.from_literal(lang, rec["C"]), tuple(rec["B"]))


def _amalgam_counterexample(T: TriangleSet, pr: PriorityOrder, p: AmalgamProblem, outcome) -> dict:
    return {"record": "amalgam-counterexample", "language": T.language.spec_string(),
            "triangles": T.to_text(), "priority": str(pr), "problem": _problem_record(p),
            "failure": outcome.describe(T.language)}


def _backend_record(backend) -> dict:
    if isinstance(backend, DLOBackend):
        return {"name": "dlo", "elements": [backend.encode(x) for x in backend.universe()]}
    return {"name": "forb-limit", "tower": dump_tower(backend.tower)}


def _backend_from_record(rec: dict):
    if rec["name"] == "dlo":
        return DLOBackend(Fraction(x) for x in rec["elements"])
    if rec["name"] == "forb-limit":
        return ForbLimitBackend(load_tower(rec["tower"]))
    raise InvalidInputError(f"unknown backend {rec['name']!r}")


class Report:
    """Text lines plus a JSON record; the status decides the exit code."""

    def __init__(self, command: str):
        self.lines: list[str] = []
        self.record: dict = {"command": command}
        self.status = EXIT_OK

    def say(self, line: str = ""):
        self.lines.append(line)

    def fail(self, code: int):
        self.status = max(self.status, code)

    def emit(self, json_path: Optional[str], stream=None):
        stream = stream or sys.stdout
        for line in self.lines:
            print(line, file=stream)
        if json_path:
            self.record["exit_status"] = self.status
            Path(json_path).write_text(json.dumps(self.record, sort_keys=True, indent=1) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------- commands


def cmd_classify(args, rep: Report):
    cfg = _config(args)
    c = classify(cfg.triangles, max_size=cfg.max_size, full=args.full)
    rep.say(f"classification of {cfg.triangles.name or 'inline triangle set'} (|A ∪ C| <= {cfg.max_size})")
    rep.say(c.summary())
    good = [str(p) for p in c.prioritised]
    rep.say(f"prioritised orders: {', '.join(good) if good else 'none'}")
    rows = []
    for pr, cond, cls in c.rows:
        row = {"priority": str(pr), "condition1": bool(cond), "detail": cond.detail}
        if cls is not None:
            row["passed"] = cls.passed
            row["problems_checked"] = cls.problems_checked
            if not cls.passed:
                row["counterexample"] = _amalgam_counterexample(cfg.triangles, pr, cls.problem, cls.outcome)
        rows.append(row)
    rep.record.update(triangles=cfg.triangles.to_text(), orders=rows, prioritised=good)
    if not good:
        rep.fail(EXIT_COUNTEREXAMPLE)


def cmd_amalgamate(args, rep: Report):
    cfg = _config(args)
    if cfg.priority is None:
        raise InvalidInputError("amalgamate needs --priority")
    lang = cfg.language
    try:
        A = CompleteStructure.from_literal(lang, Path(args.a).read_text(encoding="utf-8"))
        C = CompleteStructure.from_literal(lang, Path(args.c).read_text(encoding="utf-8"))
    except OSError as e:
        raise InvalidInputError(str(e)) from e
    p = AmalgamProblem(A, C, tuple(v for v in A.vertices if v in set(C.vertices)))
    out = prioritised_amalgam(p, cfg.triangles, cfg.priority)
    rep.say(f"amalgam over B = {list(p.B)} with {cfg.priority}: {out.describe(lang)}")
    for (a, c), col in sorted(out.choices.items()):
        rep.say(f"  r({a}, {c}) = {lang.symbol(col)}")
    rep.record.update(problem=_problem_record(p), ok=out.ok,
                      choices=[[a, c, str(lang.symbol(col))] for (a, c), col in sorted(out.choices.items())])
    if out.ok:
        rep.record["result"] = out.completed.to_literal()
    else:
        rep.record["counterexample"] = _amalgam_counterexample(cfg.triangles, cfg.priority, p, out)
        rep.fail(EXIT_COUNTEREXAMPLE)


def _tower(cfg: RunConfig) -> Tower:
    if cfg.priority is None:
        raise InvalidInputError("building a limit needs --priority")
    return build_tower(cfg.triangles, cfg.priority, SaturationBudget(cfg.max_vertices, cfg.max_base))


def cmd_limit(args, rep: Report):
    cfg = _config(args)
    tower = _tower(cfg)
    text = dump_tower(tower)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    rep.say(f"tower with {tower.n} vertices, {len(tower.stage_bounds)} stages, status {tower.status}")
    if not args.out:
        rep.say(text.rstrip("\n"))
    rep.record.update(vertices=tower.n, status=tower.status, tower=text)


def cmd_check_swir(args, rep: Report):
    if args.backend == "dlo":
        backend = DLOBackend(range(args.bound))
        bounds = AuditBounds(max_set=2, window=args.bound, seed=args.seed or 0)
    else:
        cfg = _config(args, default_preset="cherlin-8", default_priority="R+ > R-")
        backend = ForbLimitBackend(_tower(cfg))
        bounds = AuditBounds(max_set=2, window=args.bound, seed=cfg.seed)
    reports = audit_all(backend, bounds)
    rep.say(f"audit of the {backend.name} backend (window {bounds.window}, sets <= {bounds.max_set})")
    out = []
    for r in reports:
        rep.say(r.line())
        rec = r.record()
        rec["replay"] = [{"record": "swir-counterexample", "backend": _backend_record(backend),
                          "axiom": r.axiom, "variant": r.variant, "counterexample": cx}
                         for cx in r.counterexamples[:1]]
        out.append(rec)
        if r.status == "fail":
            rep.fail(EXIT_COUNTEREXAMPLE)
        elif r.status == "budget":
            rep.fail(EXIT_BUDGET)
    rep.record.update(backend=backend.name, audits=out)


def _pipeline_backend(args, cfg: RunConfig):
    if args.backend == "dlo":
        return DLOBackend(range(12))
    return ForbLimitBackend(_tower(cfg))


def cmd_dynamics(args, rep: Report):
    from . import dynamics as dyn

    cfg = _config(args, default_preset="cherlin-8", default_priority="R+ > R-")
    backend = _pipeline_backend(args, cfg)
    rng = random.Random(cfg.seed)
    dlo = isinstance(backend, DLOBackend)
    certs = []
    if args.pipeline == "conjugate-product":
        if dlo:
            gs = [dyn.shift(backend, k, name=f"g{i + 1}") for i, k in enumerate((1, 1, -1, -1))]
            Xs = [(Fraction(i),) for i in (0, 1, 2, 1, 0)]
            run = dyn.conjugate_product_run(backend, gs, Xs, rng=rng)
        else:
            gs, Xs = dyn.random_chain(backend, rng)
            run = dyn.conjugate_product_run(backend, gs, Xs, rng=rng)
        certs = [run.extension.certificate, run.certificate]
        rep.say(f"x0 = {[backend.encode(x) for x in run.x0]}  x4 = {[backend.encode(x) for x in run.x4]}")
    elif args.pipeline == "density":
        if dlo:
            g = dyn.PartialAutomorphism(backend, [(Fraction(1), Fraction(2)), (Fraction(5), Fraction(4))], name="g")
            us = [{Fraction(i): Fraction(i + 1)} for i in range(4)]
        else:
            universe = backend.universe()
            g = dyn.random_partial_automorphism(backend, rng.sample(universe, 3), rng, name="g")
            us = [dict(dyn.random_partial_automorphism(backend, rng.sample(universe, 1), rng, name="u").fwd)
                  for _ in range(4)]
        certs = [dyn.density_witness(backend, g, us, rng=rng).certificate]
    elif args.pipeline in ("colour-range", "movers"):
        if dlo and args.pipeline == "colour-range":
            raise InvalidInputError("the colour-range construction needs a Forb backend")
        if dlo:
            # x ↦ x − 1 moves R-maximally and its inverse L-maximally: the mixed hypotheses
            g = dyn.shift(backend, -1, name="g")
        else:
            g = dyn.random_partial_automorphism(backend, rng.sample(backend.universe(), 3), rng, name="g")
        sched = dyn.default_schedule(backend)
        if not dlo:
            h, crep = dyn.lemma_colourrange_build(backend, g, sched, steps=args.steps)
            certs.append(dyn.colour_range_certificate(backend, g, h, crep))
            _build_report(rep, "colour range", crep)
            g = dyn.comm(h, g)
        if args.pipeline == "movers":
            variant = args.variant or ("mixed" if dlo else "both-sides")
            k, mrep = dyn.commutator_mover_build(backend, g, sched, variant=variant)
            certs.append(dyn.mover_certificate(backend, g, k, mrep))
            _build_report(rep, f"commutator movers ({variant})", mrep)
    ok = True
    for cert in certs:
        verified, _ = dyn.verify_certificate(cert.dumps())
        ok = ok and verified
        rep.say(f"certificate {cert.kind}: {sum(v for _, v in cert.facts)}/{len(cert.facts)} facts, replay "
                f"{'verified' if verified else 'FAILED'}")
        for name, val in cert.facts:
            if not val:
                rep.say(f"  false: {name}")
    rep.record.update(pipeline=args.pipeline, backend=backend.name,
                      certificates=[json.loads(c.dumps()) for c in certs])
    if args.out:
        Path(args.out).write_text(json.dumps({"record": "certificates", "certificates": rep.record["certificates"]},
                                             sort_keys=True) + "\n", encoding="utf-8")
    if not ok:
        rep.fail(EXIT_COUNTEREXAMPLE)


def _build_report(rep: Report, title: str, br):
    rep.say(f"{title}: {len(br.schedule)} scheduled types, "
            f"{sum(len(w) for w in br.witnesses.values())} witnesses verified")
    for key, msg in sorted(br.failures.items()):
        rep.say(f"  budget: {msg}")
        rep.fail(EXIT_BUDGET)
    for key, msg in sorted(br.logical.items()):
        rep.say(f"  failed: {msg}")
        rep.fail(EXIT_COUNTEREXAMPLE)


def _verify_one(rec: dict) -> tuple[bool, str]:
    from .dynamics import verify_certificate

    kind = rec.get("record")
    if kind == "amalgam-counterexample":
        lang = Language.parse(rec["language"])
        T = TriangleSet.parse(lang, rec["triangles"])
        pr = PriorityOrder.parse(lang, rec["priority"])
        out = prioritised_amalgam(_problem_from_record(lang, rec["problem"]), T, pr)
        same = (not out.ok) and out.describe(lang) == rec["failure"]
        return same, f"amalgam counterexample: {out.describe(lang)}"
    if kind == "swir-counterexample":
        backend = _backend_from_record(rec["backend"])
        genuine = replay(backend, rec["axiom"], rec["variant"], rec["counterexample"])
        return genuine, f"{rec['axiom']} ({rec['variant']}) counterexample {'reproduced' if genuine else 'NOT reproduced'}"
    if "kind" in rec:
        ok, again = verify_certificate(rec)
        return ok, f"certificate {again.kind}: {'verified' if ok else 'FAILED'}"
    raise InvalidInputError("unrecognised record")


def _records(data) -> list:
    if isinstance(data, dict) and data.get("record") == "certificates":
        return data["certificates"]
    if isinstance(data, dict) and "certificates" in data and "command" in data:
        return data["certificates"]
    if isinstance(data, dict) and data.get("command") == "check-swir":
        return [r for a in data["audits"] for r in a["replay"]]
    if isinstance(data, dict) and data.get("command") in ("classify", "amalgamate", "cherlin"):
        return _nested_counterexamples(data)
    return data if isinstance(data, list) else [data]


def _nested_counterexamples(obj) -> list:
    found = []
    if isinstance(obj, dict):
        if obj.get("record") == "amalgam-counterexample":
            return [obj]
        for v in obj.values():
            found += _nested_counterexamples(v)
    elif isinstance(obj, list):
        for v in obj:
            found += _nested_counterexamples(v)
    return found


def cmd_verify(args, rep: Report):
    try:
        data = json.loads(Path(args.record).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidInputError(f"cannot read {args.record}: {e}") from e
    recs = _records(data)
    if not recs:
        raise InvalidInputError("nothing to verify in the record")
    verdicts = []
    for rec in recs:
        ok, msg = _verify_one(rec)
        rep.say(msg)
        verdicts.append(ok)
        if not ok:
            rep.fail(EXIT_COUNTEREXAMPLE)
    rep.record.update(verdicts=verdicts)


def cmd_cherlin(args, rep: Report):
    n = args.number
    lang = presets.cherlin_language()
    T = presets.cherlin(n, lang)
    rep.say(f"Cherlin #{n}: forbidden {', '.join(str(p) for p in T.sorted_patterns())}")
    rep.record.update(number=n, triangles=T.to_text())
    max_size = args.max_size or 6
    if n in (8, 9, 10):
        sols = ["R+", "R-"]
        cond = condition1_check(T, sols)
        pr = PriorityOrder.parse(lang, "R+ > R-")
        cls = check_prioritised_class(lang, T, pr, max_size, full=True)
        rep.say(f"condition 1 with L' = {{R+, R-}}: {'pass' if cond else 'fail'}")
        rep.say(f"prioritised class R+ > R- up to size {max_size}: "
                f"{'pass' if cls.passed else 'fail'} ({cls.problems_checked} problems)")
        rep.record.update(condition1=bool(cond), prioritised=cls.passed, problems_checked=cls.problems_checked)
        if not cond or not cls.passed:
            if not cls.passed:
                rep.record["counterexample"] = _amalgam_counterexample(T, pr, cls.problem, cls.outcome)
            rep.fail(EXIT_COUNTEREXAMPLE)
        if n == 8:
            out = prioritised_amalgam(presets.worked_example_8(), T, pr)
            got = {f"r(a{a}, c)": str(lang.symbol(col)) for (a, _), col in sorted(out.choices.items())}
            expect = {"r(a1, c)": "R-", "r(a2, c)": "R+"}
            rep.say("worked amalgam: " + ", ".join(f"{k} = {v}" for k, v in got.items()))
            rep.record["worked_amalgam"] = got
            if got != expect or not out.ok:
                rep.fail(EXIT_COUNTEREXAMPLE)
        return
    # #11 and #12: neither R nor G can be prioritised; the failures match the two figures
    figures = {"R+ > R-": presets.figure_left(), "G+ > G-": presets.figure_right()}
    rows = {}
    for text, fig in figures.items():
        pr = PriorityOrder.parse(lang, text)
        cls = check_prioritised_class(lang, T, pr, 4, shapes=[(1, 2, 1)], collect=10_000)
        match = next(((p, o) for p, o in cls.counterexamples if problems_isomorphic(p, fig)), None)
        rep.say(f"priority {text}: {len(cls.counterexamples)} failing problems of shape (1, 2, 1); "
                f"figure configuration {'found' if match else 'NOT found'}")
        if match:
            rep.say(f"  {match[1].describe(lang)}")
        rows[text] = {"failures": len(cls.counterexamples), "figure_found": match is not None,
                      "counterexample": _amalgam_counterexample(T, pr, *match) if match else None}
        if match is None:
            rep.fail(EXIT_COUNTEREXAMPLE)
    rep.record["figures"] = rows


# ---------------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--preset", help="triangle preset, e.g. cherlin-8")
    p.add_argument("--priority", help='priority order, e.g. "R+ > R-"')
    p.add_argument("--max-size", type=int, dest="max_size")
    p.add_argument("--max-base", type=int, dest="max_base")
    p.add_argument("--max-vertices", type=int, dest="max_vertices")
    p.add_argument("--seed", type=int)
    p.add_argument("--json", help="write the machine-readable report here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="homogen", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="condition 1 and the prioritised class sweep over every order")
    _common(p)
    p.add_argument("--full", action="store_true", help="allow more than two new points per side")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("amalgamate", help="one prioritised amalgam from two structure files")
    _common(p)
    p.add_argument("a", help="structure file for A")
    p.add_argument("c", help="structure file for C (shared vertices form B)")
    p.set_defaults(func=cmd_amalgamate)

    p = sub.add_parser("limit", help="build and dump a saturated tower")
    _common(p)
    p.add_argument("--out", help="dump file (default: print)")
    p.set_defaults(func=cmd_limit)

    p = sub.add_parser("check-swir", help="audit the independence axioms")
    _common(p)
    p.add_argument("--backend", choices=("forb", "dlo"), default="forb")
    p.add_argument("--bound", type=int, default=8, help="window of elements the sets are drawn from")
    p.set_defaults(func=cmd_check_swir)

    p = sub.add_parser("dynamics", help="run a certificate-producing pipeline")
    _common(p)
    p.add_argument("pipeline", choices=("conjugate-product", "density", "colour-range", "movers"))
    p.add_argument("--backend", choices=("forb", "dlo"), default="forb")
    p.add_argument("--variant", choices=("both-sides", "mixed"),
                   help="default: mixed on dlo, both-sides on forb")
    p.add_argument("--steps", type=int, default=1)
    p.add_argument("--out", help="write the certificates here for `verify`")
    p.set_defaults(func=cmd_dynamics)

    p = sub.add_parser("verify", help="replay a certificate or counterexample record")
    p.add_argument("record", help="JSON file written by --json or --out")
    p.add_argument("--json", help="write the machine-readable report here")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("cherlin", help="reproduce the results for one of Cherlin's examples")
    p.add_argument("number", type=int, choices=(8, 9, 10, 11, 12))
    p.add_argument("--max-size", type=int, dest="max_size")
    p.add_argument("--json", help="write the machine-readable report here")
    p.set_defaults(func=cmd_cherlin)
    return parser


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    rep = Report(args.command)
    try:
        args.func(args, rep)
    except (InvalidInputError, ValueError, KeyError) as e:
        rep.say(f"invalid input: {e}")
        rep.fail(EXIT_INVALID)
    except (BudgetExhausted, ResourceLimitError) as e:
        rep.say(f"budget exhausted: {e}")
        rep.fail(EXIT_BUDGET)
    except LogicalFailure as e:
        rep.say(f"logical failure: {e}")
        rep.fail(EXIT_COUNTEREXAMPLE)
    rep.emit(getattr(args, "json", None))
    return rep.status


if __name__ == "__main__":
    sys.exit(main())

"""Run configuration, job planning, execution and the regression store.

A run configuration is an INI file.  ``[run]`` selects groups, the seed and
the worker count; a ``[<group>]`` section gives the default lattice and
families for that group, and ``[<group>.<suite>]`` overrides any key for one
suite.  Every job is planned (and every exponent tuple validated) before
anything is computed.  Jobs are plain picklable data, so they can run in a
process pool; results are collected in plan order, which keeps the output
independent of the worker count.
"""
from __future__ import annotations

import configparser
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import InputError
from ..groups import GroupDescriptor, get_group, load_or_calibrate
from ..lattice import Ball, GridFunction, Lattice, fit_mask, make_lattice
from ..norms import ExponentTuple, lipschitz_seminorm
from . import suites
from .reports import CheckReport
from .symbols import SYMBOL_KINDS, FunctionSpec, SymbolSpec, default_functions, generate_function, generate_symbol

log = logging.getLogger(__name__)

SUITES = ("oracle_equivalence", "constant_symbol", "ef_balance", "local_domination", "sign", "nonlinear_bound",
          "pointwise_domination", "chi_morrey", "lipschitz_power", "lip_band", "theorem3_functional",
          "dilation_covariance", "strong_type", "weak_type", "morrey", "morrey_lambda0")
REGRESSION_SUITES = ("lip_band", "theorem3_functional", "strong_type", "weak_type", "morrey")
EUCLIDEAN_ONLY = ("dilation_covariance",)
REFINE_TOL = 0.10
DEFAULT_STORE = "default-v1"


# parsing -----------------------------------------------------------------------


def parse_number(text: str) -> float:
    """A float, also accepting fractions such as ``1/256`` and ``inf``."""
    try:
        return float(Fraction(text.strip()))
    except ZeroDivisionError:
        raise InputError(f"not a number: {text!r}") from None
    except ValueError:
        pass
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"not a number: {text!r}") from None
    if math.isnan(value):
        raise InputError(f"not a number: {text!r}")
    return value


def parse_numbers(text: str) -> tuple[float, ...]:
    return tuple(parse_number(t) for t in text.split(",") if t.strip())


def parse_words(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def parse_exponents(text: str, Q: int) -> tuple[ExponentTuple, ...]:
    """``relation beta p [lambda]`` entries separated by semicolons."""
    out = []
    for entry in text.split(";"):
        words = entry.split()
        if not words:
            continue
        if len(words) not in (3, 4):
            raise InputError(f"exponent entry {entry.strip()!r} should read 'relation beta p [lambda]'")
        lam = parse_number(words[3]) if len(words) == 4 else 0.0
        out.append(ExponentTuple.derive(words[0], parse_number(words[1]), parse_number(words[2]), Q, lam))
    return tuple(out)


@dataclass(frozen=True)
class RunConfig:
    """A parsed configuration: run options plus the raw per-group sections."""

    groups: tuple[str, ...]
    seed: int
    workers: int
    out: str
    calibration: str
    regression: str
    sections: dict = field(default_factory=dict, compare=False)

    def settings(self, group: str, suite: str) -> dict:
        """Group section overlaid with the ``<group>.<suite>`` section."""
        merged = dict(self.sections.get(group, {}))
        merged.update(self.sections.get(f"{group}.{suite}", {}))
        return merged


def load_config(path) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise InputError(f"malformed config {path}: {exc}") from None
    if "run" not in parser:
        raise InputError(f"config {path} has no [run] section")
    run = parser["run"]
    try:
        seed = int(run.get("seed", "0"))
        workers = int(run.get("workers", "1"))
    except ValueError as exc:
        raise InputError(f"[run] {exc}") from None
    if seed < 0 or workers < 1:
        raise InputError("[run] needs seed >= 0 and workers >= 1")
    sections = {name: dict(parser[name]) for name in parser.sections() if name != "run"}
    for name, keys in sections.items():
        unknown = sorted(set(keys) - KNOWN_KEYS)
        if unknown:
            raise InputError(f"[{name}] unknown keys: {unknown}")
    return RunConfig(parse_words(run.get("groups", "")), seed, workers, run.get("out", "results"),
                     run.get("calibration", "calibration.txt"), run.get("regression", DEFAULT_STORE), sections)


# regression store --------------------------------------------------------------


def store_path(config: RunConfig) -> Path | None:
    if config.regression == DEFAULT_STORE:
        return Path(str(resources.files("carnotmax") / "data" / "regression.json"))
    return Path(config.regression)


def load_store(path: Path | None) -> dict:
    if path is None or not path.exists():
        return {}
    return json.loads(path.read_text())["constants"]


def save_store(path: Path, constants: dict, name: str) -> None:
    payload = {"id": name, "constants": dict(sorted(constants.items()))}
    path.write_text(json.dumps(payload, indent=1) + "\n")


# jobs --------------------------------------------------------------------------


@dataclass(frozen=True)
class Job:
    """One unit of work: a suite on one group with fixed settings and case."""

    group: str
    suite: str
    settings: tuple[tuple[str, object], ...]
    case: tuple[tuple[str, object], ...] = ()
    key: str = ""
    frozen: object = None
    constants: tuple[float, float] | None = None

    def get(self, name: str, default=None):
        return dict(self.settings).get(name, default)

    def case_value(self, name: str, default=None):
        return dict(self.case).get(name, default)


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:g}"
    if isinstance(v, (tuple, list)):
        return "(" + ",".join(_fmt(x) for x in v) + ")"
    return str(v)


class _Settings:
    """Typed access to one merged settings dict."""

    def __init__(self, raw: dict, where: str):
        self.raw, self.where = raw, where

    def _get(self, name, conv, default):
        if name not in self.raw:
            if default is None:
                raise InputError(f"[{self.where}] needs the key {name!r}")
            return default
        try:
            value = conv(self.raw[name])
        except InputError as exc:
            raise InputError(f"[{self.where}] {name}: {exc}") from None
        return value

    def number(self, name, default=None) -> float:
        return self._get(name, parse_number, default)

    def numbers(self, name, default=None) -> tuple[float, ...]:
        return self._get(name, parse_numbers, default)

    def words(self, name, default=None) -> tuple[str, ...]:
        return self._get(name, parse_words, default)

    def integer(self, name, default=None) -> int:
        return self._get(name, lambda s: int(parse_number(s)), default)

    def lattice_settings(self) -> list[tuple[str, object]]:
        return [("h", self.number("h")), ("half_extent", self.numbers("half_extent")),
                ("margin", self.number("margin"))]


def _validate_symbols(kinds, where):
    for k in kinds:
        if k not in SYMBOL_KINDS:
            raise InputError(f"[{where}] unknown symbol kind {k!r}; expected one of {SYMBOL_KINDS}")


def _betas(s: _Settings) -> tuple[float, ...]:
    betas = s.numbers("betas")
    for b in betas:
        if not 0.0 < b < 1.0:
            raise InputError(f"[{s.where}] beta must lie in (0, 1), got {b}")
    return betas


def _plan_suite(config: RunConfig, group: GroupDescriptor, suite: str, seed: int) -> list[Job]:
    s = _Settings(config.settings(group.name, suite), f"{group.name}.{suite}")
    jobs = []
    base = [("seed", seed)]
    Q = group.Q

    def add(settings, case=(), regression=False):
        key = ""
        if regression:
            tag = ",".join(f"{k}={_fmt(v)}" for k, v in settings if k not in ("symbols", "symbol_seeds"))
            key = f"{group.name}/{suite}/" + "/".join(f"{k}={_fmt(v)}" for k, v in case) + f"@{tag}"
        jobs.append(Job(group.name, suite, tuple(settings), tuple(case), key))

    if suite == "oracle_equivalence":
        add(base + [("pairs", s.integer("pairs", 25))])
        return jobs
    lattice = s.lattice_settings()
    if suite == "ef_balance":
        add(base + lattice + [("radii", s.numbers("radii")), ("pairs", s.integer("pairs", 100))])
    elif suite == "chi_morrey":
        pairs = s.numbers("morrey_pairs")
        if len(pairs) % 2:
            raise InputError(f"[{s.where}] morrey_pairs lists p, lambda pairs")
        add(base + lattice + [("radii", s.numbers("radii")), ("ball_radii", s.numbers("ball_radii")),
                              ("morrey_pairs", pairs)])
    elif suite == "lipschitz_power":
        for beta in _betas(s):
            add(base + lattice, [("beta", beta)])
    elif suite == "dilation_covariance":
        for alpha in s.numbers("alphas"):
            if not 0.0 <= alpha < Q:
                raise InputError(f"[{s.where}] alpha must lie in [0, {Q}), got {alpha}")
            add(base + lattice + [("radii", s.numbers("radii")), ("function_radius", s.number("function_radius")),
                                  ("function_beta", s.number("function_beta", 0.5))], [("alpha", alpha)])
    else:
        kinds = s.words("symbols")
        _validate_symbols(kinds, s.where)
        seeds = tuple(int(v) for v in s.numbers("symbol_seeds", (1.0,)))
        common = base + lattice + [("radii", s.numbers("radii")), ("symbols", kinds), ("symbol_seeds", seeds),
                                   ("shift_center", s.numbers("shift_center", (0.25,))),
                                   ("constant", s.number("constant", 3.0)),
                                   ("grain", s.number("grain", 0.25))]
        if suite in ("strong_type", "morrey", "morrey_lambda0"):
            exps = parse_exponents(s.raw.get("exponents", ""), Q)
            if not exps:
                raise InputError(f"[{s.where}] needs exponents")
            scales = s.numbers("scales", (1.0,))
            extra = [("function_radius", s.number("function_radius")), ("scales", scales)]
            if suite != "strong_type":
                extra.append(("family_radii", s.numbers("family_radii")))
            for e in exps:
                if suite == "strong_type" and e.relation != "lebesgue":
                    raise InputError(f"[{s.where}] the strong-type suite takes lebesgue exponents")
                if suite == "morrey" and e.relation == "lebesgue":
                    raise InputError(f"[{s.where}] the Morrey suite takes spanne or adams exponents")
                if suite == "morrey_lambda0" and e.relation != "lebesgue":
                    raise InputError(f"[{s.where}] the lambda = 0 cross-check takes lebesgue exponents")
                exp_case = [("relation", e.relation), ("beta", e.beta), ("p", e.p), ("lambda", e.lam)]
                for kind in kinds:
                    for spec_seed in (seeds if kind == "random_lipschitz" else (0,)):
                        add(common + extra, exp_case + [("symbol", kind), ("symbol_seed", spec_seed)],
                            regression=suite != "morrey_lambda0")
        elif suite == "lip_band":
            for beta in _betas(s):
                add(common + [("family_radii", s.numbers("family_radii"))], [("beta", beta)], regression=True)
        elif suite == "theorem3_functional":
            p = s.number("p", 1.5)
            diagnostic = set(s.words("diagnostic_symbols", ("nonlipschitz",)))
            ungated = set(s.words("ungated_symbols", ("random_lipschitz",)))
            for beta in _betas(s):
                q = ExponentTuple.derive("lebesgue", beta, p, Q).q
                for kind in kinds:
                    for spec_seed in (seeds if kind == "random_lipschitz" else (0,)):
                        case = [("beta", beta), ("q", q), ("symbol", kind), ("symbol_seed", spec_seed),
                                ("diagnostic", kind in diagnostic), ("spread_gate", kind not in ungated)]
                        add(common, case, regression=kind not in diagnostic)
        else:
            betas = _betas(s)
            fr = s.number("function_radius")
            for beta in betas:
                for kind in kinds:
                    for spec_seed in (seeds if kind == "random_lipschitz" else (0,)):
                        case = [("beta", beta), ("symbol", kind), ("symbol_seed", spec_seed)]
                        add(common + [("function_radius", fr)], case, regression=suite == "weak_type")
    return jobs


KNOWN_KEYS = {"suites", "exponents", "h", "half_extent", "margin", "radii", "family_radii", "function_radius",
              "function_beta", "betas", "symbols", "symbol_seeds", "shift_center", "constant", "grain", "scales",
              "alphas", "pairs", "ball_radii", "morrey_pairs", "p", "diagnostic_symbols", "ungated_symbols"}


def plan(config: RunConfig, groups=None, seed: int | None = None) -> list[Job]:
    """Every job of the run, in output order.  Raises InputError on a bad config."""
    seed = config.seed if seed is None else seed
    names = tuple(groups) if groups else config.groups
    if not names:
        raise InputError("no groups selected")
    jobs = []
    for name in names:
        group = get_group(name)
        if name not in config.sections:
            raise InputError(f"config has no [{name}] section")
        chosen = parse_words(config.sections[name].get("suites", ",".join(SUITES)))
        for suite in chosen:
            if suite not in SUITES:
                raise InputError(f"[{name}] unknown suite {suite!r}; expected one of {SUITES}")
            if suite in EUCLIDEAN_ONLY and len(group.strata_dims) != 1:
                raise InputError(f"[{name}] {suite} runs on Euclidean groups only")
            jobs.extend(_plan_suite(config, group, suite, seed))
    return jobs


def attach(jobs: list[Job], constants: dict[str, GroupDescriptor], store: dict) -> list[Job]:
    """Fill in calibration constants and frozen regression values."""
    out = []
    for job in jobs:
        g = constants[job.group]
        out.append(replace(job, constants=(g.c0, g.c1), frozen=store.get(job.key) if job.key else None))
    return out


def calibrate_groups(names, cache_path) -> dict[str, GroupDescriptor]:
    return {name: load_or_calibrate(name, cache_path) for name in dict.fromkeys(names)}


# execution ---------------------------------------------------------------------


def _group(job: Job) -> GroupDescriptor:
    g = get_group(job.group)
    return g.with_constants(*job.constants) if job.constants else g


def _lattice(job: Job, group: GroupDescriptor) -> Lattice:
    return make_lattice(group, job.get("h"), job.get("half_extent"), margin=job.get("margin"))


def _symbol(job: Job, kind: str, beta: float, spec_seed: int, lat: Lattice) -> SymbolSpec:
    dim = lat.group.dim
    if kind == "shifted_power":
        center = tuple(job.get("shift_center")) + (0.0,) * dim
        return SymbolSpec(kind, beta, center=center[:dim])
    if kind == "constant":
        return SymbolSpec(kind, beta, value=job.get("constant"))
    if kind == "random_lipschitz":
        return SymbolSpec(kind, beta, seed=job.get("seed") + spec_seed, grain=job.get("grain"),
                          half_extent=lat.spec.half_extent)
    return SymbolSpec(kind, beta)


def _functions(job: Job) -> tuple[FunctionSpec, ...]:
    return default_functions(job.get("function_radius"), seed=job.get("seed"))


def _origin(lat: Lattice) -> tuple[int, ...]:
    return tuple([0] * lat.group.dim)


def _fitting_radii(lat: Lattice, radii) -> list[float]:
    origin = lat.flat(np.zeros(lat.group.dim, dtype=np.int64))[0]
    return [r for r in radii if fit_mask(lat, r)[origin]]


def _case_label(kind_label: str, f: FunctionSpec | None = None) -> str:
    return kind_label if f is None else f"{kind_label}|{f.label}"


def run_job(job: Job) -> list[CheckReport]:
    """Execute one job; returns its reports in a fixed order."""
    group = _group(job)
    suite = job.suite
    if suite == "oracle_equivalence":
        return [suites.suite_oracle_equivalence(group, job.get("pairs"), job.get("seed"))]
    lat = _lattice(job, group)
    radii = job.get("radii")
    if suite == "ef_balance":
        return [suites.suite_ef_balance(lat, radii, job.get("pairs"), job.get("seed"))]
    if suite == "chi_morrey":
        flat = job.get("morrey_pairs")
        pairs = list(zip(flat[0::2], flat[1::2]))
        balls = [Ball(_origin(lat), r) for r in job.get("ball_radii")]
        return [suites.suite_chi_morrey(lat, balls, pairs, radii)]
    if suite == "lipschitz_power":
        return [suites.suite_lipschitz_power(lat, job.case_value("beta"))]
    if suite == "dilation_covariance":
        f = FunctionSpec("bump", job.get("function_radius"), job.get("function_beta"))
        return [suites.suite_dilation_covariance(lat, f, job.case_value("alpha"), radii)]
    if suite == "lip_band":
        beta = job.case_value("beta")
        specs = [_symbol(job, kind, beta, sd, lat) for kind in job.get("symbols")
                 for sd in (job.get("symbol_seeds") if kind == "random_lipschitz" else (0,))]
        frozen = None if job.frozen is None else tuple(job.frozen)
        return [suites.suite_lip_band(lat, specs, beta, job.get("family_radii"), frozen)]

    kind, spec_seed = job.case_value("symbol"), job.case_value("symbol_seed")
    beta = job.case_value("beta")
    spec = _symbol(job, kind, beta, spec_seed, lat)
    if suite in ("strong_type", "morrey", "morrey_lambda0"):
        e = ExponentTuple.derive(job.case_value("relation"), beta, job.case_value("p"), group.Q,
                                 job.case_value("lambda"))
        fs = _functions(job)
        if suite == "strong_type":
            return [suites.suite_strong_type(lat, spec, fs, e, radii, job.get("scales"), job.frozen)]
        if suite == "morrey":
            return [suites.suite_morrey(lat, spec, fs, e, radii, job.get("family_radii"), job.get("scales"),
                                        job.frozen)]
        return [suites.suite_morrey_lambda0(lat, spec, fs, e, radii, job.get("family_radii"))]
    b = generate_symbol(spec, lat)
    if suite == "theorem3_functional":
        center = _origin(lat)
        if kind == "shifted_power":
            center = tuple(int(v) for v in lat.to_index(spec.center))
        return [suites.suite_theorem3_functional(b, beta, job.case_value("q"), radii, [center],
                                                 spread_gate=job.case_value("spread_gate"),
                                                 diagnostic=job.case_value("diagnostic"), frozen=job.frozen,
                                                 label=spec.label)]
    if suite == "local_domination":
        ball = Ball(_origin(lat), job.get("function_radius"))
        return [suites.suite_local_domination(b, ball, spec.label)]
    if suite == "sign":
        balls = [Ball(_origin(lat), r) for r in _fitting_radii(lat, radii)]
        reports = [suites.suite_sign(b, balls, spec.label)]
        if kind == "power":
            # the same balls for two symbols with a negative part
            half = job.get("function_radius") / 2.0
            neg = GridFunction(lat, -Ball(_origin(lat), half).indicator(lat).astype(float))
            odd = GridFunction(lat, lat.points[:, 0])
            reports += [suites.suite_sign(neg, balls, f"-chi(r={half:g})"), suites.suite_sign(odd, balls, "x1")]
        return reports
    if suite == "weak_type":
        f = generate_function(FunctionSpec("ball", job.get("function_radius")), lat)
        return [suites.suite_weak_type(b, f, beta, radii, job.frozen, spec.label)]

    reports = []
    if suite == "constant_symbol":
        for f in _functions(job):
            reports.append(suites.suite_constant_symbol(generate_function(f, lat), job.get("constant"), radii,
                                                        _case_label(f"c={job.get('constant'):g}", f)))
        return reports
    lip = lipschitz_seminorm(b, beta) if suite == "pointwise_domination" else None
    for f in _functions(job):
        fg = generate_function(f, lat)
        label = _case_label(spec.label, f)
        if suite == "pointwise_domination":
            reports.append(suites.suite_pointwise_domination(b, fg, beta, radii, label=label, lipschitz=lip))
        elif suite == "nonlinear_bound":
            reports.append(suites.suite_nonlinear_bound(b, fg, radii, label=label))
        else:
            raise InputError(f"unknown suite {suite!r}")
    return reports


class SuiteError(Exception):
    """A suite raised; names the job that failed."""

    def __init__(self, job: Job, message: str):
        super().__init__(f"{job.group}/{job.suite} {dict(job.case)}: {message}")
        self.job = job


def _guarded(job: Job) -> tuple[list[CheckReport] | None, str]:
    try:
        return run_job(job), ""
    except Exception as exc:  # reported with the job; the CLI maps it to exit 4
        return None, f"{type(exc).__name__}: {exc}"


def execute(jobs: list[Job], workers: int = 1) -> list[tuple[Job, list[CheckReport]]]:
    """Run jobs (in a process pool when workers > 1); results keep plan order."""
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_guarded, jobs))
    else:
        results = [_guarded(job) for job in jobs]
    out = []
    for job, (reports, error) in zip(jobs, results):
        if reports is None:
            raise SuiteError(job, error)
        out.append((job, reports))
    return out


def frozen_value(reports: list[CheckReport]):
    """The constant a regression job freezes: its value, or (min, max) for the band."""
    r = next(r for r in reports if r.klass == "regression")
    if r.suite == "lip_band":
        return [float(r.detail("min_ratio")), float(r.detail("max_ratio"))]
    return r.value


def freeze(results, store: dict) -> dict:
    updated = dict(store)
    for job, reports in results:
        if job.key:
            updated[job.key] = frozen_value(reports)
    return updated


# refinement study ----------------------------------------------------------------


def halved(job: Job) -> Job:
    settings = tuple((k, v / 2.0 if k == "h" else v) for k, v in job.settings)
    return replace(job, settings=settings, frozen=None)


def _change(base, refined) -> float:
    pairs = zip(base, refined) if isinstance(base, (list, tuple)) else [(base, refined)]
    worst = 0.0
    for b, r in pairs:
        if b == 0:
            worst = max(worst, 0.0 if r == 0 else math.inf)
        else:
            worst = max(worst, abs(r / b - 1.0))
    return worst


def refine(jobs: list[Job], workers: int = 1) -> list[CheckReport]:
    """Halve h for every regression job; compare with the frozen (or freshly computed) base value."""
    regression = [j for j in jobs if j.key]
    need_base = [j for j in regression if j.frozen is None]
    base_results = dict((j.key, frozen_value(r)) for j, r in execute(need_base, workers))
    refined = execute([halved(j) for j in regression], workers)
    reports = []
    for job, (_, rep) in zip(regression, refined):
        base = job.frozen if job.frozen is not None else base_results[job.key]
        new = frozen_value(rep)
        change = _change(base, new)
        r0 = next(r for r in rep if r.klass == "regression")
        reports.append(CheckReport(f"refine:{job.suite}", job.group, "regression", change, REFINE_TOL,
                                   change <= REFINE_TOL, REFINE_TOL, r0.label, r0.beta, r0.p, r0.q, r0.lam, r0.mu,
                                   details=(("h", job.get("h")), ("base", _fmt_store(base)),
                                            ("refined", _fmt_store(new)), ("key", job.key)),
                                   runtime_ms=sum(r.runtime_ms for r in rep)))
    return reports


def _fmt_store(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(f"{x:.17g}" for x in v)
    return f"{v:.17g}"

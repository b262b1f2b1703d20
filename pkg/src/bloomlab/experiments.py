"""Seeded experiment drivers.

Every trial draws its randomness from ``SeedSequence(seed, spawn_key=(trial_id,))``
so a row can be regenerated from ``(seed, trial_id)`` alone and the thread
schedule cannot change results.  Reports carry plain dict rows; the CLI turns
them into JSON and CSV.
"""
from __future__ import annotations

import copy
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .commutators import CASES, nested_commutator, verify_decomposition
from .dyadic import DyadicInterval, active_intervals, frames, haar_coefficients, synthesize
from .model import (SpecError, make_paraproduct, make_shift, random_paraproduct, random_shift,
                    single_coefficient_shift, square_function, maximal)
from .operators import (Identity, Multiplication, NonConvergenceError, Zero, operator_norm_lower,
                        operator_norm_p2, operator_norm_svd, power_iteration, weighted_matrix)
from .paraproducts import IdentityFailure, decompose_product, paraproduct_operator
from .weights import (Weight, ap_characteristic, bloom_weight, bmo_little, bmo_prod, duality_ratio,
                      gen_weight, lp_norm)

CSV_COLUMNS = ("trial_id", "L", "p", "seed", "mu_ap", "lambda_ap", "nu_a2", "b_bmoprod",
               "b_bmolittle", "k1", "k2", "v1", "v2", "value", "value_kind")
VALUE_KINDS = ("certified_norm", "lower_estimate", "residual", "gamma", "ratio")
MAX_NORM_DEPTH = 6


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "experiment": {
        "depth": 4, "p": 2.0, "seed": 0, "trials": 10, "k": 1, "mode": "auto",
        "reproducible": False, "max_complexity": 2, "restarts": 3, "budget": 60,
        "lower_budget": 200,
    },
    "weights": {
        "mu": {"kind": "haar_perturbation", "amplitude": 0.4},
        "lam": {"kind": "haar_perturbation", "amplitude": 0.4},
        "max_ap": 16.0, "max_resample": 200,
    },
    "operators": {"U1": {"kind": "random"}, "U2": {"kind": "random"}},
    "b": {"kind": "spectrum", "scale": 1.0},
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("mu", "lam", "U1", "U2"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class ExperimentConfig:
    experiment: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["experiment"]))
    weights: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["weights"]))
    operators: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["operators"]))
    b: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["b"]))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        for k, v in d.items():
            if not isinstance(v, dict):
                raise ConfigError(f"section {k!r} must be an object")
        merged = _merge(DEFAULTS, d)
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return {"experiment": copy.deepcopy(self.experiment), "weights": copy.deepcopy(self.weights),
                "operators": copy.deepcopy(self.operators), "b": copy.deepcopy(self.b)}

    def override(self, **kw) -> "ExperimentConfig":
        d = self.to_dict()
        for k, v in kw.items():
            if v is not None:
                d["experiment"][k] = v
        return ExperimentConfig.from_dict(d)

    def validate(self):
        e = self.experiment
        try:
            e["depth"] = int(e["depth"])
            e["p"] = float(e["p"])
            e["seed"] = int(e["seed"])
            e["trials"] = int(e["trials"])
            e["k"] = int(e["k"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad experiment value: {exc}")
        if not 1 <= e["depth"] <= MAX_NORM_DEPTH:
            raise ConfigError(f"depth must be in 1..{MAX_NORM_DEPTH}")
        if e["p"] <= 1:
            raise ConfigError("p must be > 1")
        if not 0 <= e["seed"] < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if e["trials"] < 0 or e["k"] < 1:
            raise ConfigError("trials must be >= 0 and k >= 1")
        if e["mode"] not in ("auto", "exact", "greedy", "rect"):
            raise ConfigError(f"unknown product BMO mode {e['mode']!r}")
        if e["mode"] == "exact" and e["depth"] > 2:
            raise ConfigError("exact product BMO mode needs depth <= 2")

    @property
    def depth(self):
        return self.experiment["depth"]

    @property
    def p(self):
        return self.experiment["p"]

    @property
    def seed(self):
        return self.experiment["seed"]

    @property
    def trials(self):
        return self.experiment["trials"]


# -- randomness and scheduling ------------------------------------------------------


def trial_rng(seed: int, trial_id: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial_id, stream)))


def thread_count(reproducible: bool = False) -> int:
    if reproducible:
        return 1
    raw = os.environ.get("BLOOMLAB_THREADS", "1")
    try:
        n = max(1, int(raw))
    except ValueError:
        n = 1
    return n


def map_trials(fn, ids, reproducible: bool = False):
    """``[fn(i) for i in ids]`` with up to ``BLOOMLAB_THREADS`` workers; order is preserved.

    Each trial is self-contained, so the thread count never changes the results.
    """
    ids = list(ids)
    n = thread_count(reproducible)
    if n == 1 or len(ids) < 2:
        return [fn(i) for i in ids]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, ids))


# -- random inputs ------------------------------------------------------------------


def random_b(spec: dict, depth: int, rng: np.random.Generator) -> np.ndarray:
    """``spectrum``: Gaussian doubly-cancellative Haar coefficients; ``little``: Gaussian
    values on the finest cells; ``checkerboard``; ``constant``; ``haar`` with
    ``positions [[posI, posJ], ...]``; ``given`` with an explicit ``values`` grid."""
    kind = spec.get("kind", "spectrum")
    scale = float(spec.get("scale", 1.0))
    n = 2**depth
    if kind == "spectrum":
        c = np.zeros((n, n))
        c[1:, 1:] = rng.standard_normal((n - 1, n - 1))
        b = synthesize(c)
    elif kind == "little":
        b = rng.standard_normal((n, n))
    elif kind == "checkerboard":
        i, j = np.indices((n, n))
        b = np.where((i + j) % 2 == 0, 1.0, -1.0)
    elif kind == "constant":
        b = np.full((n, n), float(spec.get("c", 1.0)))
    elif kind == "haar":
        c = np.zeros((n, n))
        for pi, pj in spec.get("positions", [[1, 1]]):
            c[pi, pj] = 1.0
        b = synthesize(c)
    elif kind == "given":
        b = np.array(spec["values"], dtype=float)
        if b.shape != (n, n):
            raise ConfigError(f"given b has shape {b.shape}, expected {(n, n)}")
    else:
        raise ConfigError(f"unknown b kind {kind!r}")
    return scale * b


def draw_weights(cfg: ExperimentConfig, rng: np.random.Generator):
    """``(mu, lam, resamples)`` with both dyadic A_p characteristics at most ``max_ap``."""
    w = cfg.weights
    cap = float(w.get("max_ap", np.inf))
    for attempt in range(int(w.get("max_resample", 200)) + 1):
        try:
            mu = gen_weight(w["mu"], cfg.depth, rng, cfg.p)
            lam = gen_weight(w["lam"], cfg.depth, rng, cfg.p)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad weight spec: {exc}")
        if ap_characteristic(mu, cfg.p) <= cap and ap_characteristic(lam, cfg.p) <= cap:
            return mu, lam, attempt
    raise ConfigError(f"could not draw weights with A_p <= {cap} in {attempt + 1} attempts")


def draw_operator(spec: dict, axis: int, depth: int, rng: np.random.Generator, max_complexity: int = 2):
    """A ShiftSpec or ParaproductSpec for ``axis`` per ``spec``.

    ``kind``: ``shift`` (``complexity [k1, k2]``, optional ``density``),
    ``paraproduct`` (``form``), ``single`` (one shift term ``K, I1, I2`` given as
    ``[level, index]`` with optional ``a``), ``zero`` or ``random`` (a shift with
    random complexities up to ``max_complexity`` or a paraproduct of random form).
    """
    kind = spec.get("kind", "random")
    if kind == "random":
        choice = int(rng.integers(3))
        if choice == 0:
            form = ("direct", "dual")[int(rng.integers(2))]
            return random_paraproduct(depth, axis, form, rng)
        cap = min(max_complexity, depth - 1)
        k = tuple(int(x) for x in rng.integers(0, cap + 1, size=2))
        return random_shift(depth, axis, *k, seed=rng)
    if kind == "shift":
        k1, k2 = spec.get("complexity", [1, 1])
        return random_shift(depth, axis, int(k1), int(k2), seed=rng, density=float(spec.get("density", 1.0)))
    if kind == "paraproduct":
        return random_paraproduct(depth, axis, spec.get("form", "direct"), rng)
    if kind == "single":
        try:
            K, I1, I2 = (DyadicInterval(*spec[k]) for k in ("K", "I1", "I2"))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad single-term shift: {exc}")
        return single_coefficient_shift(depth, axis, K, I1, I2, spec.get("a"))
    if kind == "zero":
        return None
    raise ConfigError(f"unknown operator kind {kind!r}")


def as_operator(spec, axis, depth):
    if spec is None:
        z = Zero(depth)
        z.axis = axis
        return z
    if hasattr(spec, "complexity"):
        return make_shift(spec)
    return make_paraproduct(spec)


def complexity_of(spec):
    if spec is not None and hasattr(spec, "complexity"):
        return tuple(int(x) for x in spec.complexity)
    return (None, None)


def operator_label(spec):
    if spec is None:
        return "zero"
    if hasattr(spec, "complexity"):
        return "shift{}{}".format(*spec.complexity)
    return f"pi_{spec.form}"


def blank_row(cfg, trial_id):
    row = {c: None for c in CSV_COLUMNS}
    row.update(trial_id=trial_id, L=cfg.depth, p=cfg.p, seed=cfg.seed)
    return row


# -- identity suite -----------------------------------------------------------------


def _identity_trial(cfg: ExperimentConfig, t: int):
    rng = trial_rng(cfg.seed, t)
    L = cfg.depth
    b = random_b(cfg.b, L, rng)
    f = rng.standard_normal((2**L, 2**L))
    if cfg.b.get("kind") == "checkerboard":
        f = b.copy()
    rows = []

    def add(case, residual, tol, extra=None):
        row = blank_row(cfg, t)
        row.update(value=float(residual), value_kind="residual", case=case, tolerance=float(tol),
                   ok=bool(residual <= tol))
        if extra:
            row.update(extra)
        rows.append(row)

    for mode in ("bi", "param1", "param2"):
        d = decompose_product(b, f, mode, check=False)
        add(f"product_{mode}", d.residual, d.tolerance)
    cap = min(int(cfg.experiment.get("max_complexity", 2)), L - 1)
    for case in CASES:
        if case == "shift_shift":
            k = rng.integers(0, cap + 1, size=4)
            U1 = random_shift(L, 1, int(k[0]), int(k[1]), seed=rng)
            U2 = random_shift(L, 2, int(k[2]), int(k[3]), seed=rng)
        elif case == "mixed_shift_pi":
            k = rng.integers(0, cap + 1, size=2)
            U1 = random_shift(L, 1, int(k[0]), int(k[1]), seed=rng)
            U2 = random_paraproduct(L, 2, "direct", rng)
        else:
            U1 = random_paraproduct(L, 1, "dual" if case == "pi_pi_dual" else "direct", rng)
            U2 = random_paraproduct(L, 2, "direct", rng)
        rep = verify_decomposition(case, b, U1, U2, f, check=False)
        k1, k2 = complexity_of(U1)
        v1, v2 = complexity_of(U2)
        detail = max((float(np.max(np.abs(v))) for k_, v in rep.details.items()
                      if k_.endswith("_diff") or k_.endswith("_minus_E_term") or k_.endswith("_split")
                      or k_ == "III_W"), default=0.0)
        add(case, rep.residual_sup, rep.tolerance,
            {"k1": k1, "k2": k2, "v1": v1, "v2": v2, "detail_residual": detail,
             "ok": bool(rep.ok and detail <= rep.tolerance)})
    return rows


def identity_suite(cfg: ExperimentConfig) -> dict:
    """Product decompositions and all four commutator decompositions on random inputs."""
    per = map_trials(lambda t: _identity_trial(cfg, t), range(cfg.trials), cfg.experiment["reproducible"])
    rows = [r for rs in per for r in rs]
    failures = [{"trial_id": r["trial_id"], "case": r["case"], "seed": r["seed"], "residual": r["value"]}
                for r in rows if not r["ok"]]
    worst = {}
    for r in rows:
        worst[r["case"]] = max(worst.get(r["case"], 0.0), r["value"])
    return {"kind": "identities", "rows": rows, "passed": not failures, "failures": failures,
            "max_residual": worst}


# -- Bloom ratio --------------------------------------------------------------------


def operator_norm(T, mu, lam, p, seed, budget=200):
    if p == 2.0:
        return operator_norm_p2(T, mu, lam, seed=seed)
    return operator_norm_lower(T, mu, lam, p, budget=budget, seed=seed)


SCALE_PROBE = 3.7


def _bloom_trial(cfg: ExperimentConfig, t: int):
    rng = trial_rng(cfg.seed, t)
    L, p = cfg.depth, cfg.p
    mu, lam, resamples = draw_weights(cfg, rng)
    mc = int(cfg.experiment.get("max_complexity", 2))
    s1 = draw_operator(cfg.operators["U1"], 1, L, rng, mc)
    s2 = draw_operator(cfg.operators["U2"], 2, L, rng, mc)
    b = random_b(cfg.b, L, rng)
    nu = bloom_weight(mu, lam, p)
    row = blank_row(cfg, t)
    k1, k2 = complexity_of(s1)
    v1, v2 = complexity_of(s2)
    prod = bmo_prod(b, nu, cfg.experiment["mode"])
    row.update(mu_ap=ap_characteristic(mu, p), lambda_ap=ap_characteristic(lam, p),
               nu_a2=ap_characteristic(nu, 2.0), b_bmoprod=prod.norm_value,
               b_bmolittle=bmo_little(b, nu).norm_value, k1=k1, k2=k2, v1=v1, v2=v2,
               U1=operator_label(s1), U2=operator_label(s2), resamples=resamples)
    if prod.norm_value == 0.0:
        row.update(excluded=True, reason="b has zero product BMO norm")
        return row
    U1, U2 = as_operator(s1, 1, L), as_operator(s2, 2, L)
    seed_pi = int(rng.integers(2**31))
    T = nested_commutator(U1, b, U2)
    est = operator_norm(T, mu, lam, p, seed_pi, cfg.experiment.get("lower_budget", 200))
    ratio = est.value / prod.norm_value
    # exact invariances: b -> c b and f -> c f
    Tc = nested_commutator(U1, SCALE_PROBE * b, U2)
    est_c = operator_norm(Tc, mu, lam, p, seed_pi, cfg.experiment.get("lower_budget", 200))
    prod_c = bmo_prod(SCALE_PROBE * b, nu, cfg.experiment["mode"]).norm_value
    ratio_c = est_c.value / prod_c
    f = rng.standard_normal((2**L, 2**L))
    q1 = lp_norm(T.apply(f), lam, p) / lp_norm(f, mu, p)
    q2 = lp_norm(T.apply(SCALE_PROBE * f), lam, p) / lp_norm(SCALE_PROBE * f, mu, p)
    row.update(value=est.value, value_kind=est.kind, ratio=ratio, excluded=False,
               b_scaling_error=abs(ratio_c - ratio) / max(ratio, 1e-300),
               f_scaling_error=abs(q2 - q1) / max(q1, 1e-300),
               finite=bool(np.isfinite(ratio)))
    return row


def _ap_bin(x):
    for hi in (2.0, 4.0, 8.0, 16.0):
        if x <= hi:
            return f"<= {hi:g}"
    return "> 16"


def sup_ratio_tables(rows):
    by_ops, by_ap = {}, {}
    for r in rows:
        if r.get("excluded"):
            continue
        for table, key in ((by_ops, f"{r['U1']} / {r['U2']}"),
                           (by_ap, f"mu {_ap_bin(r['mu_ap'])}, lambda {_ap_bin(r['lambda_ap'])}")):
            e = table.setdefault(key, {"n": 0, "sup_ratio": 0.0, "sum": 0.0})
            e["n"] += 1
            e["sup_ratio"] = max(e["sup_ratio"], r["ratio"])
            e["sum"] += r["ratio"]
    for table in (by_ops, by_ap):
        for e in table.values():
            e["mean_ratio"] = e.pop("sum") / e["n"]
    return {"by_operators": dict(sorted(by_ops.items())), "by_ap": dict(sorted(by_ap.items()))}


def bloom_ratio(cfg: ExperimentConfig) -> dict:
    """Operator norm of ``[U1, [b, U2]]`` from ``L^p(mu)`` to ``L^p(lam)`` over ``||b||_{BMO_prod(nu)}``."""
    rows = map_trials(lambda t: _bloom_trial(cfg, t), range(cfg.trials), cfg.experiment["reproducible"])
    kept = [r for r in rows if not r["excluded"]]
    excluded = [{"trial_id": r["trial_id"], "reason": r["reason"]} for r in rows if r["excluded"]]
    return {
        "kind": "bloom",
        "value_kind": "certified_norm" if cfg.p == 2.0 else "lower_estimate",
        "rows": rows,
        "excluded": excluded,
        "n_excluded": len(excluded),
        "sup_ratio": max((r["ratio"] for r in kept), default=None),
        "mean_ratio": float(np.mean([r["ratio"] for r in kept])) if kept else None,
        "all_finite": all(r["finite"] for r in kept),
        "max_b_scaling_error": max((r["b_scaling_error"] for r in kept), default=0.0),
        "max_f_scaling_error": max((r["f_scaling_error"] for r in kept), default=0.0),
        "tables": sup_ratio_tables(rows),
        "generation_law": "shifts: maximal coefficients with random signs; "
                          "paraproducts: Gaussian coefficients scaled to sequence BMO norm 1",
    }


# -- extremizer search --------------------------------------------------------------


class _RatioModel:
    """``b -> ||[U1,[b,U2]]||_{L^2(mu)->L^2(lam)} / ||b||_{BMO_prod(nu)}`` on the doubly-cancellative spectrum."""

    def __init__(self, U1, U2, mu, lam, nu, mode, seed):
        self.depth = U1.depth
        n = 2**self.depth
        self.U1, self.U2, self.mu, self.lam, self.nu = U1, U2, mu, lam, nu
        self.mode = mode
        self.seed = seed
        self.basis = None
        if self.depth <= 3:
            # the commutator is linear in b: precompute one weighted matrix per coefficient
            F = frames(self.depth)
            mats = []
            for r in range(n - 1):
                for c in range(n - 1):
                    hb = np.outer(F.haar[r], F.haar[c])
                    mats.append(weighted_matrix(nested_commutator(U1, hb, U2), mu, lam))
            self.basis = np.array(mats)

    def b_of(self, X):
        n = 2**self.depth
        c = np.zeros((n, n))
        c[1:, 1:] = X
        return synthesize(c)

    def norm(self, X):
        if self.basis is not None:
            A = np.tensordot(X.ravel(), self.basis, axes=1)
            rho, *_ = power_iteration(A.T @ A, seed=self.seed)
            return max(rho, 0.0) ** 0.5
        return operator_norm_p2(nested_commutator(self.U1, self.b_of(X), self.U2),
                                self.mu, self.lam, seed=self.seed).value

    def __call__(self, X):
        den = bmo_prod(self.b_of(X), self.nu, self.mode).norm_value
        if den == 0.0:
            return 0.0
        return self.norm(X) / den


def _ascent(model, X, budget, rng):
    """Normalized coordinate ascent; returns ``(X, ratio, trace, evaluations)``."""
    r = model(X)
    trace = [r]
    evals = 1
    step = 0.5
    m = X.size
    while evals < budget and step > 1e-4:
        improved = False
        for idx in rng.permutation(m):
            if evals >= budget:
                break
            scale = np.linalg.norm(X)
            for sgn in (1.0, -1.0):
                Y = X.copy()
                Y.flat[idx] += sgn * step * scale
                ry = model(Y)
                evals += 1
                if ry > r:
                    X, r = Y / np.linalg.norm(Y), ry
                    improved = True
                    break
            trace.append(r)
        if not improved:
            step *= 0.5
    return X, r, trace, evals


def extremize_b(cfg: ExperimentConfig) -> dict:
    """Search for ``b`` maximizing the certified Bloom ratio at ``p = 2``."""
    if cfg.p != 2.0:
        raise ConfigError("extremize needs p = 2")
    rng = trial_rng(cfg.seed, 0)
    L = cfg.depth
    mu, lam, _ = draw_weights(cfg, rng)
    mc = int(cfg.experiment.get("max_complexity", 2))
    s1 = draw_operator(cfg.operators["U1"], 1, L, rng, mc)
    s2 = draw_operator(cfg.operators["U2"], 2, L, rng, mc)
    nu = bloom_weight(mu, lam, cfg.p)
    model = _RatioModel(as_operator(s1, 1, L), as_operator(s2, 2, L), mu, lam, nu,
                        cfg.experiment["mode"], seed=int(rng.integers(2**31)))
    n = 2**L
    restarts = int(cfg.experiment.get("restarts", 3))
    budget = int(cfg.experiment.get("budget", 60))
    best = (0.0, None)
    trace, starts = [], []
    for s in range(restarts):
        srng = trial_rng(cfg.seed, 0, stream=s + 1)
        if s % 2 == 0:
            X = srng.standard_normal((n - 1, n - 1))
            start_kind = "gaussian"
        else:
            X = np.zeros((n - 1, n - 1))
            X.flat[int(srng.integers(X.size))] = 1.0
            start_kind = "single"
        X /= np.linalg.norm(X)
        r0 = model(X)
        if r0 == 0.0:
            starts.append({"restart": s, "kind": start_kind, "ratio": 0.0, "final": 0.0})
            continue
        X, r, tr, _ = _ascent(model, X, budget, srng)
        starts.append({"restart": s, "kind": start_kind, "ratio": r0, "final": r})
        top = trace[-1] if trace else 0.0
        trace.extend(np.maximum.accumulate(np.maximum(tr, top)).tolist())
        if r > best[0]:
            best = (r, X)
    b_best = model.b_of(best[1]) if best[1] is not None else np.zeros((n, n))
    cert = bmo_prod(b_best, nu, cfg.experiment["mode"])
    rows = []
    for i, v in enumerate(trace):
        row = blank_row(cfg, i)
        row.update(k1=complexity_of(s1)[0], k2=complexity_of(s1)[1], v1=complexity_of(s2)[0],
                   v2=complexity_of(s2)[1], value=v, value_kind="ratio")
        rows.append(row)
    return {
        "kind": "extremize", "best_ratio": best[0], "best_b": b_best.tolist(), "trace": trace,
        "starts": starts, "rows": rows, "U1": operator_label(s1), "U2": operator_label(s2),
        "bmo_witness": {"value": cert.norm_value, "mode": cert.mode, "cells": [list(c) for c in cert.witness]}
        if cert.mode != "rect" else {"value": cert.norm_value, "mode": cert.mode, "rect": repr(cert.witness)},
        "monotone": all(a <= b_ for a, b_ in zip(trace, trace[1:])),
    }


def single_coefficient_scan(cfg: ExperimentConfig, model: _RatioModel | None = None) -> dict:
    """Ratio for every ``b = h_I (x) h_J``; same weights and operators as ``extremize_b``."""
    rng = trial_rng(cfg.seed, 0)
    L = cfg.depth
    mu, lam, _ = draw_weights(cfg, rng)
    mc = int(cfg.experiment.get("max_complexity", 2))
    s1 = draw_operator(cfg.operators["U1"], 1, L, rng, mc)
    s2 = draw_operator(cfg.operators["U2"], 2, L, rng, mc)
    nu = bloom_weight(mu, lam, cfg.p)
    if model is None:
        model = _RatioModel(as_operator(s1, 1, L), as_operator(s2, 2, L), mu, lam, nu,
                            cfg.experiment["mode"], seed=int(rng.integers(2**31)))
    n = 2**L
    vals = np.zeros((n - 1, n - 1))
    for idx in range(vals.size):
        X = np.zeros((n - 1, n - 1))
        X.flat[idx] = 1.0
        vals.flat[idx] = model(X)
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    return {"kind": "single_scan", "ratios": vals.tolist(), "max_ratio": float(vals.max()),
            "argmax": [int(i) + 1, int(j) + 1]}


# -- lemma suite --------------------------------------------------------------------


def _doubly_cancellative(f):
    c = haar_coefficients(f)
    c[0, :] = 0.0
    c[:, 0] = 0.0
    return synthesize(c)


def _lemma_trial(cfg: ExperimentConfig, t: int):
    rng = trial_rng(cfg.seed, t)
    L, p = cfg.depth, cfg.p
    mu, lam, _ = draw_weights(cfg, rng)
    w = mu
    f = rng.standard_normal((2**L, 2**L))
    rows = []

    def add(name, value, **extra):
        row = blank_row(cfg, t)
        row.update(mu_ap=ap_characteristic(w, p), value=float(value), value_kind="ratio", quantity=name)
        row.update(extra)
        rows.append(row)

    nf = lp_norm(f, w, p)
    for kind in ("S", "S1", "S2", "S1M", "S2M"):
        add(f"{kind}f/f", lp_norm(square_function(kind, f), w, p) / nf)
    fd = _doubly_cancellative(f)
    add("f/Sf (doubly cancellative)", lp_norm(fd, w, p) / lp_norm(square_function("S", fd), w, p))
    # exact case: unweighted, p = 2, doubly cancellative
    exact = lp_norm(square_function("S", fd), None, 2.0) / lp_norm(fd, None, 2.0)
    add("Sf/f unweighted p=2 (exact)", exact, exact_error=abs(exact - 1.0))
    fs = rng.standard_normal((3, 2**L, 2**L))
    for M in ("M", "M1"):
        lhs = lp_norm(np.sqrt(np.sum(maximal(M, fs) ** 2, axis=0)), w, p)
        rhs = lp_norm(np.sqrt(np.sum(fs**2, axis=0)), w, p)
        add(f"Fefferman-Stein {M}", lhs / rhs, at_least_one=bool(lhs / rhs >= 1.0))
    b = random_b(cfg.b, L, rng)
    nu = bloom_weight(mu, lam, p)
    prod = bmo_prod(b, nu, cfg.experiment["mode"]).norm_value
    if prod > 0:
        for i in range(1, 5):
            T = paraproduct_operator(f"A{i}", b)
            est = operator_norm(T, mu, lam, p, int(rng.integers(2**31)))
            add(f"A{i}", est.value / prod, norm=est.value, norm_kind=est.kind, b_bmoprod=prod)
    return rows


def lemma_suite(cfg: ExperimentConfig) -> dict:
    """Ratio studies for square functions, Fefferman-Stein and the bounded paraproducts."""
    per = map_trials(lambda t: _lemma_trial(cfg, t), range(cfg.trials), cfg.experiment["reproducible"])
    rows = [r for rs in per for r in rs]
    exact_errors = [r["exact_error"] for r in rows if "exact_error" in r]
    fs_ok = all(r["at_least_one"] for r in rows if "at_least_one" in r)
    summary = {}
    for r in rows:
        e = summary.setdefault(r["quantity"], {"min": np.inf, "max": 0.0})
        e["min"] = min(e["min"], r["value"])
        e["max"] = max(e["max"], r["value"])
    max_err = max(exact_errors, default=0.0)
    return {"kind": "lemmas", "rows": rows, "summary": summary, "max_exact_error": max_err,
            "passed": bool(max_err <= 1e-12 and fs_ok)}


# -- duality ------------------------------------------------------------------------


def _duality_trial(cfg: ExperimentConfig, t: int):
    rng = trial_rng(cfg.seed, t)
    L, p = cfg.depth, cfg.p
    mu, lam, _ = draw_weights(cfg, rng)
    nu = bloom_weight(mu, lam, p)
    b = random_b(cfg.b, L, rng)
    n = 2**L
    c = rng.standard_normal((n - 1, n - 1))
    d = duality_ratio(b, c, nu, mu, lam, p, cfg.experiment["mode"])
    row = blank_row(cfg, t)
    row.update(mu_ap=ap_characteristic(mu, p), lambda_ap=ap_characteristic(lam, p),
               nu_a2=ap_characteristic(nu, 2.0), b_bmoprod=d.bmo.norm_value,
               b_bmolittle=bmo_little(b, nu).norm_value, value=d.ratio, value_kind="ratio",
               lhs=d.lhs, rhs=d.rhs, degenerate=d.degenerate)
    return row


def duality_study(cfg: ExperimentConfig) -> dict:
    rows = map_trials(lambda t: _duality_trial(cfg, t), range(cfg.trials), cfg.experiment["reproducible"])
    vals = [r["value"] for r in rows if not r["degenerate"]]
    return {"kind": "duality", "rows": rows, "sup_ratio": max(vals, default=None),
            "n_degenerate": sum(r["degenerate"] for r in rows)}


# -- lower bound --------------------------------------------------------------------


def _lower_trial(cfg: ExperimentConfig, t: int):
    from .lower_bound import KernelSpec, check_lower_bound
    rng = trial_rng(cfg.seed, t)
    L, p, k = cfg.depth, cfg.p, cfg.experiment["k"]
    mu, lam, _ = draw_weights(cfg, rng)
    b = random_b(cfg.b, L, rng)
    rep = check_lower_bound(KernelSpec(), b, mu, lam, k, p,
                            n_random=int(cfg.experiment.get("random_subsets", 0)),
                            seed=int(rng.integers(2**31)))
    nu = bloom_weight(mu, lam, p)
    row = blank_row(cfg, t)
    row.update(mu_ap=rep.checks["mu_ap"], lambda_ap=rep.checks["lambda_ap"],
               nu_a2=ap_characteristic(nu, 2.0), b_bmolittle=rep.bmo_value,
               value=rep.gamma, value_kind="gamma", ratio=rep.ratio, k=k,
               degenerate=rep.degenerate,
               witness=rep.witness.to_dict() if rep.witness else None, checks=rep.checks)
    return row


def lower_bound_study(cfg: ExperimentConfig) -> dict:
    if cfg.depth < 2:
        raise ConfigError("the lower bound needs depth >= 2")
    rows = map_trials(lambda t: _lower_trial(cfg, t), range(cfg.trials), cfg.experiment["reproducible"])
    ratios = [r["ratio"] for r in rows if not r["degenerate"]]
    return {"kind": "lower-bound", "rows": rows,
            "max_ratio": max(ratios, default=None), "min_ratio": min(ratios, default=None),
            "n_degenerate": sum(r["degenerate"] for r in rows),
            "all_finite": all(np.isfinite(x) for x in ratios)}


# -- calibration norms ----------------------------------------------------------------


def _norm_trial(cfg: ExperimentConfig, t: int):
    rng = trial_rng(cfg.seed, t)
    L = cfg.depth
    n = 2**L
    mu, lam, _ = draw_weights(cfg, rng)
    m = rng.standard_normal((n, n))
    Ks = active_intervals(L)
    K = Ks[int(rng.integers(len(Ks)))]
    I1 = K.descendants(min(1, L - 1 - K.level))[0]
    I2 = K.descendants(min(1, L - 1 - K.level))[-1]
    a = float(rng.uniform(0.1, 1.0)) * (I1.length * I2.length) ** 0.5 / K.length
    shift = make_shift(single_coefficient_shift(L, 1, K, I1, I2, a))
    cases = [
        ("identity", Identity(L), None, None, 1.0),
        ("multiplication", Multiplication(m), None, None, float(np.abs(m).max())),
        ("single_shift", shift, None, None, abs(a)),
        ("weighted_shift", shift, mu, lam, None),
    ]
    rows = []
    for name, T, wm, wl, expected in cases:
        est = operator_norm_p2(T, wm, wl, seed=int(rng.integers(2**31)))
        row = blank_row(cfg, t)
        row.update(value=est.value, value_kind=est.kind, operator=name, expected=expected,
                   residual=est.residual)
        if n * n <= 1024:
            svd = operator_norm_svd(T, wm, wl)
            row.update(oracle=svd, relative_error=abs(est.value - svd) / max(svd, 1e-300))
        if expected is not None:
            row["expected_error"] = abs(est.value - expected)
        rows.append(row)
    return rows


def norms_study(cfg: ExperimentConfig) -> dict:
    per = map_trials(lambda t: _norm_trial(cfg, t), range(cfg.trials), cfg.experiment["reproducible"])
    rows = [r for rs in per for r in rs]
    return {"kind": "norms", "rows": rows,
            "max_expected_error": max((r["expected_error"] for r in rows if "expected_error" in r), default=0.0),
            "max_oracle_error": max((r["relative_error"] for r in rows if "relative_error" in r), default=0.0)}


STUDIES = {
    "identities": identity_suite,
    "bloom": bloom_ratio,
    "extremize": extremize_b,
    "lemmas": lemma_suite,
    "duality": duality_study,
    "lower-bound": lower_bound_study,
    "norms": norms_study,
}

"""Experiment driver: configuration, subcommands, structured outputs and the run ledger.

Every run writes ``<out>/<experiment id>/`` holding ``config.json``,
``metrics.json``, CSV profiles and binary fields, and appends one line to
``<out>/runs.jsonl``. Metrics exclude timings, so identical configurations
give byte-identical ``metrics.json``.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import scipy
import yaml
from filelock import FileLock

from . import __version__
from .constraints import ConstraintSystem, constraint_rewrite, random_j_sequence, worst_case_sequence
from .environment import SigmaDistribution, moments, named_distribution
from .feshbach import feshbach_verify
from .fieldio import KernelCache, canonical_hash, write_field
from .kernels import (ConvolutionKernel, extract_kernel, fit_decay_exponent, riesz_symbol, sio_kernel)
from .lattice import ScalarField, TorusGrid, mixed_derivative
from .montecarlo import cross_route_comparison, mc_averaged_green, truncation_allowance
from .paths import decomposition_audit, partition_audit
from .probes import bound_probe_sweep
from .series import (SeriesTruncation, assemble_averaged_symbol, averaged_green, n3_offdiagonal_field,
                     series_term_exact, series_term_torus)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ResultRecord",
    "KINDS",
    "load_config",
    "run_experiment",
    "build_parser",
    "main",
    "main_exit",
]


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


KINDS = ("kernel-decay", "series-term", "feshbach-verify", "mc-green", "partition-audit",
         "constraint-rewrite", "bound-probe")

# per-kind defaults; tolerances default to the acceptance values
_DEFAULTS: dict[str, dict] = {
    "kernel-decay": {"d": 2, "N": 512, "params": {"symbol": "sio", "i": 0, "k": 0, "s": -1.0, "power": 3.0},
                     "tolerances": {"slope": 0.2}},
    "series-term": {"d": 2, "N": 512, "delta": 0.1, "window": [2.0, 32.0],
                    "params": {"kernels": [[0, 0], [0, 0], [0, 0]], "deltas": [0.05, 0.1, 0.2],
                               "n4_offsets": [], "n4_R_path": 3},
                    "tolerances": {"slope": 0.3, "delta_scaling": 1e-6}},
    "feshbach-verify": {"d": 2, "N": 2, "n_max": 4,
                        "params": {"deltas": [0.1, 0.2, 0.4], "mus": [0.1, 0.5, 1.0]},
                        "tolerances": {"discrepancy": 1e-10}},
    "mc-green": {"d": 3, "N": 64, "delta": 0.1, "mu": 0.0, "n_samples": 1000, "n_max": 3,
                 "params": {"control_variate": True, "symmetric": False, "cross_route": False,
                            "radius": None, "k_sigma": 3.0, "alphas": None},
                 "tolerances": {"slope_order0": 0.2, "slope_order1": 0.25, "slope_order2": 0.35,
                                "slope_order3": 0.4, "slope_order4": 0.4, "deterministic": 1e-8}},
    "partition-audit": {"d": 2, "box": 3, "n_values": [3, 4, 5],
                        "params": {"decomposition_n": [3, 4]}, "tolerances": {}},
    "constraint-rewrite": {"box": 3, "d": 2, "n_values": [5, 6, 7, 8, 9, 10],
                           "params": {"sequences_per_n": 5, "n_paths": 10000, "size_n": [64, 256, 1024],
                                      "exact_n_max": 200},
                           "tolerances": {"size_constant": 6.0, "size_offset": 12.0}},
    "bound-probe": {"d": 2, "N": 256, "n_values": [1, 2, 3, 4],
                    "params": {"eps_values": [0.25, 0.5, 1.0], "random_weights": True},
                    "tolerances": {"growth": 0.05}},
}


@dataclass
class ExperimentConfig:
    """Validated parameters of one experiment.

    Kind-specific settings live in ``params``; acceptance tolerances in
    ``tolerances``. Both are merged over the per-kind defaults.
    """

    kind: str
    d: int = 2
    N: int = 64
    delta: float = 0.1
    mu: float = 0.0
    eps: float = 0.5
    distribution: Any = "rademacher"
    seed: int = 0
    n_samples: int = 100
    n_max: int = 3
    box: int = 3
    n_values: list = field(default_factory=list)
    window: list | None = None
    workers: int = 1
    out: str = "runs"
    cache: str | None = None
    params: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> "ExperimentConfig":
        data = dict(data)
        data.update({k: v for k, v in overrides.items() if v is not None})
        kind = data.get("kind")
        if kind not in KINDS:
            raise ConfigError("kind", f"must be one of {', '.join(KINDS)}; got {kind!r}")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(unknown[0], "unknown field")
        merged = {k: v for k, v in _DEFAULTS[kind].items() if k not in ("params", "tolerances")}
        merged.update({k: v for k, v in data.items() if k not in ("params", "tolerances")})
        params = dict(_DEFAULTS[kind].get("params", {}))
        params.update(data.get("params") or {})
        tols = dict(_DEFAULTS[kind].get("tolerances", {}))
        tols.update(data.get("tolerances") or {})
        cfg = cls(**merged, params=params, tolerances=tols)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    def hash(self) -> str:
        """Hash of the scientific content (output and cache locations excluded)."""
        data = self.to_dict()
        for k in ("out", "cache", "workers"):
            data.pop(k)
        return canonical_hash(data)

    @property
    def grid(self) -> TorusGrid:
        return TorusGrid(self.d, self.N)

    def law(self) -> SigmaDistribution:
        if isinstance(self.distribution, str):
            return named_distribution(self.distribution)
        return SigmaDistribution.from_config(self.distribution)

    def validate(self) -> None:
        """Reject parameters that violate module preconditions, naming the field."""
        def need(cond, name, msg):
            if not cond:
                raise ConfigError(name, msg)

        need(isinstance(self.d, int) and 1 <= self.d <= 4, "d", "must be an integer in 1..4")
        need(isinstance(self.N, int) and self.N >= 2, "N", "must be an integer >= 2")
        need(isinstance(self.delta, (int, float)) and abs(self.delta) < 1, "delta", "must satisfy |delta| < 1")
        need(isinstance(self.mu, (int, float)) and self.mu >= 0, "mu", "must be >= 0")
        need(isinstance(self.eps, (int, float)) and self.eps > 0, "eps", "must be > 0")
        need(isinstance(self.seed, int) and self.seed >= 0, "seed", "must be a nonnegative integer")
        need(isinstance(self.workers, int) and self.workers >= 1, "workers", "must be >= 1")
        need(isinstance(self.n_samples, int) and self.n_samples >= 2, "n_samples", "must be >= 2")
        need(isinstance(self.n_max, int) and self.n_max >= 1, "n_max", "must be >= 1")
        need(isinstance(self.box, int) and self.box >= 2, "box", "must be an integer >= 2")
        try:
            law = self.law()
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError("distribution", str(exc)) from None
        need(float(np.max(np.abs(law.values))) <= 1.0, "distribution", "values must satisfy |sigma| <= 1")
        if self.window is not None:
            need(len(self.window) == 2 and 1 <= self.window[0] < self.window[1] <= self.N / 4,
                 "window", f"must satisfy 1 <= r_min < r_max <= N/4 = {self.N / 4}")
        k = self.kind
        p = self.params
        if k == "kernel-decay":
            need(p["symbol"] in ("sio", "riesz", "synthetic"), "params.symbol", "must be sio, riesz or synthetic")
            if p["symbol"] == "sio":
                need(0 <= p["i"] < self.d and 0 <= p["k"] < self.d, "params.i", "axis out of range (0-based)")
            if p["symbol"] == "riesz":
                need(p["s"] > -self.d / 2, "params.s", "must exceed -d/2")
            need(self.N >= 32, "N", "must be >= 32 for a decay fit")
        elif k == "series-term":
            ks = p["kernels"]
            need(len(ks) == 3 and all(len(a) == 2 and 0 <= a[0] < self.d and 0 <= a[1] < self.d for a in ks),
                 "params.kernels", "need three [i, k] pairs of 0-based axes")
            need(self.N >= 32, "N", "must be >= 32 for a decay fit")
            need(all(0 < abs(x) < 1 for x in p["deltas"]), "params.deltas", "need 0 < |delta| < 1")
        elif k == "feshbach-verify":
            need(all(abs(x) < 1 for x in p["deltas"]), "params.deltas", "need |delta| < 1")
            need(all(x >= 0 for x in p["mus"]), "params.mus", "need mu >= 0")
            need(len(law.values) ** (self.N ** self.d) <= 2**16, "N", "probability space too large")
        elif k == "mc-green":
            need(self.mu > 0 or self.d >= 3 or p.get("alphas") is not None, "mu",
                 "mu = 0 with d < 3 needs explicit alphas with |alpha| > 2 - d")
            for a in self._alphas():
                need(len(a) == self.d and all(int(c) >= 0 for c in a), "params.alphas", f"bad multi-index {a}")
                need(self.mu > 0 or sum(a) > 2 - self.d, "params.alphas", f"|alpha| must exceed 2 - d for {a}")
        elif k == "partition-audit":
            need(all(3 <= n <= 7 for n in self.n_values), "n_values", "need 3 <= n <= 7")
            need(all(2 <= n <= 5 for n in p["decomposition_n"]), "params.decomposition_n", "need 2 <= n <= 5")
            need(self.box ** (self.d * (max(self.n_values + [2]) - 1)) <= 10**6, "box", "enumeration too large")
        elif k == "constraint-rewrite":
            need(all(5 <= n <= 30 for n in self.n_values), "n_values", "need 5 <= n <= 30")
            need(all(n >= 6 for n in p["size_n"]), "params.size_n", "need n >= 6")
        elif k == "bound-probe":
            need(all(1 <= n <= 8 for n in self.n_values), "n_values", "need 1 <= n <= 8")
            need(all(e > 0 for e in p["eps_values"]), "params.eps_values", "need eps > 0")

    def _alphas(self) -> list:
        a = self.params.get("alphas")
        if a is not None:
            return [list(x) for x in a]
        d = self.d
        e = lambda *idx: [sum(1 for i in idx if i == j) for j in range(d)]  # noqa: E731
        out = [e(), e(0)] + ([e(0, 1)] if d >= 2 else []) + [e(0, 0)]
        return out


@dataclass
class ResultRecord:
    """One experiment run; ``metrics`` is deterministic, ``timings`` is not."""

    experiment_id: str
    kind: str
    config_hash: str
    config: dict
    metrics: dict
    passed: bool
    artifacts: list = field(default_factory=list)
    wall_time: float = 0.0
    timings: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


def load_config(path: str | Path) -> dict:
    """Read a YAML or JSON configuration file into a plain dict."""
    text = Path(path).read_text()
    if Path(path).suffix == ".json":
        return json.loads(text)
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ConfigError("<file>", "top level must be a mapping")
    return data


def _versions() -> dict:
    return {"avgreen": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_csv(path: Path, header: list, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def _fit_json(fit) -> dict:
    return {"slope": fit.slope, "intercept": fit.intercept, "residual": fit.residual,
            "window": list(fit.window), "n_bins": fit.n_bins, "offset": fit.offset}


# ---------------------------------------------------------------- commands


class _Ctx:
    def __init__(self, cfg: ExperimentConfig, out_dir: Path):
        self.cfg = cfg
        self.dir = out_dir
        self.artifacts: list[str] = []
        self.timings: dict = {}
        self.cache = KernelCache(cfg.cache) if cfg.cache else None

    def add(self, path: Path) -> None:
        self.artifacts.append(path.name)

    def csv(self, name: str, header, rows) -> None:
        self.add(_write_csv(self.dir / name, header, rows))

    def field(self, name: str, f: ScalarField) -> None:
        self.add(write_field(f, self.dir / name))


def cmd_kernel_decay(ctx: _Ctx) -> tuple[dict, bool]:
    cfg, p = ctx.cfg, ctx.cfg.params
    grid = cfg.grid
    if p["symbol"] == "sio":
        K = sio_kernel(grid, p["i"], p["k"], cfg.mu, ctx.cache)
        expected = -float(grid.d)
    elif p["symbol"] == "riesz":
        sym = riesz_symbol(grid, p["s"])
        if not sym.zero_mode_defined:
            sym = sym.with_zero_mode(0.0)
        K = extract_kernel(sym)
        expected = -float(grid.d + p["s"])
    else:
        K = ConvolutionKernel(grid, (1.0 + grid.radius()) ** (-float(p["power"])), {"symbol": "synthetic"})
        expected = -float(p["power"])
    fit = fit_decay_exponent(K, cfg.window, use_bracket=p["symbol"] == "synthetic",
                             free_offset=p["symbol"] == "riesz" and p["s"] < 0)
    tol = float(cfg.tolerances["slope"])
    ctx.csv("profile.csv", ["radius", "max_abs"], zip(fit.radii, fit.maxima))
    ctx.field("kernel.bin", K.as_field())
    metrics = {"fit": _fit_json(fit), "expected_slope": expected, "tolerance": tol,
               "slope_error": abs(fit.slope - expected)}
    return metrics, abs(fit.slope - expected) <= tol


def cmd_series_term(ctx: _Ctx) -> tuple[dict, bool]:
    cfg, p = ctx.cfg, ctx.cfg.params
    grid, law = cfg.grid, cfg.law()
    Ks = [sio_kernel(grid, i, k, cfg.mu, ctx.cache) for i, k in p["kernels"]]
    F = n3_offdiagonal_field(Ks, law)
    F[(0,) * grid.d] = 0.0
    window = cfg.window or [2.0, 32.0]
    fit = fit_decay_exponent(F, window)
    expected = -3.0 * grid.d
    tol = float(cfg.tolerances["slope"])
    mom = moments(law, 5)
    # closed form against the exact torus route off the diagonal
    T3 = series_term_torus(Ks, mom)
    sel = grid.radius() > 0
    closed_vs_torus = float(np.max(np.abs(T3 - F)[sel]))
    vanish = {}
    for n in (1, 2):
        Tn = series_term_torus(Ks[:n], mom)
        vanish[f"n{n}_offdiagonal_max"] = float(np.max(np.abs(Tn[sel])))
    # the n = 3 contribution carries the prefactor delta (-delta)^3
    ref = tuple([int(window[0])] + [0] * (grid.d - 1))
    base = float(F[ref])
    deltas = np.array(p["deltas"], dtype=float)
    vals = np.abs(deltas * (-deltas) ** 3 * base)
    dslope = float(np.polyfit(np.log(deltas), np.log(vals), 1)[0]) if base != 0 else float("nan")
    n4 = []
    for off in p["n4_offsets"]:
        term = series_term_exact(4, [Ks[0]] * 4, [0] * grid.d, off, law, R_path=p["n4_R_path"])
        n4.append(term.to_json())
    ctx.csv("profile.csv", ["radius", "max_abs"], zip(fit.radii, fit.maxima))
    ctx.field("n3_offdiagonal.bin", ScalarField(grid, F))
    metrics = {"fit": _fit_json(fit), "expected_slope": expected, "tolerance": tol,
               "closed_form_vs_torus": closed_vs_torus, **vanish,
               "delta_scaling_slope": dslope, "n4_terms": n4}
    ok = (abs(fit.slope - expected) <= tol and vanish["n1_offdiagonal_max"] == 0.0
          and vanish["n2_offdiagonal_max"] == 0.0 and abs(dslope - 4) <= cfg.tolerances["delta_scaling"])
    return metrics, ok


def cmd_feshbach_verify(ctx: _Ctx) -> tuple[dict, bool]:
    cfg, p = ctx.cfg, ctx.cfg.params
    law = cfg.law()
    cases = []
    for delta in p["deltas"]:
        for mu in p["mus"]:
            rep = feshbach_verify(cfg.grid, law, float(delta), float(mu), n_max=cfg.n_max)
            ctx.timings[f"delta={delta},mu={mu}"] = rep.wall_time
            js = rep.to_json()
            js.pop("wall_time")
            cases.append(js)
    tol = float(cfg.tolerances["discrepancy"])
    worst = max(max(c["discrepancy"], c["block_discrepancy"]) for c in cases)
    ctx.csv("cases.csv", ["delta", "mu", "discrepancy", "block_discrepancy"],
            [(c["delta"], c["mu"], c["discrepancy"], c["block_discrepancy"]) for c in cases])
    return {"cases": cases, "max_discrepancy": worst, "tolerance": tol}, worst <= tol


def cmd_mc_green(ctx: _Ctx) -> tuple[dict, bool]:
    cfg, p = ctx.cfg, ctx.cfg.params
    grid, law = cfg.grid, cfg.law()
    t0 = time.perf_counter()
    mc = mc_averaged_green(grid, law, cfg.delta, cfg.mu, cfg.n_samples, seeds=cfg.seed, workers=cfg.workers,
                           control_variate=p["control_variate"], symmetric=p["symmetric"])
    ctx.timings["monte_carlo"] = time.perf_counter() - t0
    ctx.field("mean.bin", mc.mean.as_field())
    ctx.field("stderr.bin", mc.stderr)
    metrics: dict = {"n_samples": mc.n_samples, "max_iterations": int(max(mc.iterations)),
                     "max_stderr": float(mc.stderr.values.max()), "fits": []}
    ok = True
    window = cfg.window
    for alpha in cfg._alphas():
        order = sum(alpha)
        Ka = mixed_derivative(mc.mean.as_field(), alpha)
        fit = fit_decay_exponent(Ka, window, center=np.array(alpha) / 2.0, free_offset=(order == 0 and cfg.mu == 0))
        expected = -float(grid.d - 2 + order)
        tol = float(cfg.tolerances.get(f"slope_order{order}", 0.4))
        good = abs(fit.slope - expected) <= tol if cfg.mu == 0 else True
        ok &= good
        metrics["fits"].append({"alpha": list(alpha), **_fit_json(fit), "expected_slope": expected,
                                "tolerance": tol, "pass": bool(good)})
        name = "profile_" + "".join(str(a) for a in alpha) + ".csv"
        ctx.csv(name, ["radius", "max_abs"], zip(fit.radii, fit.maxima))
    if cfg.delta == 0:
        ref = averaged_green(assemble_averaged_symbol(SeriesTruncation(1, 0.0), law, cfg.mu, grid))
        diff = float(np.max(np.abs(mc.mean.values - ref.values)))
        metrics["deterministic_diff"] = diff
        ok &= diff <= cfg.tolerances["deterministic"]
    if p["cross_route"]:
        t0 = time.perf_counter()
        sym = assemble_averaged_symbol(SeriesTruncation(cfg.n_max, cfg.delta), law, cfg.mu, grid, ctx.cache)
        greens = [averaged_green(sym.truncated(k)).values for k in range(cfg.n_max + 1)]
        radius = p["radius"] if p["radius"] is not None else grid.N / 4
        sel = grid.radius() <= radius
        allowance = truncation_allowance(greens, sel)
        rep = cross_route_comparison(mc, greens[-1], radius, allowance, p["k_sigma"])
        ctx.timings["series_route"] = time.perf_counter() - t0
        metrics["cross_route"] = rep.to_json()
        metrics["lower_bound_ratio"] = sym.lower_bound_ratio
        ok &= rep.passed
    return metrics, bool(ok)


def cmd_partition_audit(ctx: _Ctx) -> tuple[dict, bool]:
    cfg, p = ctx.cfg, ctx.cfg.params
    reports = []
    for n in cfg.n_values:
        rep = partition_audit(n, cfg.box, cfg.d)
        ctx.timings[f"partition_n{n}"] = rep.wall_time
        reports.append({"audit": "partition", **{k: v for k, v in rep.to_json().items() if k != "wall_time"}})
    for n in p["decomposition_n"]:
        rep = decomposition_audit(n, cfg.box, cfg.d)
        ctx.timings[f"decomposition_n{n}"] = rep.wall_time
        reports.append({"audit": "decomposition", **{k: v for k, v in rep.to_json().items() if k != "wall_time"}})
    ok = all(a["pass"] for r in reports for a in r["audits"])
    return {"reports": reports}, ok


def _planted_paths(n: int, rng: np.random.Generator, count: int) -> np.ndarray:
    """Paths on distinct sites of ``Z`` with one or two planted coincidences."""
    sites = np.tile(np.arange(n + 1), (count, 1))
    for row in sites:
        for _ in range(int(rng.integers(1, 3))):
            u, v = rng.choice(np.arange(1, n), size=2, replace=False)
            row[v] = row[u]
    return sites[:, :, None]


def cmd_constraint_rewrite(ctx: _Ctx) -> tuple[dict, bool]:
    from .paths import PathBatch, box_points

    cfg, p = ctx.cfg, ctx.cfg.params
    rng = np.random.default_rng(cfg.seed)
    pts = box_points(cfg.box, cfg.d)
    equiv = []
    for n in cfg.n_values:
        for _ in range(p["sequences_per_n"]):
            js = random_j_sequence(n, rng)
            a = ConstraintSystem.from_j_sequence(js, n)
            b = constraint_rewrite(js, n)
            idx = rng.integers(0, len(pts), (p["n_paths"], n - 1))
            sites = np.empty((p["n_paths"], n + 1, cfg.d), dtype=np.int64)
            sites[:, 0] = pts[0]
            sites[:, -1] = pts[-1]
            sites[:, 1:-1] = pts[idx]
            batch = PathBatch(sites)
            planted = PathBatch(_planted_paths(n, rng, p["n_paths"]))
            ma = a.mask(batch)
            mismatch = int((ma != b.mask(batch)).sum()) + int((a.mask(planted) != b.mask(planted)).sum())
            equiv.append({"n": n, "j_sequence": js, "mismatches": mismatch, "member_fraction": float(ma.mean()),
                          "forbidden_pairs_equal": a.equivalent(b), "input_size": a.size, "output_size": b.size})
    exact = 0
    for n in range(5, p["exact_n_max"] + 1):
        js = random_j_sequence(n, rng)
        exact += not ConstraintSystem.from_j_sequence(js, n).equivalent(constraint_rewrite(js, n))
    sizes = []
    c, off = cfg.tolerances["size_constant"], cfg.tolerances["size_offset"]
    for n in p["size_n"]:
        js = worst_case_sequence(n)
        a = ConstraintSystem.from_j_sequence(js, n)
        b = constraint_rewrite(js, n)
        sizes.append({"n": n, "input_size": a.size, "output_size": b.size,
                      "bound": c * n * np.log2(n) + off, "empirical_constant": b.size / (n * np.log2(n)),
                      "equivalent": a.equivalent(b)})
    ctx.csv("sizes.csv", ["n", "input_size", "output_size", "bound"],
            [(s["n"], s["input_size"], s["output_size"], s["bound"]) for s in sizes])
    ok = (all(e["mismatches"] == 0 and e["forbidden_pairs_equal"] for e in equiv) and exact == 0
          and all(s["output_size"] <= s["bound"] and s["equivalent"] for s in sizes))
    return {"equivalence": equiv, "exact_mismatches": exact, "sizes": sizes,
            "size_bound": f"{c} n log2 n + {off}"}, ok


def cmd_bound_probe(ctx: _Ctx) -> tuple[dict, bool]:
    cfg, p = ctx.cfg, ctx.cfg.params
    seed = cfg.seed if p["random_weights"] else None
    probes = bound_probe_sweep(cfg.grid, cfg.n_values, p["eps_values"], seed, cfg.mu, ctx.cache, cfg.window)
    tol = float(cfg.tolerances["growth"])
    rows = [pr.to_json() | {"stable": pr.stable(tol)} for pr in probes]
    ctx.csv("constants.csv", ["n", "eps", "constant", "inner", "outer", "growth"],
            [(r["n"], r["eps"], r["constant"], r["inner"], r["outer"], r["growth"]) for r in rows])
    return {"probes": rows}, all(r["stable"] for r in rows)


_COMMANDS: dict[str, Callable[[_Ctx], tuple[dict, bool]]] = {
    "kernel-decay": cmd_kernel_decay,
    "series-term": cmd_series_term,
    "feshbach-verify": cmd_feshbach_verify,
    "mc-green": cmd_mc_green,
    "partition-audit": cmd_partition_audit,
    "constraint-rewrite": cmd_constraint_rewrite,
    "bound-probe": cmd_bound_probe,
}


def _new_run_dir(out: Path, kind: str, chash: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    k = 0
    while True:
        d = out / f"{kind}-{chash[:10]}-{k:03d}"
        try:
            d.mkdir()
            return d
        except FileExistsError:
            k += 1


def run_experiment(cfg: ExperimentConfig) -> ResultRecord:
    """Run one experiment, write its directory and append to the ledger."""
    cfg.validate()
    chash = cfg.hash()
    out = Path(cfg.out)
    run_dir = _new_run_dir(out, cfg.kind, chash)
    (run_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    ctx = _Ctx(cfg, run_dir)
    t0 = time.perf_counter()
    metrics, passed = _COMMANDS[cfg.kind](ctx)
    wall = time.perf_counter() - t0
    metrics = _jsonable(metrics)
    (run_dir / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True))
    rec = ResultRecord(run_dir.name, cfg.kind, chash, cfg.to_dict(), metrics, bool(passed),
                       ["config.json", "metrics.json"] + ctx.artifacts, wall, _jsonable(ctx.timings), _versions())
    with FileLock(str(out / "runs.jsonl.lock")):
        with open(out / "runs.jsonl", "a") as fh:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
    return rec


# ---------------------------------------------------------------- command line


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="avgreen", description="Averaged Green's function experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON configuration file")
    common.add_argument("--out", help="output directory (default: runs)")
    common.add_argument("--workers", type=int, help="worker processes")
    common.add_argument("--seed", type=int, help="base random seed")
    common.add_argument("--cache", help="kernel cache directory")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry; VALUE is parsed as YAML, KEY may be params.x")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sub.add_parser(kind, parents=[common], help=f"run the {kind} experiment")
    return parser


def _apply_set(data: dict, items: list[str]) -> None:
    for item in items:
        if "=" not in item:
            raise ConfigError(item, "expected KEY=VALUE")
        key, raw = item.split("=", 1)
        value = yaml.safe_load(raw)
        target = data
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value


def main(argv: list[str] | None = None) -> int:
    """Entry point; returns 0 on pass, 2 on a failed check, 1 on error."""
    args = build_parser().parse_args(argv)
    try:
        data = load_config(args.config) if args.config else {}
        if data.get("kind", args.kind) != args.kind:
            raise ConfigError("kind", f"config is for {data['kind']!r}, command is {args.kind!r}")
        data["kind"] = args.kind
        _apply_set(data, args.set)
        cfg = ExperimentConfig.from_dict(data, out=args.out, workers=args.workers, seed=args.seed, cache=args.cache)
        rec = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # reported, not raised: the exit code carries the outcome
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    status = "PASS" if rec.passed else "FAIL"
    print(f"{status} {rec.kind} {Path(cfg.out) / rec.experiment_id}")
    return 0 if rec.passed else 2


def main_exit() -> None:
    """Console-script wrapper around :func:`main`."""
    sys.exit(main())

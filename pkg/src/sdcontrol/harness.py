"""Configuration ingestion, CLI subcommands, and CSV emission."""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import sys
from dataclasses import dataclass, field, asdict

import numpy as np

from . import discrete_calc as dc
from . import hum as hum_mod
from . import inequalities as ineq
from . import noise_tree as nt
from .backward_solver import duality_residual, solve_backward
from .errors import (ConfigurationError, ConvergenceError, SingularSystemError)
from .forward_solver import Coefficients, ControlPair, OmegaRegion, solve_forward
from .mesh import build_mesh, dual_of, integrate, is_regular
from .weights import (WeightParams, build_weights, delta_schedule, schedule_h1,
                      theta_bound_margins)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _default_coefficients() -> dict:
    return {
        "a1": {"kind": "constant", "magnitude": 0.5},
        "a2": {"kind": "constant", "magnitude": 0.5},
    }


def _default_weights() -> dict:
    return {"lam": 2.0, "mu": 1.2, "delta0": 0.25, "x0": 0.5, "K": 2.0,
            "eps0": 1.0, "c_eps": 1.0}


def _default_hum() -> dict:
    return {"cg_tol": 1e-10, "cg_maxiter": 500, "epsilon": None}


def _default_y0() -> dict:
    return {"kind": "sine", "coeffs": [1.0, 0.0, 0.5]}


def _default_observability() -> dict:
    return {"train": 200, "holdout": 200, "safety": 2.0}


def _default_carleman() -> dict:
    return {"samples": 100, "depth": 6, "modes": 3}


def _default_sweep() -> dict:
    # deep-penalty rows need far more Krylov iterations than a single solve
    return {"h_values": [1 / 8, 1 / 12, 1 / 16, 1 / 20],
            "obs_train": 64, "obs_holdout": 64, "cg_maxiter": 10000}


@dataclass
class ExperimentConfig:
    """One experiment description; every field has a runnable default."""

    N: int = 8
    depth: int = 8
    T: float = 1.0
    seed: int = 1234
    output: str = "results.csv"
    omega: list = field(default_factory=lambda: [0.3, 0.7])
    omega0: list = field(default_factory=lambda: [0.4, 0.6])
    coefficients: dict = field(default_factory=_default_coefficients)
    weights: dict = field(default_factory=_default_weights)
    hum: dict = field(default_factory=_default_hum)
    y0: dict = field(default_factory=_default_y0)
    observability: dict = field(default_factory=_default_observability)
    carleman: dict = field(default_factory=_default_carleman)
    sweep: dict = field(default_factory=_default_sweep)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        cfg = cls()
        unknown = set(data) - set(cfg.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        for key, value in data.items():
            current = getattr(cfg, key)
            if isinstance(current, dict) and isinstance(value, dict):
                bad = set(value) - set(current)
                if bad:
                    raise ConfigurationError(f"unknown keys in config section {key!r}: {sorted(bad)}")
                merged = copy.deepcopy(current)
                merged.update(value)
                setattr(cfg, key, merged)
            else:
                setattr(cfg, key, copy.deepcopy(value))
        return cfg

    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))

    def validate(self) -> list[str]:
        """Collect violated constraints (empty when the config is runnable)."""
        problems = []
        if self.N < 2:
            problems.append(f"N must be >= 2, got {self.N}")
        if not 1 <= self.depth <= nt.DEFAULT_DEPTH_CAP:
            problems.append(f"depth must be in 1..{nt.DEFAULT_DEPTH_CAP}, got {self.depth}")
        if self.T <= 0:
            problems.append(f"T must be positive, got {self.T}")
        if len(self.omega) != 2 or len(self.omega0) != 2:
            problems.append(f"omega and omega0 must be two-element intervals, "
                            f"got {self.omega}, {self.omega0}")
        else:
            a, b = self.omega
            a0, b0 = self.omega0
            if not (0 <= a < a0 < b0 < b <= 1):
                problems.append(f"need 0 <= omega[0] < omega0 < omega[1] <= 1, "
                                f"got {self.omega}, {self.omega0}")
        w = self.weights
        if w["lam"] <= 1:
            problems.append(f"weights.lam must exceed 1, got {w['lam']}")
        if w["mu"] <= 1:
            problems.append(f"weights.mu must exceed 1, got {w['mu']}")
        if not 0 < w["delta0"] < 0.5:
            problems.append(f"weights.delta0 must lie in (0, 1/2), got {w['delta0']}")
        if not 0 < w["eps0"] <= 1:
            problems.append(f"weights.eps0 must lie in (0, 1], got {w['eps0']}")
        if w["c_eps"] <= 0:
            problems.append(f"weights.c_eps must be positive, got {w['c_eps']}")
        if self.hum["cg_tol"] <= 0 or self.hum["cg_maxiter"] < 1:
            problems.append("hum.cg_tol must be positive and hum.cg_maxiter >= 1")
        for name in ("a1", "a2"):
            kind = self.coefficients[name].get("kind")
            if kind not in ("zero", "constant", "sinusoid", "adapted_random"):
                problems.append(f"coefficients.{name}.kind must be one of "
                                f"zero|constant|sinusoid|adapted_random, got {kind!r}")
        if self.y0.get("kind") not in ("sine", "random"):
            problems.append(f"y0.kind must be sine or random, got {self.y0.get('kind')!r}")
        if self.observability["train"] < 1 or self.observability["holdout"] < 1:
            problems.append("observability.train and .holdout must be >= 1")
        if self.carleman["samples"] < 1:
            problems.append("carleman.samples must be >= 1")
        for h in self.sweep["h_values"]:
            if h <= 0:
                problems.append(f"sweep.h_values entries must be positive, got {h}")
        return problems

    @property
    def h(self) -> float:
        return 1.0 / (self.N + 1)


def load_config(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigurationError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def _coeff_function(spec: dict):
    kind = spec["kind"]
    mag = float(spec.get("magnitude", 0.0))
    if kind == "zero":
        return lambda x, t: np.zeros_like(x)
    if kind == "constant":
        return lambda x, t: np.full_like(x, mag)
    if kind == "sinusoid":
        freq = float(spec.get("frequency", 1.0))
        phase = float(spec.get("phase", 0.0))
        return lambda x, t: mag * np.sin(freq * np.pi * x + phase)
    raise ConfigurationError(f"no deterministic builder for coefficient kind {kind!r}")


def build_coefficients(cfg: ExperimentConfig, tree, mesh, rng) -> Coefficients:
    spec1, spec2 = cfg.coefficients["a1"], cfg.coefficients["a2"]
    if spec1["kind"] == "adapted_random" or spec2["kind"] == "adapted_random":
        mag1 = float(spec1.get("magnitude", 0.0))
        mag2 = float(spec2.get("magnitude", 0.0))
        if spec1["kind"] == "adapted_random" and spec2["kind"] == "adapted_random":
            return Coefficients.adapted_random(tree, mesh, rng, mag1, mag2)
        random_coeffs = Coefficients.adapted_random(tree, mesh, rng, mag1, mag2)
        det = Coefficients.from_functions(tree, mesh, _coeff_function(spec1)
                                          if spec1["kind"] != "adapted_random"
                                          else (lambda x, t: np.zeros_like(x)),
                                          _coeff_function(spec2)
                                          if spec2["kind"] != "adapted_random"
                                          else (lambda x, t: np.zeros_like(x)))
        a1 = random_coeffs.a1_levels if spec1["kind"] == "adapted_random" else det.a1_levels
        a2 = random_coeffs.a2_levels if spec2["kind"] == "adapted_random" else det.a2_levels
        return Coefficients(tree, mesh, a1, a2)
    return Coefficients.from_functions(tree, mesh, _coeff_function(spec1), _coeff_function(spec2))


def build_y0(cfg: ExperimentConfig, mesh, rng=None) -> np.ndarray:
    kind = cfg.y0["kind"]
    if kind == "sine":
        coeffs = cfg.y0.get("coeffs", [1.0])
        x = mesh.interior
        out = np.zeros(mesh.N)
        for j, c in enumerate(coeffs, start=1):
            out += float(c) * np.sin(j * np.pi * x)
        return out
    if kind == "random":
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        return rng.standard_normal(mesh.N)
    raise ConfigurationError(f"unknown y0 kind {kind!r}")


def scheduled_weights(cfg: ExperimentConfig, h: float | None = None) -> WeightParams:
    """Weight parameters with the margin tied to the mesh size."""
    w = cfg.weights
    h = cfg.h if h is None else h
    h1 = schedule_h1(w["lam"], w["eps0"], w["delta0"], cfg.T)
    try:
        delta = delta_schedule(h, h1, w["delta0"])
    except ValueError as exc:
        raise ConfigurationError(
            f"mesh too coarse for the margin schedule: {exc} "
            f"(raise N, lower weights.lam, or raise weights.delta0)"
        ) from exc
    return WeightParams(T=cfg.T, lam=w["lam"], mu=w["mu"], delta=delta,
                        x0=w["x0"], K=w["K"], eps0=w["eps0"],
                        omega0=tuple(cfg.omega0), omega=tuple(cfg.omega))


def resolve_epsilon(cfg: ExperimentConfig) -> float:
    direct = cfg.hum.get("epsilon")
    if direct is not None:
        return float(direct)
    return hum_mod.epsilon_from_mesh(cfg.weights["c_eps"], cfg.h)


# ---------------------------------------------------------------------------
# identity suite (shared by the CLI and the test suite)
# ---------------------------------------------------------------------------

def _scale(*arrays) -> float:
    return max(1.0, *(float(np.abs(a).max()) for a in arrays if np.asarray(a).size))


def run_identity_checks(seed: int = 1234) -> list[tuple[str, bool, str]]:
    """Full property suite: mesh algebra, operators, tree, duality, weights."""
    results = []
    root = np.random.SeedSequence(seed)
    rngs = [np.random.default_rng(s) for s in root.spawn(4)]

    # mesh regularity and dual cardinalities
    ok, detail = True, []
    for N in (2, 3, 8, 16, 64):
        mesh = build_mesh(N)
        dual = dual_of(mesh)
        if not is_regular(mesh.interior_idx):
            ok, detail = False, [f"N={N} not regular"]
        if len(dual.star_idx) != N + 1 or len(dual.prime_idx) != N - 1:
            ok = False
            detail.append(f"N={N} dual sizes {len(dual.star_idx)}, {len(dual.prime_idx)}")
    results.append(("mesh regularity + dual cardinalities", ok, "; ".join(detail) or "N in {2,3,8,16,64}"))

    # integrate linearity
    worst = 0.0
    for N in (3, 8, 16):
        mesh = build_mesh(N)
        u = rngs[0].standard_normal(N)
        v = rngs[0].standard_normal(N)
        lhs = integrate(mesh, 2.5 * u - 1.25 * v)
        rhs = 2.5 * integrate(mesh, u) - 1.25 * integrate(mesh, v)
        worst = max(worst, abs(lhs - rhs) / _scale(u, v))
    results.append(("integration linearity", worst <= 1e-14, f"max rel residual {worst:.2e}"))

    # product and summation-by-parts identities
    worst_leib, worst_ibp = 0.0, 0.0
    for N in (3, 8, 16, 64):
        mesh = build_mesh(N)
        for _ in range(25):
            u = dc.GridFunction(mesh, rngs[1].standard_normal(N + 2))
            v = dc.GridFunction(mesh, rngs[1].standard_normal(N + 2))
            s = _scale(u.values, v.values) ** 2 / mesh.h
            worst_leib = max(worst_leib, max(dc.leibniz_residuals(u, v)) / s)
            vd = dc.DualGridFunction(mesh, rngs[1].standard_normal(N + 1))
            s2 = _scale(u.values) * _scale(vd.values) / mesh.h
            worst_ibp = max(worst_ibp, max(dc.ibp_residuals(u, vd)) / s2)
    results.append(("product identities", worst_leib <= 1e-12, f"max scaled residual {worst_leib:.2e}"))
    results.append(("summation by parts", worst_ibp <= 1e-12, f"max scaled residual {worst_ibp:.2e}"))

    # consistency orders
    orders = dc.consistency_orders()
    ok = all(abs(o - 2.0) <= 0.15 for o in orders.values())
    results.append(("operator consistency order 2.00 +- 0.15", ok,
                    ", ".join(f"{k}: {v:.3f}" for k, v in orders.items())))

    # tree exactness
    worst = 0.0
    for depth in range(1, 11):
        tree = nt.build_tree(depth, 1.0)
        for k in range(depth + 1):
            worst = max(worst, abs(tree.num_nodes(k) * tree.node_probability(k) - 1.0))
        for k in range(1, depth + 1):
            signs = tree.edge_signs(k)
            worst = max(worst, abs(signs.mean()) * tree.increment)
            worst = max(worst, np.abs((signs * tree.increment) ** 2 - tree.dt).max())
        vals = rngs[2].standard_normal(tree.num_nodes(depth))
        mean, _ = nt.martingale_coeff(vals[1::2], vals[0::2], tree.dt)
        worst = max(worst, abs(mean.mean() - vals.mean()) / _scale(vals))
    results.append(("tree exactness (depths 1-10)", worst <= 1e-14, f"max residual {worst:.2e}"))

    # duality
    worst = 0.0
    for _ in range(10):
        N, depth = 6, 4
        mesh = build_mesh(N)
        tree = nt.build_tree(depth, 1.0)
        coeffs = Coefficients.adapted_random(tree, mesh, rngs[3], 0.8, 0.8)
        region = OmegaRegion(mesh, (0.3, 0.7))
        controls = ControlPair(
            u=nt.AdaptedField(tree, mesh, [region.indicator * a for a in
                                           nt.AdaptedField.random(tree, mesh, rngs[3], depth).levels]),
            v=nt.AdaptedField.random(tree, mesh, rngs[3], depth),
            region=region,
        )
        y0 = rngs[3].standard_normal(N)
        zT = rngs[3].standard_normal((tree.num_nodes(depth), N))
        fwd = solve_forward(y0, controls, coeffs, tree, mesh)
        bwd = solve_backward(zT, coeffs, tree, mesh)
        res, scale = duality_residual(fwd, bwd, controls, tree, mesh)
        worst = max(worst, res / scale)
    results.append(("pairing identity (10 random instances)", worst <= 1e-10,
                    f"max rel residual {worst:.2e}"))

    # weights (inverse pair sampled where both factors are representable)
    params = WeightParams(T=1.0, lam=2.0, mu=1.2, delta=0.25, x0=0.5)
    weights = build_weights(params)
    x = np.linspace(0, 1, 33)
    t = np.linspace(0.25, 0.75, 17)
    inv = max(float(np.abs(weights.r(tj, x) * weights.rho(tj, x) - 1.0).max()) for tj in t)
    margins = theta_bound_margins(weights)
    ok = inv <= 1e-14 and margins["symmetry"] <= 1e-14 and all(
        margins[k] >= -1e-12 for k in ("floor", "mid_ceiling", "endpoint_floor"))
    results.append(("weight inverse pair + time-factor bounds", ok,
                    f"inverse residual {inv:.2e}, margins {margins}"))

    return results


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

CSV_HEADER = ["h", "delta", "lambda", "mu", "N", "depth", "eps", "obs_C",
              "term_ratio", "cost_ratio", "cg_iters", "closure_err", "skipped", "reason"]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return ""
    return repr(value)


def emit_csv(rows: list[ineq.SweepRow], path: str) -> None:
    """Write sweep rows with full-precision decimals, UTF-8, LF endings."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow([
                _fmt(row.h), _fmt(row.delta), _fmt(row.lam), _fmt(row.mu),
                _fmt(row.N), _fmt(row.depth), _fmt(row.eps), _fmt(row.obs_C),
                _fmt(row.term_ratio), _fmt(row.cost_ratio), _fmt(row.cg_iters),
                _fmt(row.closure_err), _fmt(row.skipped), row.reason,
            ])


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_identities(cfg: ExperimentConfig, args) -> int:
    results = run_identity_checks(cfg.seed)
    passed = sum(1 for _, ok, _ in results if ok)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  [{detail}]")
    print(f"{passed}/{len(results)} checks passed")
    return EXIT_OK if passed == len(results) else EXIT_NUMERICAL


def _hum_problem(cfg: ExperimentConfig):
    mesh = build_mesh(cfg.N)
    tree = nt.build_tree(cfg.depth, cfg.T)
    region = OmegaRegion(mesh, tuple(cfg.omega))
    seq = np.random.SeedSequence(cfg.seed)
    rng_coeff, rng_y0 = [np.random.default_rng(s) for s in seq.spawn(2)]
    coeffs = build_coefficients(cfg, tree, mesh, rng_coeff)
    y0 = build_y0(cfg, mesh, rng_y0)
    return hum_mod.HumProblem(
        y0=y0, coeffs=coeffs, region=region, tree=tree, mesh=mesh,
        epsilon=resolve_epsilon(cfg),
        cg_tol=cfg.hum["cg_tol"], cg_maxiter=cfg.hum["cg_maxiter"],
    )


def _cmd_hum(cfg: ExperimentConfig, args) -> int:
    problem = _hum_problem(cfg)
    sol = hum_mod.solve_hum(problem)
    report = hum_mod.report_bounds(sol, problem)
    payload = {
        "N": cfg.N, "depth": cfg.depth, "epsilon": problem.epsilon,
        "cg_iterations": sol.cg_iterations,
        "cg_final_residual": sol.cg_residuals[-1] if sol.cg_residuals else 0.0,
        "closure_error": sol.closure_error,
        "closure_bound": sol.closure_bound,
        "functional_value": sol.functional_value,
        "control_cost": report.control_cost,
        "cost_ratio": report.cost_ratio,
        "terminal_ratio": report.terminal_ratio,
        "terminal_to_penalty_ratio": report.terminal_to_penalty_ratio,
    }
    for key, value in payload.items():
        print(f"{key}: {value}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return EXIT_OK


def _cmd_observability(cfg: ExperimentConfig, args) -> int:
    mesh = build_mesh(cfg.N)
    tree = nt.build_tree(cfg.depth, cfg.T)
    region = OmegaRegion(mesh, tuple(cfg.omega))
    weights = build_weights(scheduled_weights(cfg))
    seq = np.random.SeedSequence(cfg.seed)
    rng_coeff, rng_samples = [np.random.default_rng(s) for s in seq.spawn(2)]
    coeffs = build_coefficients(cfg, tree, mesh, rng_coeff)
    obs = cfg.observability
    payload = {}
    for label, h_scaling in (("plain", False), ("h_scaled", True)):
        rng = np.random.default_rng(seq.spawn(1)[0]) if h_scaling else rng_samples
        fit = ineq.observability_sample(
            coeffs, weights, tree, mesh, region, rng,
            obs["train"], obs["holdout"], cfg.weights["c_eps"],
            safety=obs["safety"], terminal_h_scaling=h_scaling)
        payload[label] = {
            "fitted_C": fit.fitted_C, "bound_C": fit.bound_C,
            "holdout_violations": fit.holdout_violations,
            "holdout_max_ratio": fit.holdout_max_ratio,
            "excluded": fit.excluded, "samples": fit.samples,
        }
    for label, stats in payload.items():
        for key, value in stats.items():
            print(f"{label}.{key}: {value}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    return EXIT_OK if all(p["holdout_violations"] == 0 for p in payload.values()) else EXIT_NUMERICAL


def _cmd_carleman(cfg: ExperimentConfig, args) -> int:
    car = cfg.carleman
    seq = np.random.SeedSequence(cfg.seed)
    payload = {}
    maxima = []
    for label, N in (("base", cfg.N), ("refined", 2 * cfg.N + 1)):
        mesh = build_mesh(N)
        tree = nt.build_tree(car["depth"], cfg.T)
        region = OmegaRegion(mesh, tuple(cfg.omega))
        weights = build_weights(scheduled_weights(cfg, h=mesh.h))
        rng = np.random.default_rng(seq.spawn(1)[0])
        ratios = ineq.carleman_ratio_study(weights, tree, mesh, region, rng,
                                           car["samples"], modes=car["modes"])
        maxima.append(float(ratios.max()))
        payload[label] = {"N": N, "max_ratio": maxima[-1],
                          "median_ratio": float(np.median(ratios)),
                          "finite": bool(np.isfinite(ratios).all())}
    payload["stability_factor"] = max(maxima) / min(maxima)
    for key, value in payload.items():
        print(f"{key}: {value}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    ok = all(p["finite"] for p in (payload["base"], payload["refined"]))
    return EXIT_OK if ok and payload["stability_factor"] <= 5.0 else EXIT_NUMERICAL


def sweep_settings_from_config(cfg: ExperimentConfig) -> ineq.SweepSettings:
    w = cfg.weights
    return ineq.SweepSettings(
        h_values=list(cfg.sweep["h_values"]),
        depth=cfg.depth, T=cfg.T, lam=w["lam"], mu=w["mu"], delta0=w["delta0"],
        eps0=w["eps0"], x0=w["x0"], K=w["K"],
        omega=tuple(cfg.omega), omega0=tuple(cfg.omega0), c_eps=w["c_eps"],
        coeff_factory=lambda tree, mesh, rng: build_coefficients(cfg, tree, mesh, rng),
        y0_factory=lambda mesh: build_y0(cfg, mesh),
        seed=cfg.seed, cg_tol=cfg.hum["cg_tol"],
        cg_maxiter=cfg.sweep.get("cg_maxiter", cfg.hum["cg_maxiter"]),
        obs_train=cfg.sweep["obs_train"], obs_holdout=cfg.sweep["obs_holdout"],
        obs_safety=cfg.observability["safety"],
    )


def _cmd_sweep(cfg: ExperimentConfig, args) -> int:
    rows = ineq.h_sweep(sweep_settings_from_config(cfg))
    out = args.out or cfg.output
    emit_csv(rows, out)
    for row in rows:
        status = f"skipped ({row.reason})" if row.skipped else (
            f"eps={row.eps:.3e} term_ratio={row.term_ratio:.3e} cost_ratio={row.cost_ratio:.3e}")
        print(f"h={row.h:.6g} N={row.N}: {status}")
    print(f"wrote {out}")
    return EXIT_OK


_COMMANDS = {
    "identities": _cmd_identities,
    "hum": _cmd_hum,
    "observability": _cmd_observability,
    "carleman": _cmd_carleman,
    "sweep": _cmd_sweep,
}


def cli(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sdcontrol",
        description="Verification harness for tree-based stochastic parabolic control.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker count (results are thread-count independent)")
    args = parser.parse_args(argv)

    try:
        if args.threads < 1:
            raise ConfigurationError(f"--threads must be >= 1, got {args.threads}")
        cfg = load_config(args.config)
        problems = cfg.validate()
        if problems:
            for p in problems:
                print(f"config error: {p}", file=sys.stderr)
            return EXIT_CONFIG
        if args.seed is not None:
            cfg.seed = args.seed
        return _COMMANDS[args.command](cfg, args)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularSystemError, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        if isinstance(exc, ConvergenceError) and exc.residuals:
            print(f"residual history tail: {exc.residuals[-5:]}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(cli())


if __name__ == "__main__":
    main()

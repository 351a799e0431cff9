"""Experiment drivers: solves, sweeps, ratio/stability tests, Hodge runs.

Every driver takes a :class:`RunConfig` and returns an
:class:`ExperimentReport`.  Reports serialize deterministically: given the
same config and seed (serial mode), ``report.json`` is byte-identical across
reruns, so wall-clock times are kept out of it and written to a separate
``timings.json``.

The sweep driver trains one network per loss target, warm-starting each
tighter target from the previous solution, measures true errors against the
preset's manufactured solution in the certified norms, and calibrates the
error-vs-loss power law.  For Navier-Stokes sweeps the penalty floor (the
value of the H1 penalty term at the exact solution, which cannot vanish) is
subtracted from the achieved loss before it is reported as epsilon^2, and
both raw and adjusted values are recorded.
"""

from __future__ import annotations

import concurrent.futures
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import jax
import jax.numpy as jnp
import numpy as np

from . import __version__, certify, dnn, elliptic, hodge, norms, nse, optimize, presets
from .geometry import GaussLegendre, SpaceTimeSampler, UniformBoundary


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


EXPERIMENTS = ("solve-elliptic", "solve-nse", "sweep", "existence-ratio",
               "stability", "hodge", "certify")


def _get(d: dict, key: str, default):
    v = d.get(key, default)
    return default if v is None else v


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; see README for the schema and defaults."""

    experiment: str
    seed: int = 0
    output: str | None = None
    threads: int = 1
    # problem
    preset: str = "poisson-square"
    variant: str = "l2"                 # elliptic boundary term: "l2" | "h12"
    horizon: float = 0.25
    # network
    hidden: tuple[int, ...] = (32, 32)
    activation: str = "tanh"
    bound: float = 10.0
    # loss
    alpha: float = 1.0
    beta: float = 1.0
    mu: float = 1.0
    h2_cap: float | None = None         # default 2 * M from the preset
    lam: float = 1e-2
    interior_order: int = 12
    boundary_order: int = 16
    boundary_samples: int = 128
    spatial_order: int = 8
    time_order: int = 6
    error_order: int = 24               # quadrature for true-error measurement
    # optimizer
    method: str = "adam"
    learning_rate: float = 2e-3
    schedule: str = "cosine"
    max_iterations: int = 20000
    restarts: int = 1
    resample_every: int = 0
    # experiment specifics
    target: float | None = None
    targets: tuple[float, ...] = ()
    deltas: tuple[float, ...] = (0.0, 1e-2, 1e-1)
    hodge_grid: int = 64
    hodge_time_order: int = 4
    hodge_source: str = "exact"         # "exact" | "perturbation"
    report_path: str | None = None      # for the certify experiment
    check: dict = field(default_factory=dict)

    @staticmethod
    def from_dict(raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        experiment = raw.get("experiment")
        if experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
        problem = raw.get("problem", {})
        network = raw.get("network", {})
        loss = raw.get("loss", {})
        opt = raw.get("optimizer", {})
        try:
            cfg = RunConfig(
                experiment=experiment,
                seed=int(_get(raw, "seed", 0)),
                output=raw.get("output"),
                threads=int(_get(raw, "threads", 1)),
                preset=str(_get(problem, "preset", "poisson-square")),
                variant=str(_get(problem, "variant", "l2")),
                horizon=float(_get(problem, "horizon", 0.25)),
                hidden=tuple(int(w) for w in _get(network, "hidden", (32, 32))),
                activation=str(_get(network, "activation", "tanh")),
                bound=float(_get(network, "bound", 10.0)),
                alpha=float(_get(loss, "alpha", 1.0)),
                beta=float(_get(loss, "beta", 1.0)),
                mu=float(_get(loss, "mu", 1.0)),
                h2_cap=None if loss.get("h2_cap") is None else float(loss["h2_cap"]),
                lam=float(_get(loss, "lambda", 1e-2)),
                interior_order=int(_get(loss, "interior_order", 12)),
                boundary_order=int(_get(loss, "boundary_order", 16)),
                boundary_samples=int(_get(loss, "boundary_samples", 128)),
                spatial_order=int(_get(loss, "spatial_order", 8)),
                time_order=int(_get(loss, "time_order", 6)),
                error_order=int(_get(loss, "error_order", 24)),
                method=str(_get(opt, "method", "adam")),
                learning_rate=float(_get(opt, "learning_rate", 2e-3)),
                schedule=str(_get(opt, "schedule", "cosine")),
                max_iterations=int(_get(opt, "max_iterations", 20000)),
                restarts=int(_get(opt, "restarts", 1)),
                resample_every=int(_get(opt, "resample_every", 0)),
                target=None if raw.get("target") is None else float(raw["target"]),
                targets=tuple(float(t) for t in _get(raw, "targets", ())),
                deltas=tuple(float(d) for d in _get(raw, "deltas", (0.0, 1e-2, 1e-1))),
                hodge_grid=int(_get(raw.get("hodge", {}), "grid", 64)),
                hodge_time_order=int(_get(raw.get("hodge", {}), "time_order", 4)),
                hodge_source=str(_get(raw.get("hodge", {}), "source", "exact")),
                report_path=raw.get("report"),
                check=dict(_get(raw, "check", {})),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad config value: {exc}") from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.variant not in ("l2", "h12"):
            raise ConfigError(f"variant must be 'l2' or 'h12', got {self.variant!r}")
        if self.experiment in ("sweep", "existence-ratio") and not self.targets:
            raise ConfigError(f"experiment {self.experiment!r} needs a 'targets' list")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        is_nse = self.preset in presets.NSE_PRESETS
        if self.experiment == "solve-nse" and not is_nse:
            raise ConfigError(f"solve-nse needs an NSE preset, got {self.preset!r}")
        if self.experiment in ("solve-elliptic", "existence-ratio") and is_nse:
            raise ConfigError(f"{self.experiment} needs an elliptic preset, got {self.preset!r}")
        if self.experiment == "stability" and not is_nse:
            raise ConfigError("stability runs on an NSE preset")
        if self.experiment == "certify" and not self.report_path:
            raise ConfigError("certify needs a 'report' path to re-derive bounds from")

    def as_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "threads": self.threads,
            "problem": {"preset": self.preset, "variant": self.variant, "horizon": self.horizon},
            "network": {"hidden": list(self.hidden), "activation": self.activation,
                        "bound": self.bound},
            "loss": {"alpha": self.alpha, "beta": self.beta, "mu": self.mu,
                     "h2_cap": self.h2_cap, "lambda": self.lam,
                     "interior_order": self.interior_order,
                     "boundary_order": self.boundary_order,
                     "boundary_samples": self.boundary_samples,
                     "spatial_order": self.spatial_order, "time_order": self.time_order,
                     "error_order": self.error_order},
            "optimizer": {"method": self.method, "learning_rate": self.learning_rate,
                          "schedule": self.schedule, "max_iterations": self.max_iterations,
                          "restarts": self.restarts, "resample_every": self.resample_every},
            "target": self.target,
            "targets": list(self.targets),
            "deltas": list(self.deltas),
            "hodge": {"grid": self.hodge_grid, "time_order": self.hodge_time_order,
                      "source": self.hodge_source},
            "check": self.check,
        }

    def optimizer_config(self, target: float | None, seed: int | None = None) -> optimize.OptimizerConfig:
        return optimize.OptimizerConfig(
            method=self.method, learning_rate=self.learning_rate, schedule=self.schedule,
            max_iterations=self.max_iterations, target=target,
            seed=self.seed if seed is None else seed,
            restarts=self.restarts, resample_every=self.resample_every, bound=self.bound)


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _native(obj):
    if isinstance(obj, dict):
        return {str(k): _native(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_native(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (jnp.ndarray, np.ndarray)):
        return _native(np.asarray(obj).tolist())
    return obj


def environment_stamp() -> dict:
    import scipy

    return {
        "package": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "jax": jax.__version__,
    }


def _train_summary(report: optimize.TrainReport) -> dict:
    return {
        "final": report.final,
        "achieved": report.achieved,
        "iterations": report.iterations,
        "seed": report.seed,
        "target": report.target,
        "target_met": report.target_met,
    }


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    results: dict
    environment: dict = field(default_factory=environment_stamp)
    timings: dict = field(default_factory=dict)          # excluded from report.json
    artifacts: dict = field(default_factory=dict)        # filename -> text content

    def report_json(self) -> str:
        body = {
            "kind": self.kind,
            "config": _native(self.config),
            "results": _native(self.results),
            "environment": self.environment,
        }
        return json.dumps(body, sort_keys=True, indent=2) + "\n"

    def write(self, outdir) -> Path:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "report.json").write_text(self.report_json())
        if self.timings:
            (outdir / "timings.json").write_text(
                json.dumps(_native(self.timings), sort_keys=True, indent=2) + "\n")
        for name, text in self.artifacts.items():
            (outdir / name).write_text(text)
        return outdir / "report.json"


# ---------------------------------------------------------------------------
# shared measurement helpers
# ---------------------------------------------------------------------------

def compute_true_error(fieldview: norms.FieldView, exact: norms.FieldView,
                       norm_list: Sequence[str], domain, rule=None,
                       horizon: float | None = None, time_order: int = 8) -> dict:
    """Measured errors of a field against an exact solution, per norm label."""
    rule = rule or GaussLegendre(24)
    diff = norms.field_difference(fieldview, exact)
    out = {}
    for label in norm_list:
        if label in ("l2", "h1", "h2"):
            out[label] = norms.norm(diff, label, domain, rule)
        elif label == "l4l2":
            out[label] = norms.norm(diff, norms.L4InTime("l2"), domain, rule,
                                    horizon=horizon, time_order=time_order)
        else:
            raise ValueError(f"unsupported error norm {label!r}")
    return out


def _elliptic_setup(cfg: RunConfig):
    preset = presets.elliptic_preset(cfg.preset)
    cap = cfg.h2_cap if cfg.h2_cap is not None else 2.0 * preset.h2_exact
    budget = elliptic.H2Budget(h2_cap=cap, mu=cfg.mu)
    weights = elliptic.LossWeights(cfg.alpha, cfg.beta)
    if cfg.variant == "h12":
        boundary_rule = UniformBoundary(cfg.boundary_samples)
    else:
        boundary_rule = GaussLegendre(cfg.boundary_order)
    net = dnn.init_network((2, *cfg.hidden, 1), seed=cfg.seed,
                           bound=cfg.bound, activation=cfg.activation)
    evaluator = elliptic.EllipticLossEvaluator(
        net, preset.problem, weights, budget,
        GaussLegendre(cfg.interior_order), boundary_rule, variant=cfg.variant)
    return preset, budget, weights, net, evaluator


def _nse_setup(cfg: RunConfig):
    problem = presets.nse_preset(cfg.preset, horizon=cfg.horizon)
    vpnet = nse.init_vpnet(cfg.hidden, seed=cfg.seed, bound=cfg.bound)
    sampler = SpaceTimeSampler(cfg.horizon, cfg.time_order, GaussLegendre(cfg.spatial_order))
    weights = nse.NSELossWeights(cfg.lam)
    evaluator = nse.NSELossEvaluator(vpnet, problem, weights, sampler, cfg.boundary_samples)
    return problem, vpnet, sampler, weights, evaluator


def _nse_penalty_floor(problem, weights, sampler, boundary_samples) -> dict:
    exact_loss = nse.loss_nse(problem.exact, problem, weights, sampler, boundary_samples)
    return {"penalty_floor": exact_loss.penalty, "exact_breakdown": exact_loss.as_dict()}


def _velocity_view(vpnet: nse.VPNet) -> norms.FieldView:
    return norms.field_slice(vpnet.field(), 0, 2)


def _exact_velocity(problem: nse.NSEProblem) -> norms.FieldView:
    return norms.field_slice(problem.exact, 0, 2)


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------

def run_solve_elliptic(cfg: RunConfig) -> ExperimentReport:
    preset, budget, weights, net, evaluator = _elliptic_setup(cfg)
    trained, report = optimize.train(net, evaluator, cfg.optimizer_config(cfg.target))
    eps_sq = report.final["residual"] + report.final["boundary"]
    h2_net = norms.h2_norm_of_network(trained, preset.domain, GaussLegendre(cfg.error_order))
    cert = certify.elliptic_certificate(
        eps_sq**0.5, preset.h2_exact, budget.h2_cap, cfg.variant,
        weights.alpha, weights.beta, h2_of_net=h2_net)
    errors = compute_true_error(norms.network_field(trained), preset.exact,
                                ["l2", "h1"], preset.domain, GaussLegendre(cfg.error_order))
    results = {
        "train": _train_summary(report),
        "epsilon_sq": eps_sq,
        "h2_of_solution": h2_net,
        "certificate": cert.as_dict(),
        "true_errors": errors,
    }
    out = ExperimentReport("solve-elliptic", cfg.as_dict(), results,
                           timings={"train_wall_time": report.wall_time})
    out.artifacts["trace.csv"] = report.trace_csv()
    out.artifacts["certificate.json"] = cert.to_json() + "\n"
    out.artifacts["network.json"] = _network_json(trained)
    return out


def _network_json(net: dnn.Network) -> str:
    import io
    import tempfile

    # reuse the checkpoint writer for a consistent format
    with tempfile.NamedTemporaryFile("r", suffix=".json", delete=False) as handle:
        path = handle.name
    dnn.save_checkpoint(net, path)
    text = Path(path).read_text()
    Path(path).unlink()
    return text


def run_solve_nse(cfg: RunConfig) -> ExperimentReport:
    problem, vpnet, sampler, weights, evaluator = _nse_setup(cfg)
    floor_info = _nse_penalty_floor(problem, weights, sampler, cfg.boundary_samples)
    floor = floor_info["penalty_floor"]
    target = None if cfg.target is None else cfg.target + floor
    trained_net, report = optimize.train(vpnet.net, evaluator, cfg.optimizer_config(target))
    trained = nse.VPNet(trained_net)
    adjusted = max(report.achieved - floor, 0.0)
    eps = adjusted**0.5
    cert = certify.nse_certificate(eps, cfg.lam, penalty_floor=floor)
    errors = compute_true_error(
        _velocity_view(trained), _exact_velocity(problem), ["l4l2"], problem.domain,
        GaussLegendre(cfg.error_order // 2), horizon=cfg.horizon, time_order=8)
    gauge = nse.fix_pressure_gauge(trained, problem, sampler)
    results = {
        "train": _train_summary(report),
        "penalty_floor": floor_info,
        "epsilon_sq_adjusted": adjusted,
        "certificate": cert.as_dict(),
        "true_errors": errors,
        "pressure_mean": gauge,
    }
    out = ExperimentReport("solve-nse", cfg.as_dict(), results,
                           timings={"train_wall_time": report.wall_time})
    out.artifacts["trace.csv"] = report.trace_csv()
    out.artifacts["certificate.json"] = cert.to_json() + "\n"
    out.artifacts["network.json"] = _network_json(trained_net)
    return out


def _sweep_csv(rows: list[dict]) -> str:
    if not rows:
        return "\n"
    keys = list(rows[0])
    lines = [",".join(keys)]
    for row in rows:
        lines.append(",".join(repr(row[k]) if isinstance(row[k], float) else str(row[k])
                              for k in keys))
    return "\n".join(lines) + "\n"


def run_sweep(cfg: RunConfig) -> ExperimentReport:
    if cfg.preset in presets.NSE_PRESETS:
        return _run_sweep_nse(cfg)
    return _run_sweep_elliptic(cfg)


def _run_sweep_elliptic(cfg: RunConfig) -> ExperimentReport:
    preset, budget, weights, net, evaluator = _elliptic_setup(cfg)
    norm_list = ["l2", "h1"] if cfg.variant == "l2" else ["l2"]
    targets = sorted(cfg.targets, reverse=True)

    def train_one(start_net, target, seed):
        ev = replace(evaluator, net=start_net)
        return optimize.train(start_net, ev, cfg.optimizer_config(target, seed=seed))

    entries, summaries, timings, certs, rows = [], [], {}, [], []
    artifacts = {}
    if cfg.threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            futures = [pool.submit(train_one, net, t, cfg.seed) for t in targets]
            outcomes = [f.result() for f in futures]
    else:
        outcomes = []
        current = net
        for t in targets:
            current, report = train_one(current, t, cfg.seed)
            outcomes.append((current, report))

    for i, (t, (trained, report)) in enumerate(zip(targets, outcomes)):
        errors = compute_true_error(norms.network_field(trained), preset.exact,
                                    norm_list, preset.domain, GaussLegendre(cfg.error_order))
        eps_sq = report.final["residual"] + report.final["boundary"]
        h2_net = norms.h2_norm_of_network(trained, preset.domain, GaussLegendre(cfg.error_order))
        cert = certify.elliptic_certificate(
            eps_sq**0.5, preset.h2_exact, budget.h2_cap, cfg.variant,
            weights.alpha, weights.beta, h2_of_net=h2_net)
        certs.append(cert)
        entries.append(certify.SweepEntry(
            target=t, achieved=eps_sq, errors=errors, target_met=report.target_met,
            metadata={"iterations": report.iterations, "seed": report.seed,
                      "run_id": f"target_{i}", "penalty": report.final["penalty"],
                      "h2_of_solution": h2_net}))
        summaries.append(_train_summary(report))
        timings[f"target_{i}_wall_time"] = report.wall_time
        artifacts[f"trace_target_{i}.csv"] = report.trace_csv()
        row = {"run_id": f"target_{i}", "target": t, "achieved": eps_sq,
               "epsilon": eps_sq**0.5, "target_met": report.target_met}
        for label in norm_list:
            row[f"error_{label}"] = errors[label]
        for bound in cert.bounds:
            row[f"rate_{bound.norm}"] = bound.value
        rows.append(row)

    sweep = certify.SweepRecord(entries)
    calibrations, checks = {}, {}
    met = sweep.met()
    m_sum = preset.h2_exact + budget.h2_cap
    rate_fns = ({"h1": lambda e: m_sum**0.5 * e**0.5,
                 "l2": lambda e: m_sum ** (1 / 3) * e ** (2 / 3)}
                if cfg.variant == "l2" else {"l2": lambda e: e})
    for label in norm_list:
        if len(met) >= 3:
            calibrations[label] = certify.calibrate(sweep, label).as_dict()
        if len(met) >= 1:
            checks[label] = certify.rate_check(sweep, label, rate_fns[label])

    results = {
        "sweep": sweep.as_dict(),
        "train_summaries": summaries,
        "calibrations": calibrations,
        "rate_checks": checks,
        "certificates": [c.as_dict() for c in certs],
        "constants": {"M": preset.h2_exact, "M_tilde": budget.h2_cap},
    }
    out = ExperimentReport("sweep", cfg.as_dict(), results, timings=timings)
    out.artifacts.update(artifacts)
    out.artifacts["sweep.csv"] = _sweep_csv(rows)
    out.artifacts["certificate.json"] = json.dumps(
        [c.as_dict() for c in certs], sort_keys=True, indent=2) + "\n"
    if outcomes:
        out.artifacts["trace.csv"] = outcomes[-1][1].trace_csv()
    return out


def _run_sweep_nse(cfg: RunConfig) -> ExperimentReport:
    problem, vpnet, sampler, weights, evaluator = _nse_setup(cfg)
    floor_info = _nse_penalty_floor(problem, weights, sampler, cfg.boundary_samples)
    floor = floor_info["penalty_floor"]
    targets = sorted(cfg.targets, reverse=True)

    entries, summaries, timings, certs, rows, trained_nets = [], [], {}, [], [], []
    artifacts = {}
    current = vpnet.net
    for i, t in enumerate(targets):
        ev = replace(evaluator, vpnet=nse.VPNet(current))
        current, report = optimize.train(current, ev, cfg.optimizer_config(t + floor))
        trained = nse.VPNet(current)
        trained_nets.append(trained)
        adjusted = max(report.achieved - floor, 0.0)
        errors = compute_true_error(
            _velocity_view(trained), _exact_velocity(problem), ["l4l2"], problem.domain,
            GaussLegendre(cfg.error_order // 2), horizon=cfg.horizon, time_order=8)
        cert = certify.nse_certificate(adjusted**0.5, cfg.lam, penalty_floor=floor)
        certs.append(cert)
        entries.append(certify.SweepEntry(
            target=t, achieved=adjusted, errors=errors, target_met=report.target_met,
            metadata={"iterations": report.iterations, "seed": report.seed,
                      "run_id": f"target_{i}", "raw_total": report.achieved}))
        summaries.append(_train_summary(report))
        timings[f"target_{i}_wall_time"] = report.wall_time
        artifacts[f"trace_target_{i}.csv"] = report.trace_csv()
        rows.append({"run_id": f"target_{i}", "target": t, "achieved": adjusted,
                     "epsilon": adjusted**0.5, "raw_total": report.achieved,
                     "target_met": report.target_met, "error_l4l2": errors["l4l2"],
                     "rate_l4l2": cert.bounds[0].value})

    sweep = certify.SweepRecord(entries)
    met = sweep.met()
    checks, calibrations = {}, {}
    if len(met) >= 1:
        checks["l4l2"] = certify.rate_check(
            sweep, "l4l2", lambda e: certify.nse_rate(e, cfg.lam).value)
    if len(met) >= 3:
        calibrations["l4l2"] = certify.calibrate(sweep, "l4l2").as_dict()

    hodge_check = None
    met_nets = [(e, n) for e, n, ent in
                zip(sweep.epsilons(met_only=False), trained_nets, entries) if ent.target_met]
    if len(met_nets) >= 2:
        hodge_entries = [(float(e), _velocity_view(n)) for e, n in met_nets]
        hodge_check = certify.hodge_scaling_check(
            hodge_entries, cfg.horizon, grid_n=cfg.hodge_grid,
            time_order=cfg.hodge_time_order)

    results = {
        "sweep": sweep.as_dict(),
        "train_summaries": summaries,
        "penalty_floor": floor_info,
        "rate_checks": checks,
        "calibrations": calibrations,
        "certificates": [c.as_dict() for c in certs],
        "hodge_scaling": hodge_check,
    }
    out = ExperimentReport("sweep", cfg.as_dict(), results, timings=timings)
    out.artifacts.update(artifacts)
    out.artifacts["sweep.csv"] = _sweep_csv(rows)
    out.artifacts["certificate.json"] = json.dumps(
        [c.as_dict() for c in certs], sort_keys=True, indent=2) + "\n"
    if summaries:
        out.artifacts["trace.csv"] = artifacts[f"trace_target_{len(targets) - 1}.csv"]
    return out


def run_existence_ratio(cfg: RunConfig) -> ExperimentReport:
    """Supervised H2 fits at shrinking error levels; checks loss/eps^2 stays bounded."""
    preset, budget, weights, net, evaluator = _elliptic_setup(cfg)
    targets = sorted(cfg.targets, reverse=True)  # H2 error levels (eps, not squared)
    rows, summaries, timings = [], [], {}
    current = net
    for i, eps_target in enumerate(targets):
        current, report = optimize.train_supervised_h2(
            current, preset.exact, preset.domain, GaussLegendre(cfg.interior_order),
            cfg.optimizer_config(eps_target**2))
        achieved_eps = report.achieved**0.5
        ev = replace(evaluator, net=current)
        pde_loss = ev.breakdown()
        eq_loss = pde_loss.residual + pde_loss.boundary
        rows.append({
            "run_id": f"eps_{i}",
            "target_eps": eps_target,
            "achieved_eps": achieved_eps,
            "h2_target_met": report.target_met,
            "pde_loss": eq_loss,
            "ratio": eq_loss / report.achieved if report.achieved > 0 else float("inf"),
        })
        summaries.append(_train_summary(report))
        timings[f"eps_{i}_wall_time"] = report.wall_time
    ratios = [r["ratio"] for r in rows if np.isfinite(r["ratio"])]
    spread = max(ratios) / min(ratios) if ratios else float("inf")
    results = {
        "rows": rows,
        "train_summaries": summaries,
        "ratio_max_over_min": spread,
        "constants": {"M": preset.h2_exact, "M_tilde": budget.h2_cap},
    }
    out = ExperimentReport("existence-ratio", cfg.as_dict(), results, timings=timings)
    out.artifacts["sweep.csv"] = _sweep_csv(rows)
    return out


def run_stability(cfg: RunConfig) -> ExperimentReport:
    """Train perturbed-forcing twins and compare their distance to the rate."""
    problem, vpnet, sampler, weights, evaluator = _nse_setup(cfg)
    floor_info = _nse_penalty_floor(problem, weights, sampler, cfg.boundary_samples)
    floor = floor_info["penalty_floor"]
    target = (cfg.target if cfg.target is not None else 1e-2) + floor

    base_net, base_report = optimize.train(
        vpnet.net, evaluator, cfg.optimizer_config(target))
    base = nse.VPNet(base_net)
    eps_base = max(base_report.achieved - floor, 0.0) ** 0.5

    rows, summaries, timings = [], [_train_summary(base_report)], {}
    timings["base_wall_time"] = base_report.wall_time
    for i, delta in enumerate(cfg.deltas):
        forcing2 = _shifted_forcing(problem.forcing, delta)
        problem2 = nse.NSEProblem(forcing2, problem.initial, problem.horizon,
                                  problem.domain, exact=None, name=f"{problem.name}+delta")
        vp2 = nse.init_vpnet(cfg.hidden, seed=cfg.seed, bound=cfg.bound)
        ev2 = nse.NSELossEvaluator(vp2, problem2, weights, sampler, cfg.boundary_samples)
        net2, report2 = optimize.train(vp2.net, ev2, cfg.optimizer_config(target))
        trained2 = nse.VPNet(net2)
        eps2 = max(report2.achieved - floor, 0.0) ** 0.5
        distance = _velocity_distance(base, trained2, problem, cfg)
        delta_f = delta * cfg.horizon**0.25 * problem.domain.area**0.5
        eps = max(eps_base, eps2)
        rate = certify.stability_rate(eps, cfg.lam, 0.0, delta_f)
        rows.append({
            "run_id": f"delta_{i}",
            "delta": delta,
            "forcing_distance_l4l2": delta_f,
            "measured_distance_l4l2": distance,
            "epsilon": eps,
            "rate_value": rate.value,
            "ratio": distance / rate.value if rate.value > 0 else 0.0,
        })
        summaries.append(_train_summary(report2))
        timings[f"delta_{i}_wall_time"] = report2.wall_time

    positive = [r["ratio"] for r in rows if r["delta"] > 0]
    results = {
        "rows": rows,
        "train_summaries": summaries,
        "penalty_floor": floor_info,
        "c_eff": max(positive) if positive else None,
        "zero_delta_distance": next((r["measured_distance_l4l2"] for r in rows
                                     if r["delta"] == 0.0), None),
    }
    out = ExperimentReport("stability", cfg.as_dict(), results, timings=timings)
    out.artifacts["sweep.csv"] = _sweep_csv(rows)
    return out


def _shifted_forcing(forcing, delta: float):
    shift = jnp.array([delta, 0.0])

    def shifted(x, t):
        return forcing(x, t) + shift

    return shifted


def _velocity_distance(a: nse.VPNet, b: nse.VPNet, problem: nse.NSEProblem,
                       cfg: RunConfig) -> float:
    diff = norms.field_difference(_velocity_view(a), _velocity_view(b))
    return norms.norm(diff, norms.L4InTime("l2"), problem.domain,
                      GaussLegendre(cfg.error_order // 2),
                      horizon=cfg.horizon, time_order=8)


def run_hodge(cfg: RunConfig) -> ExperimentReport:
    """Decomposition diagnostics on preset or synthetic fields, plus refinement."""
    problem = presets.nse_preset(cfg.preset, horizon=cfg.horizon) \
        if cfg.preset in presets.NSE_PRESETS else None

    if cfg.hodge_source == "exact":
        if problem is None:
            raise ConfigError("hodge source 'exact' needs an NSE preset")
        velocity = _exact_velocity(problem)
        sample = jax.jit(jax.vmap(lambda z: velocity.value(z)))

        def fn(X, Y):
            zs = jnp.asarray(np.stack([X.ravel(), Y.ravel(), np.zeros(X.size)], axis=1))
            vals = np.asarray(sample(zs))
            return vals[:, 0].reshape(X.shape), vals[:, 1].reshape(X.shape)
        fields = {"exact_t0": hodge.grid_from_function(fn, cfg.hodge_grid)}
    elif cfg.hodge_source == "perturbation":
        fields = {}
        for eps in (cfg.targets or (1e-1, 1e-2, 1e-3)):
            def fn(X, Y, eps=eps):
                pi = np.pi
                u1 = pi * np.sin(pi * X) * np.cos(pi * Y)
                u2 = -pi * np.cos(pi * X) * np.sin(pi * Y)
                g1 = pi * np.cos(pi * X) * np.sin(pi * Y)
                g2 = pi * np.sin(pi * X) * np.cos(pi * Y)
                return u1 + eps**0.5 * g1, u2 + eps**0.5 * g2
            fields[f"perturbed_{eps:g}"] = hodge.grid_from_function(fn, cfg.hodge_grid)
    else:
        raise ConfigError(f"unknown hodge source {cfg.hodge_source!r}")

    diagnostics, artifacts = {}, {}
    for name, grid in fields.items():
        parts = hodge.decompose(grid)
        diagnostics[name] = hodge.hodge_diagnostics(parts)
        artifacts[f"field_{name}_input.csv"] = hodge.dump_csv(parts.input)
        artifacts[f"field_{name}_leray.csv"] = hodge.dump_csv(parts.leray)

    # refinement study of the Leray divergence on the first field's function
    refinement = {}
    first = next(iter(fields.values()))
    for n in (cfg.hodge_grid // 2, cfg.hodge_grid):
        sub = hodge.GridField(first.rect, np.stack(_resample(first, n), axis=-1)) \
            if n != cfg.hodge_grid else first
        d = hodge.hodge_diagnostics(hodge.decompose(sub))
        refinement[str(n)] = d["divergence_of_leray"]

    results = {"diagnostics": diagnostics, "divergence_refinement": refinement}
    out = ExperimentReport("hodge", cfg.as_dict(), results)
    out.artifacts.update(artifacts)
    return out


def _resample(field: hodge.GridField, n: int):
    # nodes of the coarse grid coincide with every k-th fine node only for
    # compatible sizes; fall back to direct sampling otherwise
    nx, ny = field.shape
    step = (nx - 1) // (n - 1) if (nx - 1) % (n - 1) == 0 else None
    if step:
        vals = field.values[::step, ::step]
        return vals[:, :, 0], vals[:, :, 1]
    raise ConfigError(f"cannot resample {nx}x{ny} grid to {n}x{n}")


def run_certify(cfg: RunConfig) -> ExperimentReport:
    """Re-derive certificates from a saved report's epsilon and constants."""
    try:
        saved = json.loads(Path(cfg.report_path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"report not found: {cfg.report_path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"report is not valid JSON: {exc}") from exc

    certs = []
    for cert_dict in _find_certificates(saved):
        kind = cert_dict["kind"]
        eps = float(cert_dict["epsilon"])
        consts = cert_dict["constants"]
        if kind.startswith("elliptic-"):
            variant = kind.split("-", 1)[1]
            cert = certify.elliptic_certificate(
                eps, float(consts["M"]), float(consts["M_tilde"]), variant,
                float(consts.get("alpha", 1.0)), float(consts.get("beta", 1.0)),
                h2_of_net=consts.get("H2_of_solution"))
        elif kind == "nse":
            cert = certify.nse_certificate(eps, float(consts["lambda"]),
                                           penalty_floor=consts.get("penalty_floor"))
        else:
            raise ConfigError(f"cannot re-derive certificate of kind {kind!r}")
        certs.append(cert)
    if not certs:
        raise ConfigError("saved report contains no certificates")
    results = {"certificates": [c.as_dict() for c in certs], "source": cfg.report_path}
    out = ExperimentReport("certify", cfg.as_dict(), results)
    out.artifacts["certificate.json"] = json.dumps(
        [c.as_dict() for c in certs], sort_keys=True, indent=2) + "\n"
    return out


def _find_certificates(saved: dict) -> list[dict]:
    results = saved.get("results", {})
    if "certificates" in results:
        return list(results["certificates"])
    if "certificate" in results:
        return [results["certificate"]]
    return []


DRIVERS = {
    "solve-elliptic": run_solve_elliptic,
    "solve-nse": run_solve_nse,
    "sweep": run_sweep,
    "existence-ratio": run_existence_ratio,
    "stability": run_stability,
    "hodge": run_hodge,
    "certify": run_certify,
}


def run_experiment(cfg: RunConfig) -> ExperimentReport:
    return DRIVERS[cfg.experiment](cfg)

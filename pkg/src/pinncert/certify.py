"""Error-rate certificates from achieved loss levels, and rate calibration.

A trained network comes with an achieved loss value eps^2.  The certificate
converts eps into constant-free rate values in the norms the theory
controls:

* elliptic, L2-boundary loss:   H1 error  ~ (M + M~)^{1/2} eps^{1/2}
                                L2 error  ~ (M + M~)^{1/3} eps^{2/3}
* elliptic, H^{1/2}-boundary:   L2 error  ~ eps
* Navier-Stokes:                L4-in-time L2 error ~ eps^{1/2} + eps / lam^{1/4}
* stability (two problems):     adds the initial-data and forcing distances.

The hidden constants are never asserted; sweeps measure true errors against
manufactured solutions and ``calibrate`` fits log(error) = log C + p log(eps)
so the constant and exponent become data.  ``rate_check`` reports the single
constant C_eff that makes error <= C_eff * rate(eps) hold across a sweep
(the binding max ratio, with the min ratio for spread).

When the H2 budget is exceeded at convergence the certificate records the
excess instead of silently certifying.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from .geometry import Rectangle, SpaceTimeSampler
from .hodge import GridField, decompose, grid_from_function, grid_h1
from .norms import FieldView


@dataclass(frozen=True)
class RateBound:
    norm: str
    value: float              # constant-free rate evaluated at epsilon
    exponent: float           # leading epsilon exponent, metadata
    expression: str
    fitted_c: float | None = None

    def as_dict(self) -> dict:
        return {
            "norm": self.norm,
            "rate_value": self.value,
            "exponent": self.exponent,
            "expression": self.expression,
            "fitted_C": self.fitted_c,
        }


@dataclass(frozen=True)
class Certificate:
    kind: str                 # "elliptic-l2" | "elliptic-h12" | "nse"
    epsilon: float
    constants: dict
    bounds: tuple[RateBound, ...]
    budget_exceeded_by: float = 0.0

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "epsilon": self.epsilon,
            "constants": dict(sorted(self.constants.items())),
            "bounds": [b.as_dict() for b in self.bounds],
            "budget_exceeded_by": self.budget_exceeded_by,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2)


def _check_nonneg(**values):
    for name, v in values.items():
        if v < 0:
            raise ValueError(f"{name} must be nonnegative, got {v}")


def elliptic_rates(eps: float, h2_exact: float, h2_cap: float,
                   variant: str = "l2") -> list[RateBound]:
    """Constant-free rate values for the elliptic certificates.

    ``h2_exact`` is the H2 norm of the true solution (M) and ``h2_cap`` the
    imposed H2 budget (M~).  The "l2" variant bounds H1 and L2 errors; the
    "h12" variant upgrades the L2 error to first order in eps.
    """
    _check_nonneg(eps=eps, h2_exact=h2_exact, h2_cap=h2_cap)
    m_sum = h2_exact + h2_cap
    if variant == "l2":
        return [
            RateBound("h1", m_sum**0.5 * eps**0.5, 0.5, "(M + M~)^(1/2) eps^(1/2)"),
            RateBound("l2", m_sum ** (1 / 3) * eps ** (2 / 3), 2 / 3,
                      "(M + M~)^(1/3) eps^(2/3)"),
        ]
    if variant == "h12":
        return [RateBound("l2", eps, 1.0, "eps")]
    raise ValueError(f"unknown elliptic variant {variant!r}")


def nse_rate(eps: float, lam: float) -> RateBound:
    """L4-in-time L2 velocity error rate: eps^{1/2} + eps / lam^{1/4}."""
    _check_nonneg(eps=eps)
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return RateBound("l4l2", eps**0.5 + eps * lam**-0.25, 0.5,
                     "eps^(1/2) + eps lam^(-1/4)")


def stability_rate(eps: float, lam: float, delta_u0: float, delta_f: float) -> RateBound:
    """Distance bound between approximate solutions of two forced problems."""
    _check_nonneg(eps=eps, delta_u0=delta_u0, delta_f=delta_f)
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return RateBound(
        "l4l2", eps**0.5 + eps * lam**-0.25 + delta_u0 + delta_f, 0.5,
        "eps^(1/2) + eps lam^(-1/4) + |u01 - u02|_L2 + |f1 - f2|_L4L2")


def elliptic_certificate(eps: float, h2_exact: float, h2_cap: float,
                         variant: str, alpha: float, beta: float,
                         h2_of_net: float | None = None) -> Certificate:
    bounds = tuple(elliptic_rates(eps, h2_exact, h2_cap, variant))
    constants = {"M": h2_exact, "M_tilde": h2_cap, "alpha": alpha, "beta": beta}
    excess = 0.0
    if h2_of_net is not None:
        constants["H2_of_solution"] = h2_of_net
        excess = max(0.0, h2_of_net - h2_cap)
    return Certificate(f"elliptic-{variant}", eps, constants, bounds, excess)


def nse_certificate(eps: float, lam: float, penalty_floor: float | None = None) -> Certificate:
    constants = {"lambda": lam}
    if penalty_floor is not None:
        constants["penalty_floor"] = penalty_floor
    return Certificate("nse", eps, constants, (nse_rate(eps, lam),))


# ---------------------------------------------------------------------------
# sweeps and calibration
# ---------------------------------------------------------------------------

@dataclass
class SweepEntry:
    target: float              # requested eps^2
    achieved: float            # achieved eps^2
    errors: dict               # norm label -> measured true error
    target_met: bool = True
    metadata: dict = field(default_factory=dict)

    @property
    def epsilon(self) -> float:
        return self.achieved**0.5

    def as_dict(self) -> dict:
        return {
            "target": self.target,
            "achieved": self.achieved,
            "epsilon": self.epsilon,
            "errors": dict(sorted(self.errors.items())),
            "target_met": self.target_met,
            "metadata": self.metadata,
        }


@dataclass
class SweepRecord:
    entries: list

    def met(self) -> list:
        return [e for e in self.entries if e.target_met]

    def epsilons(self, met_only: bool = True) -> np.ndarray:
        rows = self.met() if met_only else self.entries
        return np.array([e.epsilon for e in rows])

    def errors(self, norm: str, met_only: bool = True) -> np.ndarray:
        rows = self.met() if met_only else self.entries
        return np.array([e.errors[norm] for e in rows])

    def as_dict(self) -> dict:
        return {"entries": [e.as_dict() for e in self.entries]}


@dataclass(frozen=True)
class CalibrationResult:
    norm: str
    fitted_c: float
    exponent: float
    residual: float            # rms residual of the log-log fit

    def as_dict(self) -> dict:
        return {"norm": self.norm, "fitted_C": self.fitted_c,
                "exponent": self.exponent, "log_residual": self.residual}


def fit_power_law(eps: Sequence[float], errors: Sequence[float]) -> tuple[float, float, float]:
    """Least squares for log(err) = log C + p log(eps); returns (C, p, rms)."""
    eps = np.asarray(eps, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if eps.size < 3:
        raise ValueError(f"need at least 3 sweep points, got {eps.size}")
    if np.unique(eps).size < eps.size or np.ptp(eps) == 0:
        raise ValueError("sweep epsilons must be distinct")
    if np.any(eps <= 0) or np.any(errors <= 0):
        raise ValueError("power-law fit needs positive epsilons and errors")
    le, lr = np.log(eps), np.log(errors)
    p, logc = np.polyfit(le, lr, 1)
    resid = lr - (p * le + logc)
    return float(np.exp(logc)), float(p), float(np.sqrt(np.mean(resid**2)))


def calibrate(sweep: SweepRecord, norm: str) -> CalibrationResult:
    """Fit the measured error power law over the met sweep entries."""
    eps = sweep.epsilons()
    errors = sweep.errors(norm)
    c, p, resid = fit_power_law(eps, errors)
    return CalibrationResult(norm, c, p, resid)


def rate_check(sweep: SweepRecord, norm: str, rate_fn: Callable[[float], float]) -> dict:
    """Single-constant upper-bound check: error <= C_eff * rate(eps).

    ``C_eff`` is the max ratio over met entries (the one constant that makes
    the bound hold everywhere); the min ratio is reported for the spread.
    """
    eps = sweep.epsilons()
    errors = sweep.errors(norm)
    if eps.size == 0:
        raise ValueError("no met sweep entries to check")
    ratios = errors / np.array([rate_fn(e) for e in eps])
    return {
        "norm": norm,
        "c_eff": float(ratios.max()),
        "ratio_min": float(ratios.min()),
        "ratios": [float(r) for r in ratios],
    }


# ---------------------------------------------------------------------------
# Hodge scaling diagnostic (the sqrt(eps) law for the non-Leray content)
# ---------------------------------------------------------------------------

def nonleray_l4h1(velocity: FieldView, horizon: float, grid_n: int = 64,
                  time_order: int = 4, rect: Rectangle | None = None) -> float:
    """L4-in-time H1 norm of the non-Leray part of a space-time velocity.

    Samples the velocity on a uniform grid at Gauss-Legendre time nodes,
    decomposes each slice, and composes the discrete H1 norms of v1 + v2.
    """
    sampler = SpaceTimeSampler(horizon, time_order)
    ts, wts = sampler.time_nodes()
    sample = jax.jit(jax.vmap(lambda z: velocity.value(z)[:2]))
    acc = 0.0
    for t, wt in zip(ts, wts):
        def fn(X, Y, t=t):
            pts = np.stack([X.ravel(), Y.ravel(), np.full(X.size, t)], axis=1)
            vals = np.asarray(sample(jnp.asarray(pts)))
            return vals[:, 0].reshape(X.shape), vals[:, 1].reshape(X.shape)
        grid = grid_from_function(fn, grid_n, rect)
        parts = decompose(grid)
        v_n = GridField(grid.rect, parts.harmonic.values + parts.potential.values)
        acc += wt * grid_h1(v_n) ** 4
    return acc**0.25


def hodge_scaling_check(entries: Sequence[tuple[float, FieldView]], horizon: float,
                        grid_n: int = 64, time_order: int = 4,
                        rect: Rectangle | None = None) -> dict:
    """Measure |v_N| in L4 H1 across a sweep and fit its exponent vs eps.

    ``entries`` pairs each achieved eps with the corresponding velocity
    field.  Consistency with the sqrt(eps) upper bound shows as a fitted
    exponent of at least about one half.
    """
    eps = np.array([e for e, _ in entries], dtype=float)
    values = np.array([
        nonleray_l4h1(fieldview, horizon, grid_n, time_order, rect)
        for _, fieldview in entries
    ])
    out = {"epsilons": [float(e) for e in eps], "values": [float(v) for v in values]}
    if eps.size >= 2 and np.all(values > 0):
        slope, _ = np.polyfit(np.log(eps), np.log(values), 1)
        out["exponent"] = float(slope)
    else:
        out["exponent"] = None
    return out

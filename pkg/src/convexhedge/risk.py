"""Convex risk measures on terminal wealth, given by their dual data.

Every measure here is of the form
    rho(X) = sup_Z { E_P[Z (-X)] - alpha(Z) }
over densities Z >= 0 with E_P[Z] = 1, where alpha is the penalty:

    ScenarioPenalty  finitely many scenario densities with penalties, one of
                     which is free (min penalty 0), so rho(0) = 0
    AVaR(beta)       alpha = 0 on {Z <= 1/beta}, +inf outside
    Entropic(gamma)  alpha = relative entropy / gamma

evaluate() returns the value together with a maximizing density and its
penalty; the identity value = E_P[Z(-X)] - alpha(Z) holds by construction.
"""

import json
from dataclasses import dataclass

import numpy as np

from .errors import MarketError, SolverError
from .lp import DEFAULT_TOLERANCES, make_lp, solve_lp


@dataclass(frozen=True)
class ScenarioPenalty:
    """rho(X) = max_i { E_P[Z_i (-X)] - penalty_i }. Densities are rows of
    `densities`, validated against the reference probabilities."""

    densities: np.ndarray     # (K, n)
    penalties: np.ndarray     # (K,)
    reference: np.ndarray     # (n,) strictly positive, sums to 1

    def __post_init__(self):
        Z = self.densities
        a = self.penalties
        p = self.reference
        if Z.ndim != 2 or Z.shape[0] == 0:
            raise MarketError("at least one scenario density required")
        if a.shape != (Z.shape[0],):
            raise MarketError("one penalty per scenario required")
        if p.shape != (Z.shape[1],):
            raise MarketError("reference length does not match densities")
        if np.any(p <= 0) or abs(float(p.sum()) - 1.0) > 1e-9:
            raise MarketError("reference must be a strictly positive probability vector")
        if np.any(Z < 0):
            raise MarketError("scenario densities must be nonnegative")
        means = Z @ p
        bad = np.flatnonzero(np.abs(means - 1.0) > 1e-12)
        if bad.size:
            raise MarketError(
                f"scenario {int(bad[0])} density has E_P[Z] = {means[bad[0]]:.12g}, not 1")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise MarketError("penalties must be finite and nonnegative")
        if float(a.min()) > 1e-12:
            raise MarketError("smallest penalty must be 0 so that rho(0) = 0")


@dataclass(frozen=True)
class AVaR:
    """Average value at risk at level beta in (0, 1]."""

    beta: float

    def __post_init__(self):
        if not (0.0 < self.beta <= 1.0):
            raise MarketError(f"AVaR level must be in (0, 1], got {self.beta}")


@dataclass(frozen=True)
class Entropic:
    """Entropic risk with aversion gamma > 0."""

    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0.0):
            raise MarketError(f"entropic aversion must be positive, got {self.gamma}")


@dataclass(frozen=True)
class RiskEvaluation:
    """value = E_P[maximizer * (-X)] - penalty, with maximizer a density."""

    value: float
    maximizer: np.ndarray
    penalty: float


def _check_reference(rm, p):
    if isinstance(rm, ScenarioPenalty):
        if p.shape != rm.reference.shape or np.max(np.abs(p - rm.reference)) > 1e-12:
            raise MarketError("risk measure was built for a different reference measure")


def evaluate(rm, x, p):
    """rho(X) with a maximizing density. x is terminal wealth per leaf, p the
    reference probabilities."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if x.shape != p.shape:
        raise MarketError("wealth and reference lengths differ")
    _check_reference(rm, p)
    if isinstance(rm, ScenarioPenalty):
        scores = rm.densities @ (p * (-x)) - rm.penalties
        k = int(np.argmax(scores))
        return RiskEvaluation(value=float(scores[k]),
                              maximizer=rm.densities[k].copy(),
                              penalty=float(rm.penalties[k]))
    if isinstance(rm, AVaR):
        z = _avar_maximizer(rm.beta, x, p)
        value = float(p @ (z * (-x)))
        # cross-check against the quantile form of the same value
        loss = -x
        order = np.lexsort((np.arange(x.shape[0]), -loss))
        cp = np.cumsum(p[order])
        k = min(int(np.searchsorted(cp, rm.beta, side="left")), x.shape[0] - 1)
        var = loss[order[k]]
        ru = var + float(p @ np.maximum(loss - var, 0.0)) / rm.beta
        if abs(value - ru) > 1e-9 * max(1.0, abs(value)):
            raise SolverError(
                f"AVaR dual value {value:.12g} disagrees with quantile form {ru:.12g}")
        return RiskEvaluation(value=value, maximizer=z, penalty=0.0)
    if isinstance(rm, Entropic):
        g = rm.gamma
        e = -g * x
        m = float(e.max())
        w = p * np.exp(e - m)
        s = float(w.sum())
        value = (np.log(s) + m) / g
        z = np.exp(e - m) / s
        pen = _entropy_penalty(g, z, p)
        return RiskEvaluation(value=float(value), maximizer=z, penalty=pen)
    raise MarketError(f"unknown risk measure {type(rm).__name__}")


def _avar_maximizer(beta, x, p):
    """Worst-case density: 1/beta above the beta-quantile of the loss, a
    proportional common value on the quantile tie group, 0 below. Losses are
    ordered descending with leaf index as the deterministic tie-break."""
    n = x.shape[0]
    loss = -x
    order = np.lexsort((np.arange(n), -loss))
    cp = np.cumsum(p[order])
    k = min(int(np.searchsorted(cp, beta, side="left")), n - 1)
    q = loss[order[k]]
    above = loss > q
    tied = loss == q
    p_above = float(p[above].sum())
    p_tied = float(p[tied].sum())
    kappa = max((1.0 - p_above / beta) / p_tied, 0.0)
    z = np.zeros(n)
    z[above] = 1.0 / beta
    z[tied] = kappa
    return z


def _entropy_penalty(gamma, z, p):
    mask = z > 0.0
    return float(np.sum(p[mask] * z[mask] * np.log(z[mask]))) / gamma


def penalty(rm, measure, p, tols=DEFAULT_TOLERANCES):
    """Minimal penalty alpha_min(Q) of a terminal measure; +inf when Q is
    outside the domain of the dual data."""
    q = measure.probabilities
    p = np.asarray(p, dtype=float)
    if q.shape != p.shape:
        raise MarketError("measure and reference lengths differ")
    _check_reference(rm, p)
    if isinstance(rm, ScenarioPenalty):
        # cheapest mixture of scenarios matching Q, in measure units
        K = rm.densities.shape[0]
        n = p.shape[0]
        rows = []
        for w in range(n):
            rows.append((rm.densities[:, w] * p[w], "==", q[w]))
        rows.append((np.ones(K), "==", 1.0))
        sol = solve_lp(make_lp(rm.penalties.astype(float), rows=rows), tols)
        if sol.status == "infeasible":
            return np.inf
        if sol.status != "optimal":
            raise SolverError(f"penalty LP {sol.status}")
        return float(sol.objective)
    if isinstance(rm, AVaR):
        z = q / p
        cap = 1.0 / rm.beta
        return 0.0 if float(z.max()) <= cap * (1.0 + 1e-9) else np.inf
    if isinstance(rm, Entropic):
        mask = q > 0.0
        return float(np.sum(q[mask] * np.log(q[mask] / p[mask]))) / rm.gamma
    raise MarketError(f"unknown risk measure {type(rm).__name__}")


@dataclass(frozen=True)
class AxiomReport:
    trials: int
    failures: tuple
    max_violation: float

    @property
    def ok(self):
        return len(self.failures) == 0


def axiom_harness(rm, p, n_trials=1000, seed=0, tol=1e-9):
    """Random-trial check of monotonicity, cash invariance, and convexity.
    Violations beyond tol * max(1, |values|) are recorded."""
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    rng = np.random.RandomState(seed)
    failures = []
    worst = 0.0

    def rho(x):
        return evaluate(rm, x, p).value

    for t in range(n_trials):
        x1 = rng.randn(n) * 2.0
        x2 = rng.randn(n) * 2.0
        scale = max(1.0, float(np.abs(x1).max()), float(np.abs(x2).max()))
        # monotonicity: larger wealth, smaller risk
        higher = x1 + rng.rand(n) * 2.0
        v = rho(higher) - rho(x1)
        worst = max(worst, v)
        if v > tol * scale:
            failures.append({"trial": t, "axiom": "monotonicity", "violation": v})
        # cash invariance
        c = float(rng.uniform(-2.0, 2.0))
        v = abs(rho(x1 + c) - (rho(x1) - c))
        worst = max(worst, v)
        if v > tol * scale:
            failures.append({"trial": t, "axiom": "cash_invariance", "violation": v})
        # convexity
        lam = float(rng.rand())
        v = rho(lam * x1 + (1.0 - lam) * x2) \
            - (lam * rho(x1) + (1.0 - lam) * rho(x2))
        worst = max(worst, v)
        if v > tol * scale:
            failures.append({"trial": t, "axiom": "convexity", "violation": v})
    return AxiomReport(trials=n_trials, failures=tuple(failures),
                       max_violation=float(worst))


def load_risk_config(text, reference):
    """Parse a risk configuration document against the reference measure.

    {"type": "avar", "beta": b} | {"type": "entropic", "gamma": g} |
    {"type": "scenarios", "scenarios": [{"density": [...], "penalty": a}...]}
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MarketError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "type" not in doc:
        raise MarketError("risk config must be an object with a 'type' field")
    kind = doc["type"]
    if kind == "avar":
        if "beta" not in doc:
            raise MarketError("avar risk config needs 'beta'")
        return AVaR(beta=float(doc["beta"]))
    if kind == "entropic":
        if "gamma" not in doc:
            raise MarketError("entropic risk config needs 'gamma'")
        return Entropic(gamma=float(doc["gamma"]))
    if kind == "scenarios":
        scenarios = doc.get("scenarios")
        if not isinstance(scenarios, list) or not scenarios:
            raise MarketError("scenarios risk config needs a non-empty 'scenarios' list")
        p = np.asarray(reference.probabilities, dtype=float)
        dens = []
        pens = []
        for k, sc in enumerate(scenarios):
            if not isinstance(sc, dict) or "density" not in sc:
                raise MarketError(f"scenario {k} needs a 'density'")
            z = np.asarray(sc["density"], dtype=float)
            if z.shape != p.shape:
                raise MarketError(
                    f"scenario {k} density length {z.shape} does not match {p.shape}")
            dens.append(z)
            pens.append(float(sc.get("penalty", 0.0)))
        return ScenarioPenalty(densities=np.array(dens),
                               penalties=np.array(pens), reference=p)
    raise MarketError(f"unknown risk type {kind!r}")

"""Excess-hazard model core.

The excess hazard follows a general hazard (GH) structure

    h_E(t; x, w) = h0(t * e^{w'alpha}; theta) * e^{x'beta},
    H_E(t; x, w) = H0(t * e^{w'alpha}; theta) * e^{x'beta - w'alpha},

which nests proportional hazards (alpha = 0), accelerated hazards
(beta = 0), and accelerated failure time (alpha = beta with w = x).

Unobserved individual heterogeneity enters as a positive unit-mean frailty
multiplying the excess hazard.  Marginal (frailty-integrated) quantities are
closed forms in the frailty Laplace transform L(s):

    marginal net survival      = L(H_E(t)),
    marginal excess hazard     = (-L'/L)(H_E(t)) * h_E(t),
    marginal all-cause survival = exp(-[H_P(age+t) - H_P(age)]) * L(H_E(t)).

Gamma and inverse Gaussian frailty families are supported; the mean is
hard-coded to 1 for identifiability, so the single parameter ``b`` is the
frailty variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import lifetable as lt
from .baseline import family_of_params

#: below this variance the frailty is treated as the exact no-frailty limit
B_ZERO_THRESHOLD = 1e-8

FRAILTY_FAMILIES = ("none", "gamma", "ig")


@dataclass(frozen=True)
class FrailtySpec:
    """Frailty family (``none``/``gamma``/``ig``) and variance ``b`` (mean fixed at 1)."""

    family: str = "none"
    b: float = 0.0

    def __post_init__(self):
        if self.family not in FRAILTY_FAMILIES:
            raise ValueError(
                f"unknown frailty family {self.family!r}; choose from {FRAILTY_FAMILIES}"
            )
        if self.family != "none" and not (math.isfinite(self.b) and self.b >= 0.0):
            raise ValueError(f"frailty variance must be >= 0 and finite, got {self.b!r}")


@dataclass(frozen=True)
class CovariateMapping:
    """Names of the hazard-level (``x``) and time-level (``w``) covariate columns."""

    x_names: tuple = ()
    w_names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "x_names", tuple(self.x_names))
        object.__setattr__(self, "w_names", tuple(self.w_names))
        for label, names in (("x", self.x_names), ("w", self.w_names)):
            if len(set(names)) != len(names):
                raise ValueError(f"duplicate column in {label} mapping: {names}")

    @property
    def w_subset_of_x(self) -> bool:
        return set(self.w_names) <= set(self.x_names)


@dataclass(frozen=True, eq=False)
class GHParams:
    """General-hazard parameters: baseline block plus time-level and hazard-level effects."""

    theta: object  # PGWParams or LogNormalParams
    alpha: np.ndarray = ()
    beta: np.ndarray = ()

    def __post_init__(self):
        object.__setattr__(self, "alpha", np.atleast_1d(np.asarray(self.alpha, dtype=float)))
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if not (np.all(np.isfinite(self.alpha)) and np.all(np.isfinite(self.beta))):
            raise ValueError("GH coefficients must be finite")


def _effects(g: GHParams, x, w):
    """Linear predictors (w'alpha, x'beta) with dimension checks."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if x.shape[-1] != g.beta.shape[0] and g.beta.shape[0] > 0:
        raise ValueError(f"x has {x.shape[-1]} entries but beta has {g.beta.shape[0]}")
    if w.shape[-1] != g.alpha.shape[0] and g.alpha.shape[0] > 0:
        raise ValueError(f"w has {w.shape[-1]} entries but alpha has {g.alpha.shape[0]}")
    eta_w = w @ g.alpha if g.alpha.shape[0] else np.zeros(w.shape[:-1])
    eta_x = x @ g.beta if g.beta.shape[0] else np.zeros(x.shape[:-1])
    return eta_w, eta_x


def excess_hazard(t, x, w, g: GHParams):
    """GH excess hazard h0(t e^{w'alpha}) e^{x'beta} at ``t > 0``."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0.0):
        raise ValueError("excess_hazard requires t > 0")
    eta_w, eta_x = _effects(g, x, w)
    fam = family_of_params(g.theta)
    return fam.hazard(t * np.exp(eta_w), g.theta) * np.exp(eta_x)


def excess_cum_hazard(t, x, w, g: GHParams):
    """GH cumulative excess hazard H0(t e^{w'alpha}) e^{x'beta - w'alpha} at ``t >= 0``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ValueError("excess_cum_hazard requires t >= 0")
    eta_w, eta_x = _effects(g, x, w)
    fam = family_of_params(g.theta)
    return fam.cum_hazard(t * np.exp(eta_w), g.theta) * np.exp(eta_x - eta_w)


def laplace(f: FrailtySpec, s):
    """Frailty Laplace transform L(s) = E[exp(-s * frailty)] for ``s >= 0``.

    Gamma (unit mean, variance b): (1 + b s)^(-1/b), computed as
    exp(-log1p(b s)/b).  Inverse Gaussian: exp((1 - sqrt(1+2bs))/b), computed
    in the rationalised form exp(-2s / (1 + sqrt(1+2bs))).  Variances below
    ``B_ZERO_THRESHOLD`` use the exact no-frailty limit exp(-s).
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0):
        raise ValueError("laplace requires s >= 0")
    if f.family == "none":
        raise ValueError("laplace requires a frailty family (gamma or ig)")
    if f.b < B_ZERO_THRESHOLD:
        return np.exp(-s)
    if f.family == "gamma":
        return np.exp(-np.log1p(f.b * s) / f.b)
    return np.exp(-2.0 * s / (1.0 + np.sqrt(1.0 + 2.0 * f.b * s)))


def laplace_log_deriv(f: FrailtySpec, s):
    """Conditional frailty mean among survivors, -L'(s)/L(s), for ``s >= 0``.

    Gamma: 1/(1 + b s); inverse Gaussian: 1/sqrt(1 + 2 b s).  Equals 1 at
    s = 0 (unit mean) and is nonincreasing in s (survivor selection).
    """
    s = np.asarray(s, dtype=float)
    if np.any(s < 0.0):
        raise ValueError("laplace_log_deriv requires s >= 0")
    if f.family == "none" or f.b < B_ZERO_THRESHOLD:
        return np.ones_like(s)
    if f.family == "gamma":
        return 1.0 / (1.0 + f.b * s)
    return 1.0 / np.sqrt(1.0 + 2.0 * f.b * s)


def conditional_net_survival(t, x, w, g: GHParams):
    """Net survival for frailty fixed at 1 (or no frailty): exp(-H_E(t))."""
    return np.exp(-excess_cum_hazard(t, x, w, g))


def marginal_net_survival(t, x, w, g: GHParams, f: FrailtySpec):
    """Frailty-marginalised net survival L(H_E(t)); exp(-H_E) when family is none."""
    he = excess_cum_hazard(t, x, w, g)
    if f.family == "none":
        return np.exp(-he)
    return laplace(f, he)


def marginal_hazard(t, x, w, key: lt.LifeTableKey, table: lt.LifeTable, g: GHParams,
                    f: FrailtySpec):
    """Observable (all-cause) marginal hazard h_P + E[frailty | alive] * h_E at ``t > 0``."""
    he_cum = excess_cum_hazard(t, x, w, g)
    weight = laplace_log_deriv(f, he_cum) if f.family != "none" else 1.0
    return lt.pop_hazard(table, key, t) + weight * excess_hazard(t, x, w, g)


def marginal_all_cause_survival(t, x, w, key: lt.LifeTableKey, table: lt.LifeTable,
                                g: GHParams, f: FrailtySpec):
    """Marginal all-cause survival exp(-Delta H_P(t)) * marginal net survival."""
    return np.exp(-lt.pop_cum_hazard(table, key, t)) * marginal_net_survival(t, x, w, g, f)


def simulate_event_time(u, x, w, g: GHParams, lam=1.0):
    """Inverse-transform draw of the excess-model event time.

    ``u`` is a uniform(0,1) draw and ``lam`` the (positive) frailty value of
    the subject; ``lam = 1`` gives the no-frailty model.  The cumulative-
    hazard target is q = -log(1-u) * e^{w'alpha - x'beta} / lam and the
    returned time is quantile(q) / e^{w'alpha}, so that
    lam * H_E(t) = -log(1-u) holds exactly.
    """
    u = np.asarray(u, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if np.any((u <= 0.0) | (u >= 1.0)):
        raise ValueError("u must lie strictly inside (0, 1)")
    if np.any(lam <= 0.0):
        raise ValueError("frailty value must be positive")
    eta_w, eta_x = _effects(g, x, w)
    q = -np.log1p(-u) * np.exp(eta_w - eta_x) / lam
    fam = family_of_params(g.theta)
    return fam.quantile(q, g.theta) * np.exp(-eta_w)


# -- gradient helpers used by the likelihood ------------------------------

def _frailty_weight_terms(family: str, b: float, he):
    """Per-record pieces of the frailty log-likelihood and its gradient.

    For cumulative excess hazards ``he`` returns ``(log_lap, weight, dw_dhe,
    dw_dlogb, dlog_lap_dlogb)`` where ``weight`` is the conditional frailty
    mean (-L'/L)(he); ``dw_dhe`` is its derivative in ``he`` and the last two
    are derivatives with respect to log b.  The derivative of log L with
    respect to ``he`` equals ``-weight`` for any family.
    """
    if b < B_ZERO_THRESHOLD:
        zeros = np.zeros_like(he)
        return -he, np.ones_like(he), zeros, zeros, zeros
    if family == "gamma":
        log1pbh = np.log1p(b * he)
        weight = 1.0 / (1.0 + b * he)
        log_lap = -log1pbh / b
        dw_dhe = -b * weight**2
        dw_dlogb = -b * he * weight**2
        dlog_lap_dlogb = log1pbh / b - he * weight
        return log_lap, weight, dw_dhe, dw_dlogb, dlog_lap_dlogb
    if family == "ig":
        root = np.sqrt(1.0 + 2.0 * b * he)
        weight = 1.0 / root
        log_lap = -2.0 * he / (1.0 + root)
        dw_dhe = -b / root**3
        dw_dlogb = -b * he / root**3
        dlog_lap_dlogb = 2.0 * he / (1.0 + root) - he / root
        return log_lap, weight, dw_dhe, dw_dlogb, dlog_lap_dlogb
    raise ValueError(f"unsupported frailty family {family!r}")

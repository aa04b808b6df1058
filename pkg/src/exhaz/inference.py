"""Likelihood evaluation, maximum-likelihood fitting, and Wald inference.

Fitting maximises the excess-hazard log-likelihood over a transformed
parameter vector ``psi`` in which positive parameters (baseline scale and
shapes, the frailty variance, the Log-Normal sd) are represented on the log
scale and regression coefficients are untransformed, so the optimisation is
unconstrained.  The default initialisation is two-stage: a proportional
hazards submodel (no time-level effects, no frailty) is fitted first and the
full model starts from its solution with ``alpha = 0`` and ``b = 1``.

Likelihood forms (the parameter-free background survival factor is dropped):

    classical:  sum_i [ d_i log(hP_i + hE_i(t_i)) - HE_i(t_i) ]
    frailty:    sum_i [ d_i log(hP_i + wgt(HE_i) hE_i) + log L(HE_i) ]

where ``wgt = -L'/L`` is the conditional frailty mean among survivors.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg, optimize, stats

from . import lifetable as lt
from .baseline import family_of_params, get_family
from .model import (
    B_ZERO_THRESHOLD,
    FRAILTY_FAMILIES,
    CovariateMapping,
    FrailtySpec,
    GHParams,
    _frailty_weight_terms,
)

_PENALTY = 1e10  # objective value returned to the optimiser at non-finite points


# -- data containers -------------------------------------------------------

@dataclass(frozen=True)
class PatientRecord:
    """One subject: follow-up time, vital status, covariates, life-table key."""

    time: float
    status: int
    x: np.ndarray
    w: np.ndarray
    key: lt.LifeTableKey

    def __post_init__(self):
        if not (math.isfinite(self.time) and self.time > 0.0):
            raise ValueError(f"time must be positive and finite, got {self.time!r}")
        if self.status not in (0, 1):
            raise ValueError(f"status must be 0 or 1, got {self.status!r}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented cohort data.

    ``x`` holds hazard-level covariates (columns ``x_names``), ``w`` the
    time-level covariates; ``age``/``year``/``strata`` form each subject's
    life-table key.  ``extras`` may carry additional label columns (e.g. a
    stage label) usable for subgrouping but not entering the model.
    """

    time: np.ndarray
    status: np.ndarray
    x: np.ndarray
    w: np.ndarray
    x_names: tuple
    w_names: tuple
    age: np.ndarray
    year: np.ndarray
    strata: tuple
    stratum_names: tuple = ()
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        time = np.ascontiguousarray(self.time, dtype=float)
        status = np.ascontiguousarray(self.status, dtype=np.int8)
        n = time.shape[0]

        def as_matrix(arr):
            a = np.ascontiguousarray(arr, dtype=float)
            if a.ndim == 2:
                return a
            return a.reshape(n, 0) if a.size == 0 else a.reshape(n, -1)

        x = as_matrix(self.x)
        w = as_matrix(self.w)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "x_names", tuple(self.x_names))
        object.__setattr__(self, "w_names", tuple(self.w_names))
        object.__setattr__(self, "age", np.ascontiguousarray(self.age, dtype=float))
        object.__setattr__(self, "year", np.ascontiguousarray(self.year, dtype=float))
        object.__setattr__(self, "strata", tuple(tuple(s) for s in self.strata))
        object.__setattr__(self, "stratum_names", tuple(self.stratum_names))
        if not np.all(np.isfinite(time)) or np.any(time <= 0.0):
            raise ValueError("all times must be positive and finite")
        if not np.all((status == 0) | (status == 1)):
            raise ValueError("status must be 0 or 1")
        for name, arr in (("x", x), ("w", w)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in covariate block {name!r}")
        if x.shape[1] != len(self.x_names) or w.shape[1] != len(self.w_names):
            raise ValueError("covariate name lists must match matrix widths")
        for arr_name in ("status", "age", "year"):
            if getattr(self, arr_name).shape[0] != n:
                raise ValueError(f"column {arr_name!r} has wrong length")
        if len(self.strata) != n:
            raise ValueError("strata tuple has wrong length")

    @property
    def n(self) -> int:
        return self.time.shape[0]

    @property
    def n_events(self) -> int:
        return int(self.status.sum())

    def records(self):
        """Iterate over :class:`PatientRecord` views of the rows."""
        for i in range(self.n):
            yield PatientRecord(
                time=float(self.time[i]),
                status=int(self.status[i]),
                x=self.x[i],
                w=self.w[i],
                key=lt.LifeTableKey(float(self.age[i]), float(self.year[i]), self.strata[i]),
            )

    @classmethod
    def from_records(cls, records, x_names, w_names, stratum_names=()):
        recs = list(records)
        return cls(
            time=np.array([r.time for r in recs]),
            status=np.array([r.status for r in recs]),
            x=np.array([np.atleast_1d(r.x) for r in recs], dtype=float),
            w=np.array([np.atleast_1d(r.w) for r in recs], dtype=float),
            x_names=tuple(x_names),
            w_names=tuple(w_names),
            age=np.array([r.key.age for r in recs]),
            year=np.array([r.key.year for r in recs]),
            strata=tuple(r.key.stratum for r in recs),
            stratum_names=tuple(stratum_names),
        )

    def subset(self, mask) -> "Dataset":
        """Row subset for a boolean mask (used for subgroup analyses)."""
        mask = np.asarray(mask, dtype=bool)
        idx = np.nonzero(mask)[0]
        return Dataset(
            time=self.time[idx],
            status=self.status[idx],
            x=self.x[idx],
            w=self.w[idx],
            x_names=self.x_names,
            w_names=self.w_names,
            age=self.age[idx],
            year=self.year[idx],
            strata=tuple(self.strata[i] for i in idx),
            stratum_names=self.stratum_names,
            extras={k: v[idx] for k, v in self.extras.items()},
        )

    def with_covariates(self, x_names, w_names) -> "Dataset":
        """Re-select x/w columns by name from the union of current columns and extras."""
        pool = {name: self.x[:, j] for j, name in enumerate(self.x_names)}
        pool.update({name: self.w[:, j] for j, name in enumerate(self.w_names)})
        pool.update(self.extras)
        for name in tuple(x_names) + tuple(w_names):
            if name not in pool:
                raise ValueError(f"unknown covariate column {name!r}")
        stack = lambda names: (
            np.column_stack([pool[n] for n in names]) if names else np.empty((self.n, 0))
        )
        return Dataset(
            time=self.time,
            status=self.status,
            x=stack(tuple(x_names)),
            w=stack(tuple(w_names)),
            x_names=tuple(x_names),
            w_names=tuple(w_names),
            age=self.age,
            year=self.year,
            strata=self.strata,
            stratum_names=self.stratum_names,
            extras=self.extras,
        )

    def fingerprint(self) -> str:
        """Stable hash of the observations; used to guard AIC comparisons.

        Only the response data enter the hash (times, statuses, life-table
        keys) so that fits with different covariate subsets of one cohort
        remain comparable, while fits on different cohorts are rejected.
        """
        h = hashlib.sha256()
        for arr in (self.time, self.status.astype(np.int8), self.age, self.year):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update("|".join(",".join(s) for s in self.strata).encode())
        return h.hexdigest()[:16]


# -- model definition ---------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """Baseline family + frailty family (+ optional covariate mapping)."""

    baseline: str = "pgw"
    frailty: str = "none"
    mapping: CovariateMapping | None = None

    def __post_init__(self):
        get_family(self.baseline)
        if self.frailty not in FRAILTY_FAMILIES:
            raise ValueError(
                f"unknown frailty family {self.frailty!r}; choose from {FRAILTY_FAMILIES}"
            )

    @property
    def has_frailty(self) -> bool:
        return self.frailty != "none"

    def label(self) -> str:
        return f"{self.baseline}+{self.frailty}"


@dataclass(frozen=True)
class OptimizerOptions:
    """Quasi-Newton settings; gradients are analytic unless ``gradient='numeric'``."""

    maxiter: int = 2000
    gtol: float = 1e-6
    ftol: float = 1e-12
    multistart: int = 5
    jitter_sd: float = 0.3
    seed: int = 0
    gradient: str = "analytic"


@dataclass(frozen=True)
class Convergence:
    converged: bool
    iterations: int
    gradient_norm: float
    messages: tuple
    attempts: int = 1


@dataclass(frozen=True, eq=False)
class FitResult:
    """Maximum-likelihood fit summary on both parameter scales."""

    spec: ModelSpec
    params: GHParams
    frailty: FrailtySpec
    psi: np.ndarray
    transformed_names: tuple
    natural_names: tuple
    loglik: float
    n_params: int
    covariance: np.ndarray | None
    std_errors: np.ndarray | None
    std_errors_natural: np.ndarray | None
    se_valid: bool
    convergence: Convergence
    n: int
    n_events: int
    data_fingerprint: str
    x_names: tuple
    w_names: tuple
    label: str = ""

    @property
    def aic(self) -> float:
        return 2.0 * self.n_params - 2.0 * self.loglik

    def natural_estimates(self) -> np.ndarray:
        return _to_natural(self.psi, self.transformed_names)

    def to_json_dict(self) -> dict:
        return {
            "baseline": self.spec.baseline,
            "frailty": self.spec.frailty,
            "x_names": list(self.x_names),
            "w_names": list(self.w_names),
            "psi": [float(v) for v in self.psi],
            "transformed_names": list(self.transformed_names),
            "natural_names": list(self.natural_names),
            "loglik": float(self.loglik),
            "n_params": self.n_params,
            "covariance": None
            if self.covariance is None
            else [[float(v) for v in row] for row in self.covariance],
            "se_valid": self.se_valid,
            "converged": self.convergence.converged,
            "iterations": self.convergence.iterations,
            "gradient_norm": float(self.convergence.gradient_norm),
            "messages": list(self.convergence.messages),
            "attempts": self.convergence.attempts,
            "n": self.n,
            "n_events": self.n_events,
            "data_fingerprint": self.data_fingerprint,
            "label": self.label,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "FitResult":
        spec = ModelSpec(baseline=d["baseline"], frailty=d["frailty"])
        psi = np.array(d["psi"], dtype=float)
        fam = get_family(spec.baseline)
        params, frailty = _unpack(psi, fam, spec.frailty,
                                  len(d["w_names"]), len(d["x_names"]))
        cov = None if d["covariance"] is None else np.array(d["covariance"], dtype=float)
        se = None if cov is None else np.sqrt(np.diag(cov))
        se_nat = (
            None
            if se is None
            else se * _natural_scale_jacobian(psi, tuple(d["transformed_names"]))
        )
        return cls(
            spec=spec,
            params=params,
            frailty=frailty,
            psi=psi,
            transformed_names=tuple(d["transformed_names"]),
            natural_names=tuple(d["natural_names"]),
            loglik=d["loglik"],
            n_params=d["n_params"],
            covariance=cov,
            std_errors=se,
            std_errors_natural=se_nat,
            se_valid=d["se_valid"],
            convergence=Convergence(
                converged=d["converged"],
                iterations=d["iterations"],
                gradient_norm=d["gradient_norm"],
                messages=tuple(d["messages"]),
                attempts=d["attempts"],
            ),
            n=d["n"],
            n_events=d["n_events"],
            data_fingerprint=d["data_fingerprint"],
            x_names=tuple(d["x_names"]),
            w_names=tuple(d["w_names"]),
            label=d.get("label", ""),
        )


# -- parameter packing -------------------------------------------------------

def _transformed_names(fam, w_names, x_names, frailty: str) -> tuple:
    names = list(fam.transformed_names)
    names += [f"alpha:{n}" for n in w_names]
    names += [f"beta:{n}" for n in x_names]
    if frailty != "none":
        names.append("log_b")
    return tuple(names)


def _natural_names(fam, w_names, x_names, frailty: str) -> tuple:
    names = list(fam.natural_names)
    names += [f"alpha:{n}" for n in w_names]
    names += [f"beta:{n}" for n in x_names]
    if frailty != "none":
        names.append("b")
    return tuple(names)


def _natural_scale_jacobian(psi, transformed_names) -> np.ndarray:
    """d(natural)/d(transformed) for the elementwise exp/identity map."""
    return np.array(
        [math.exp(v) if name.startswith("log_") else 1.0
         for name, v in zip(transformed_names, psi)]
    )


def _to_natural(psi, transformed_names) -> np.ndarray:
    return np.array(
        [math.exp(v) if name.startswith("log_") else v
         for name, v in zip(transformed_names, psi)]
    )


def _pack(g: GHParams, fr: FrailtySpec | None, fam) -> np.ndarray:
    parts = [fam.to_transformed(g.theta), g.alpha, g.beta]
    if fr is not None and fr.family != "none":
        parts.append([math.log(max(fr.b, B_ZERO_THRESHOLD))])
    return np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts])


def _unpack(psi, fam, frailty: str, p_t: int, p: int):
    k = fam.n_params
    theta = fam.from_transformed(psi[:k])
    alpha = np.array(psi[k:k + p_t])
    beta = np.array(psi[k + p_t:k + p_t + p])
    g = GHParams(theta=theta, alpha=alpha, beta=beta)
    if frailty == "none":
        return g, FrailtySpec("none", 0.0)
    return g, FrailtySpec(frailty, math.exp(psi[k + p_t + p]))


# -- likelihood ---------------------------------------------------------------

class _FitContext:
    """Precomputed per-dataset arrays shared by every objective evaluation."""

    def __init__(self, data: Dataset, table: lt.LifeTable, baseline: str, frailty: str):
        self.fam = get_family(baseline)
        self.frailty = frailty
        self.t = data.time
        self.X = data.x
        self.W = data.w
        self.ev = data.status.astype(bool)
        codes = table.stratum_codes(data.strata)
        at = data.time[self.ev]
        self.hp_ev = table.rates_at(data.age[self.ev] + at, data.year[self.ev] + at,
                                    codes[self.ev])
        self.t_ev = self.t[self.ev]
        self.X_ev = self.X[self.ev]
        self.W_ev = self.W[self.ev]
        self.k_theta = self.fam.n_params
        self.p_t = self.W.shape[1]
        self.p = self.X.shape[1]
        self.n_params = self.k_theta + self.p_t + self.p + (frailty != "none")

    def value_and_grad(self, psi):
        """Negative log-likelihood and its gradient at transformed ``psi``."""
        k, p_t, p = self.k_theta, self.p_t, self.p
        theta_t = psi[:k]
        alpha = psi[k:k + p_t]
        beta = psi[k + p_t:k + p_t + p]
        ev = self.ev
        with np.errstate(all="ignore"):
            eta_w = self.W @ alpha if p_t else np.zeros(self.t.shape[0])
            eta_x = self.X @ beta if p else np.zeros(self.t.shape[0])
            s = self.t * np.exp(eta_w)
            H0, s_h0, dH0 = self.fam.cum_block(s, theta_t)
            e_xw = np.exp(eta_x - eta_w)
            HE = H0 * e_xw
            h0_ev, dlog_h0, dlogs = self.fam.haz_block(s[ev], theta_t)
            hE_ev = h0_ev * np.exp(eta_x[ev])

            if self.frailty != "none":
                if psi[-1] > 700.0:  # exp would overflow; treat as infeasible
                    return _PENALTY, np.zeros(self.n_params)
                b = math.exp(psi[-1])
                log_lap, wgt, dw_dhe, dw_dlogb, dll_dlogb = _frailty_weight_terms(
                    self.frailty, b, HE
                )
                wgt_ev = wgt[ev]
                D_ev = self.hp_ev + wgt_ev * hE_ev
                loglik = np.sum(np.log(D_ev)) + np.sum(log_lap)
            else:
                D_ev = self.hp_ev + hE_ev
                loglik = np.sum(np.log(D_ev)) - np.sum(HE)

            if not np.isfinite(loglik):
                return _PENALTY, np.zeros(self.n_params)

            # dl/d(hE) * hE at events, and dl/d(HE) at all records
            if self.frailty != "none":
                a_ev = wgt_ev * hE_ev / D_ev
                r2 = -wgt
                r2[ev] += hE_ev * dw_dhe[ev] / D_ev
            else:
                a_ev = hE_ev / D_ev
                r2 = np.full(HE.shape[0], -1.0)

            grad = np.empty(self.n_params)
            grad[:k] = dlog_h0 @ a_ev + dH0 @ (r2 * e_xw)
            if p_t:
                grad[k:k + p_t] = self.W_ev.T @ (a_ev * dlogs) + self.W.T @ (
                    r2 * (s_h0 * e_xw - HE)
                )
            if p:
                grad[k + p_t:k + p_t + p] = self.X_ev.T @ a_ev + self.X.T @ (r2 * HE)
            if self.frailty != "none":
                grad[-1] = np.sum(hE_ev * dw_dlogb[ev] / D_ev) + np.sum(dll_dlogb)

            if not np.all(np.isfinite(grad)):
                return _PENALTY, np.zeros(self.n_params)
            return -float(loglik), -grad

    def value(self, psi):
        return self.value_and_grad(psi)[0]


def _exact_loglik(data: Dataset, table: lt.LifeTable, g: GHParams,
                  fr: FrailtySpec | None) -> float:
    """Permutation-invariant log-likelihood via correctly-rounded summation."""
    ev = data.status.astype(bool)
    with np.errstate(all="ignore"):
        eta_w = data.w @ g.alpha if g.alpha.shape[0] else np.zeros(data.n)
        eta_x = data.x @ g.beta if g.beta.shape[0] else np.zeros(data.n)
        fam = family_of_params(g.theta)
        s = data.time * np.exp(eta_w)
        HE = fam.cum_hazard(s, g.theta) * np.exp(eta_x - eta_w)
        hE_ev = fam.hazard(s[ev], g.theta) * np.exp(eta_x[ev])
        codes = table.stratum_codes(data.strata)
        hp_ev = table.rates_at(data.age[ev] + data.time[ev],
                               data.year[ev] + data.time[ev], codes[ev])
        if fr is not None and fr.family != "none":
            log_lap, wgt, *_ = _frailty_weight_terms(fr.family, fr.b, HE)
            contrib = np.array(log_lap, dtype=float)
            contrib[ev] += np.log(hp_ev + wgt[ev] * hE_ev)
        else:
            contrib = -HE
            contrib[ev] += np.log(hp_ev + hE_ev)
    if not np.all(np.isfinite(contrib)):
        return float("-inf")
    return math.fsum(contrib.tolist())


def loglik_classical(data: Dataset, table: lt.LifeTable, g: GHParams) -> float:
    """Log-likelihood of the no-frailty model (background factor dropped).

    Returns ``-inf`` when any per-record term is non-finite.  The reduction
    uses correctly-rounded summation, so the value is exactly invariant to
    record permutation.
    """
    return _exact_loglik(data, table, g, None)


def loglik_frailty(data: Dataset, table: lt.LifeTable, g: GHParams,
                   fr: FrailtySpec) -> float:
    """Log-likelihood of the frailty model; reduces to the classical one as b -> 0."""
    if fr.family == "none":
        return _exact_loglik(data, table, g, None)
    return _exact_loglik(data, table, g, fr)


# -- Hessian, intervals, AIC --------------------------------------------------

def hessian_std_errors(negloglik, psi, grad=None):
    """Covariance and standard errors from a central-difference Hessian at ``psi``.

    Uses steps ``h_j = max(1e-4, 1e-4 |psi_j|)``.  When ``grad`` is supplied
    the Hessian is built by differencing the gradient (same steps); otherwise
    from second differences of ``negloglik``.  Returns ``(covariance,
    std_errors, valid, message)``; a non-finite or non-positive-definite
    Hessian flags the result invalid instead of raising.
    """
    psi = np.asarray(psi, dtype=float)
    k = psi.shape[0]
    h = np.maximum(1e-4, 1e-4 * np.abs(psi))
    H = np.empty((k, k))
    if grad is not None:
        for j in range(k):
            e = np.zeros(k)
            e[j] = h[j]
            H[:, j] = (np.asarray(grad(psi + e)) - np.asarray(grad(psi - e))) / (2.0 * h[j])
    else:
        f0 = negloglik(psi)
        for j in range(k):
            ej = np.zeros(k)
            ej[j] = h[j]
            H[j, j] = (negloglik(psi + ej) - 2.0 * f0 + negloglik(psi - ej)) / h[j] ** 2
            for m in range(j + 1, k):
                em = np.zeros(k)
                em[m] = h[m]
                H[j, m] = H[m, j] = (
                    negloglik(psi + ej + em)
                    - negloglik(psi + ej - em)
                    - negloglik(psi - ej + em)
                    + negloglik(psi - ej - em)
                ) / (4.0 * h[j] * h[m])
    if not np.all(np.isfinite(H)):
        return None, None, False, "non-finite Hessian"
    asym = float(np.max(np.abs(H - H.T)))
    scale = float(np.max(np.abs(H)))
    # gradient differencing carries direction-dependent truncation error, so
    # its symmetry tolerance is looser than the value-difference stencil's
    asym_tol = 1e-6 if grad is None else 1e-4
    if scale > 0 and asym > asym_tol * scale:
        return None, None, False, "asymmetric Hessian"
    H = 0.5 * (H + H.T)
    try:
        factor = linalg.cho_factor(H)
        cov = linalg.cho_solve(factor, np.eye(k))
    except linalg.LinAlgError:
        return None, None, False, "Hessian not positive definite"
    se = np.sqrt(np.diag(cov))
    if not np.all(np.isfinite(se)):
        return None, None, False, "non-finite standard errors"
    return cov, se, True, ""


@dataclass(frozen=True)
class WaldIntervals:
    """Natural-scale point estimates and Wald intervals, plus caveat notes."""

    names: tuple
    estimates: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    notes: tuple = ()


def wald_ci(result: FitResult, level: float = 0.95) -> WaldIntervals:
    """Wald intervals built on the transformed scale and mapped back through exp.

    Raises :class:`ValueError` when the fit's standard errors are invalid.
    """
    if not result.se_valid or result.std_errors is None:
        raise ValueError("fit has no valid standard errors; intervals unavailable")
    if not (0.0 < level < 1.0):
        raise ValueError("level must be in (0, 1)")
    z = stats.norm.ppf(0.5 + level / 2.0)
    lo_t = result.psi - z * result.std_errors
    hi_t = result.psi + z * result.std_errors
    est = _to_natural(result.psi, result.transformed_names)
    lo = _to_natural(lo_t, result.transformed_names)
    hi = _to_natural(hi_t, result.transformed_names)
    notes = []
    if result.spec.has_frailty and result.frailty.b < 0.02:
        notes.append(
            "frailty variance estimate is near the b=0 boundary; "
            "Wald intervals on log b may be unreliable"
        )
    return WaldIntervals(
        names=result.natural_names,
        estimates=est,
        lower=lo,
        upper=hi,
        level=level,
        notes=tuple(notes),
    )


def aic_compare(fits) -> list:
    """Rank fits by AIC ascending, ties broken by fewer parameters.

    All fits must come from the same dataset (checked via fingerprints).
    """
    fits = list(fits)
    if not fits:
        raise ValueError("no fits to compare")
    prints = {f.data_fingerprint for f in fits}
    if len(prints) > 1:
        raise ValueError("fits were produced on different datasets; AIC not comparable")
    return sorted(fits, key=lambda f: (f.aic, f.n_params))


# -- fitting -------------------------------------------------------------------

def _minimize(ctx: _FitContext, psi0, opts: OptimizerOptions):
    common = dict(
        method="L-BFGS-B",
        options={"maxiter": opts.maxiter, "ftol": opts.ftol, "gtol": opts.gtol},
    )
    if opts.gradient == "analytic":
        return optimize.minimize(ctx.value_and_grad, psi0, jac=True, **common)
    return optimize.minimize(ctx.value, psi0, **common)


def _optimize_with_restarts(ctx, psi0, opts):
    """First attempt from psi0; on failure, jittered restarts.

    Keeps the lowest objective value seen, but prefers a cleanly converged
    optimum whenever its objective is within a small margin of the best
    abnormal termination (line searches often die on flat frailty ridges at
    points statistically indistinguishable from the converged one).
    """
    messages = []
    attempts = 0
    best_any = None
    best_ok = None

    def consider(res):
        nonlocal best_any, best_ok
        if not np.isfinite(res.fun) or res.fun >= _PENALTY:
            return
        if best_any is None or res.fun < best_any.fun:
            best_any = res
        if res.success and (best_ok is None or res.fun < best_ok.fun):
            best_ok = res

    res = _minimize(ctx, psi0, opts)
    attempts += 1
    consider(res)
    first_ok = res.success and np.isfinite(res.fun) and res.fun < _PENALTY
    if not first_ok:
        messages.append(f"initial optimisation failed: {res.message}")
        rng = np.random.default_rng(opts.seed)
        for _ in range(opts.multistart):
            start = psi0 + rng.normal(scale=opts.jitter_sd, size=psi0.shape[0])
            res_j = _minimize(ctx, start, opts)
            attempts += 1
            consider(res_j)
            if res_j.success and np.isfinite(res_j.fun) and res_j.fun < _PENALTY:
                break
    # Prefer a cleanly converged point unless the abnormal one is better by
    # more than a quarter likelihood unit (flat-ridge drift is smaller).
    if best_ok is not None and best_any is not None and best_ok is not best_any:
        if best_ok.fun <= best_any.fun + 0.25:
            best_any = best_ok
    if not first_ok and best_any is not None:
        if best_any.success:
            messages.append("multistart recovered a converged optimum")
        else:
            messages.append("multistart kept the best non-converged optimum")
    return best_any, attempts, messages, first_ok


def fit(data: Dataset, table: lt.LifeTable, spec: ModelSpec,
        init: tuple | None = None, options: OptimizerOptions | None = None,
        label: str = "") -> FitResult:
    """Maximum-likelihood fit of a classical or frailty excess-hazard model.

    Parameters
    ----------
    data, table : cohort and life table.
    spec : ModelSpec
        Baseline family, frailty family, optional covariate mapping (must
        match the dataset's x/w columns when given).
    init : optional ``(GHParams, FrailtySpec or None)`` starting point;
        when omitted the two-stage recipe is used (PH submodel first).
    options : OptimizerOptions
    label : free-text tag carried into reports.

    Non-convergence and invalid standard errors are reported through the
    result's ``convergence`` and ``se_valid`` fields rather than raised.
    """
    if data.n == 0:
        raise ValueError("dataset is empty")
    if data.n_events == 0:
        raise ValueError("dataset has no events; the model is not identifiable")
    if spec.mapping is not None:
        if tuple(spec.mapping.x_names) != data.x_names or tuple(
            spec.mapping.w_names
        ) != data.w_names:
            raise ValueError("spec covariate mapping does not match dataset columns")
    opts = options or OptimizerOptions()
    fam = get_family(spec.baseline)
    ctx = _FitContext(data, table, spec.baseline, spec.frailty)
    messages: list[str] = []

    if init is not None:
        g0, fr0 = init
        if spec.has_frailty and (fr0 is None or fr0.family == "none"):
            fr0 = FrailtySpec(spec.frailty, 1.0)
        psi0 = _pack(g0, fr0 if spec.has_frailty else None, fam)
    elif spec.has_frailty or ctx.p_t > 0:
        # stage 1: proportional-hazards submodel (alpha = 0, no frailty)
        ph_ctx = _FitContext(
            data.with_covariates(data.x_names, ()), table, spec.baseline, "none"
        )
        ph0 = np.concatenate(
            [fam.default_transformed_init(data.time), np.zeros(ctx.p)]
        )
        ph_best, _, ph_msgs, _ = _optimize_with_restarts(ph_ctx, ph0, opts)
        messages.extend(ph_msgs)
        if ph_best is None:
            theta_beta = ph0
            messages.append("PH initialisation failed; falling back to default start")
        else:
            theta_beta = ph_best.x
        psi0 = np.concatenate(
            [
                theta_beta[:ctx.k_theta],
                np.zeros(ctx.p_t),
                theta_beta[ctx.k_theta:],
                np.zeros(1) if spec.has_frailty else np.zeros(0),  # start at b = 1
            ]
        )
    else:
        # the requested model *is* the PH submodel; one stage suffices
        psi0 = np.concatenate(
            [fam.default_transformed_init(data.time), np.zeros(ctx.p)]
        )

    best, attempts, opt_msgs, _ = _optimize_with_restarts(ctx, psi0, opts)
    messages.extend(opt_msgs)

    if best is None:
        psi_hat = psi0
        converged = False
        iterations = 0
        grad_norm = float("inf")
        messages.append("optimisation failed from every start; returning start values")
        loglik_val = -ctx.value(psi_hat)
    else:
        psi_hat = best.x
        converged = bool(best.success) and bool(np.isfinite(best.fun))
        iterations = int(best.nit)
        jac = np.atleast_1d(np.asarray(best.jac, dtype=float))
        grad_norm = float(np.max(np.abs(jac))) if np.all(np.isfinite(jac)) else float("inf")
        loglik_val = -float(best.fun)

    if opts.gradient == "analytic":
        grad_fn = lambda q: ctx.value_and_grad(q)[1]
        cov, se, se_ok, se_msg = hessian_std_errors(ctx.value, psi_hat, grad=grad_fn)
    else:
        cov, se, se_ok, se_msg = hessian_std_errors(ctx.value, psi_hat)
    if not se_ok:
        messages.append(f"standard errors invalid: {se_msg}")

    tnames = _transformed_names(fam, data.w_names, data.x_names, spec.frailty)
    nnames = _natural_names(fam, data.w_names, data.x_names, spec.frailty)
    params, frailty = _unpack(psi_hat, fam, spec.frailty, ctx.p_t, ctx.p)
    se_nat = None if se is None else se * _natural_scale_jacobian(psi_hat, tnames)
    return FitResult(
        spec=spec,
        params=params,
        frailty=frailty,
        psi=np.array(psi_hat, dtype=float),
        transformed_names=tnames,
        natural_names=nnames,
        loglik=loglik_val,
        n_params=ctx.n_params,
        covariance=cov,
        std_errors=se,
        std_errors_natural=se_nat,
        se_valid=se_ok,
        convergence=Convergence(
            converged=converged,
            iterations=iterations,
            gradient_norm=grad_norm,
            messages=tuple(messages),
            attempts=attempts,
        ),
        n=data.n,
        n_events=data.n_events,
        data_fingerprint=data.fingerprint(),
        x_names=data.x_names,
        w_names=data.w_names,
        label=label or spec.label(),
    )

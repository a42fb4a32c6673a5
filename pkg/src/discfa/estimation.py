"""Maximum likelihood estimation of partition and mixed models.

Untruncated factor groups profile out the idiosyncratic rates: the MLEs
satisfy lam + mu_k = ybar_k for every variable in the group, so the
search reduces to a bounded one-dimensional maximization over
lam in [0, min_k ybar_k].  Truncated groups lack this identity and are
maximized jointly over all rates, in log-rate coordinates (smooth, and a
floor maps cleanly to a zero rate), by a quasi-Newton search with
finite-difference gradients; failed searches retry from jittered starts.

Because a partition model factorizes over its groups, a model fit is
just the sum of independent group fits.  :class:`ModelFitter` caches
group MLEs per dataset, which makes forward/exhaustive selection cheap:
the same group recurs in many candidate partitions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar

from .dists import TruncPoissonSpec, moments
from .likelihood import (
    CountMatrix,
    GroupLoglik,
    GroupParams,
    MixedLoglik,
    MixedModelSpec,
)
from .partitions import ModelPartition, param_count, partition_to_string

# Rate bounds for joint searches: the floor maps to an exact zero rate,
# the cap keeps truncated fits finite when the data mean saturates at A.
RATE_FLOOR = 1e-10
RATE_CAP = 1e3
_LOG_FLOOR = math.log(RATE_FLOOR)
_LOG_CAP = math.log(RATE_CAP)
_LOGIT_CAP = math.log((1.0 - 1e-8) / 1e-8)
# Estimates this close to 0 are reported as exactly 0 (boundary MLE).
_SNAP_RATE = 1.5 * RATE_FLOOR
# Interior threshold below which standard errors are not attempted.
BOUNDARY_TOL = 1e-6


class FitError(RuntimeError):
    """A model or group fit could not be completed."""


@dataclass(frozen=True)
class FitOptions:
    """Convergence controls shared by all fitters."""

    tol_loglik: float = 1e-8
    tol_param: float = 1e-8
    max_iters: int = 500
    init_factor_rate: float = 1e-3

    def __post_init__(self) -> None:
        if self.tol_loglik <= 0 or self.tol_param <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class GroupFit:
    """MLE of one group: rates, the group's log-likelihood, convergence."""

    params: GroupParams
    loglik: float
    converged: bool


@dataclass
class FittedModel:
    """A fitted partition (or mixed) model.

    ``params`` aligns with ``partition.groups``; ``aic`` is always
    -2 loglik + 2 n_params by construction.  Mixed fits carry the
    estimated mixing weight ``pi`` and their spec, and count one extra
    parameter.
    """

    partition: ModelPartition
    params: tuple[GroupParams, ...]
    loglik: float
    aic: float
    n_params: int
    converged: bool
    n_obs: int
    std_errors: np.ndarray | None = None
    pi: float | None = None
    mixed_spec: MixedModelSpec | None = None


def _snap(rates: np.ndarray) -> np.ndarray:
    return np.where(rates < _SNAP_RATE, 0.0, rates)


def fit_group_poisson(y_cols: np.ndarray, opts: FitOptions | None = None) -> GroupFit:
    """Untruncated factor-group MLE via the profiled 1-D search.

    Substituting mu_k = ybar_k - lam reduces the maximization to
    lam in [0, min_k ybar_k]; the returned estimates satisfy
    lam + mu_k = ybar_k exactly.
    """
    opts = opts or FitOptions()
    ev = GroupLoglik(np.asarray(y_cols), trunc=None)
    if ev.m < 2:
        raise ValueError("fit_group_poisson requires a group of size >= 2")
    ybar = ev.column_means
    hi = float(ybar.min())

    def profiled(lam: float) -> float:
        return ev.loglik(lam, np.maximum(ybar - lam, 0.0))

    if hi <= 0.0:
        lam_hat = 0.0
        converged = True
    else:
        res = minimize_scalar(
            lambda l: -profiled(l),
            bounds=(0.0, hi),
            method="bounded",
            options={"xatol": opts.tol_param, "maxiter": opts.max_iters},
        )
        # The bounded search never lands exactly on the endpoints; the
        # boundary lam = 0 (no factor) and lam = min ybar (some mu = 0)
        # are genuine MLE candidates, so compare explicitly.
        cands = [0.0, hi, float(res.x)]
        lam_hat = max(cands, key=profiled)
        converged = bool(res.success)
    mus = np.maximum(ybar - lam_hat, 0.0)
    params = GroupParams(lam=lam_hat, mus=tuple(mus))
    return GroupFit(params=params, loglik=ev.loglik(lam_hat, mus), converged=converged)


def _fit_singleton_truncated(y_col: np.ndarray, bound: int) -> GroupFit:
    """Truncated singleton MLE: the rate solving trunc_mean(mu) = ybar.

    The truncated Poisson is a one-parameter exponential family, so the
    score equation equates the fitted truncated mean with the sample
    mean; the mean is strictly increasing in the rate, making the root
    unique and bracketable.
    """
    ev = GroupLoglik(y_col, trunc=bound)
    ybar = float(ev.column_means[0])
    if ybar <= 0.0:
        mu = 0.0
        converged = True
    else:
        def gap(rate: float) -> float:
            return moments(TruncPoissonSpec(rate, bound))[0] - ybar

        if gap(RATE_CAP) < 0.0:
            # Sample mean at (or numerically beyond) the saturation value A.
            mu = RATE_CAP
            converged = False
        else:
            mu = float(brentq(gap, 1e-12, RATE_CAP, xtol=1e-12, rtol=1e-14))
            converged = True
    mu = float(_snap(np.array([mu]))[0])
    return GroupFit(
        params=GroupParams(lam=None, mus=(mu,)),
        loglik=ev.loglik(0.0, np.array([mu])),
        converged=converged,
    )


def _joint_starts(ybar: np.ndarray, opts: FitOptions) -> list[np.ndarray]:
    """Initial (lam, mu_1..mu_m) points: spec default plus jittered retries."""
    lam0 = opts.init_factor_rate
    base = np.concatenate(([lam0], np.maximum(ybar - lam0, 1e-3)))
    lam_mid = max(float(ybar.min()) / 2.0, 1e-3)
    mid = np.concatenate(([lam_mid], np.maximum(ybar - lam_mid, 1e-3)))
    lam_hi = max(float(ybar.min()) * 0.9, 1e-3)
    high = np.concatenate(([lam_hi], np.maximum(ybar - lam_hi, 1e-3)))
    return [base, mid, high, base * 1.5 + 1e-4]


def fit_group_truncated(
    y_cols: np.ndarray, bound: int, opts: FitOptions | None = None
) -> GroupFit:
    """Truncated group MLE by joint maximization over (lam, mu_1..mu_m).

    No profiling identity exists under truncation, so all rates are
    searched simultaneously.  Singleton groups reduce to an exact
    one-dimensional root-find.
    """
    opts = opts or FitOptions()
    y = np.asarray(y_cols)
    if y.ndim == 1:
        y = y[:, None]
    if y.shape[1] == 1:
        return _fit_singleton_truncated(y, bound)
    ev = GroupLoglik(y, trunc=bound)
    ybar = ev.column_means

    def neg(theta: np.ndarray) -> float:
        rates = np.exp(theta)
        return -ev.loglik(float(rates[0]), rates[1:])

    bounds = [(_LOG_FLOOR, _LOG_CAP)] * (ev.m + 1)
    best = None
    converged = False
    for k, start in enumerate(_joint_starts(ybar, opts)):
        theta0 = np.log(np.clip(start, RATE_FLOOR, RATE_CAP))
        res = minimize(
            neg,
            theta0,
            method="L-BFGS-B",
            bounds=bounds,
            options={
                "maxiter": opts.max_iters,
                "ftol": 1e-11,
                "gtol": 1e-6,
                "eps": 1e-7,
            },
        )
        if best is None or res.fun < best.fun:
            best = res
        converged = converged or bool(res.success)
        if k == 0 and res.success:
            break  # first start converged; jittered retries not needed
    rates = _snap(np.exp(best.x))
    lam_hat = float(rates[0])
    mus = rates[1:]
    return GroupFit(
        params=GroupParams(lam=lam_hat, mus=tuple(mus)),
        loglik=ev.loglik(lam_hat, mus),
        converged=converged,
    )


class ModelFitter:
    """Fits partition models over one dataset, caching group MLEs.

    The same group of variables appears in many candidate partitions
    during selection; its MLE depends only on the group's columns, so it
    is fitted once and reused.  Fitted partitions are memoized as well,
    keyed by canonical form.
    """

    def __init__(self, data: CountMatrix, opts: FitOptions | None = None):
        self.data = data
        self.opts = opts or FitOptions()
        self._group_cache: dict[tuple[int, ...], GroupFit] = {}
        self._model_cache: dict[tuple, FittedModel] = {}

    @property
    def n_group_fits(self) -> int:
        return len(self._group_cache)

    def fit_group(self, group: tuple[int, ...]) -> GroupFit:
        fit = self._group_cache.get(group)
        if fit is not None:
            return fit
        cols = self.data.columns(group)
        trunc = self.data.trunc_bound
        try:
            if len(group) == 1:
                if trunc is None:
                    ev = GroupLoglik(cols, trunc=None)
                    mu = float(ev.column_means[0])
                    fit = GroupFit(
                        params=GroupParams(lam=None, mus=(mu,)),
                        loglik=ev.loglik(0.0, np.array([mu])),
                        converged=True,
                    )
                else:
                    fit = _fit_singleton_truncated(cols, trunc)
            elif trunc is None:
                fit = fit_group_poisson(cols, self.opts)
            else:
                fit = fit_group_truncated(cols, trunc, self.opts)
        except Exception as exc:  # surface which group broke the fit
            raise FitError(f"group {list(group)} fit failed: {exc}") from exc
        self._group_cache[group] = fit
        return fit

    def fit(self, p: ModelPartition) -> FittedModel:
        key = p.groups
        cached = self._model_cache.get(key)
        if cached is not None:
            return cached
        group_fits = [self.fit_group(g) for g in p.groups]
        loglik = sum(gf.loglik for gf in group_fits)
        n_par = param_count(p)
        model = FittedModel(
            partition=p,
            params=tuple(gf.params for gf in group_fits),
            loglik=loglik,
            aic=-2.0 * loglik + 2.0 * n_par,
            n_params=n_par,
            converged=all(gf.converged for gf in group_fits),
            n_obs=self.data.n_obs,
        )
        self._model_cache[key] = model
        return model


def fit_model(
    data: CountMatrix, p: ModelPartition, opts: FitOptions | None = None
) -> FittedModel:
    """Fit one partition model (each group independently)."""
    return ModelFitter(data, opts).fit(p)


def _expit(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def fit_mixed(
    data: CountMatrix, spec: MixedModelSpec, opts: FitOptions | None = None
) -> FittedModel:
    """Fit the two-partition mixture: weight pi plus all shared rates.

    pi is searched through a logit coordinate clamped away from 0 and 1;
    rates through log coordinates as in the joint truncated fit.  The
    base model is a boundary case (pi = 1), so the base MLE seeded with
    pi near 1 is always among the starts, which guarantees the mixture
    fit never falls below the base fit.
    """
    opts = opts or FitOptions()
    base_fit = ModelFitter(data, opts).fit(spec.base)
    ev = MixedLoglik(data, spec)
    groups = spec.base.groups

    multi = [i for i, g in enumerate(groups) if len(g) >= 2]

    def unpack(theta: np.ndarray) -> tuple[float, list[GroupParams]]:
        pi = _expit(float(theta[0]))
        pos = 1
        lam_by_group = {}
        for i in multi:
            lam_by_group[i] = float(np.exp(theta[pos]))
            pos += 1
        params = []
        for i, g in enumerate(groups):
            mus = np.exp(theta[pos : pos + len(g)])
            pos += len(g)
            params.append(
                GroupParams(lam=lam_by_group.get(i), mus=tuple(mus))
            )
        return pi, params

    def pack(pi: float, params) -> np.ndarray:
        parts = [math.log(pi / (1.0 - pi))]
        for i in multi:
            parts.append(math.log(max(params[i].lam, RATE_FLOOR)))
        for gp in params:
            parts.extend(math.log(max(m, RATE_FLOOR)) for m in gp.mus)
        return np.clip(np.array(parts), None, None)

    def neg(theta: np.ndarray) -> float:
        pi, params = unpack(theta)
        return -ev.loglik(pi, params)

    n_theta = 1 + len(multi) + spec.base.n_vars
    bounds = [(-_LOGIT_CAP, _LOGIT_CAP)] + [(_LOG_FLOOR, _LOG_CAP)] * (n_theta - 1)

    pi_near_one = 1.0 - 1e-8
    starts = [
        pack(0.75, base_fit.params),
        pack(pi_near_one, base_fit.params),
        pack(0.25, base_fit.params),
    ]
    best = None
    converged = False
    for k, theta0 in enumerate(starts):
        theta0 = np.clip(theta0, [-_LOGIT_CAP] + [_LOG_FLOOR] * (n_theta - 1),
                         [_LOGIT_CAP] + [_LOG_CAP] * (n_theta - 1))
        res = minimize(
            neg,
            theta0,
            method="L-BFGS-B",
            bounds=bounds,
            options={
                "maxiter": opts.max_iters,
                "ftol": 1e-11,
                "gtol": 1e-6,
                "eps": 1e-7,
            },
        )
        if best is None or res.fun < best.fun:
            best = res
        converged = converged or bool(res.success)
        if k == 0 and res.success:
            # Still probe the pi ~ 1 start: the mixture surface can be
            # bimodal in pi and the base model must remain dominated.
            res1 = minimize(
                neg, starts[1], method="L-BFGS-B", bounds=bounds,
                options={"maxiter": opts.max_iters, "ftol": 1e-11,
                         "gtol": 1e-6, "eps": 1e-7},
            )
            if res1.fun < best.fun:
                best = res1
            converged = converged or bool(res1.success)
            break
    pi_hat, params = unpack(best.x)
    params = [
        GroupParams(
            lam=None if gp.lam is None else float(_snap(np.array([gp.lam]))[0]),
            mus=tuple(_snap(np.asarray(gp.mus))),
        )
        for gp in params
    ]
    loglik = ev.loglik(pi_hat, params)
    n_par = param_count(spec.base) + 1
    return FittedModel(
        partition=spec.base,
        params=tuple(params),
        loglik=loglik,
        aic=-2.0 * loglik + 2.0 * n_par,
        n_params=n_par,
        converged=converged,
        n_obs=data.n_obs,
        pi=pi_hat,
        mixed_spec=replace(spec, pi=pi_hat),
    )


# ---------------------------------------------------------------------------
# Standard errors
# ---------------------------------------------------------------------------


def parameter_labels(fit: FittedModel) -> list[str]:
    """Flat parameter names in estimation order.

    Order: pi (mixed fits only), then per group in canonical order its
    factor rate (factor groups only) followed by the per-variable rates.
    """
    labels: list[str] = []
    if fit.pi is not None:
        labels.append("pi")
    for g, gp in zip(fit.partition.groups, fit.params):
        if gp.lam is not None:
            labels.append("lambda[" + " ".join(str(v) for v in g) + "]")
        labels.extend(f"mu[{v}]" for v in g)
    return labels


def flatten_parameters(fit: FittedModel) -> np.ndarray:
    """Parameter values matching :func:`parameter_labels`."""
    vals: list[float] = []
    if fit.pi is not None:
        vals.append(fit.pi)
    for gp in fit.params:
        if gp.lam is not None:
            vals.append(gp.lam)
        vals.extend(gp.mus)
    return np.array(vals)


def _neg_loglik_builder(fit: FittedModel, data: CountMatrix):
    """Negative log-likelihood as a function of the flat parameter vector."""
    groups = fit.partition.groups
    if fit.pi is not None:
        ev = MixedLoglik(data, fit.mixed_spec)

        def neg(theta: np.ndarray) -> float:
            pi = float(theta[0])
            pos = 1
            params = []
            for g, gp in zip(groups, fit.params):
                lam = None
                if gp.lam is not None:
                    lam = float(theta[pos])
                    pos += 1
                mus = tuple(theta[pos : pos + len(g)])
                pos += len(g)
                params.append(GroupParams(lam=lam, mus=mus))
            return -ev.loglik(pi, params)

        return neg

    evs = [GroupLoglik(data.columns(g), data.trunc_bound) for g in groups]

    def neg(theta: np.ndarray) -> float:
        pos = 0
        total = 0.0
        for g, gp, ev in zip(groups, fit.params, evs):
            lam = 0.0
            if gp.lam is not None:
                lam = float(theta[pos])
                pos += 1
            mus = np.asarray(theta[pos : pos + len(g)])
            pos += len(g)
            total += ev.loglik(lam, mus)
        return -total

    return neg


def _interior_mask(fit: FittedModel, theta: np.ndarray) -> np.ndarray:
    mask = theta > BOUNDARY_TOL
    pos = 0
    if fit.pi is not None:
        mask[0] = BOUNDARY_TOL < theta[0] < 1.0 - BOUNDARY_TOL
        pos = 1
    return mask


def standard_errors(
    fit: FittedModel, data: CountMatrix, mode: str = "per_parameter"
) -> np.ndarray:
    """Per-parameter standard errors from numerical second derivatives.

    ``per_parameter`` (default) inverts each diagonal curvature of the
    negative log-likelihood on its own: SE_j = (d2 neg-loglik / d
    theta_j^2)^(-1/2).  ``full`` builds the complete numerical Hessian,
    inverts it, and reports square roots of its diagonal.  Entries at a
    boundary (rate ~ 0, pi ~ 0 or 1) or with non-positive curvature are
    returned as NaN rather than raising.
    """
    if mode not in ("per_parameter", "full"):
        raise ValueError(f"unknown mode {mode!r}")
    theta = flatten_parameters(fit)
    neg = _neg_loglik_builder(fit, data)
    interior = _interior_mask(fit, theta)
    se = np.full(theta.shape, np.nan)
    h = 1e-4 * np.maximum(1.0, np.abs(theta))

    if mode == "per_parameter":
        f0 = neg(theta)
        for j in np.flatnonzero(interior):
            tp = theta.copy()
            tm = theta.copy()
            tp[j] += h[j]
            tm[j] -= h[j]
            d2 = (neg(tp) - 2.0 * f0 + neg(tm)) / h[j] ** 2
            if d2 > 0:
                se[j] = d2 ** -0.5
        return se

    idx = np.flatnonzero(interior)
    k = idx.size
    if k == 0:
        return se
    H = np.empty((k, k))
    f0 = neg(theta)
    for a in range(k):
        ja = idx[a]
        tp = theta.copy(); tp[ja] += h[ja]
        tm = theta.copy(); tm[ja] -= h[ja]
        H[a, a] = (neg(tp) - 2.0 * f0 + neg(tm)) / h[ja] ** 2
        for b in range(a + 1, k):
            jb = idx[b]
            tpp = theta.copy(); tpp[ja] += h[ja]; tpp[jb] += h[jb]
            tpm = theta.copy(); tpm[ja] += h[ja]; tpm[jb] -= h[jb]
            tmp = theta.copy(); tmp[ja] -= h[ja]; tmp[jb] += h[jb]
            tmm = theta.copy(); tmm[ja] -= h[ja]; tmm[jb] -= h[jb]
            H[a, b] = H[b, a] = (
                neg(tpp) - neg(tpm) - neg(tmp) + neg(tmm)
            ) / (4.0 * h[ja] * h[jb])
    try:
        cov = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        return se
    diag = np.diag(cov)
    for a in range(k):
        if diag[a] > 0:
            se[idx[a]] = math.sqrt(diag[a])
    return se

"""Log-likelihood evaluation for factor-group models.

Within a factor group of m variables sharing a latent factor U, the
likelihood of one observation row (y_1..y_m) is the convolution

    sum_{u=0}^{min(y_1..y_m)} f(u; lam) * prod_k g(y_k - u; mu_k),

with f, g the (possibly truncated) Poisson pmfs.  A full partition model
multiplies these over its groups; singleton groups reduce to plain
(truncated) Poisson terms.  Everything is computed in log space via
log-sum-exp.

The hot path is :class:`GroupLoglik`, a prepared evaluator for fixed
columns: duplicate rows are collapsed to (unique row, weight) pairs and
all factorial tables are precomputed, so each call with new rates costs
a handful of small vectorized operations.  This matters because model
fitting calls it thousands of times inside derivative-free searches.

Truncated semantics: both the factor and idiosyncratic pmfs are
truncated at the same bound A, and the model is evaluated only at
observations with y <= A (the implied Y support extends to 2A; see
:func:`joint_pmf`, which accepts the full support).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .dists import ZERO_RATE, log_norm_constant
from .partitions import ModelPartition

# Largest exponent allowed in the linear-space truncated normalizer;
# beyond it we fall back to log-sum-exp (rates this large never occur in
# practice, the fits cap rates near 1e3).
_LINEAR_EXP_GUARD = 600.0


@dataclass
class CountMatrix:
    """An n x N matrix of observed counts, optionally truncated at A."""

    values: np.ndarray
    trunc_bound: int | None = None

    def __post_init__(self) -> None:
        v = np.asarray(self.values)
        if v.ndim != 2 or v.size == 0:
            raise ValueError("values must be a non-empty 2-D array")
        if not np.issubdtype(v.dtype, np.integer):
            if not np.all(v == np.floor(v)):
                raise ValueError("counts must be integers")
        v = v.astype(np.int64)
        if np.any(v < 0):
            i, j = np.argwhere(v < 0)[0]
            raise ValueError(f"negative count at row {i + 1}, column {j + 1}")
        if self.trunc_bound is not None:
            a = int(self.trunc_bound)
            if a < 0:
                raise ValueError("truncation bound must be non-negative")
            if np.any(v > a):
                i, j = np.argwhere(v > a)[0]
                raise ValueError(
                    f"count {v[i, j]} at row {i + 1}, column {j + 1} exceeds "
                    f"truncation bound {a}"
                )
            object.__setattr__(self, "trunc_bound", a)
        object.__setattr__(self, "values", v)

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    @property
    def column_means(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def columns(self, variables) -> np.ndarray:
        """Columns for the given 1-based variable indices, in given order."""
        idx = np.asarray(variables, dtype=np.int64) - 1
        if idx.size == 0 or np.any(idx < 0) or np.any(idx >= self.n_vars):
            raise ValueError(f"variable indices {variables} out of range 1..{self.n_vars}")
        return self.values[:, idx]


@dataclass(frozen=True)
class GroupParams:
    """Rates of one factor group: lam shared by the group, one mu per variable.

    ``lam`` is None for singleton groups, which have no factor.
    """

    lam: float | None
    mus: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.lam is not None and not (np.isfinite(self.lam) and self.lam >= 0.0):
            raise ValueError(f"factor rate must be finite and >= 0, got {self.lam}")
        mus = tuple(float(m) for m in self.mus)
        for m in mus:
            if not (np.isfinite(m) and m >= 0.0):
                raise ValueError(f"idiosyncratic rate must be finite and >= 0, got {m}")
        object.__setattr__(self, "mus", mus)

    @property
    def size(self) -> int:
        return len(self.mus)


@dataclass(frozen=True)
class MixedModelSpec:
    """Two partitions differing in one variable's membership, mixed with weight pi.

    The base partition holds ``moved_var`` in its home group; the
    alternative moves it to the group at index ``alt_group`` (canonical
    position in ``base.groups``).  The target must be a factor group
    (size >= 2), as the move reuses its factor rate; all other rates are
    shared between the two branches.
    """

    base: ModelPartition
    moved_var: int
    alt_group: int
    pi: float | None = None

    def __post_init__(self) -> None:
        if not (1 <= self.moved_var <= self.base.n_vars):
            raise ValueError(f"moved_var {self.moved_var} out of range")
        home = self.home_group_index
        if not (0 <= self.alt_group < self.base.n_groups):
            raise ValueError(f"alt_group {self.alt_group} out of range")
        if self.alt_group == home:
            raise ValueError("alt_group must differ from the home group")
        if len(self.base.groups[self.alt_group]) < 2:
            raise ValueError("alt_group must be a factor group (size >= 2)")
        if self.pi is not None and not (0.0 <= self.pi <= 1.0):
            raise ValueError(f"pi must lie in [0, 1], got {self.pi}")

    @property
    def home_group_index(self) -> int:
        for i, g in enumerate(self.base.groups):
            if self.moved_var in g:
                return i
        raise ValueError(f"moved_var {self.moved_var} not in any group")


def _as_rate_array(mus) -> np.ndarray:
    mus = np.asarray(mus, dtype=float)
    if mus.ndim != 1:
        raise ValueError("mus must be one-dimensional")
    if not np.all(np.isfinite(mus)) or np.any(mus < 0):
        raise ValueError(f"rates must be finite and >= 0, got {mus}")
    return mus


def _log_norm_vec(rates: np.ndarray, bound: int) -> np.ndarray:
    """Truncated-Poisson log normalizers for a vector of rates."""
    rates = np.maximum(rates, ZERO_RATE)
    logr = np.log(rates)
    if np.max(logr) * bound < _LINEAR_EXP_GUARD:
        j = np.arange(bound + 1)
        terms = np.exp(j[None, :] * logr[:, None] - gammaln(j + 1)[None, :])
        return np.log(terms.sum(axis=1))
    return np.array([log_norm_constant(float(r), bound) for r in rates])


class GroupLoglik:
    """Prepared log-likelihood evaluator for one group's columns.

    Pass ``lam=0.0`` for singleton groups (the convolution then collapses
    to its u = 0 term, i.e. an ordinary Poisson likelihood).
    """

    def __init__(self, y_cols: np.ndarray, trunc: int | None = None):
        y = np.asarray(y_cols)
        if y.ndim == 1:
            y = y[:, None]
        if y.size == 0:
            raise ValueError("empty data")
        if np.any(y < 0):
            raise ValueError("counts must be non-negative")
        if trunc is not None and np.any(y > trunc):
            raise ValueError(f"data exceed truncation bound {trunc}")
        self.n_obs, self.m = y.shape
        self.trunc = trunc
        uniq, inverse, counts = np.unique(
            y, axis=0, return_inverse=True, return_counts=True
        )
        self._y = uniq.astype(np.int64)
        self._inv = inverse.reshape(-1)
        self._w = counts.astype(float)
        z = self._y.min(axis=1)
        self._u = np.arange(int(z.max()) + 1)
        self._valid = self._u[None, :] <= z[:, None]
        # Factorial parts do not depend on the rates: precompute once.
        diff = np.maximum(self._y[:, None, :] - self._u[None, :, None], 0)
        self._lgm = gammaln(diff + 1).sum(axis=2)
        self._lgu = gammaln(self._u + 1)
        self.column_means = y.mean(axis=0)

    def _unique_row_loglik(self, lam: float, mus) -> np.ndarray:
        mus = _as_rate_array(mus)
        if mus.shape[0] != self.m:
            raise ValueError(f"expected {self.m} idiosyncratic rates, got {mus.shape[0]}")
        if not np.isfinite(lam) or lam < 0:
            raise ValueError(f"factor rate must be finite and >= 0, got {lam}")
        # Clamping zero rates to a tiny positive value keeps the algebra
        # branch-free: impossible terms get log-probabilities ~ -690*y and
        # vanish in the exp, while y-u = 0 contributions cancel exactly.
        lam_c = max(lam, ZERO_RATE)
        mus_c = np.maximum(mus, ZERO_RATE)
        logmu = np.log(mus_c)
        if self.trunc is None:
            const = -(lam_c + mus_c.sum())
        else:
            const = -(
                log_norm_constant(lam_c, self.trunc)
                + _log_norm_vec(mus_c, self.trunc).sum()
            )
        factor_part = self._u * math.log(lam_c) - self._lgu - self._u * logmu.sum()
        terms = factor_part[None, :] + (self._y @ logmu)[:, None] - self._lgm + const
        terms = np.where(self._valid, terms, -np.inf)
        tmax = terms.max(axis=1)
        # Rows whose every term underflowed stay at -inf instead of nan.
        safe = np.where(np.isfinite(tmax), tmax, 0.0)
        out = safe + np.log(np.exp(terms - safe[:, None]).sum(axis=1))
        return np.where(np.isfinite(tmax), out, -np.inf)

    def loglik(self, lam: float, mus) -> float:
        """Total group log-likelihood at the given rates."""
        return float(self._w @ self._unique_row_loglik(lam, mus))

    def row_loglik(self, lam: float, mus) -> np.ndarray:
        """Per-observation log-likelihood, aligned with the original rows."""
        return self._unique_row_loglik(lam, mus)[self._inv]


def group_loglik(y_cols: np.ndarray, params: GroupParams, trunc: int | None = None) -> float:
    """Log-likelihood of one group's data at the given rates.

    Singleton groups (params.lam is None) reduce to independent Poisson
    terms; factor groups evaluate the latent-factor convolution.
    """
    ev = GroupLoglik(y_cols, trunc)
    if params.size != ev.m:
        raise ValueError(f"params cover {params.size} variables, data has {ev.m}")
    lam = 0.0 if params.lam is None else params.lam
    return ev.loglik(lam, np.asarray(params.mus))


def model_loglik(
    data: CountMatrix,
    p: ModelPartition,
    params: list[GroupParams] | tuple[GroupParams, ...],
    trunc: int | None = None,
) -> float:
    """Sum of group log-likelihoods over the partition's groups.

    ``params`` aligns positionally with ``p.groups`` (canonical order).
    """
    if p.n_vars != data.n_vars:
        raise ValueError(f"partition covers {p.n_vars} variables, data has {data.n_vars}")
    if len(params) != p.n_groups:
        raise ValueError(f"expected {p.n_groups} parameter groups, got {len(params)}")
    total = 0.0
    for g, gp in zip(p.groups, params):
        if gp.size != len(g):
            raise ValueError(f"group {g} has {len(g)} variables, params cover {gp.size}")
        if len(g) >= 2 and gp.lam is None:
            raise ValueError(f"factor group {g} needs a factor rate")
        total += group_loglik(data.columns(g), gp, trunc)
    return total


def _group_joint_pmf(y: np.ndarray, lam: float, mus: np.ndarray, trunc: int | None) -> float:
    """Exact joint probability of one observation vector for one group."""
    y = np.asarray(y, dtype=np.int64)
    lam_c = max(lam, ZERO_RATE)
    mus_c = np.maximum(mus, ZERO_RATE)
    u_hi = int(y.min())
    u_lo = 0
    if trunc is not None:
        u_hi = min(u_hi, trunc)
        u_lo = max(0, int(y.max()) - trunc)
    if u_lo > u_hi:
        return 0.0
    if trunc is None:
        log_f_norm = lam_c
        log_g_norm = float(mus_c.sum())
    else:
        log_f_norm = log_norm_constant(lam_c, trunc)
        log_g_norm = float(_log_norm_vec(mus_c, trunc).sum())
    total = 0.0
    for u in range(u_lo, u_hi + 1):
        lt = u * math.log(lam_c) - float(gammaln(u + 1))
        x = y - u
        lt += float(np.sum(x * np.log(mus_c) - gammaln(x + 1)))
        total += math.exp(lt - log_f_norm - log_g_norm)
    return total


def joint_pmf(
    p: ModelPartition,
    params,
    trunc: int | None,
    y,
) -> float:
    """Exact joint probability of observing the N-vector ``y``.

    Brute-force oracle: multiplies per-group convolutions directly.
    Under truncation at A the support of each variable extends to 2A
    (factor plus idiosyncratic part, both <= A); summing over
    {0..2A}^N therefore yields exactly 1.
    """
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (p.n_vars,):
        raise ValueError(f"y must be a vector of length {p.n_vars}")
    if np.any(y < 0):
        return 0.0
    prob = 1.0
    for g, gp in zip(p.groups, params):
        yg = y[np.asarray(g) - 1]
        lam = 0.0 if gp.lam is None else gp.lam
        prob *= _group_joint_pmf(yg, lam, np.asarray(gp.mus, dtype=float), trunc)
    return prob


def _merge_mus(group: tuple[int, ...], mus, extra_var: int, extra_mu: float):
    """Insert (extra_var, extra_mu) into an ascending (group, mus) pairing."""
    vs = list(group)
    ms = list(mus)
    pos = int(np.searchsorted(np.asarray(vs), extra_var))
    vs.insert(pos, extra_var)
    ms.insert(pos, extra_mu)
    return tuple(vs), np.asarray(ms, dtype=float)


class MixedLoglik:
    """Prepared evaluator of the two-partition mixture log-likelihood.

    The two branches share every rate; only the membership of the moved
    variable differs.  Groups untouched by the move contribute a common
    per-row factor, so the mixture is applied only to the home/target
    block.
    """

    def __init__(self, data: CountMatrix, spec: MixedModelSpec):
        if spec.base.n_vars != data.n_vars:
            raise ValueError("partition and data dimensions differ")
        self.spec = spec
        self.data = data
        trunc = data.trunc_bound
        base = spec.base
        self._home = spec.home_group_index
        self._tgt = spec.alt_group
        home = base.groups[self._home]
        target = base.groups[self._tgt]
        v = spec.moved_var
        self._home_rest = tuple(x for x in home if x != v)
        self._tgt_plus = tuple(sorted(target + (v,)))
        self._v_pos_home = home.index(v)

        self._ev_home_base = GroupLoglik(data.columns(home), trunc)
        self._ev_tgt_base = GroupLoglik(data.columns(target), trunc)
        self._ev_home_alt = (
            GroupLoglik(data.columns(self._home_rest), trunc) if self._home_rest else None
        )
        self._ev_tgt_alt = GroupLoglik(data.columns(self._tgt_plus), trunc)
        self._ev_other = [
            (i, GroupLoglik(data.columns(g), trunc))
            for i, g in enumerate(base.groups)
            if i not in (self._home, self._tgt)
        ]

    def _branch_rows(self, params) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        home_p = params[self._home]
        tgt_p = params[self._tgt]
        v = self.spec.moved_var
        home = self.spec.base.groups[self._home]
        lam_home = 0.0 if home_p.lam is None else home_p.lam
        lam_tgt = 0.0 if tgt_p.lam is None else tgt_p.lam
        mu_v = home_p.mus[self._v_pos_home]

        a = self._ev_home_base.row_loglik(lam_home, np.asarray(home_p.mus))
        a = a + self._ev_tgt_base.row_loglik(lam_tgt, np.asarray(tgt_p.mus))

        b = np.zeros(self.data.n_obs)
        if self._ev_home_alt is not None:
            rest_mus = np.asarray(
                [m for x, m in zip(home, home_p.mus) if x != v], dtype=float
            )
            b = b + self._ev_home_alt.row_loglik(lam_home, rest_mus)
        _, plus_mus = _merge_mus(
            self.spec.base.groups[self._tgt], tgt_p.mus, v, mu_v
        )
        b = b + self._ev_tgt_alt.row_loglik(lam_tgt, plus_mus)

        common = np.zeros(self.data.n_obs)
        for i, ev in self._ev_other:
            gp = params[i]
            lam = 0.0 if gp.lam is None else gp.lam
            common = common + ev.row_loglik(lam, np.asarray(gp.mus))
        return a, b, common

    def loglik(self, pi: float, params) -> float:
        """Mixture log-likelihood at weight ``pi`` and base-aligned rates."""
        if not (0.0 <= pi <= 1.0):
            raise ValueError(f"pi must lie in [0, 1], got {pi}")
        a, b, common = self._branch_rows(params)
        with np.errstate(divide="ignore"):
            log_pi = np.log(pi)
            log_q = np.log1p(-pi) if pi < 1.0 else -np.inf
        mix = np.logaddexp(log_pi + a, log_q + b)
        return float(np.sum(mix + common))


def mixed_loglik(
    data: CountMatrix,
    spec: MixedModelSpec,
    params,
    trunc: int | None = None,
) -> float:
    """One-shot mixture log-likelihood; see :class:`MixedLoglik`.

    ``trunc`` must agree with the data's truncation bound (it is taken
    from the data; the argument is accepted for interface symmetry).
    """
    if trunc is not None and data.trunc_bound != trunc:
        raise ValueError("trunc disagrees with data.trunc_bound")
    if spec.pi is None:
        raise ValueError("spec.pi must be set for evaluation")
    return MixedLoglik(data, spec).loglik(spec.pi, params)

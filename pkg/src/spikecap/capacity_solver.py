"""Capacity of the gamma ISI channel under temporal and rate coding.

Inputs are handled internally in the log coordinate ``z = log(theta /
theta_min)``, which lives on ``[0, log(b0/a0)]``. Both channel laws depend on
theta only through ratios (``t/theta`` and ``delta/theta``), so working in
``z`` makes every computation invariant under a common rescaling of
``a0``, ``b0`` and ``delta``.

Two independent routes to the capacity are provided:

* :func:`grid_capacity` discretizes Omega and the output space and runs
  discrete Blahut-Arimoto. It is the brute-force oracle.
* :func:`particle_capacity` keeps a handful of mass points, alternates
  Blahut-Arimoto weight updates with pruning and local repositioning, and
  stops only when :func:`kkt_verify` certifies the ensemble: the
  information density ``i(theta) = D(p(.|theta) || p_pi)`` must stay below
  the achieved mutual information everywhere on Omega and touch it at
  every mass point.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import InitVar, dataclass, field, replace
from enum import Enum
from typing import Union

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammainc, gammaincc, gammaincinv, gammainccinv, gammaln, logsumexp

from .core_it import ChannelMatrix, _check_weights, blahut_arimoto, blahut_arimoto_matrix
from .errors import ConvergenceError, DomainError, ValidationError
from .neuron_channel import (
    CountChannelConfig,
    GammaChannel,
    count_pmf_raw,
    r_max_for,
    simulate_counts,
)
from .quadrature import integrate

# Placeholder problem parameters (seconds); not taken from any measurement.
DEFAULT_A0 = 0.003
DEFAULT_B0 = 0.030
DEFAULT_DELTA = 0.100

SLACK_TOL = 1e-4
PRUNE_WEIGHT = 1e-6
MERGE_FRACTION = 1e-4
# conditional tail mass left outside the ISI integration range
ISI_TAIL = 1e-14
_LN2 = math.log(2.0)
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

Channel = Union[GammaChannel, CountChannelConfig]


class Coding(str, Enum):
    TEMPORAL = "temporal"
    RATE = "rate"


@dataclass(frozen=True)
class InputEnsemble:
    """Discrete input law: mass ``weights[i]`` at ``points[i]`` (seconds)."""

    points: np.ndarray
    weights: np.ndarray
    renormalize: InitVar[bool] = False

    def __post_init__(self, renormalize):
        pts = np.atleast_1d(np.array(self.points, dtype=float))
        if pts.ndim != 1 or pts.size == 0:
            raise ValidationError("InputEnsemble needs a non-empty 1-D list of points")
        if not np.all(np.isfinite(pts)) or np.any(pts <= 0):
            raise ValidationError("InputEnsemble points must be positive and finite")
        if np.any(np.diff(pts) <= 0):
            raise ValidationError("InputEnsemble points must be strictly increasing")
        w = _check_weights(np.atleast_1d(self.weights), "InputEnsemble weights", renormalize)
        if w.shape != pts.shape:
            raise ValidationError("InputEnsemble needs one weight per point")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def single(cls, theta: float) -> "InputEnsemble":
        return cls([theta], [1.0])

    def __len__(self):
        return len(self.points)

    def check_within(self, ch: GammaChannel):
        ch.check_theta(self.points)


@dataclass(frozen=True)
class KKTReport:
    grid: np.ndarray
    info_density: np.ndarray
    capacity_ref: float
    max_violation: float
    at_support_gap: float
    passed: bool
    slack_tol: float
    support_density: np.ndarray = field(default_factory=lambda: np.empty(0))


@dataclass(frozen=True)
class CapacitySolution:
    ensemble: InputEnsemble
    coding: Coding
    capacity_per_use: float
    capacity_bps: float
    certificate: KKTReport | None
    channel: Channel

    @property
    def certified(self) -> bool:
        return self.certificate is not None and self.certificate.passed


@dataclass(frozen=True)
class DecoderPartition:
    """MAP decision regions on the output space.

    ``boundaries`` are the thresholds between consecutive output runs and
    ``owners[k]`` the index of the support point decoded on run ``k``
    (run ``k`` is ``(boundaries[k-1], boundaries[k]]`` for ISIs, or the
    integer counts ``boundaries[k-1] <= r < boundaries[k]`` for spike
    counts, with ``-inf``/``+inf`` implied at the ends).
    """

    boundaries: tuple
    owners: tuple
    induced_channel: ChannelMatrix
    hard_rate: float
    degenerate: tuple = ()


# Channel models -----------------------------------------------------------

def _as_coding(coding) -> Coding:
    try:
        return Coding(coding)
    except ValueError:
        raise ValidationError(f"unknown coding {coding!r}; use 'temporal' or 'rate'") from None


def _base(channel: Channel) -> GammaChannel:
    return channel.base if isinstance(channel, CountChannelConfig) else channel


class _Model:
    """Scale-free view of a channel in the ``z`` coordinate."""

    coding: Coding

    def __init__(self, channel: Channel):
        self.channel = channel
        self.base = _base(channel)
        self.kappa = self.base.kappa
        self.theta_min = self.base.theta_min
        self.span = math.log(self.base.b0 / self.base.a0)
        self.merge_dist = MERGE_FRACTION * self.base.width

    def to_z(self, theta):
        theta = self.base.check_theta(theta)
        return np.clip(np.log(theta / self.theta_min), 0.0, self.span)

    def to_theta(self, z):
        z = np.clip(np.asarray(z, dtype=float), 0.0, self.span)
        theta = self.theta_min * np.exp(z)
        return np.clip(theta, self.base.theta_min, self.base.theta_max)

    def grid_z(self, n: int) -> np.ndarray:
        return np.linspace(0.0, self.span, n)

    def mean_cost(self, zp, w) -> float:
        raise NotImplementedError


class _TemporalModel(_Model):
    coding = Coding.TEMPORAL

    def __init__(self, channel: Channel):
        super().__init__(channel)
        k = self.kappa
        # integration range for s = log(t/theta) holding all but ISI_TAIL mass
        self.s_lo = math.log(gammaincinv(k, ISI_TAIL))
        self.s_hi = math.log(gammainccinv(k, ISI_TAIL))
        self.log_norm = gammaln(k)

    def info_density_z(self, z, zp, w, tol=1e-11):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        zp = np.asarray(zp, dtype=float)
        w = np.asarray(w, dtype=float)
        keep = w > 0
        zp, logw = zp[keep], np.log(w[keep])
        k = self.kappa
        diff = z[:, None] - zp[None, :]            # log(theta / theta_j)
        excess = np.expm1(diff)                    # theta/theta_j - 1
        offset = logw[None, :] + k * diff

        def integrand(s):
            es = np.exp(s)
            dens = np.exp(k * s - es - self.log_norm)
            # log p(t|theta_j) - log p(t|theta) at t = theta * e^s
            llr = offset[None] - es[:, None, None] * excess[None]
            return dens[:, None] * -logsumexp(llr, axis=2)

        vals, _ = integrate(integrand, self.s_lo, self.s_hi, tol=tol * _LN2)
        return np.maximum(vals / _LN2, 0.0)

    def output_grid(self, step=0.1):
        """Uniform nodes in u = log(t/theta_min) covering every conditional law."""
        lo = self.s_lo
        hi = self.span + self.s_hi
        n = int(math.ceil((hi - lo) / step)) + 1
        return lo + step * np.arange(n), step

    def matrix(self, z, step=0.1):
        u, h = self.output_grid(step)
        s = u[None, :] - np.asarray(z, dtype=float)[:, None]
        k = self.kappa
        rows = np.exp(k * s - np.exp(s) - self.log_norm) * h
        return rows / rows.sum(axis=1, keepdims=True)

    def sample_log_ratio(self, zp, w, n, rng):
        idx = rng.choice(len(zp), size=n, p=w)
        ratio_t = rng.gamma(self.kappa, 1.0, size=n)  # t / theta_idx
        diff = zp[idx][:, None] - zp[None, :]
        excess = np.expm1(diff)
        llr = np.log(w)[None, :] + self.kappa * diff - ratio_t[:, None] * excess
        return -logsumexp(llr, axis=1) / _LN2

    def mean_cost(self, zp, w) -> float:
        theta = self.to_theta(zp)
        return float(np.dot(w, self.kappa * theta))


class _RateModel(_Model):
    coding = Coding.RATE

    def __init__(self, channel: Channel):
        if not isinstance(channel, CountChannelConfig):
            raise ValidationError("rate coding needs a CountChannelConfig (window delta)")
        super().__init__(channel)
        self.x_max = channel.delta * self.kappa / self.base.a0   # delta / theta_min
        self.r_max = r_max_for(self.x_max, self.kappa, channel.tail_tol, channel.r_cap)
        if self.r_max > channel.r_cap:
            raise DomainError(
                f"count truncation needs r_max={self.r_max} > cap {channel.r_cap} "
                f"at theta={self.theta_min:.6g} s, delta={channel.delta:.6g} s"
            )
        self.r = np.arange(self.r_max + 1)

    def x_of(self, z):
        return self.x_max * np.exp(-np.asarray(z, dtype=float))

    def matrix(self, z):
        x = self.x_of(np.atleast_1d(z))
        return count_pmf_raw(self.r[None, :], x[:, None], self.kappa)

    def info_density_z(self, z, zp, w, tol=None):
        p = self.matrix(z)
        keep = np.asarray(w) > 0
        q = np.asarray(w)[keep] @ self.matrix(np.asarray(zp)[keep])
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(p > 0, p * (np.log2(p) - np.log2(np.maximum(q, 1e-320))), 0.0)
        return np.maximum(terms.sum(axis=1), 0.0)

    def sample_log_ratio(self, zp, w, n, rng):
        idx = rng.choice(len(zp), size=n, p=w)
        out = np.empty(n)
        x_pts = self.x_of(zp)
        for j in range(len(zp)):
            sel = np.flatnonzero(idx == j)
            if sel.size == 0:
                continue
            counts = simulate_counts(1.0, self.kappa, x_pts[j], sel.size, rng=rng)
            own = count_pmf_raw(counts, x_pts[j], self.kappa)
            mix = np.zeros(sel.size)
            for k in range(len(zp)):
                mix += w[k] * count_pmf_raw(counts, x_pts[k], self.kappa)
            out[sel] = np.log2(own) - np.log2(mix)
        return out

    def mean_cost(self, zp, w) -> float:
        return self.channel.delta


def _model(channel: Channel, coding) -> _Model:
    coding = _as_coding(coding)
    if coding is Coding.TEMPORAL:
        return _TemporalModel(channel)
    return _RateModel(channel)


# Information densities ----------------------------------------------------

def _ensemble_z(model: _Model, ensemble: InputEnsemble):
    ensemble.check_within(model.base)
    return model.to_z(ensemble.points), np.asarray(ensemble.weights)


def marginal_info_density(theta, ensemble: InputEnsemble, channel: Channel, coding):
    """``D(p(.|theta) || p(.; pi))`` in bits, vectorized over ``theta``."""
    model = _model(channel, coding)
    zp, w = _ensemble_z(model, ensemble)
    out = model.info_density_z(model.to_z(theta), zp, w)
    return float(out[0]) if np.ndim(theta) == 0 else out


def ensemble_mi(ensemble: InputEnsemble, channel: Channel, coding) -> float:
    """Mutual information per channel use, ``sum_i w_i i(theta_i)``."""
    model = _model(channel, coding)
    zp, w = _ensemble_z(model, ensemble)
    return _mi(model, zp, w)


def _mi(model, zp, w) -> float:
    if len(zp) == 1:
        return 0.0
    d = model.info_density_z(zp, zp, w)
    return float(np.dot(w, d))


def monte_carlo_mi(ensemble: InputEnsemble, channel: Channel, coding,
                   n_samples: int = 100_000, seed=None, n_batches: int = 100):
    """Sampling estimate of ``ensemble_mi`` and its batch-means standard error.

    Draws (theta, output) pairs from the ensemble and the channel (spike
    counts come from simulated spike trains) and averages the log-ratio
    ``log p(y|theta) - log p(y; pi)``.
    """
    if n_samples < 10_000:
        raise ValidationError("monte_carlo_mi needs n_samples >= 10^4")
    model = _model(channel, coding)
    zp, w = _ensemble_z(model, ensemble)
    rng = np.random.default_rng(seed)
    vals = model.sample_log_ratio(zp, w, int(n_samples), rng)
    batches = np.array([b.mean() for b in np.array_split(vals, n_batches)])
    estimate = float(vals.mean())
    std_error = float(batches.std(ddof=1) / math.sqrt(n_batches))
    return estimate, std_error


# Bits per second ----------------------------------------------------------

def _bps(capacity_per_use: float, ensemble: InputEnsemble, channel: Channel, coding) -> float:
    coding = _as_coding(coding)
    if coding is Coding.RATE:
        if not isinstance(channel, CountChannelConfig):
            raise ValidationError("rate coding needs a CountChannelConfig (window delta)")
        return capacity_per_use / channel.delta
    base = _base(channel)
    mean_isi = float(np.dot(ensemble.weights, base.kappa * np.asarray(ensemble.points)))
    return capacity_per_use / mean_isi


def capacity_bps(solution: CapacitySolution, channel: Channel | None = None, coding=None) -> float:
    """Per-use rate divided by the time one use takes.

    Rate coding spends one window ``delta`` per use; temporal coding spends
    one ISI, on average ``sum_i w_i kappa theta_i``.
    """
    channel = solution.channel if channel is None else channel
    coding = solution.coding if coding is None else coding
    return _bps(solution.capacity_per_use, solution.ensemble, channel, coding)


# KKT certificate ----------------------------------------------------------

def _kkt(model: _Model, zp, w, capacity, probe_n, slack_tol, threads=1) -> KKTReport:
    if probe_n < 1001:
        raise ValidationError("kkt_verify needs probe_n >= 1001")
    zg = model.grid_z(probe_n)
    if threads > 1:
        chunks = np.array_split(zg, threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda c: model.info_density_z(c, zp, w), chunks))
        dens = np.concatenate(parts)
    else:
        dens = model.info_density_z(zg, zp, w)
    at_support = model.info_density_z(zp, zp, w)
    max_violation = max(0.0, float(np.max(dens) - capacity))
    gap = float(np.max(np.abs(at_support - capacity)))
    passed = max_violation <= slack_tol and gap <= slack_tol
    return KKTReport(
        grid=model.to_theta(zg),
        info_density=dens,
        capacity_ref=float(capacity),
        max_violation=max_violation,
        at_support_gap=gap,
        passed=bool(passed),
        slack_tol=float(slack_tol),
        support_density=at_support,
    )


def kkt_verify(solution: CapacitySolution, probe_n: int = 1001,
               slack_tol: float = SLACK_TOL, threads: int = 1) -> KKTReport:
    """Check ``i(theta) <= C + slack`` on a probe grid and ``i = C`` on the support."""
    model = _model(solution.channel, solution.coding)
    zp, w = _ensemble_z(model, solution.ensemble)
    return _kkt(model, zp, w, solution.capacity_per_use, probe_n, slack_tol, threads)


def _solution(model: _Model, zp, w, capacity, report) -> CapacitySolution:
    ens = InputEnsemble(model.to_theta(zp), w, renormalize=True)
    return CapacitySolution(
        ensemble=ens,
        coding=model.coding,
        capacity_per_use=float(capacity),
        capacity_bps=_bps(float(capacity), ens, model.channel, model.coding),
        certificate=report,
        channel=model.channel,
    )


def with_certificate(solution: CapacitySolution, probe_n=1001, slack_tol=SLACK_TOL,
                     threads=1) -> CapacitySolution:
    return replace(solution, certificate=kkt_verify(solution, probe_n, slack_tol, threads))


# Grid oracle ----------------------------------------------------------------

def grid_capacity(channel: Channel, coding, grid_n: int = 2001, tol: float = 1e-6,
                  max_iter: int = 100_000, certify: bool = True,
                  probe_n: int = 1001, slack_tol: float = SLACK_TOL) -> CapacitySolution:
    """Capacity restricted to a log-uniform grid of ``grid_n`` inputs.

    The output space is discretized too (a fine uniform grid in log ISI for
    temporal coding, the truncated count range for rate coding) and the
    resulting matrix channel is solved by Blahut-Arimoto to a certified gap
    of ``tol`` bits.
    """
    if grid_n < 51:
        raise ValidationError("grid_capacity needs grid_n >= 51")
    model = _model(channel, coding)
    zg = model.grid_z(grid_n)
    rows = model.matrix(zg)
    try:
        lower, w, upper = blahut_arimoto_matrix(rows, tol=tol, max_iter=max_iter,
                                               accelerate=True)
    except ConvergenceError as exc:
        raise ConvergenceError(
            f"grid capacity did not converge: {exc}", best=exc.best, bracket=exc.bracket
        ) from None
    keep = w > PRUNE_WEIGHT
    zp, wp = zg[keep], w[keep] / w[keep].sum()
    report = _kkt(model, zp, wp, lower, probe_n, slack_tol) if certify else None
    return _solution(model, zp, wp, lower, report)


# Particle solver ----------------------------------------------------------

def _ba_support(model, zp, w, gap_tol, max_iter):
    """Blahut-Arimoto for the weights on a fixed set of mass points."""
    d = model.info_density_z(zp, zp, w)
    for _ in range(max_iter):
        mi = float(np.dot(w, d))
        top = float(np.max(d))
        if top - mi < gap_tol:
            break
        w = w * np.exp2(d - top)
        w = w / w.sum()
        d = model.info_density_z(zp, zp, w)
    return w, d, float(np.dot(w, d))


def _merge(zp, w, model):
    """Merge neighbouring points closer than the merge distance (in seconds)."""
    zp, w = list(zp), list(w)
    i = 0
    while i < len(zp) - 1:
        t0, t1 = model.to_theta([zp[i], zp[i + 1]])
        if t1 - t0 < model.merge_dist:
            tot = w[i] + w[i + 1]
            zp[i] = (w[i] * zp[i] + w[i + 1] * zp[i + 1]) / tot
            w[i] = tot
            del zp[i + 1], w[i + 1]
        else:
            i += 1
    return np.array(zp), np.array(w)


def _golden_max(f, lo, hi, n_iter):
    """Vectorized golden-section search for maxima of ``f`` on ``[lo, hi]``."""
    a, b = lo.copy(), hi.copy()
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(n_iter):
        left = fc >= fd  # maximum lies in [a, d]
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        new = np.where(left, b - _GOLDEN * (b - a), a + _GOLDEN * (b - a))
        fnew = f(new)
        c, d, fc, fd = (
            np.where(left, new, d),
            np.where(left, c, new),
            np.where(left, fnew, fd),
            np.where(left, fc, fnew),
        )
    return 0.5 * (a + b)


def _reposition(model, zp, w, mi, n_iter=40):
    """Move points to local maxima of i(theta) between their neighbours.

    The joint move is tried first and kept if the mutual information does
    not drop (halving the step a few times). Failing that, points are moved
    one at a time under the same rule.
    """
    lo = np.concatenate([[0.0], zp[:-1]])
    hi = np.concatenate([zp[1:], [model.span]])

    def dens(z):
        return model.info_density_z(z, zp, w)

    target = _golden_max(dens, lo, hi, n_iter)
    cands = np.stack([zp, target, lo, hi])
    vals = dens(cands.ravel()).reshape(cands.shape)
    best = cands[np.argmax(vals, axis=0), np.arange(len(zp))]

    def attempt(zc, wc, step, cur):
        for _ in range(6):
            trial = zc + step
            order = np.argsort(trial, kind="stable")
            tz, tw = _merge(trial[order], wc[order], model)
            new_mi = _mi(model, tz, tw)
            if new_mi >= cur - 1e-13:
                return tz, tw, new_mi, True
            step = 0.5 * step
        return zc, wc, cur, False

    step = best - zp
    tz, tw, new_mi, ok = attempt(zp, w, step, mi)
    if ok or len(zp) < 2:
        return tz, tw, new_mi
    for j in np.argsort(-np.abs(step)):
        if step[j] == 0 or j >= len(zp):
            continue
        single = np.zeros(len(zp))
        single[j] = step[j]
        zp, w, mi, _ = attempt(zp, w, single, mi)
        if len(zp) != len(step):
            break
    return zp, w, mi


def _polish(model, zp, w, max_iter=200, h=1e-5):
    """Joint local ascent of the mutual information in positions and weights.

    L-BFGS-B on ``(z, log w)`` with central-difference gradients. Used when
    one-point-at-a-time moves stall because neighbouring points are
    strongly coupled.
    """
    m = len(zp)
    if m < 2:
        return zp, w, _mi(model, zp, w)

    def unpack(v):
        z = v[:m]
        lw = v[m:] - v[m:].max()
        ww = np.exp(lw)
        return z, ww / ww.sum()

    def neg_mi(v):
        z, ww = unpack(v)
        order = np.argsort(z, kind="stable")
        return -_mi(model, z[order], ww[order])

    def grad(v):
        g = np.empty_like(v)
        for k in range(len(v)):
            e = np.zeros_like(v)
            e[k] = h
            hi = v + e
            lo = v - e
            hi[:m] = np.clip(hi[:m], 0.0, model.span)
            lo[:m] = np.clip(lo[:m], 0.0, model.span)
            g[k] = (neg_mi(hi) - neg_mi(lo)) / (hi[k] - lo[k])
        return g

    v0 = np.concatenate([zp, np.log(np.maximum(w, 1e-300))])
    bounds = [(0.0, model.span)] * m + [(-50.0, 50.0)] * m
    res = minimize(neg_mi, v0, jac=grad, method="L-BFGS-B", bounds=bounds,
                   options={"maxiter": max_iter, "ftol": 1e-15, "gtol": 1e-10})
    start = _mi(model, zp, w)
    if -res.fun < start:
        return zp, w, start
    z, ww = unpack(res.x)
    order = np.argsort(z, kind="stable")
    z, ww = _merge(z[order], ww[order], model)
    return z, ww, _mi(model, z, ww)


def _violators(report, zgrid, capacity, tol):
    """Local maxima of the probe curve that exceed the capacity by ``tol``."""
    dens = report.info_density
    out = []
    for k in range(len(dens)):
        left = dens[k - 1] if k > 0 else -np.inf
        right = dens[k + 1] if k + 1 < len(dens) else -np.inf
        if dens[k] >= left and dens[k] >= right and dens[k] > capacity + tol:
            out.append(zgrid[k])
    return np.array(out)


def _fuse_same_peak(model, zp, w, loss_tol, span_frac=0.05):
    """Fuse neighbours that sit on one hump of i(theta) (no dip between them).

    A fusion is kept only if, after re-balancing the weights, it costs less
    than ``loss_tol`` bits of mutual information.
    """
    if len(zp) < 2:
        return zp, w
    d = model.info_density_z(zp, zp, w)
    mid = 0.5 * (zp[1:] + zp[:-1])
    dm = model.info_density_z(mid, zp, w)
    close = np.diff(zp) < span_frac * model.span
    same = close & (dm >= np.minimum(d[1:], d[:-1]) - 1e-12)
    if not same.any():
        return zp, w
    _, _, mi = _ba_support(model, zp, w, gap_tol=loss_tol, max_iter=200)
    for j in np.flatnonzero(same)[::-1]:
        if j + 1 >= len(zp):
            continue
        tot = w[j] + w[j + 1]
        fz = np.concatenate([zp[:j], [(w[j] * zp[j] + w[j + 1] * zp[j + 1]) / tot], zp[j + 2:]])
        fw = np.concatenate([w[:j], [tot], w[j + 2:]])
        fw, _, fmi = _ba_support(model, fz, fw, gap_tol=loss_tol, max_iter=200)
        if fmi >= mi - loss_tol:
            zp, w, mi = fz, fw, fmi
    return zp, w


def _initial_support(model, n, cluster_weight=1e-4):
    """Clusters of a coarse discrete Blahut-Arimoto solution, one point each."""
    zg = model.grid_z(n)
    try:
        _, w, _ = blahut_arimoto_matrix(model.matrix(zg), tol=1e-4, max_iter=20_000,
                                        accelerate=True)
    except ConvergenceError as exc:
        w = exc.best
    heavy = w > cluster_weight
    zp, wp = [], []
    k = 0
    while k < n:
        if not heavy[k]:
            k += 1
            continue
        j = k
        while j + 1 < n and heavy[j + 1]:
            j += 1
        mass = w[k:j + 1].sum()
        zp.append(float(np.dot(w[k:j + 1], zg[k:j + 1]) / mass))
        wp.append(mass)
        k = j + 1
    wp = np.array(wp)
    return np.array(zp), wp / wp.sum()


def _final_polish(model, sol, zp, w, mi, probe_n, tol, threads):
    """One joint ascent step after certification; kept only if still certified."""
    pz, pw, pmi = _polish(model, zp, w)
    if pmi <= mi:
        return sol
    report = _kkt(model, pz, pw, pmi, probe_n, tol, threads)
    return _solution(model, pz, pw, pmi, report) if report.passed else sol


def particle_capacity(channel: Channel, coding, init: InputEnsemble | int | None = None,
                      tol: float = SLACK_TOL, probe_n: int = 1001, max_outer: int = 60,
                      ba_iter: int = 2000, threads: int = 1, callback=None) -> CapacitySolution:
    """Capacity-achieving discrete input found by a mass-point search.

    The starting support comes from clustering a coarse discrete solution
    (or from ``init``). Each round then runs (a) Blahut-Arimoto on the
    current support, (b) drops points with negligible weight or an
    information density clearly below the current rate and fuses points
    that share a peak of ``i(theta)``, (c) moves points uphill on
    ``i(theta)`` by golden-section search and seeds new points at uncovered
    peaks. It returns as soon as the KKT certificate passes at
    ``slack_tol = tol``. ``callback(round, solution)`` sees every round.
    """
    model = _model(channel, coding)
    if init is None:
        init = 201
    if isinstance(init, (int, np.integer)):
        zp, w = _initial_support(model, int(init))
    else:
        zp, w = _ensemble_z(model, init)
        w = np.array(w, dtype=float)

    # a single point is already optimal when the channel cannot tell inputs apart
    z_mid = np.array([0.5 * model.span])
    one = _kkt(model, z_mid, np.ones(1), 0.0, probe_n, tol, threads)
    if one.passed:
        return _solution(model, z_mid, np.ones(1), 0.0, one)

    zprobe = model.grid_z(probe_n)
    best = None
    for rnd in range(max_outer):
        w, d, mi = _ba_support(model, zp, w, gap_tol=tol / 50, max_iter=ba_iter)
        drop = (w < PRUNE_WEIGHT) | (d < mi - tol)
        if drop.all():
            drop[np.argmax(w)] = False
        zp, w = zp[~drop], w[~drop] / w[~drop].sum()
        zp, w = _merge(zp, w, model)
        zp, w = _fuse_same_peak(model, zp, w, loss_tol=tol / 50)
        w, d, mi = _ba_support(model, zp, w, gap_tol=tol / 50, max_iter=ba_iter)
        report = _kkt(model, zp, w, mi, probe_n, tol, threads)
        sol = _solution(model, zp, w, mi, report)
        if callback is not None:
            callback(rnd, sol)
        if best is None or mi > best.capacity_per_use:
            best = sol
        if report.passed:
            return _final_polish(model, sol, zp, w, mi, probe_n, tol, threads)
        zp, w, mi = _reposition(model, zp, w, mi)
        new = _violators(report, zprobe, mi, tol)
        if new.size:
            # seed uncovered peaks with a little mass; BA sorts out the rest
            zp = np.concatenate([zp, new])
            w = np.concatenate([w, np.full(new.size, 0.05)])
            order = np.argsort(zp, kind="stable")
            zp, w = _merge(zp[order], w[order] / w.sum(), model)
        zp, w, mi = _polish(model, zp, w)
    raise ConvergenceError(
        f"particle solver not certified after {max_outer} rounds", best=best,
        bracket=(best.capacity_per_use,
                 best.capacity_per_use + best.certificate.max_violation),
    )


# Hard decoding ------------------------------------------------------------

def _isi_interval_probs(kappa, theta, lo, hi):
    """P(lo < T <= hi | theta) for Gamma(kappa, theta), differencing small tails."""
    xl, xh = lo / theta, hi / theta
    lower = gammainc(kappa, xh) - gammainc(kappa, xl)
    upper = gammaincc(kappa, xl) - gammaincc(kappa, xh)
    return np.where(gammainc(kappa, xl) < 0.5, lower, upper)


def _runs(owner):
    """Compress a per-output owner sequence into (start index, owner) runs."""
    starts = [0] + [k for k in range(1, len(owner)) if owner[k] != owner[k - 1]]
    return starts, [int(owner[s]) for s in starts]


def hard_decoder(solution: CapacitySolution, channel: Channel | None = None,
                 coding=None) -> DecoderPartition:
    """MAP decision regions for the solution's support and the induced channel."""
    channel = solution.channel if channel is None else channel
    coding = solution.coding if coding is None else _as_coding(coding)
    ens = solution.ensemble
    m = len(ens)
    if m < 2:
        raise ValidationError("hard_decoder needs an ensemble with at least 2 points")
    model = _model(channel, coding)
    ens.check_within(model.base)
    theta = np.asarray(ens.points)
    w = np.asarray(ens.weights)
    logw = np.log(np.where(w > 0, w, np.finfo(float).tiny))
    k = model.kappa

    if coding is Coding.TEMPORAL:
        # log w_j p(t|theta_j) = c_j - t/theta_j + (kappa-1) log t + const: lines in t
        c = logw - k * np.log(theta)
        slope = -1.0 / theta
        cross = []
        for i in range(m):
            for j in range(i + 1, m):
                t = (c[j] - c[i]) / (slope[i] - slope[j])
                if t > 0 and np.isfinite(t):
                    cross.append(t)
        cuts = np.unique(cross)
        edges = np.concatenate([[0.0], cuts, [np.inf]])
        if cuts.size:
            probe = np.concatenate([[cuts[0] / 2], 0.5 * (cuts[1:] + cuts[:-1]), [2 * cuts[-1]]])
        else:
            probe = np.array([1.0])
        owner = np.argmax(c[None, :] + probe[:, None] * slope[None, :], axis=1)
        starts, owners = _runs(owner)
        bounds = [float(edges[s]) for s in starts[1:]]
        lo = np.array([0.0] + bounds)
        hi = np.array(bounds + [np.inf])
        rows = np.zeros((m, m))
        for run, own in enumerate(owners):
            rows[:, own] += _isi_interval_probs(k, theta, lo[run], hi[run])
    else:
        x = channel.delta / theta
        r = model.r
        with np.errstate(divide="ignore"):
            score = logw[:, None] + np.log(count_pmf_raw(r[None, :], x[:, None], k))
        owner = np.argmax(score, axis=0)
        starts, owners = _runs(owner)
        bounds = [int(r[s]) for s in starts[1:]]
        rows = np.zeros((m, m))
        pmf = count_pmf_raw(r[None, :], x[:, None], k)
        for run, own in enumerate(owners):
            a = starts[run]
            b = starts[run + 1] if run + 1 < len(starts) else len(r)
            rows[:, own] += pmf[:, a:b].sum(axis=1)
        # counts beyond the truncation belong to the last run
        rows[:, owners[-1]] += np.maximum(0.0, 1.0 - pmf.sum(axis=1))

    rows = np.clip(rows, 0.0, None)
    rows /= rows.sum(axis=1, keepdims=True)
    induced = ChannelMatrix(tuple(range(m)), tuple(range(m)), rows)
    hard_rate, _ = blahut_arimoto(induced, tol=1e-10)
    degenerate = tuple(j for j in range(m) if j not in set(owners))
    return DecoderPartition(
        boundaries=tuple(bounds),
        owners=tuple(owners),
        induced_channel=induced,
        hard_rate=float(hard_rate),
        degenerate=degenerate,
    )

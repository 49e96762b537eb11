"""Gamma inter-spike-interval channel.

Given a constant input ``theta`` the neuron emits ISIs ``T ~ Gamma(kappa,
scale=theta)``, so the mean ISI is ``kappa * theta``. The admissible inputs
are ``Omega = [a0/kappa, b0/kappa]``, i.e. mean ISIs between ``a0`` and
``b0`` seconds.

For rate coding the output is the number of spikes of an ordinary renewal
process (first ISI starting at the left edge of the window) that fall in
``[0, delta]``. Since the time of the r-th spike is ``Gamma(r*kappa, theta)``,

    P(R = r) = P(r*kappa, delta/theta) - P((r+1)*kappa, delta/theta)

with ``P`` the regularized lower incomplete gamma function (and the first
term read as 1 when r = 0).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaincc, gammaln

from .errors import DomainError, ValidationError

DEFAULT_TAIL_TOL = 1e-12
DEFAULT_R_CAP = 10_000
# inputs this close to an Omega endpoint (relative) are snapped onto it
_EDGE_RTOL = 1e-12


@dataclass(frozen=True)
class GammaChannel:
    kappa: float
    a0: float
    b0: float

    def __post_init__(self):
        for name in ("kappa", "a0", "b0"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValidationError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if self.kappa <= 0:
            raise ValidationError(f"kappa must be positive, got {self.kappa!r}")
        if not 0 < self.a0 < self.b0:
            raise ValidationError(
                f"need 0 < a0 < b0 (degenerate interval), got a0={self.a0!r}, b0={self.b0!r}"
            )

    @property
    def theta_min(self) -> float:
        return self.a0 / self.kappa

    @property
    def theta_max(self) -> float:
        return self.b0 / self.kappa

    @property
    def width(self) -> float:
        return self.theta_max - self.theta_min

    def check_theta(self, theta):
        """Validate inputs against Omega, snapping round-off at the edges."""
        theta = np.asarray(theta, dtype=float)
        lo, hi = self.theta_min, self.theta_max
        tol = _EDGE_RTOL * hi
        if np.any(~np.isfinite(theta)) or np.any(theta < lo - tol) or np.any(theta > hi + tol):
            raise DomainError(
                f"theta outside Omega(kappa) = [{lo:.6g}, {hi:.6g}] s: {theta!r}"
            )
        return np.clip(theta, lo, hi)

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "a0": self.a0, "b0": self.b0}

    def scaled(self, factor: float) -> "GammaChannel":
        return GammaChannel(self.kappa, self.a0 * factor, self.b0 * factor)


@dataclass(frozen=True)
class CountChannelConfig:
    base: GammaChannel
    delta: float
    tail_tol: float = DEFAULT_TAIL_TOL
    r_cap: int = DEFAULT_R_CAP

    def __post_init__(self):
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "tail_tol", float(self.tail_tol))
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise ValidationError(f"delta must be positive, got {self.delta!r}")
        if not 0 < self.tail_tol < 1e-6:
            raise ValidationError(f"tail_tol must lie in (0, 1e-6), got {self.tail_tol!r}")
        if int(self.r_cap) < 1:
            raise ValidationError("r_cap must be a positive integer")

    @property
    def kappa(self) -> float:
        return self.base.kappa

    def to_dict(self) -> dict:
        return {**self.base.to_dict(), "delta": self.delta, "tail_tol": self.tail_tol}

    @classmethod
    def from_dict(cls, d: dict) -> "CountChannelConfig":
        base = GammaChannel(d["kappa"], d["a0"], d["b0"])
        return cls(base, d["delta"], d.get("tail_tol", DEFAULT_TAIL_TOL))

    def scaled(self, factor: float) -> "CountChannelConfig":
        return CountChannelConfig(self.base.scaled(factor), self.delta * factor,
                                  self.tail_tol, self.r_cap)


@dataclass(frozen=True)
class TruncatedCountPMF:
    theta: float
    probs: np.ndarray
    r_max: int

    @property
    def deficit(self) -> float:
        return max(0.0, 1.0 - math.fsum(self.probs))


# ISI densities ------------------------------------------------------------

def gamma_logpdf(t, theta, kappa):
    """log p(t|theta; kappa) in nats without domain checks (t > 0)."""
    t = np.asarray(t, dtype=float)
    return (kappa - 1.0) * np.log(t) - t / theta - gammaln(kappa) - kappa * np.log(theta)


def isi_log_density(t, theta, ch: GammaChannel):
    """Natural-log ISI density ``log p(t | theta; kappa)``."""
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)) or np.any(~np.isfinite(t)):
        raise DomainError(f"ISI must be positive and finite, got {t!r}")
    theta = ch.check_theta(theta)
    out = gamma_logpdf(t, theta, ch.kappa)
    return float(out) if out.ndim == 0 else out


def isi_log2_density(t, theta, ch: GammaChannel):
    return isi_log_density(t, theta, ch) / math.log(2.0)


def isi_density(t, theta, ch: GammaChannel):
    return np.exp(isi_log_density(t, theta, ch))


# Spike counts -------------------------------------------------------------

def _lower_diff(a, b, x):
    """P(a, x) - P(b, x) for a < b, taking the difference of the smaller tails."""
    a, b, x = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float), np.asarray(x, float))
    lower = gammainc(a, x) - gammainc(b, x)
    upper = gammaincc(b, x) - gammaincc(a, x)
    # when P(a, x) < 1/2 the lower tails are the small, accurate ones
    use_lower = gammainc(a, x) < 0.5
    return np.where(use_lower, lower, upper)


def count_pmf_raw(r, x, kappa):
    """P(R = r) for dimensionless window ``x = delta/theta``; vectorized, no checks."""
    r = np.asarray(r, dtype=float)
    x = np.asarray(x, dtype=float)
    first = gammaincc(kappa, x)  # r = 0: first spike after the window
    rk = np.where(r > 0, r, 1.0) * kappa
    later = _lower_diff(rk, rk + kappa, x)
    return np.clip(np.where(r == 0, first, later), 0.0, 1.0)


def count_tail(r_max, x, kappa):
    """P(R > r_max) = P((r_max + 1) kappa, x)."""
    return gammainc((np.asarray(r_max, float) + 1.0) * kappa, x)


def _check_count_args(theta, cfg: CountChannelConfig):
    theta = cfg.base.check_theta(theta)
    return theta, cfg.delta / theta


def count_pmf(r, theta, cfg: CountChannelConfig):
    """Probability of ``r`` spikes in a window of length ``cfg.delta``."""
    r_arr = np.asarray(r)
    if np.any(r_arr < 0) or np.any(np.asarray(r_arr, float) != np.floor(r_arr)):
        raise DomainError(f"spike count must be a non-negative integer, got {r!r}")
    _, x = _check_count_args(theta, cfg)
    out = count_pmf_raw(r_arr, x, cfg.kappa)
    return float(out) if out.ndim == 0 else out


def r_max_for(x, kappa, tail_tol, r_cap=DEFAULT_R_CAP) -> int:
    """Smallest r with P(R <= r) >= 1 - tail_tol at dimensionless window x."""
    # the mean count is about x/kappa; search upward from below it
    lo = 0
    hi = max(1, int(x / kappa + 10 * math.sqrt(x / kappa + 1) + 10))
    while count_tail(hi, x, kappa) > tail_tol:
        lo = hi
        hi *= 2
        if hi > 4 * r_cap:
            break
    if count_tail(lo, x, kappa) <= tail_tol:
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if count_tail(mid, x, kappa) <= tail_tol:
            hi = mid
        else:
            lo = mid
    return hi


def truncated_count_pmf(theta: float, cfg: CountChannelConfig) -> TruncatedCountPMF:
    """Count probabilities for r = 0..r_max with tail mass at most ``tail_tol``."""
    theta, x = _check_count_args(theta, cfg)
    r_max = r_max_for(float(x), cfg.kappa, cfg.tail_tol, cfg.r_cap)
    if r_max > cfg.r_cap:
        raise DomainError(
            f"count truncation needs r_max={r_max} > cap {cfg.r_cap} "
            f"at theta={float(theta):.6g} s, delta={cfg.delta:.6g} s"
        )
    probs = count_pmf_raw(np.arange(r_max + 1), x, cfg.kappa)
    probs.setflags(write=False)
    return TruncatedCountPMF(float(theta), probs, r_max)


def count_mean(theta: float, cfg: CountChannelConfig) -> float:
    """Exact expected count in the window, summed from the truncated PMF."""
    tp = truncated_count_pmf(theta, cfg)
    return float(np.dot(np.arange(tp.r_max + 1), tp.probs))


def asymptotic_count_mean(theta: float, cfg: CountChannelConfig) -> float:
    """Long-window approximation delta / (kappa * theta)."""
    theta = float(cfg.base.check_theta(theta))
    return cfg.delta / (cfg.kappa * theta)


# Simulation helpers -------------------------------------------------------

def sample_isis(theta, kappa, n, rng):
    return rng.gamma(kappa, theta, size=n)


def simulate_counts(theta: float, kappa: float, delta: float, n: int, seed=None,
                    rng=None, chunk: int = 100_000) -> np.ndarray:
    """Spike counts in ``[0, delta]`` from simulated gamma spike trains.

    Spike times are cumulative sums of i.i.d. Gamma(kappa, theta) ISIs,
    starting at 0. Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed) if rng is None else rng
    out = np.empty(n, dtype=np.int64)
    mean_count = delta / (kappa * theta)
    width = max(8, int(mean_count + 6 * math.sqrt(mean_count + 1) + 8))
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        elapsed = np.zeros(m)
        counts = np.zeros(m, dtype=np.int64)
        active = np.arange(m)
        while active.size:
            isis = rng.gamma(kappa, theta, size=(active.size, width))
            times = elapsed[active, None] + np.cumsum(isis, axis=1)
            inside = times <= delta
            counts[active] += inside.sum(axis=1)
            done = ~inside[:, -1]
            elapsed[active] = times[:, -1]
            active = active[~done]
        out[start:start + m] = counts
    return out

"""Categorical and diagonal-Gaussian machinery, plus Gumbel-Max/Gumbel-Softmax.

Functions accept either numpy arrays or diffcore Tensors; with Tensors the
result is differentiable.  Batched inputs put the event dimension last.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc

LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0
GUMBEL_CLAMP = 1e-12
_LOG_2PI = float(np.log(2 * np.pi))


class DistributionError(ValueError):
    pass


def _validate_simplex(probs: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    probs = np.asarray(probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0:
        raise DistributionError("probability vector must be 1-D and nonempty")
    if not np.all(np.isfinite(probs)) or np.any(probs < 0):
        raise DistributionError("probabilities must be finite and nonnegative")
    total = probs.sum()
    if total <= 0:
        raise DistributionError("degenerate simplex (all zero)")
    if abs(total - 1.0) > tol:
        raise DistributionError(f"probabilities sum to {total}, not 1")
    return probs


@dataclass(frozen=True)
class Categorical:
    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _validate_simplex(self.probs))

    @classmethod
    def from_logits(cls, logits) -> "Categorical":
        return cls(dc.softmax(np.asarray(logits, dtype=float)))

    def sample(self, rng: np.random.Generator) -> int:
        return categorical_sample(self.probs, rng)

    def log_prob(self, a: int) -> float:
        return float(np.log(self.probs[a]))

    def entropy(self) -> float:
        p = self.probs[self.probs > 0]
        return float(-(p * np.log(p)).sum())


@dataclass(frozen=True)
class DiagGaussian:
    mean: np.ndarray
    log_std: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        log_std = np.broadcast_to(np.asarray(self.log_std, dtype=float), mean.shape)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "log_std", np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX))

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.mean + self.std * rng.standard_normal(self.mean.shape)

    def sample_squashed(self, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        """(pre-squash draw, tanh of it); the squashed value lies in (-1, 1)."""
        u = self.sample(rng)
        return u, np.tanh(u)

    def log_prob(self, x) -> float:
        return float(gaussian_log_prob(np.asarray(x, dtype=float), self.mean, self.log_std))

    def entropy(self) -> float:
        return float(np.sum(self.log_std + 0.5 * (1.0 + _LOG_2PI)))


# ---------------------------------------------------------------------------
# sampling


def categorical_sample(probs, rng: np.random.Generator) -> int:
    """Draw an index with probability probs[i] (inverse CDF on one uniform)."""
    probs = _validate_simplex(probs)
    cdf = np.cumsum(probs)
    u = rng.random() * cdf[-1]
    idx = int(np.searchsorted(cdf, u, side="right"))
    idx = min(idx, probs.size - 1)
    # never land on a zero-probability slot through round-off
    while probs[idx] == 0:
        idx -= 1
    return idx


def gumbel_noise(rng: np.random.Generator, shape) -> np.ndarray:
    u = np.clip(rng.random(shape), GUMBEL_CLAMP, 1.0 - GUMBEL_CLAMP)
    return -np.log(-np.log(u))


def gumbel_max_sample(log_probs, noise) -> int | np.ndarray:
    """argmax(noise + log_probs) over the last axis; ties go to the lowest index."""
    lp = np.asarray(log_probs.data if isinstance(log_probs, dc.Tensor) else log_probs, dtype=float)
    g = np.asarray(noise, dtype=float)
    z = g + lp
    if not np.all(np.isfinite(z)):
        raise DistributionError("non-finite log-probabilities or noise")
    idx = np.argmax(z, axis=-1)
    return int(idx) if np.ndim(idx) == 0 else idx


def gumbel_softmax(log_probs, noise, t: float):
    """softmax((noise + log_probs) / t); differentiable in log_probs."""
    if not t > 0:
        raise DistributionError(f"temperature must be positive, got {t}")
    return dc.softmax((log_probs + np.asarray(noise, dtype=float)) * (1.0 / t), axis=-1)


# ---------------------------------------------------------------------------
# densities and divergences


def gaussian_log_prob(x, mean, log_std):
    """Diagonal Gaussian log density summed over the last axis."""
    z = (x - mean) * dc.exp(-log_std)
    return dc.tsum(-0.5 * z * z - log_std - 0.5 * _LOG_2PI, axis=-1)


def kl_categorical(p, q) -> float:
    """KL(p || q) for probability vectors, with 0 ln 0 = 0."""
    p = _validate_simplex(p, tol=1e-6)
    q = _validate_simplex(q, tol=1e-6)
    if p.shape != q.shape:
        raise DistributionError("categorical supports differ")
    support = p > 0
    if np.any(q[support] <= 0):
        raise DistributionError("KL is infinite: q vanishes where p is positive")
    return float(np.sum(p[support] * (np.log(p[support]) - np.log(q[support]))))


def kl_categorical_logp(logp_p, logp_q):
    """Batched KL(p || q) from log-probabilities (last axis); differentiable."""
    return dc.tsum(dc.exp(logp_p) * (logp_p - logp_q), axis=-1)


def kl_diag_gaussian(mean_p, log_std_p, mean_q, log_std_q):
    """Closed-form KL(p || q) between diagonal Gaussians, summed over the last axis."""
    for a, b in ((mean_p, mean_q), (mean_p, log_std_p)):
        if np.shape(getattr(a, "data", a))[-1:] != np.shape(getattr(b, "data", b))[-1:]:
            raise DistributionError("Gaussian dimensions differ")
    var_p = dc.exp(2.0 * log_std_p)
    var_q = dc.exp(2.0 * log_std_q)
    diff = mean_p - mean_q
    return dc.tsum(log_std_q - log_std_p + (var_p + diff * diff) / (2.0 * var_q) - 0.5, axis=-1)


def kl_diag_gaussian_dist(p: DiagGaussian, q: DiagGaussian) -> float:
    if p.mean.shape != q.mean.shape:
        raise DistributionError("Gaussian dimensions differ")
    return float(kl_diag_gaussian(p.mean, p.log_std, q.mean, q.log_std))


def log_prob_joint(probs, gaussian: DiagGaussian, discrete: int, pre_squash_params) -> float:
    """ln pi_d(a|s) + ln pi_c(u|a,s), the Gaussian term in pre-squash space.

    ``gaussian`` is the parameter distribution for the chosen discrete action
    (already truncated to that action's parameter count).
    """
    probs = _validate_simplex(probs)
    if not 0 <= discrete < probs.size:
        raise DistributionError(f"discrete action {discrete} out of range")
    u = np.atleast_1d(np.asarray(pre_squash_params, dtype=float))
    if u.shape != gaussian.mean.shape:
        raise DistributionError("parameter dimension does not match the chosen action")
    with np.errstate(divide="ignore"):
        return float(np.log(probs[discrete])) + gaussian.log_prob(u)

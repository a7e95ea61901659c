"""Shared PAMDP types: the action-space description, joint actions, transitions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class EpisodeOverError(RuntimeError):
    """step() called on an episode that already terminated."""


@dataclass(frozen=True)
class PamdpSpec:
    state_dim: int
    param_dims: tuple[int, ...]
    param_bounds: tuple[tuple[tuple[float, float], ...], ...]
    horizon: int
    gamma: float
    action_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.state_dim <= 0 or not self.param_dims:
            raise ValueError("need a positive state dimension and at least one discrete action")
        if len(self.param_bounds) != len(self.param_dims):
            raise ValueError("one bounds entry per discrete action")
        for m, bounds in zip(self.param_dims, self.param_bounds):
            if len(bounds) != m:
                raise ValueError("bounds must list one (low, high) per parameter")
            for lo, hi in bounds:
                if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                    raise ValueError(f"bad parameter bounds ({lo}, {hi})")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")

    @property
    def n_discrete(self) -> int:
        return len(self.param_dims)

    @property
    def max_param_dim(self) -> int:
        return max(self.param_dims)

    def low(self, a: int) -> np.ndarray:
        return np.array([b[0] for b in self.param_bounds[a]])

    def high(self, a: int) -> np.ndarray:
        return np.array([b[1] for b in self.param_bounds[a]])

    def scale_params(self, a: int, unit) -> np.ndarray:
        """Affine map from (-1, 1) to the action's [low, high] box, then clamp."""
        lo, hi = self.low(a), self.high(a)
        unit = np.asarray(unit, dtype=float)[: self.param_dims[a]]
        return np.clip(lo + (unit + 1.0) * 0.5 * (hi - lo), lo, hi)

    def unscale_params(self, a: int, params) -> np.ndarray:
        lo, hi = self.low(a), self.high(a)
        return 2.0 * (np.asarray(params, dtype=float) - lo) / (hi - lo) - 1.0


@dataclass(frozen=True)
class ParamAction:
    discrete: int
    params: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "discrete", int(self.discrete))
        object.__setattr__(self, "params", np.atleast_1d(np.asarray(self.params, dtype=float)))

    def validate(self, spec: PamdpSpec):
        if not 0 <= self.discrete < spec.n_discrete:
            raise ValueError(f"discrete action {self.discrete} out of range")
        if self.params.shape != (spec.param_dims[self.discrete],):
            raise ValueError(
                f"action {self.discrete} takes {spec.param_dims[self.discrete]} parameters, "
                f"got {self.params.shape}")


@dataclass
class Transition:
    state: np.ndarray
    action: ParamAction
    reward: float
    next_state: np.ndarray
    terminal: bool
    noise: np.ndarray | None = None
    info: dict = field(default_factory=dict)

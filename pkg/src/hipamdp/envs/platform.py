"""A self-contained Platform domain.

Three platforms separated by two gaps, an enemy patrolling each of the first
two platforms.  Each discrete action (run, jump, leap) takes one parameter,
the horizontal speed, and executes to completion inside one ``step``:

* run   -- one tick of grounded movement.  Running past the platform edge
           drops the agent into the gap; running into an enemy is fatal.
* jump  -- a hop of height ``jump_height`` lasting ``jump_airtime`` ticks.
           High enough to pass over enemies, but the agent stays above its
           own platform: a hop carried past the edge ends in the gap.
* leap  -- a long, low arc lasting ``leap_airtime`` ticks.  Lands on the far
           side of a gap, but is too low to clear an enemy.

Reward is forward progress divided by the course length, so an episode
return lies in [0, 1] and equals 1 only when the end of the last platform
is reached.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .base import EpisodeOverError, PamdpSpec, ParamAction

RUN, JUMP, LEAP = 0, 1, 2
ACTION_NAMES = ("run", "jump", "leap")
OBS_DIM = 9


@dataclass(frozen=True)
class PlatformConfig:
    platform_widths: tuple[float, ...] = (25.0, 30.0, 30.0)
    gap_widths: tuple[float, ...] = (6.0, 8.0)
    enemy_platforms: tuple[int, ...] = (0, 1)
    enemy_speed: float = 2.0
    enemy_margin: float = 6.0
    contact_radius: float = 1.5
    run_max: float = 6.0
    jump_max: float = 6.0
    leap_max: float = 12.0
    jump_airtime: int = 3
    leap_airtime: int = 5
    jump_height: float = 4.0
    max_steps: int = 200
    substeps: int = 4
    gamma: float = 0.99

    def __post_init__(self):
        if len(self.gap_widths) != len(self.platform_widths) - 1:
            raise ValueError("need exactly one gap between consecutive platforms")
        if any(w <= 2 * self.enemy_margin for w in self.platform_widths):
            raise ValueError("platforms too narrow for the enemy patrol margin")

    @classmethod
    def from_dict(cls, d: dict) -> "PlatformConfig":
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


@dataclass
class PlatformState:
    x: float
    enemy_x: np.ndarray
    enemy_v: np.ndarray
    steps: int = 0
    done: bool = False
    outcome: str | None = None


class PlatformEnv:
    name = "platform"

    def __init__(self, config: PlatformConfig | None = None):
        self.config = config or PlatformConfig()
        c = self.config
        starts, ends, pos = [], [], 0.0
        for i, w in enumerate(c.platform_widths):
            starts.append(pos)
            ends.append(pos + w)
            pos += w + (c.gap_widths[i] if i < len(c.gap_widths) else 0.0)
        self.starts = np.array(starts)
        self.ends = np.array(ends)
        self.length = float(self.ends[-1])
        self.patrol = np.array([
            (self.starts[p] + c.enemy_margin, self.ends[p] - c.enemy_margin)
            for p in c.enemy_platforms
        ]).reshape(-1, 2)
        self.spec = PamdpSpec(
            state_dim=OBS_DIM,
            param_dims=(1, 1, 1),
            param_bounds=(((0.0, c.run_max),), ((0.0, c.jump_max),), ((0.0, c.leap_max),)),
            horizon=c.max_steps,
            gamma=c.gamma,
            action_names=ACTION_NAMES,
        )
        self.clamp_count = 0
        self.state: PlatformState | None = None

    # -- geometry ---------------------------------------------------------

    def platform_of(self, x: float) -> int | None:
        for i, (lo, hi) in enumerate(zip(self.starts, self.ends)):
            if lo <= x <= hi:
                return i
        return None

    # -- episode ----------------------------------------------------------

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        n = len(self.patrol)
        ex = self.patrol[:, 0] + rng.random(n) * (self.patrol[:, 1] - self.patrol[:, 0])
        ev = np.where(rng.random(n) < 0.5, -1.0, 1.0) * self.config.enemy_speed
        self.state = PlatformState(x=0.0, enemy_x=ex, enemy_v=ev)
        return self.observe()

    def observe(self) -> np.ndarray:
        s = self.state
        c = self.config
        obs = np.zeros(OBS_DIM)
        obs[0] = s.x / self.length
        obs[1] = 0.0  # vertical phase: decisions are only taken on the ground
        obs[2] = 1.0
        plat = self.platform_of(s.x)
        if plat is not None:
            obs[3 + plat] = 1.0
            if plat in c.enemy_platforms:
                k = c.enemy_platforms.index(plat)
                obs[6] = np.clip((s.enemy_x[k] - s.x) / 15.0, -1.0, 1.0)
                obs[7] = np.sign(s.enemy_v[k])
            else:
                obs[6] = 1.0
            obs[8] = np.clip((self.ends[plat] - s.x) / 30.0, 0.0, 1.0)
        return obs

    def _clamp(self, action: ParamAction) -> float:
        lo = self.spec.param_bounds[action.discrete][0][0]
        hi = self.spec.param_bounds[action.discrete][0][1]
        dx = float(action.params[0])
        if not lo <= dx <= hi:
            self.clamp_count += 1
            dx = min(max(dx, lo), hi)
        return dx

    def _move_enemies(self, ex: np.ndarray, ev: np.ndarray, dt: float):
        ex = ex + ev * dt
        lo, hi = self.patrol[:, 0], self.patrol[:, 1]
        over, under = ex > hi, ex < lo
        ex = np.where(over, 2 * hi - ex, ex)
        ex = np.where(under, 2 * lo - ex, ex)
        ev = np.where(over | under, -ev, ev)
        return ex, ev

    def _tick(self, x: float, dx: float, contact: bool) -> tuple[float, bool]:
        """Advance one tick; returns (new x, enemy contact)."""
        s = self.state
        c = self.config
        h = dx / c.substeps
        hit = False
        for _ in range(c.substeps):
            ex0 = s.enemy_x
            s.enemy_x, s.enemy_v = self._move_enemies(s.enemy_x, s.enemy_v, 1.0 / c.substeps)
            x1 = x + h
            if contact and len(ex0):
                r0 = x - ex0
                r1 = x1 - s.enemy_x
                crossed = r0 * r1 <= 0
                close = np.minimum(np.abs(r0), np.abs(r1)) < c.contact_radius
                if np.any(crossed | close):
                    hit = True
            x = x1
        return x, hit

    def step(self, action: ParamAction):
        s = self.state
        if s is None or s.done:
            raise EpisodeOverError("step() on a finished episode; call reset()")
        action.validate(self.spec)
        c = self.config
        dx = self._clamp(action)
        plat = self.platform_of(s.x)
        edge = self.ends[plat]
        x0 = s.x
        x = s.x
        outcome = None

        if action.discrete == RUN:
            x, hit = self._tick(x, dx, contact=True)
            if x >= self.length:
                outcome = "goal"
            elif x > edge:
                outcome = "fall"
            elif hit:
                outcome = "enemy"
        elif action.discrete == JUMP:
            for _ in range(c.jump_airtime):
                x, _ = self._tick(x, dx, contact=False)
                if x >= self.length:
                    outcome = "goal"
                    break
                if x > edge:
                    outcome = "fall"
                    break
            if outcome is None and self._grounded_contact(x):
                outcome = "enemy"
        else:
            hit = False
            for _ in range(c.leap_airtime):
                x, tick_hit = self._tick(x, dx, contact=True)
                hit = hit or tick_hit
                if hit or x >= self.length:
                    break
            if x >= self.length and not hit:
                outcome = "goal"
            elif hit:
                outcome = "enemy"
            elif self.platform_of(x) is None:
                outcome = "fall"

        if outcome == "fall" and action.discrete != LEAP:
            nxt = plat + 1
            x = min(x, self.starts[nxt] if nxt < len(self.starts) else self.length)
        x = min(x, self.length)
        reward = (x - x0) / self.length
        s.x = x
        s.steps += 1
        if outcome is None and s.steps >= c.max_steps:
            outcome = "timeout"
        s.outcome = outcome
        s.done = outcome is not None
        return self.observe(), float(reward), s.done

    def _grounded_contact(self, x: float) -> bool:
        if not len(self.state.enemy_x):
            return False
        return bool(np.any(np.abs(x - self.state.enemy_x) < self.config.contact_radius))

    @property
    def outcome(self) -> str | None:
        return None if self.state is None else self.state.outcome

from .base import EpisodeOverError, PamdpSpec, ParamAction, Transition
from .platform import PlatformConfig, PlatformEnv
from .toy import ToyConfig, ToyPamdp, ToyPolicyTable, toy_exact_policy_value, toy_optimal_value

ENVIRONMENTS = {"platform": (PlatformEnv, PlatformConfig), "toy": (ToyPamdp, ToyConfig)}


def make_env(name: str, overrides: dict | None = None):
    try:
        env_cls, cfg_cls = ENVIRONMENTS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return env_cls(cfg_cls.from_dict(overrides or {}))

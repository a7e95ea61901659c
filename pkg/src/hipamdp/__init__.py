"""Hierarchical policies for parameterized-action reinforcement learning.

Modules: diffcore (autodiff), distributions, envs, policies, trpo (PATRPO),
svg0 (PASVG(0)), paddpg (baseline), harness and cli (experiments).
"""

__version__ = "0.1.0"

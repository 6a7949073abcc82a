"""Object-centric simulators and perception."""

from .base import EPISODE_CAP, Entity, EnvError, EnvState, Environment
from .getout import GetOut
from .loot import Loot
from .perception import make_perceiver, perceive, sigmoid
from .threefishes import ThreeFishes
from .adapt import swap_predicate

_ENVS = {"getout": GetOut, "threefishes": ThreeFishes, "loot": Loot}


def make_env(env_id: str, variant: str = "base") -> Environment:
    try:
        cls = _ENVS[env_id]
    except KeyError:
        raise EnvError(f"unknown environment {env_id!r}") from None
    return cls(variant)


__all__ = [
    "EPISODE_CAP", "Entity", "EnvError", "EnvState", "Environment",
    "GetOut", "ThreeFishes", "Loot", "make_env", "make_perceiver",
    "perceive", "sigmoid", "swap_predicate",
]

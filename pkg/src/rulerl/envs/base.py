"""Object-centric environment scaffolding shared by all simulators."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

EPISODE_CAP = 500


class EnvError(RuntimeError):
    pass


@dataclass
class Entity:
    id: str  # constant symbol in the language, e.g. obj1
    cls: str  # agent, key, door, enemy, fish
    x: float
    y: float
    size: float = 1.0
    color: str | None = None
    has_key: bool = False
    static: bool = False
    opened: bool = False
    alive: bool = True
    vx: float = 0.0  # drift velocity (enemies, fish)
    vy: float = 0.0
    phase: int = 0  # jump arc tick (platform agent)
    pair: int | None = None  # key/door pairing index (loot)
    carrying: tuple[int, ...] = ()  # pair indices of held keys (agent, loot)

    def copy(self) -> "Entity":
        return replace(self)


@dataclass
class EnvState:
    entities: list[Entity]
    tick: int = 0
    terminal: bool = False

    @property
    def agent(self) -> Entity:
        for e in self.entities:
            if e.cls == "agent":
                return e
        raise EnvError("state has no agent entity")

    def entity(self, eid: str) -> Entity | None:
        for e in self.entities:
            if e.id == eid:
                return e
        return None

    def copy(self) -> "EnvState":
        return EnvState([e.copy() for e in self.entities], self.tick, self.terminal)


class Environment:
    """Base simulator: seeded reset, deterministic step, ASCII rendering."""

    name = "base"
    actions: list[str] = []
    width = 10.0
    height = 10.0

    def __init__(self, variant: str = "base"):
        self.variant = variant
        self.state: EnvState | None = None
        self._rng = np.random.default_rng(0)

    def reset(self, seed: int) -> EnvState:
        self._rng = np.random.default_rng(seed)
        self.state = self._initial_state()
        return self.state

    def step(self, action: str) -> tuple[EnvState, float, bool]:
        if self.state is None:
            raise EnvError("reset the environment before stepping")
        if self.state.terminal:
            raise EnvError("cannot step a terminal state")
        if action not in self.actions:
            raise EnvError(f"unknown action {action!r} for {self.name}")
        state, reward, done = self._transition(self.state, action)
        state.tick = self.state.tick + 1
        if state.tick >= EPISODE_CAP:
            done = True
        state.terminal = done
        self.state = state
        return state, reward, done

    def _initial_state(self) -> EnvState:
        raise NotImplementedError

    def _transition(self, state: EnvState, action: str):
        raise NotImplementedError

    def render_ascii(self, state: EnvState | None = None) -> str:
        state = state or self.state
        if state is None:
            raise EnvError("no state to render")
        cols = int(self.width) + 1
        rows = max(int(self.height) + 1, 1)
        grid = [["." for _ in range(cols)] for _ in range(rows)]
        glyphs = {"agent": "A", "key": "K", "door": "D", "enemy": "E", "fish": "F"}
        for e in state.entities:
            if not e.alive:
                continue
            glyph = glyphs.get(e.cls, "?")
            if e.cls == "door" and e.opened:
                glyph = "d"
            r = rows - 1 - min(max(int(round(e.y)), 0), rows - 1)
            c = min(max(int(round(e.x)), 0), cols - 1)
            grid[r][c] = glyph
        return "\n".join("".join(row) for row in grid)

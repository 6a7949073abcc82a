"""Loot grid: collect keys, then open the matching (same color) doors.

Two-dimensional grid with unit moves. Episodes hold one or two key/door
pairs; a door only opens for the key of its own pair. The ``colored``
variant repaints the doors, which changes color atoms but not the pairing.
"""

from __future__ import annotations

import math

from .base import Entity, EnvState, Environment
from .perception import relation, sigmoid

GRID = 16
REWARD_KEY = 1.0
REWARD_DOOR = 2.0
ALPHA = 5.0
CLOSE_ALPHA = 0.5
CLOSE_DIST = 8.0
COLORS = ["red", "green", "blue"]


class Loot(Environment):
    name = "loot"
    actions = ["left", "right", "up", "down"]
    width = float(GRID - 1)
    height = float(GRID - 1)

    def __init__(self, variant: str = "base"):
        if variant not in ("base", "colored"):
            raise ValueError(f"unknown loot variant {variant!r}")
        super().__init__(variant)

    @property
    def language_name(self) -> str:
        return "loot"

    def _initial_state(self) -> EnvState:
        rng = self._rng
        n_pairs = int(rng.integers(1, 3))
        cells = rng.choice(GRID * GRID, size=1 + 2 * n_pairs, replace=False)
        spots = [(float(c % GRID), float(c // GRID)) for c in cells]
        pair_colors = list(rng.choice(COLORS, size=n_pairs, replace=False))
        entities = [Entity("obj1", "agent", *spots[0], color="orange")]
        for p in range(n_pairs):
            key_color = str(pair_colors[p])
            door_color = key_color
            if self.variant == "colored":
                others = [c for c in COLORS if c != key_color]
                door_color = str(others[int(rng.integers(len(others)))])
            entities.append(
                Entity(f"obj{2 + 2 * p}", "key", *spots[1 + 2 * p],
                       color=key_color, pair=p)
            )
            entities.append(
                Entity(f"obj{3 + 2 * p}", "door", *spots[2 + 2 * p],
                       color=door_color, pair=p)
            )
        return EnvState(entities)

    def _transition(self, state: EnvState, action: str):
        s = state.copy()
        agent = s.agent
        if action == "left":
            agent.x -= 1.0
        elif action == "right":
            agent.x += 1.0
        elif action == "up":
            agent.y += 1.0
        elif action == "down":
            agent.y -= 1.0
        agent.x = min(max(agent.x, 0.0), self.width)
        agent.y = min(max(agent.y, 0.0), self.height)

        reward = 0.0
        for e in s.entities:
            if not e.alive or math.hypot(agent.x - e.x, agent.y - e.y) >= 0.5:
                continue
            if e.cls == "key":
                reward += REWARD_KEY
                e.alive = False
                agent.carrying = agent.carrying + (e.pair,)
            elif e.cls == "door" and not e.opened and e.pair in agent.carrying:
                reward += REWARD_DOOR
                e.opened = True
                agent.carrying = tuple(p for p in agent.carrying if p != e.pair)
        done = all(e.opened for e in s.entities if e.cls == "door")
        return s, reward, done

    def evaluators(self):
        def present(state, eid):
            e = state.entity(eid)
            if e is None or not e.alive or (e.cls == "door" and e.opened):
                return None
            return e

        def pairwise(fn):
            def wrapped(state, terms):
                a, b = present(state, terms[0]), present(state, terms[1])
                if a is None or b is None:
                    return 0.0
                return fn(a, b)
            return wrapped

        def type_of(state, terms):
            e = present(state, terms[0])
            return 1.0 if e is not None and e.cls == terms[1] else 0.0

        def color_of(state, terms):
            e = present(state, terms[0])
            return 1.0 if e is not None and e.color == terms[1] else 0.0

        def have_key(state, terms):
            e = present(state, terms[0])
            if e is None:
                return 0.0
            agent = state.agent
            if e.cls == "agent":
                return 1.0 if agent.carrying else 0.0
            if e.cls == "door":
                return 1.0 if e.pair in agent.carrying else 0.0
            return 0.0

        dist = lambda a, b: math.hypot(a.x - b.x, a.y - b.y)
        return {
            "type": type_of,
            "color": color_of,
            "have_key": have_key,
            "close": pairwise(lambda a, b: sigmoid(CLOSE_ALPHA * (CLOSE_DIST - dist(a, b)))),
            "on_left": pairwise(lambda a, b: relation(ALPHA * (b.x - a.x))),
            "on_right": pairwise(lambda a, b: relation(ALPHA * (a.x - b.x))),
            "on_top": pairwise(lambda a, b: relation(ALPHA * (a.y - b.y))),
            "at_bottom": pairwise(lambda a, b: relation(ALPHA * (b.y - a.y))),
        }

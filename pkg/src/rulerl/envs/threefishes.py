"""Fish tank: eat the fish you outsize, dodge the one that outsizes you.

Two-dimensional continuous arena. The ``colored`` variant gives every fish
the same size; green fish are edible and red fish are deadly.
"""

from __future__ import annotations

import math

from .base import Entity, EnvState, Environment
from .perception import relation, sigmoid

AGENT_SPEED = 0.5
FISH_SPEED = 0.25
CONTACT_DIST = 1.0
CHASE_PROB = 0.3
REWARD_EAT = 1.0
REWARD_EATEN = -1.0
ALPHA = 5.0
CLOSEBY_DIST = 4.0
LEVEL_OFFSET = 1.0


class ThreeFishes(Environment):
    name = "threefishes"
    actions = ["left", "right", "up", "down"]
    width = 10.0
    height = 10.0

    def __init__(self, variant: str = "base"):
        if variant not in ("base", "colored"):
            raise ValueError(f"unknown threefishes variant {variant!r}")
        super().__init__(variant)

    @property
    def language_name(self) -> str:
        return "threefishes"

    def _spot(self, min_dist=0.0, ref=None):
        while True:
            x = float(self._rng.uniform(1.0, self.width - 1.0))
            y = float(self._rng.uniform(1.0, self.height - 1.0))
            if ref is None or math.hypot(x - ref[0], y - ref[1]) >= min_dist:
                return x, y

    def _initial_state(self) -> EnvState:
        ax, ay = self._spot()
        size_small, size_big = (1.0, 3.0) if self.variant == "base" else (2.0, 2.0)
        sx, sy = self._spot(3.0, (ax, ay))
        bx, by = self._spot(3.0, (ax, ay))
        return EnvState([
            Entity("obj1", "agent", ax, ay, size=2.0, color="green"),
            Entity("obj2", "fish", sx, sy, size=size_small, color="green"),
            Entity("obj3", "fish", bx, by, size=size_big, color="red"),
        ])

    def _edible(self, agent: Entity, fish: Entity) -> bool:
        if self.variant == "colored":
            return fish.color == "green"
        return agent.size > fish.size

    def _deadly(self, agent: Entity, fish: Entity) -> bool:
        if self.variant == "colored":
            return fish.color == "red"
        return fish.size > agent.size

    def _transition(self, state: EnvState, action: str):
        s = state.copy()
        agent = s.agent
        if action == "left":
            agent.x -= AGENT_SPEED
        elif action == "right":
            agent.x += AGENT_SPEED
        elif action == "up":
            agent.y += AGENT_SPEED
        elif action == "down":
            agent.y -= AGENT_SPEED
        agent.x = min(max(agent.x, 0.5), self.width - 0.5)
        agent.y = min(max(agent.y, 0.5), self.height - 0.5)

        for e in s.entities:
            if e.cls != "fish":
                continue
            chases = self._deadly(agent, e)
            if chases and self._rng.random() < CHASE_PROB:
                e.vx = math.copysign(FISH_SPEED, agent.x - e.x) if agent.x != e.x else 0.0
                e.vy = math.copysign(FISH_SPEED, agent.y - e.y) if agent.y != e.y else 0.0
            elif self._rng.random() < 0.1 or (e.vx == 0.0 and e.vy == 0.0):
                e.vx = float(self._rng.choice([-1.0, 0.0, 1.0])) * FISH_SPEED
                e.vy = float(self._rng.choice([-1.0, 0.0, 1.0])) * FISH_SPEED
            e.x = min(max(e.x + e.vx, 0.5), self.width - 0.5)
            e.y = min(max(e.y + e.vy, 0.5), self.height - 0.5)

        reward = 0.0
        done = False
        for e in s.entities:
            if e.cls != "fish":
                continue
            if math.hypot(agent.x - e.x, agent.y - e.y) >= CONTACT_DIST:
                continue
            if self._edible(agent, e):
                reward += REWARD_EAT
                e.x, e.y = self._spot(3.0, (agent.x, agent.y))
                e.vx = e.vy = 0.0
            elif self._deadly(agent, e):
                reward += REWARD_EATEN
                done = True
                break
        return s, reward, done

    def evaluators(self):
        def alive(state, eid):
            e = state.entity(eid)
            return e if e is not None and e.alive else None

        def pairwise(fn):
            def wrapped(state, terms):
                a, b = alive(state, terms[0]), alive(state, terms[1])
                if a is None or b is None:
                    return 0.0
                return fn(a, b)
            return wrapped

        def type_of(state, terms):
            e = alive(state, terms[0])
            return 1.0 if e is not None and e.cls == terms[1] else 0.0

        def color_of(state, terms):
            e = alive(state, terms[0])
            return 1.0 if e is not None and e.color == terms[1] else 0.0

        dist = lambda a, b: math.hypot(a.x - b.x, a.y - b.y)
        return {
            "type": type_of,
            "color": color_of,
            "closeby": pairwise(lambda a, b: sigmoid(ALPHA * (CLOSEBY_DIST - dist(a, b)))),
            "on_left": pairwise(lambda a, b: relation(ALPHA * (b.x - a.x))),
            "on_right": pairwise(lambda a, b: relation(ALPHA * (a.x - b.x))),
            "on_top": pairwise(lambda a, b: relation(ALPHA * (a.y - b.y))),
            "at_bottom": pairwise(lambda a, b: relation(ALPHA * (b.y - a.y))),
            "is_bigger_than": pairwise(lambda a, b: relation(ALPHA * (a.size - b.size))),
            "is_smaller_than": pairwise(lambda a, b: relation(ALPHA * (b.size - a.size))),
            "high_level": pairwise(lambda a, b: relation(ALPHA * (a.y - b.y - LEVEL_OFFSET))),
            "low_level": pairwise(lambda a, b: relation(ALPHA * (b.y - a.y - LEVEL_OFFSET))),
            "same_color": pairwise(lambda a, b: 1.0 if a.color == b.color else 0.0),
        }

"""Platform environment: grab the key, reach the door, avoid patrolling enemies.

One-dimensional platform. The agent walks left/right and can jump over an
enemy on a fixed 12-tick arc. The ``plus`` variant doubles the arena width
and fields five enemies, two of which never move.
"""

from __future__ import annotations

import math

from .base import Entity, EnvState, Environment
from .perception import relation, sigmoid

AGENT_SPEED = 0.5
ENEMY_SPEED = 0.25
JUMP_TICKS = 12
JUMP_HEIGHT = 2.4
CONTACT_DIST = 1.0
REWARD_KEY = 10.0
REWARD_DOOR = 10.0
REWARD_ENEMY = -20.0
REWARD_STEP = -0.02
ALPHA = 5.0
CLOSEBY_DIST = 2.5
GROUNDED_Y = 0.5


class GetOut(Environment):
    name = "getout"
    actions = ["left", "right", "jump", "idle"]
    height = 3.0

    def __init__(self, variant: str = "base"):
        if variant not in ("base", "plus"):
            raise ValueError(f"unknown getout variant {variant!r}")
        super().__init__(variant)
        self.width = 40.0 if variant == "plus" else 20.0
        self.n_enemies = 5 if variant == "plus" else 1
        self.n_static = 2 if variant == "plus" else 0

    @property
    def language_name(self) -> str:
        return "getout_plus" if self.variant == "plus" else "getout"

    def _initial_state(self) -> EnvState:
        rng = self._rng
        w = self.width
        agent_x = float(rng.uniform(1.0, w - 1.0))

        def far_spot(min_gap):
            while True:
                x = float(rng.uniform(1.0, w - 1.0))
                if abs(x - agent_x) >= min_gap:
                    return x

        entities = [
            Entity("obj1", "agent", agent_x, 0.0),
            Entity("obj2", "key", far_spot(2.0), 0.0),
            Entity("obj3", "door", far_spot(2.0), 0.0),
        ]
        for i in range(self.n_enemies):
            static = i >= self.n_enemies - self.n_static
            enemy = Entity(f"obj{4 + i}", "enemy", far_spot(4.0), 0.0, static=static)
            if not static:
                enemy.vx = float(rng.choice([-1.0, 1.0])) * ENEMY_SPEED
            entities.append(enemy)
        return EnvState(entities)

    def _transition(self, state: EnvState, action: str):
        s = state.copy()
        agent = s.agent
        if agent.phase > 0:
            # Airborne: horizontal momentum carries, inputs are ignored.
            agent.x = min(max(agent.x + agent.vx, 0.5), self.width - 0.5)
            agent.y = JUMP_HEIGHT * math.sin(math.pi * agent.phase / JUMP_TICKS)
            agent.phase += 1
            if agent.phase > JUMP_TICKS:
                agent.phase = 0
                agent.y = 0.0
        elif action == "left":
            agent.vx = -AGENT_SPEED
            agent.x = max(0.5, agent.x + agent.vx)
        elif action == "right":
            agent.vx = AGENT_SPEED
            agent.x = min(self.width - 0.5, agent.x + agent.vx)
        elif action == "jump":
            agent.phase = 1
            agent.x = min(max(agent.x + agent.vx, 0.5), self.width - 0.5)
            agent.y = JUMP_HEIGHT * math.sin(math.pi / JUMP_TICKS)
        else:
            agent.vx = 0.0

        for e in s.entities:
            if e.cls != "enemy" or e.static:
                continue
            if self._rng.random() < 0.05:
                e.vx = -e.vx
            e.x += e.vx
            if e.x <= 0.5 or e.x >= self.width - 0.5:
                e.x = min(max(e.x, 0.5), self.width - 0.5)
                e.vx = -e.vx

        reward = REWARD_STEP
        done = False
        grounded = agent.y < GROUNDED_Y
        # The key stays in the world after pickup; has_key flips instead.
        key = s.entity("obj2")
        if not agent.has_key and grounded and abs(agent.x - key.x) < CONTACT_DIST:
            reward += REWARD_KEY
            agent.has_key = True
        door = s.entity("obj3")
        if agent.has_key and grounded and abs(agent.x - door.x) < CONTACT_DIST:
            reward += REWARD_DOOR
            done = True
        if not done and grounded:
            for e in s.entities:
                if e.cls == "enemy" and abs(agent.x - e.x) < CONTACT_DIST:
                    reward += REWARD_ENEMY
                    done = True
                    break
        return s, reward, done

    def evaluators(self):
        def alive(state, eid):
            e = state.entity(eid)
            return e if e is not None and e.alive else None

        def type_of(state, terms):
            e = alive(state, terms[0])
            return 1.0 if e is not None and e.cls == terms[1] else 0.0

        def closeby(state, terms):
            a, b = alive(state, terms[0]), alive(state, terms[1])
            if a is None or b is None:
                return 0.0
            dist = math.hypot(a.x - b.x, a.y - b.y)
            return sigmoid(ALPHA * (CLOSEBY_DIST - dist))

        def on_left(state, terms):
            a, b = alive(state, terms[0]), alive(state, terms[1])
            if a is None or b is None:
                return 0.0
            return relation(ALPHA * (b.x - a.x))

        def on_right(state, terms):
            a, b = alive(state, terms[0]), alive(state, terms[1])
            if a is None or b is None:
                return 0.0
            return relation(ALPHA * (a.x - b.x))

        def have_key(state, terms):
            e = alive(state, terms[0])
            return 1.0 if e is not None and e.cls == "agent" and e.has_key else 0.0

        def not_have_key(state, terms):
            e = alive(state, terms[0])
            return 1.0 if e is not None and e.cls == "agent" and not e.has_key else 0.0

        return {
            "type": type_of,
            "closeby": closeby,
            "on_left": on_left,
            "on_right": on_right,
            "have_key": have_key,
            "not_have_key": not_have_key,
        }

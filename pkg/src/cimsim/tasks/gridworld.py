"""GridWorld navigation environment.

An n x n grid with one goal and a set of absorbing holes.  The agent
observes 8 values: four adjacent-collision indicators (wall or hole to
the N/E/S/W) and four goal-direction components (positive parts of the
normalized displacement, split over the four directions).  Moves are
deterministic; walls block.  Reward: +1 on reaching the goal, -1 on a
hole, -0.01 per step otherwise; an episode also ends at max_steps.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, replace

import numpy as np

# action index -> (dr, dc); row 0 is the top of the grid
ACTIONS = ((-1, 0), (0, 1), (1, 0), (0, -1))
UP, RIGHT, DOWN, LEFT = range(4)

STEP_PENALTY = -0.01
GOAL_REWARD = 1.0
HOLE_REWARD = -1.0


@dataclass(frozen=True)
class GridWorld:
    n: int
    agent: tuple[int, int]
    goal: tuple[int, int]
    holes: frozenset
    max_steps: int
    steps: int = 0
    done: bool = False
    won: bool = False

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("grid must be at least 3x3")
        if self.goal in self.holes:
            raise ValueError("goal cannot be a hole")
        if self.steps == 0 and self.agent in self.holes:
            raise ValueError("agent cannot start on a hole")


def default_max_steps(n: int) -> int:
    return 4 * n * n


def _blocked(env: GridWorld, r: int, c: int) -> bool:
    return not (0 <= r < env.n and 0 <= c < env.n)


def observe(env: GridWorld) -> np.ndarray:
    """8-value observation: collision indicators then goal direction."""
    ar, ac = env.agent
    obs = np.zeros(8)
    for i, (dr, dc) in enumerate(ACTIONS):
        rr, cc = ar + dr, ac + dc
        if _blocked(env, rr, cc) or (rr, cc) in env.holes:
            obs[i] = 1.0
    gr, gc = env.goal
    scale = env.n - 1
    dr, dc = gr - ar, gc - ac
    obs[4] = max(0, -dr) / scale  # goal is up
    obs[5] = max(0, dc) / scale   # right
    obs[6] = max(0, dr) / scale   # down
    obs[7] = max(0, -dc) / scale  # left
    return obs


def gridworld_step(env: GridWorld, action: int) -> tuple[GridWorld, float, bool]:
    """Deterministic transition; raises if the episode already ended."""
    if env.done:
        raise ValueError("episode is finished")
    dr, dc = ACTIONS[action]
    r, c = env.agent[0] + dr, env.agent[1] + dc
    if _blocked(env, r, c):
        r, c = env.agent  # wall: stay in place
    steps = env.steps + 1
    if (r, c) == env.goal:
        return replace(env, agent=(r, c), steps=steps, done=True, won=True), GOAL_REWARD, True
    if (r, c) in env.holes:
        return replace(env, agent=(r, c), steps=steps, done=True), HOLE_REWARD, True
    done = steps >= env.max_steps
    return replace(env, agent=(r, c), steps=steps, done=done), STEP_PENALTY, done


def _solvable(n: int, agent, goal, holes) -> bool:
    seen = {agent}
    dq = deque([agent])
    while dq:
        cell = dq.popleft()
        if cell == goal:
            return True
        for dr, dc in ACTIONS:
            nxt = (cell[0] + dr, cell[1] + dc)
            if 0 <= nxt[0] < n and 0 <= nxt[1] < n and nxt not in holes and nxt not in seen:
                seen.add(nxt)
                dq.append(nxt)
    return False


def random_mission(
    rng: np.random.Generator, n: int = 5, n_holes: int = 3, max_steps: int | None = None
) -> GridWorld:
    """A solvable random layout (start, goal, holes all distinct)."""
    if max_steps is None:
        max_steps = default_max_steps(n)
    while True:
        cells = [(int(r), int(c)) for r, c in
                 np.stack(np.unravel_index(rng.permutation(n * n)[: n_holes + 2], (n, n)), axis=1)]
        agent, goal, holes = cells[0], cells[1], frozenset(cells[2:])
        if _solvable(n, agent, goal, holes):
            return GridWorld(n=n, agent=agent, goal=goal, holes=holes, max_steps=max_steps)


def mission_family(
    seed: int, n_missions: int, n: int = 5, n_holes: int = 3, max_steps: int | None = None
) -> list[GridWorld]:
    """Seeded mission set, identical across compared configurations."""
    from ..streams import substream

    return [
        random_mission(substream(seed, "mission", i), n=n, n_holes=n_holes, max_steps=max_steps)
        for i in range(n_missions)
    ]

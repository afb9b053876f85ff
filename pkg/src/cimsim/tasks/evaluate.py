"""Mission and classification evaluation through the noisy forward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nnsim.forward import noisy_forward
from ..nnsim.mapping import MappedNetwork
from .gridworld import GridWorld, gridworld_step, mission_family, observe


@dataclass
class EvalReport:
    win_rate: float
    mean_steps: float
    n_missions: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "win_rate": self.win_rate,
            "mean_steps": self.mean_steps,
            "n_missions": self.n_missions,
            "seed": self.seed,
        }


def evaluate_policy(
    net: MappedNetwork,
    env_seed: int,
    n_missions: int,
    rng: np.random.Generator,
    n: int = 5,
    n_holes: int = 3,
) -> EvalReport:
    """Greedy rollout of the noisy policy over a seeded mission family.

    Missions advance in lockstep so forward passes batch across the
    still-active ones; per-read noise draws are independent everywhere.
    With noiseless profiles no randomness is consumed, so the report is
    invariant to ``rng``.
    """
    from .dqn import policy_features

    envs = mission_family(env_seed, n_missions, n=n, n_holes=n_holes)
    active = list(range(n_missions))
    while active:
        obs = np.stack([observe(envs[i]) for i in active])
        q = noisy_forward(net, policy_features(obs), rng)
        actions = np.argmax(q, axis=1)
        nxt = []
        for pos, i in enumerate(active):
            envs[i], _, done = gridworld_step(envs[i], int(actions[pos]))
            if not done:
                nxt.append(i)
        active = nxt
    wins = sum(e.won for e in envs)
    mean_steps = sum(e.steps for e in envs) / n_missions
    return EvalReport(
        win_rate=wins / n_missions, mean_steps=mean_steps,
        n_missions=n_missions, seed=env_seed,
    )


def eval_supervised(
    net: MappedNetwork,
    images: np.ndarray,
    labels: np.ndarray,
    n_samples: int,
    rng: np.random.Generator,
    batch: int = 256,
) -> float:
    """Top-1 accuracy of the noisy forward pass over ``n_samples`` images."""
    if images.ndim != 4 or images.shape[1:] != tuple(net.arch["input_shape"]):
        raise ValueError("dataset shape does not match the network input")
    n = min(n_samples, len(images))
    correct = 0
    for start in range(0, n, batch):
        stop = min(start + batch, n)
        x = images[start:stop].astype(np.float64) / 255.0
        logits = noisy_forward(net, x, rng)
        correct += int((np.argmax(logits, axis=1) == labels[start:stop]).sum())
    return correct / n

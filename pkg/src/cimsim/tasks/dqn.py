"""DQN training for the GridWorld policy (numpy, bias-free layers).

The policy network is two fully connected layers (ReLU between, no bias
parameters) so it maps directly onto the quantized CIM layout.  The
8-value observation is extended with a constant 1.0 feature, which acts
as a learned bias through the first layer's weights and makes the input
exactly one acc-9 group wide.

Training is double DQN with a Huber loss, weight clipping to [-1, 1]
(so the quantizer scale is fixed), and best-checkpoint selection on a
held-out mission family.  ``finetune_quantized`` continues training
with straight-through weight quantization at a target bit width, which
is what makes the deployed integer policy match the float one; the
paper's reference flow trains with quantization in the loop as well.
Everything is seeded and single-threaded: identical hyperparameters and
seed reproduce identical weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .gridworld import GridWorld, gridworld_step, mission_family, observe, random_mission

N_OBS = 8
N_IN = N_OBS + 1  # constant bias feature
N_ACTIONS = 4

HELDOUT_SEED = 987654321
WEIGHT_CLIP = 1.0


def gridworld_arch(hidden: int = 64) -> dict:
    from ..nnsim.arch import fc_layer

    return {"input_shape": (N_IN,), "layers": [fc_layer(hidden, relu=True), fc_layer(N_ACTIONS)]}


def policy_features(obs: np.ndarray) -> np.ndarray:
    """Observation batch -> network input batch (appends the bias feature)."""
    obs = np.atleast_2d(obs)
    return np.concatenate([obs, np.ones((obs.shape[0], 1))], axis=1)


@dataclass
class DqnHyper:
    hidden: int = 64
    gamma: float = 0.97
    lr: float = 1e-3
    lr_drop_frac: float = 0.6   # anneal point as a fraction of the budget
    lr_drop: float = 0.3
    batch: int = 64
    buffer: int = 50000
    warmup: int = 2000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 80000
    target_sync: int = 500
    budget_steps: int = 350000
    eval_every: int = 25000
    eval_missions: int = 500
    win_target: float = 0.95
    grid_n: int = 5
    n_holes: int = 3


@dataclass
class TrainReport:
    reached_target: bool
    win_rate: float
    env_steps: int
    evals: list = field(default_factory=list)


class QNet:
    """Two-layer bias-free MLP over the 9 policy features."""

    def __init__(self, hidden: int, rng: np.random.Generator):
        self.w1 = rng.normal(0, np.sqrt(2.0 / N_IN), (N_IN, hidden))
        self.w2 = rng.normal(0, np.sqrt(2.0 / hidden), (hidden, N_ACTIONS))

    @classmethod
    def from_weights(cls, weights: dict) -> "QNet":
        net = cls.__new__(cls)
        net.w1 = weights["layer0"].T.copy()
        net.w2 = weights["layer1"].T.copy()
        return net

    def weights(self) -> dict:
        return {"layer0": self.w1.T.copy(), "layer1": self.w2.T.copy()}  # (out, in)

    def forward(self, x):
        h = np.maximum(x @ self.w1, 0.0)
        return h @ self.w2, h

    def act(self, obs) -> int:
        q, _ = self.forward(policy_features(obs))
        return int(np.argmax(q[0]))

    def copy_from(self, other):
        self.w1 = other.w1.copy()
        self.w2 = other.w2.copy()


def _quantize_ste(w: np.ndarray, bits: int) -> np.ndarray:
    half = 1 << (bits - 1)
    lsb = WEIGHT_CLIP / half
    return np.clip(np.round(w / lsb), -half, half - 1) * lsb


def _quantize_acts(x: np.ndarray, a_bits: int) -> np.ndarray:
    amax = (1 << a_bits) - 1
    return np.clip(np.round(x * (1 << a_bits)), 0, amax) / (1 << a_bits)


def greedy_win_rate(net: QNet, missions: list[GridWorld]) -> tuple[float, float]:
    wins = 0
    steps_total = 0
    for env in missions:
        while not env.done:
            env, _, _ = gridworld_step(env, net.act(observe(env)))
        wins += env.won
        steps_total += env.steps
    return wins / len(missions), steps_total / len(missions)


def _run_dqn(
    hyper: DqnHyper,
    rng: np.random.Generator,
    init_weights: dict | None,
    w_bits: int | None,
    a_bits: int | None,
) -> tuple[dict, TrainReport]:
    """Shared DQN loop; quantizes forwards when bit widths are given."""
    init_rng, layout_rng, act_rng, replay_rng = rng.spawn(4)
    net = QNet(hyper.hidden, init_rng)
    if init_weights is not None:
        net = QNet.from_weights(init_weights)
    target = QNet(hyper.hidden, init_rng)
    target.copy_from(net)

    def feats(obs_arr):
        x = policy_features(obs_arr)
        if a_bits is not None:
            x = _quantize_acts(x, a_bits)
        return x

    def fwd(x, w1, w2):
        if w_bits is not None:
            w1, w2 = _quantize_ste(w1, w_bits), _quantize_ste(w2, w_bits)
        h = np.maximum(x @ w1, 0.0)
        return h @ w2, (h, w2 if w_bits is None else _quantize_ste(w2, w_bits))

    m = [np.zeros_like(net.w1), np.zeros_like(net.w2)]
    v = [np.zeros_like(net.w1), np.zeros_like(net.w2)]
    t_adam = 0

    cap = hyper.buffer
    buf_obs = np.zeros((cap, N_IN))
    buf_act = np.zeros(cap, np.int64)
    buf_rew = np.zeros(cap)
    buf_next = np.zeros((cap, N_IN))
    buf_done = np.zeros(cap)
    size = ptr = 0

    heldout = mission_family(HELDOUT_SEED, hyper.eval_missions, n=hyper.grid_n, n_holes=hyper.n_holes)

    def eval_rate() -> float:
        wins = 0
        for e in heldout:
            while not e.done:
                q, _ = fwd(feats(observe(e)), net.w1, net.w2)
                e, _, _ = gridworld_step(e, int(np.argmax(q[0])))
            wins += e.won
        return wins / len(heldout)

    evals = []
    if init_weights is not None:
        best_rate = eval_rate()  # protect the starting policy
        evals.append((0, best_rate))
    else:
        best_rate = -1.0
    best_weights = net.weights()
    env = random_mission(layout_rng, hyper.grid_n, hyper.n_holes)
    obs = feats(observe(env))[0]
    reached = False
    step = 0
    while step < hyper.budget_steps:
        step += 1
        frac = min(1.0, step / hyper.eps_decay_steps)
        eps = hyper.eps_start + (hyper.eps_end - hyper.eps_start) * frac
        if act_rng.random() < eps:
            action = int(act_rng.integers(N_ACTIONS))
        else:
            q, _ = fwd(obs[None, :], net.w1, net.w2)
            action = int(np.argmax(q[0]))
        env2, reward, done = gridworld_step(env, action)
        nxt = feats(observe(env2))[0]
        buf_obs[ptr] = obs
        buf_act[ptr] = action
        buf_rew[ptr] = reward
        buf_next[ptr] = nxt
        buf_done[ptr] = float(done)
        ptr = (ptr + 1) % cap
        size = min(size + 1, cap)
        if done:
            env = random_mission(layout_rng, hyper.grid_n, hyper.n_holes)
            obs = feats(observe(env))[0]
        else:
            env, obs = env2, nxt

        if size >= hyper.warmup:
            lr = hyper.lr if step < hyper.budget_steps * hyper.lr_drop_frac else hyper.lr * hyper.lr_drop
            idx = replay_rng.integers(0, size, hyper.batch)
            o, a = buf_obs[idx], buf_act[idx]
            r, no, d = buf_rew[idx], buf_next[idx], buf_done[idx]
            q_online, _ = fwd(no, net.w1, net.w2)
            a_star = np.argmax(q_online, axis=1)
            q_target, _ = fwd(no, target.w1, target.w2)
            y = r + hyper.gamma * (1.0 - d) * q_target[np.arange(hyper.batch), a_star]
            q, (h, w2_eff) = fwd(o, net.w1, net.w2)
            sel = q[np.arange(hyper.batch), a]
            gd = np.clip(sel - y, -1.0, 1.0) / hyper.batch  # Huber gradient
            dq = np.zeros_like(q)
            dq[np.arange(hyper.batch), a] = gd
            gw2 = h.T @ dq
            dh = dq @ w2_eff.T
            dh[h <= 0] = 0.0
            gw1 = o.T @ dh
            t_adam += 1
            for i, (w, g) in enumerate(((net.w1, gw1), (net.w2, gw2))):
                m[i] = 0.9 * m[i] + 0.1 * g
                v[i] = 0.999 * v[i] + 0.001 * g * g
                mh = m[i] / (1 - 0.9**t_adam)
                vh = v[i] / (1 - 0.999**t_adam)
                w -= lr * mh / (np.sqrt(vh) + 1e-8)
                np.clip(w, -WEIGHT_CLIP, WEIGHT_CLIP, out=w)
            if t_adam % hyper.target_sync == 0:
                target.copy_from(net)

        if step % hyper.eval_every == 0 and size >= hyper.warmup:
            rate = eval_rate()
            evals.append((step, rate))
            if rate > best_rate:
                best_rate = rate
                best_weights = net.weights()
            if rate >= hyper.win_target:
                reached = True
                break

    return best_weights, TrainReport(
        reached_target=reached, win_rate=best_rate, env_steps=step, evals=evals
    )


def train_policy(hyper: DqnHyper, rng: np.random.Generator) -> tuple[dict, TrainReport]:
    """Train the float GridWorld policy; returns (out x in) weights + report.

    Stops early once the clean real-weight policy reaches the win-rate
    target on a held-out mission family; exhausting the step budget
    without reaching it is reported, not fatal.
    """
    return _run_dqn(hyper, rng, init_weights=None, w_bits=None, a_bits=None)


def train_quantized_policy(
    w_bits: int,
    a_bits: int,
    rng: np.random.Generator,
    hyper: DqnHyper | None = None,
    init_weights: dict | None = None,
) -> tuple[dict, TrainReport]:
    """Quantization-aware DQN at a (w_bits, a_bits) deployment point.

    Forward passes use straight-through quantized weights and a-bit
    inputs; the returned weights are snapped to the w_bits lattice (the
    exact values the deployed network uses), so re-quantizing them at
    any width >= w_bits reproduces the identical network.  Trains from
    scratch unless ``init_weights`` is given.
    """
    base = hyper or DqnHyper()
    best, report = _run_dqn(base, rng, init_weights=init_weights, w_bits=w_bits, a_bits=a_bits)
    snapped = {k: _quantize_ste(v, w_bits) for k, v in best.items()}
    return snapped, report

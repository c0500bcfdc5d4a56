"""The learned three-function model: represent, dynamics, predict.

All three components are small tanh MLPs over float64 numpy. The module also
owns the unrolled training loss with its two gradient-scaling rules (head
losses scaled by 1/K, hidden-state gradient halved on entry to each dynamics
application), an SGD+momentum optimizer with L2 weight decay, and the
checkpoint container.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .codec import CodecConfig, categorical_to_scalar, scalars_to_categorical, transform

DYNAMICS_GRADIENT_SCALE = 0.5


@dataclass(frozen=True)
class ModelConfig:
    observation_size: int
    action_space_size: int
    hidden_size: int = 32
    layer_width: int = 64
    value_mode: str = "categorical"  # "scalar" (board games) or "categorical" (MDPs)
    reward_mode: str = "categorical"  # "none" (board games) or "categorical" (MDPs)
    codec: CodecConfig = field(default_factory=CodecConfig)

    def __post_init__(self):
        if self.value_mode not in ("scalar", "categorical"):
            raise ValueError(f"unknown value_mode {self.value_mode!r}")
        if self.reward_mode not in ("none", "categorical"):
            raise ValueError(f"unknown reward_mode {self.reward_mode!r}")
        if self.action_space_size < 2:
            raise ValueError("action_space_size must be >= 2")

    @property
    def value_head_size(self) -> int:
        return 1 if self.value_mode == "scalar" else self.codec.support_size

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["codec"] = CodecConfig(**d["codec"])
        return cls(**d)


def scale_hidden(raw: np.ndarray) -> np.ndarray:
    """Min-max rescale a hidden state (or batch of them) to [0, 1] per vector."""
    arr = np.asarray(raw, dtype=np.float64)
    single = arr.ndim == 1
    scaled, _ = nn.scale_to_unit(arr[None, :] if single else arr)
    return scaled[0] if single else scaled


class Network:
    """Parameter snapshot implementing represent / dynamics / predict.

    A snapshot is immutable from the actors' point of view; the learner
    mutates its own instance and publishes copies. ``version`` records the
    training step of the last update.
    """

    def __init__(self, config: ModelConfig, rng: np.random.Generator | None = None,
                 params: nn.Params | None = None, version: int = 0):
        self.config = config
        self.version = version
        c = config
        self._rep = nn.Mlp("rep", [c.observation_size, c.layer_width, c.layer_width, c.hidden_size])
        self._dyn_trunk = nn.Mlp("dyn.trunk", [c.hidden_size + c.action_space_size,
                                               c.layer_width, c.layer_width], tanh_output=True)
        self._pred_trunk = nn.Mlp("pred.trunk", [c.hidden_size, c.layer_width, c.layer_width],
                                  tanh_output=True)
        if params is not None:
            self.params = params
            return
        if rng is None:
            raise ValueError("need either params or an rng to initialize")
        self.params = {}
        self._rep.init(self.params, rng)
        self._dyn_trunk.init(self.params, rng)
        nn.init_linear(self.params, "dyn.state", c.layer_width, c.hidden_size, rng)
        if c.reward_mode != "none":
            nn.init_linear(self.params, "dyn.reward", c.layer_width, c.codec.support_size, rng)
        self._pred_trunk.init(self.params, rng)
        nn.init_linear(self.params, "pred.policy", c.layer_width, c.action_space_size, rng)
        nn.init_linear(self.params, "pred.value", c.layer_width, self.value_head_size, rng)

    @property
    def value_head_size(self) -> int:
        return self.config.value_head_size

    def copy(self) -> "Network":
        return Network(self.config, params={k: v.copy() for k, v in self.params.items()},
                       version=self.version)

    # Batched forward passes (used by both inference and training).

    def represent_batch(self, params: nn.Params, obs: np.ndarray):
        if obs.shape[1] != self.config.observation_size:
            raise ValueError(f"observation size {obs.shape[1]} != {self.config.observation_size}")
        raw, trunk_cache = self._rep.forward(params, obs)
        state, scale_cache = nn.scale_to_unit(raw)
        return state, (trunk_cache, scale_cache)

    def dynamics_batch(self, params: nn.Params, state: np.ndarray, actions: np.ndarray):
        a = np.asarray(actions)
        if np.any(a < 0) or np.any(a >= self.config.action_space_size):
            raise ValueError(f"action index out of range: {a}")
        onehot = np.zeros((state.shape[0], self.config.action_space_size))
        onehot[np.arange(state.shape[0]), a] = 1.0
        x = np.concatenate([state, onehot], axis=1)
        trunk, trunk_cache = self._dyn_trunk.forward(params, x)
        raw_next = nn.linear_forward(params, "dyn.state", trunk)
        next_state, scale_cache = nn.scale_to_unit(raw_next)
        reward_logits = None
        if self.config.reward_mode != "none":
            reward_logits = nn.linear_forward(params, "dyn.reward", trunk)
        return next_state, reward_logits, (trunk_cache, trunk, scale_cache)

    def predict_batch(self, params: nn.Params, state: np.ndarray):
        trunk, trunk_cache = self._pred_trunk.forward(params, state)
        policy_logits = nn.linear_forward(params, "pred.policy", trunk)
        value_out = nn.linear_forward(params, "pred.value", trunk)
        return policy_logits, value_out, (trunk_cache, trunk)

    def decode_value(self, value_out: np.ndarray) -> float:
        if self.config.value_mode == "scalar":
            return float(value_out[0])
        return categorical_to_scalar(nn.softmax(value_out), self.config.codec)

    def decode_reward(self, reward_logits) -> float:
        if reward_logits is None:
            return 0.0
        return categorical_to_scalar(nn.softmax(reward_logits), self.config.codec)

    # Single-state inference interface used by the search.

    def initial_inference(self, observation: np.ndarray):
        """observation -> (hidden state, policy logits, value)."""
        obs = np.asarray(observation, dtype=np.float64).reshape(1, -1)
        state, _ = self.represent_batch(self.params, obs)
        policy_logits, value_out, _ = self.predict_batch(self.params, state)
        return state[0], policy_logits[0], self.decode_value(value_out[0])

    def recurrent_inference(self, state: np.ndarray, action: int):
        """(hidden state, action) -> (next hidden state, reward, policy logits, value)."""
        next_state, reward_logits, _ = self.dynamics_batch(
            self.params, state.reshape(1, -1), np.array([action]))
        policy_logits, value_out, _ = self.predict_batch(self.params, next_state)
        reward = self.decode_reward(reward_logits[0] if reward_logits is not None else None)
        return next_state[0], reward, policy_logits[0], self.decode_value(value_out[0])


def unrolled_loss(network: Network, params: nn.Params, batch: dict,
                  l2_coefficient: float = 0.0, compute_grads: bool = True,
                  dynamics_gradient_scale: float = DYNAMICS_GRADIENT_SCALE):
    """Loss of one unrolled batch; optionally its gradients.

    ``batch`` keys: obs (B,O); actions (B,K) int; value_target (B,K+1);
    reward_target (B,K+1); policy_target (B,K+1,A); policy_valid, reward_valid
    (B,K+1); sample_weight, value_weight (B,).

    Every step's head losses are scaled by 1/K, and the gradient flowing from
    each dynamics application back into its input hidden state is multiplied
    by ``dynamics_gradient_scale`` (1/2 in training), so gradient magnitudes
    stay comparable across unroll lengths. The halving is a backward-only
    rule: it leaves the loss value untouched, so gradient-oracle tests pass
    scale 1.0 to compare against plain finite differences.

    Returns (metrics, grads). ``metrics`` reports weighted per-head totals,
    per-step contributions, and the scaling factors actually applied.
    """
    cfg = network.config
    obs = batch["obs"]
    actions = batch["actions"]
    B = obs.shape[0]
    K = actions.shape[1]
    head_scale = 1.0 / max(K, 1)
    w = batch["sample_weight"]
    vw = batch["value_weight"]

    value_target = batch["value_target"]
    if cfg.value_mode == "categorical":
        value_cat = scalars_to_categorical(transform(value_target, cfg.codec.epsilon), cfg.codec)
    if cfg.reward_mode == "categorical":
        reward_cat = scalars_to_categorical(transform(batch["reward_target"], cfg.codec.epsilon),
                                            cfg.codec)

    states = []
    rep_cache = None
    pred_caches, pred_outs = [], []
    dyn_caches, dyn_outs = [], []

    s, rep_cache = network.represent_batch(params, obs)
    states.append(s)
    for k in range(1, K + 1):
        s, reward_logits, cache = network.dynamics_batch(params, s, actions[:, k - 1])
        states.append(s)
        dyn_caches.append(cache)
        dyn_outs.append(reward_logits)
    for k in range(K + 1):
        policy_logits, value_out, cache = network.predict_batch(params, states[k])
        pred_caches.append(cache)
        pred_outs.append((policy_logits, value_out))

    policy_steps, value_steps, reward_steps = [], [], []
    policy_probs, value_probs, reward_probs = [], [], []
    for k in range(K + 1):
        policy_logits, value_out = pred_outs[k]
        pl, pp = nn.cross_entropy(policy_logits, batch["policy_target"][:, k])
        pl = pl * batch["policy_valid"][:, k]
        policy_probs.append(pp)
        policy_steps.append(head_scale * float(np.mean(w * pl)))
        if cfg.value_mode == "scalar":
            diff = value_out[:, 0] - value_target[:, k]
            vl = diff * diff
            value_probs.append(diff)
        else:
            vl, vp = nn.cross_entropy(value_out, value_cat[:, k])
            value_probs.append(vp)
        value_steps.append(head_scale * float(np.mean(w * vw * vl)))
        if k >= 1 and cfg.reward_mode == "categorical":
            rl, rp = nn.cross_entropy(dyn_outs[k - 1], reward_cat[:, k])
            rl = rl * batch["reward_valid"][:, k]
            reward_probs.append(rp)
            reward_steps.append(head_scale * float(np.mean(w * rl)))
        else:
            reward_probs.append(None)
            reward_steps.append(0.0)

    l2 = l2_coefficient * nn.flat_norm_sq(params)
    metrics = {
        "policy_loss": float(sum(policy_steps)),
        "value_loss": float(sum(value_steps)),
        "reward_loss": float(sum(reward_steps)),
        "l2_loss": float(l2),
        "policy_loss_steps": policy_steps,
        "value_loss_steps": value_steps,
        "reward_loss_steps": reward_steps,
        "head_loss_scale": head_scale,
        "dynamics_gradient_scale": dynamics_gradient_scale,
    }
    metrics["total_loss"] = (metrics["policy_loss"] + metrics["value_loss"]
                             + metrics["reward_loss"] + metrics["l2_loss"])
    if not np.isfinite(metrics["total_loss"]):
        raise FloatingPointError(f"non-finite training loss: {metrics}")
    if not compute_grads:
        return metrics, None

    grads = nn.zeros_like_params(params)
    # Per-sample upstream factor for every head-loss row: mean over batch of
    # w_i * head_scale * loss, so d/d(row loss) = w_i * head_scale / B.
    base = (w * head_scale / B)[:, None]

    carry = None  # gradient flowing into states[k] from the dynamics at k+1
    for k in range(K, -1, -1):
        policy_logits, value_out = pred_outs[k]
        d_policy = (policy_probs[k] - batch["policy_target"][:, k]) \
            * batch["policy_valid"][:, k][:, None] * base
        if cfg.value_mode == "scalar":
            d_value = (2.0 * value_probs[k] * vw)[:, None] * base
        else:
            d_value = (value_probs[k] - value_cat[:, k]) * (vw[:, None] * base)
        trunk_cache, trunk = pred_caches[k]
        d_trunk = nn.linear_backward(params, grads, "pred.policy", trunk, d_policy)
        d_trunk += nn.linear_backward(params, grads, "pred.value", trunk, d_value)
        d_state = network._pred_trunk.backward(params, grads, trunk_cache, d_trunk)
        if carry is not None:
            d_state = d_state + carry
            carry = None
        if k >= 1:
            trunk_cache, trunk, scale_cache = dyn_caches[k - 1]
            d_raw_next = nn.scale_to_unit_backward(scale_cache, d_state)
            d_trunk = nn.linear_backward(params, grads, "dyn.state", trunk, d_raw_next)
            if cfg.reward_mode == "categorical":
                d_reward = (reward_probs[k] - reward_cat[:, k]) \
                    * batch["reward_valid"][:, k][:, None] * base
                d_trunk += nn.linear_backward(params, grads, "dyn.reward", trunk, d_reward)
            d_input = network._dyn_trunk.backward(params, grads, trunk_cache, d_trunk)
            carry = dynamics_gradient_scale * d_input[:, :cfg.hidden_size]
        else:
            trunk_cache, scale_cache = rep_cache
            d_raw = nn.scale_to_unit_backward(scale_cache, d_state)
            network._rep.backward(params, grads, trunk_cache, d_raw)
    return metrics, grads


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.05
    lr_decay_rate: float = 1.0
    lr_decay_steps: int = 10_000
    momentum: float = 0.9
    weight_decay: float = 1e-4  # the L2 coefficient c


class SgdMomentum:
    """SGD with momentum; the L2 term c*||theta||^2 enters as its exact gradient."""

    def __init__(self, config: OptimizerConfig):
        self.config = config
        self.velocity: nn.Grads | None = None

    def learning_rate(self, step: int) -> float:
        c = self.config
        return c.learning_rate * c.lr_decay_rate ** (step / c.lr_decay_steps)

    def step(self, params: nn.Params, grads: nn.Grads, step_count: int):
        c = self.config
        if self.velocity is None:
            self.velocity = nn.zeros_like_params(params)
        lr = self.learning_rate(step_count)
        for name, p in params.items():
            g = grads[name] + 2.0 * c.weight_decay * p
            v = self.velocity[name]
            v *= c.momentum
            v += g
            update = lr * v
            if not np.all(np.isfinite(update)):
                raise FloatingPointError(f"non-finite update for parameter {name!r}")
            p -= update
        return lr

    def state_dict(self) -> dict:
        return {} if self.velocity is None else {k: v.copy() for k, v in self.velocity.items()}

    def load_state_dict(self, state: dict):
        self.velocity = {k: v.copy() for k, v in state.items()} if state else None


CHECKPOINT_FORMAT_VERSION = 1


def save_checkpoint(path, network: Network, step: int, extras: dict | None = None,
                    meta_extra: dict | None = None):
    """Write an .npz checkpoint: a 'meta' JSON string plus one array per parameter.

    Layout (documented for external readers): standard NumPy .npz zip archive;
    key 'meta' is a JSON object {format_version, step, network_version,
    model_config, ...}; each parameter is stored under 'param/<name>'; extra
    arrays (optimizer state, rng snapshots) under 'extra/<name>'.
    """
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "step": int(step),
        "network_version": int(network.version),
        "model_config": network.config.to_dict(),
    }
    if meta_extra:
        meta.update(meta_extra)
    arrays = {"meta": np.array(json.dumps(meta, sort_keys=True))}
    for name, value in network.params.items():
        arrays[f"param/{name}"] = value
    for name, value in (extras or {}).items():
        arrays[f"extra/{name}"] = value
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Read a checkpoint written by :func:`save_checkpoint`.

    Returns (network, step, extras, meta).
    """
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format: {meta.get('format_version')}")
        params, extras = {}, {}
        for key in data.files:
            if key.startswith("param/"):
                params[key[len("param/"):]] = data[key]
            elif key.startswith("extra/"):
                extras[key[len("extra/"):]] = data[key]
    config = ModelConfig.from_dict(meta["model_config"])
    network = Network(config, params=params, version=meta["network_version"])
    return network, meta["step"], extras, meta

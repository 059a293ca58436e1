"""Learned vector-valued reward model trained on weight-conditioned
pairwise preferences.

The model maps a state-action encoding through two tanh hidden layers to
one output per objective, clamped by a scaled-tanh bound at the
environment's reward magnitude so relabeling cannot drift in scale.  A
pair of segments is compared through the logistic (Bradley-Terry) link
on the difference of discounted weighted reward sums; training minimizes
the cross-entropy against labels in {0, 0.5, 1}, a 0.5 label weighting
both outcomes equally.

Gradients are exact reverse-mode through the network, the discounted
sums, and the logistic link.  For discrete tasks each training step runs
one network pass over the full (state, action) table and scatters
per-step gradients back onto it, which keeps segment length out of the
network cost.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import DiscountConfig, PreferenceRecord, Segment, Weight, discount_weights
from .encoders import ContinuousEncoder, DiscreteEncoder, make_encoder
from .errors import EmptyBatch, EmptyBuffer, EncodingError
from .nnet import MLP, Adam, bounded_output, bounded_output_grad
from .replay import PreferenceBuffer

PROB_FLOOR = 1e-12
CHECKPOINT_VERSION = 1


def _stable_sigmoid_pair(d: np.ndarray) -> np.ndarray:
    """sigmoid(d) computed from exp(-|d|) so it never overflows and
    p(d) + p(-d) == 1 exactly."""
    d = np.asarray(d, dtype=np.float64)
    q = 1.0 / (1.0 + np.exp(-np.abs(d)))  # in [0.5, 1)
    return np.where(d >= 0, q, 1.0 - q)


class RewardModel:
    """r-hat: (state, action) -> m-vector, parameterized by a 2x128 MLP."""

    #: Output-bound headroom over the task's reward magnitude.  The clamp
    #: exists to stop reward-scale drift across relabels, but squeezing
    #: to the exact range caps the preference logits so hard that the
    #: loss-optimal bounded fit misclassifies; an order of magnitude of
    #: slack restores identifiability while staying bounded.
    BOUND_MULTIPLIER = 10.0

    def __init__(
        self,
        env,
        hidden: tuple[int, ...] = (128, 128),
        seed: int = 0,
        bound_multiplier: float | None = None,
    ):
        self.env = env
        self.m = env.spec.m
        self.encoder = make_encoder(env)
        self.gamma_default = 0.99
        mult = self.BOUND_MULTIPLIER if bound_multiplier is None else bound_multiplier
        # Per-component clamp at a multiple of the largest reward magnitude.
        self.scale = np.array(
            [
                (max(abs(lo), abs(hi)) or 1.0) * mult
                for lo, hi in zip(env.spec.reward_low, env.spec.reward_high)
            ]
        )
        rng = np.random.default_rng(seed)
        self.net = MLP([self.encoder.dim, *hidden, self.m], rng, zero_output=True)
        self._version = 0
        self._table_cache: tuple[int, np.ndarray] | None = None

    # -- evaluation ----------------------------------------------------

    def _mark_updated(self) -> None:
        self._version += 1

    def reward_table(self) -> np.ndarray:
        """All rewards for a discrete task, row = state * n_actions + action."""
        if not isinstance(self.encoder, DiscreteEncoder):
            raise EncodingError("reward_table needs a discrete environment")
        if self._table_cache is None or self._table_cache[0] != self._version:
            z = self.net.predict(self.encoder.table())
            self._table_cache = (self._version, bounded_output(z, self.scale))
        return self._table_cache[1]

    def predict_reward_batch(self, states, actions) -> np.ndarray:
        if isinstance(self.encoder, DiscreteEncoder):
            return self.reward_table()[self.encoder.pair_index(states, actions)]
        z = self.net.predict(self.encoder.encode(states, actions))
        return bounded_output(z, self.scale)

    def predict_reward(self, state, action) -> np.ndarray:
        if isinstance(self.encoder, DiscreteEncoder):
            return self.predict_reward_batch([state], [action])[0]
        return self.predict_reward_batch(np.asarray(state)[None, :], [action])[0]

    def segment_score(self, segment: Segment, w: Weight, cfg: DiscountConfig) -> float:
        """S = sum_t gamma^t w . r-hat(s_t, a_t), discounted from the
        segment start."""
        rewards = self.predict_reward_batch(
            np.asarray(segment.states), np.asarray(segment.actions)
        )
        disc = discount_weights(cfg.gamma, len(segment))
        return float(disc @ (rewards @ w.as_array()))

    # -- persistence -----------------------------------------------------

    def save(self, path) -> None:
        arch = {
            "kind": "reward_model",
            "env": self.env.spec.name,
            "sizes": self.net.sizes,
            "m": self.m,
            "scale": self.scale.tolist(),
        }
        np.savez(
            path,
            version=np.int64(CHECKPOINT_VERSION),
            arch=np.frombuffer(json.dumps(arch).encode(), dtype=np.uint8),
            params=self.net.get_flat(),
        )

    @classmethod
    def load(cls, path, env) -> "RewardModel":
        data = np.load(path)
        arch = json.loads(bytes(data["arch"]).decode())
        hidden = tuple(arch["sizes"][1:-1])
        model = cls(env, hidden=hidden)
        model.net.set_flat(data["params"])
        model._mark_updated()
        return model


def predict_preference(
    model: RewardModel, first: Segment, second: Segment, w: Weight, cfg: DiscountConfig
) -> float:
    """P[second > first | w] through the logistic link on the score
    difference.  Complements exactly under argument swap."""
    d = model.segment_score(second, w, cfg) - model.segment_score(first, w, cfg)
    return float(_stable_sigmoid_pair(np.array(d)))


def preference_loss(
    model: RewardModel, batch: list[PreferenceRecord], cfg: DiscountConfig
) -> float:
    """Mean cross-entropy of predicted preference probabilities against
    labels; probabilities are floored at 1e-12 before the log."""
    if not batch:
        raise EmptyBatch("preference batch is empty")
    total = 0.0
    for rec in batch:
        p1 = predict_preference(model, rec.first, rec.second, rec.weight, cfg)
        total += _cross_entropy(np.array([p1]), np.array([rec.label]))[0]
    return total / len(batch)


def _cross_entropy(p1: np.ndarray, labels: np.ndarray) -> np.ndarray:
    p1 = np.clip(p1, PROB_FLOOR, 1.0 - PROB_FLOOR)
    return -((1.0 - labels) * np.log(1.0 - p1) + labels * np.log(p1))


@dataclass
class TrainReport:
    """Result of a reward-model training call.

    ``holdout_accuracy`` counts strict (0/1) validation labels predicted
    on the right side of 0.5; indeterminate labels are excluded.  None
    when the validation split is empty.
    """

    steps: int
    initial_loss: float
    final_loss: float
    holdout_accuracy: float | None
    n_train: int
    n_validation: int


class _PackedPrefs:
    """Packed preference arrays plus the per-step gradient machinery.

    Masks zero out padded steps of episode-tail segments in both the
    scores and the gradients.
    """

    def __init__(self, model: RewardModel, packed: dict, cfg: DiscountConfig):
        self.model = model
        self.cfg = cfg
        self.s0, self.a0 = packed["s0"], packed["a0"]
        self.s1, self.a1 = packed["s1"], packed["a1"]
        ones = np.ones_like(self.a0, dtype=np.float64)
        self.mask0 = packed.get("mask0", ones)
        self.mask1 = packed.get("mask1", ones)
        self.w, self.labels = packed["w"], packed["label"]
        self.H = self.a0.shape[1]
        self.disc = discount_weights(cfg.gamma, self.H)
        enc = model.encoder
        if isinstance(enc, DiscreteEncoder):
            self.p0 = enc.pair_index(self.s0.ravel(), self.a0.ravel()).reshape(self.a0.shape)
            self.p1 = enc.pair_index(self.s1.ravel(), self.a1.ravel()).reshape(self.a1.shape)

    def scores(self, rows: np.ndarray, rewards_by_pair: np.ndarray | None = None):
        """Score difference d = S1 - S0 for the given record rows.

        Discrete path gathers from a full reward table; continuous path
        encodes the rows' steps directly.  Returns (d, ctx) where ctx
        carries what the backward pass needs.
        """
        model, w = self.model, self.w[rows]
        if rewards_by_pair is not None:
            r0 = rewards_by_pair[self.p0[rows]]  # (B, H, m)
            r1 = rewards_by_pair[self.p1[rows]]
            ctx = None
        else:
            enc = model.encoder
            B = len(rows)
            x0 = enc.encode(self.s0[rows].reshape(B * self.H, -1), self.a0[rows].ravel())
            x1 = enc.encode(self.s1[rows].reshape(B * self.H, -1), self.a1[rows].ravel())
            x = np.concatenate((x0, x1))
            z, cache = model.net.forward(x)
            r = bounded_output(z, model.scale)
            r0 = r[: B * self.H].reshape(B, self.H, model.m)
            r1 = r[B * self.H :].reshape(B, self.H, model.m)
            ctx = (z, cache)
        d0 = self.disc[None, :] * self.mask0[rows]
        d1 = self.disc[None, :] * self.mask1[rows]
        s0 = np.einsum("bhm,bm,bh->b", r0, w, d0)
        s1 = np.einsum("bhm,bm,bh->b", r1, w, d1)
        return s1 - s0, ctx


def train_reward_model(
    model: RewardModel,
    prefs: PreferenceBuffer | list[PreferenceRecord],
    gradient_steps: int,
    seed: int,
    cfg: DiscountConfig | None = None,
    learning_rate: float = 3e-4,
    batch_size: int = 256,
    validation_split: bool = True,
    weight_decay: float = 1e-4,
) -> TrainReport:
    """Stochastic gradient training of the preference predictor.

    Minimizes the pairwise cross-entropy with Adam; every tenth record is
    held out for the reported accuracy when ``validation_split`` is set.
    Zero gradient steps leave parameters untouched.  A small weight decay
    pulls state-action pairs no preference constrains toward zero reward
    instead of letting them inherit arbitrary spillover.
    """
    cfg = cfg or DiscountConfig()
    if isinstance(prefs, PreferenceBuffer):
        buffer = prefs
    else:
        buffer = PreferenceBuffer()
        buffer.extend(prefs)
    if len(buffer) == 0:
        raise EmptyBuffer("no preference records to train on")
    packed = buffer.packed()
    data = _PackedPrefs(model, packed, cfg)
    if validation_split and len(buffer) >= PreferenceBuffer.VALIDATION_STRIDE:
        train_rows, val_rows = buffer.split_indices()
    else:
        train_rows = np.arange(len(buffer))
        val_rows = np.empty(0, dtype=np.int64)

    rng = np.random.default_rng(seed)
    opt = Adam(model.net.params, lr=learning_rate)
    discrete = isinstance(model.encoder, DiscreteEncoder)
    initial_loss = _dataset_loss(model, data, train_rows)

    for _ in range(gradient_steps):
        rows = train_rows[rng.integers(0, len(train_rows), size=batch_size)]
        grads = _batch_gradients(model, data, rows, discrete)
        if weight_decay:
            for g, p in zip(grads, model.net.params):
                g += weight_decay * p
        opt.step(grads)
        model._mark_updated()

    final_loss = _dataset_loss(model, data, train_rows)
    accuracy = None
    if len(val_rows):
        accuracy = _strict_accuracy(model, data, val_rows)
    return TrainReport(
        steps=gradient_steps,
        initial_loss=initial_loss,
        final_loss=final_loss,
        holdout_accuracy=accuracy,
        n_train=len(train_rows),
        n_validation=len(val_rows),
    )


def _forward_table(model: RewardModel):
    z, cache = model.net.forward(model.encoder.table())
    return z, cache, bounded_output(z, model.scale)


def _batch_gradients(
    model: RewardModel, data: _PackedPrefs, rows: np.ndarray, discrete: bool
) -> list[np.ndarray]:
    B = len(rows)
    w = data.w[rows]
    labels = data.labels[rows]
    if discrete:
        z, cache, rewards = _forward_table(model)
        d, _ = data.scores(rows, rewards_by_pair=rewards)
        p1 = _stable_sigmoid_pair(d)
        dd = (p1 - labels) / B  # dL/dd per record
        # d d / d r(pair, component): +gamma^t w for second-segment steps,
        # -gamma^t w for first-segment steps; padded steps masked out.
        base = dd[:, None, None] * data.disc[None, :, None] * w[:, None, :]
        c1 = base * data.mask1[rows][:, :, None]
        c0 = base * data.mask0[rows][:, :, None]
        grad_r = np.zeros_like(rewards)
        np.add.at(grad_r, data.p1[rows].ravel(), c1.reshape(B * data.H, -1))
        np.add.at(grad_r, data.p0[rows].ravel(), -c0.reshape(B * data.H, -1))
        grad_z = grad_r * bounded_output_grad(z, model.scale)
        return model.net.backward(cache, grad_z)
    d, ctx = data.scores(rows)
    z, cache = ctx
    p1 = _stable_sigmoid_pair(d)
    dd = (p1 - labels) / B
    base = dd[:, None, None] * data.disc[None, :, None] * w[:, None, :]
    c1 = (base * data.mask1[rows][:, :, None]).reshape(B * data.H, -1)
    c0 = (base * data.mask0[rows][:, :, None]).reshape(B * data.H, -1)
    grad_r = np.concatenate((-c0, c1))  # first block sigma0, then sigma1
    grad_z = grad_r * bounded_output_grad(z, model.scale)
    return model.net.backward(cache, grad_z)


def _dataset_loss(model: RewardModel, data: _PackedPrefs, rows: np.ndarray) -> float:
    if len(rows) == 0:
        return float("nan")
    if isinstance(model.encoder, DiscreteEncoder):
        rewards = model.reward_table()
        d, _ = data.scores(rows, rewards_by_pair=rewards)
    else:
        d, _ = data.scores(rows)
    return float(_cross_entropy(_stable_sigmoid_pair(d), data.labels[rows]).mean())


def _strict_accuracy(model: RewardModel, data: _PackedPrefs, rows: np.ndarray) -> float | None:
    if isinstance(model.encoder, DiscreteEncoder):
        d, _ = data.scores(rows, rewards_by_pair=model.reward_table())
    else:
        d, _ = data.scores(rows)
    labels = data.labels[rows]
    strict = labels != 0.5
    if not strict.any():
        return None
    p1 = _stable_sigmoid_pair(d[strict])
    want_second = labels[strict] == 1.0
    correct = np.where(want_second, p1 > 0.5, p1 < 0.5)
    return float(correct.mean())

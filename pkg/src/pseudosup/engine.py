"""Generalization-reinforced pseudo supervisor.

A policy network assigns pseudo labels to unlabeled mini-batches; the
classifier trains on labeled + pseudo-labeled batches; the change in
validation loss across each classifier update becomes a clamped reward
r = max(exp(loss_before - loss_after) - 1, 0); every `beta` steps the policy
ascends the discounted-return-weighted log-probability surrogate.

Supervised-only and confidence-threshold self-training baselines share the
same loop machinery so their degeneracy equivalences exercise real code paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import DatasetSplits, Sample, augment_weak
from .metrics import MetricsReport, accuracy, auc_roc, f1_binary
from .nn_core import (
    AdamW,
    MlpModel,
    clone_model,
    init_mlp,
    log_softmax,
    mlp_backward,
    mlp_forward,
    softmax_cross_entropy,
)

__all__ = [
    "EngineConfig",
    "TrajectoryStep",
    "Trajectory",
    "StepRecord",
    "EpochRecord",
    "History",
    "TrainResult",
    "warmup_supervised",
    "sample_pseudo_labels",
    "eval_val_loss",
    "compute_reward",
    "classifier_step",
    "discounted_return",
    "policy_update",
    "train",
    "train_supervised_only",
    "train_self_training",
    "evaluate",
]


@dataclass
class EngineConfig:
    hidden_dims: tuple[int, ...] = (64, 32)
    n_classes: int = 2
    beta: int = 50  # trajectory time window
    gamma: float = 0.9  # discount rate
    policy_lr: float = 4e-5
    classifier_lr: float = 4e-5
    weight_decay: float = 0.0
    epochs: int = 10
    batch_labeled: int = 32
    batch_unlabeled: int = 32
    batch_val: int = 64
    warmup_steps: int = 100
    seed: int = 1
    pseudo_loss_weight: float = 1.0
    augment: bool = False
    crop_scale_min: float = 0.8
    policy_warm_start: bool = True

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if self.policy_lr <= 0 or self.classifier_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.epochs < 0 or self.warmup_steps < 0:
            raise ValueError("epochs and warmup_steps must be non-negative")


@dataclass
class TrajectoryStep:
    states: np.ndarray  # unlabeled mini-batch features [B x n]
    actions: np.ndarray  # sampled class indices [B]
    log_probs: np.ndarray  # log pi(a|s) per sample [B]
    reward: float  # shared by all samples of the step, >= 0


@dataclass
class Trajectory:
    max_len: int
    steps: list[TrajectoryStep] = field(default_factory=list)

    def append(self, step: TrajectoryStep) -> None:
        if len(self.steps) >= self.max_len:
            raise ValueError(f"trajectory already holds {self.max_len} steps")
        self.steps.append(step)

    def full(self) -> bool:
        return len(self.steps) == self.max_len

    def __len__(self) -> int:
        return len(self.steps)


@dataclass
class StepRecord:
    step: int
    epoch: int
    loss_val_before: float | None
    loss_val_after: float | None
    reward: float | None
    policy_update: bool


@dataclass
class EpochRecord:
    epoch: int
    metrics: MetricsReport


@dataclass
class History:
    steps: list[StepRecord] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)

    CSV_HEADER = (
        "record,step,epoch,loss_val_before,loss_val_after,reward,"
        "policy_update_flag,accuracy,f1,auc"
    )

    def to_csv(self) -> str:
        def fmt(x):
            return "" if x is None else f"{x:.17g}"

        lines = [self.CSV_HEADER]
        for r in self.steps:
            lines.append(
                f"step,{r.step},{r.epoch},{fmt(r.loss_val_before)},"
                f"{fmt(r.loss_val_after)},{fmt(r.reward)},"
                f"{int(r.policy_update)},,,"
            )
        for e in self.epochs:
            m = e.metrics
            lines.append(
                f"epoch,,{e.epoch},,,,,"
                f"{m.accuracy:.17g},{m.f1:.17g},{m.auc:.17g}"
            )
        return "\n".join(lines) + "\n"

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())


@dataclass
class TrainResult:
    classifier: MlpModel
    policy: MlpModel | None
    history: History
    final_metrics: MetricsReport | None


# ---------------------------------------------------------------------------
# batch helpers

def _stack(samples: list[Sample], cfg: EngineConfig,
           rng_aug: np.random.Generator | None) -> np.ndarray:
    if cfg.augment:
        if rng_aug is None:
            raise ValueError("augmentation requires an RNG")
        samples = [augment_weak(s, rng_aug, cfg.crop_scale_min) for s in samples]
    return np.stack([s.features for s in samples])


def _labels(samples: list[Sample]) -> np.ndarray:
    labels = [s.label for s in samples]
    if any(l is None for l in labels):
        raise ValueError("batch contains unlabeled samples")
    return np.array(labels, dtype=np.int64)


def _draw(samples: list[Sample], size: int, rng: np.random.Generator) -> list[Sample]:
    idx = rng.choice(len(samples), size=min(size, len(samples)), replace=False)
    return [samples[i] for i in idx]


def _labeled_batches(labeled: list[Sample], batch: int, rng: np.random.Generator):
    order = rng.permutation(len(labeled))
    for start in range(0, len(labeled), batch):
        yield [labeled[i] for i in order[start : start + batch]]


def _rngs(seed: int) -> dict[str, np.random.Generator]:
    return {
        name: np.random.default_rng([seed, salt])
        for salt, name in enumerate(["init", "warmup", "data", "policy", "val", "aug"])
    }


# ---------------------------------------------------------------------------
# core operations

def warmup_supervised(
    classifier: MlpModel,
    labeled: list[Sample],
    cfg: EngineConfig,
    rng: np.random.Generator | None = None,
    optimizer: AdamW | None = None,
) -> MlpModel:
    """Initial supervised-only phase: cfg.warmup_steps cross-entropy
    mini-batch steps on labeled data."""
    if not labeled:
        raise ValueError("warmup requires a non-empty labeled set")
    if rng is None:
        rng = _rngs(cfg.seed)["warmup"]
    if optimizer is None:
        optimizer = AdamW(classifier.parameters(), cfg.classifier_lr,
                          weight_decay=cfg.weight_decay)
    steps_done = 0
    while steps_done < cfg.warmup_steps:
        for batch in _labeled_batches(labeled, cfg.batch_labeled, rng):
            if steps_done >= cfg.warmup_steps:
                break
            x = np.stack([s.features for s in batch])
            logits, cache = mlp_forward(classifier, x)
            _, grad = softmax_cross_entropy(logits, _labels(batch))
            optimizer.step(mlp_backward(cache, grad))
            steps_done += 1
    return classifier


def sample_pseudo_labels(
    policy: MlpModel, batch: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw one pseudo label per sample from the policy's categorical output;
    returns the sampled class indices and their log-probabilities."""
    if len(batch) == 0:
        raise ValueError("cannot sample pseudo labels for an empty batch")
    logits, _ = mlp_forward(policy, batch)
    logp = log_softmax(logits)
    cum = np.cumsum(np.exp(logp), axis=1)
    u = rng.random(len(batch))
    actions = (u[:, None] > cum).sum(axis=1)
    actions = np.minimum(actions, logits.shape[1] - 1)
    log_probs = logp[np.arange(len(batch)), actions]
    return actions, log_probs


def eval_val_loss(classifier: MlpModel, x: np.ndarray, y: np.ndarray) -> float:
    """Mean cross-entropy on a labeled validation batch; no parameter mutation."""
    if len(x) == 0:
        raise ValueError("validation batch must be non-empty")
    logits, _ = mlp_forward(classifier, x)
    loss, _ = softmax_cross_entropy(logits, y)
    return loss


def compute_reward(loss_before: float, loss_after: float) -> float:
    """r = max(exp(loss_before - loss_after) - 1, 0)."""
    if not (math.isfinite(loss_before) and math.isfinite(loss_after)):
        raise ValueError("losses must be finite")
    return max(math.exp(loss_before - loss_after) - 1.0, 0.0)


def classifier_step(
    classifier: MlpModel,
    labeled_x: np.ndarray,
    labeled_y: np.ndarray,
    pseudo_x: np.ndarray | None,
    pseudo_y: np.ndarray | None,
    optimizer: AdamW,
    cfg: EngineConfig,
) -> None:
    """One optimizer step on CE(labeled) + pseudo_loss_weight * CE(pseudo)."""
    if len(labeled_x) == 0 and (pseudo_x is None or len(pseudo_x) == 0):
        raise ValueError("classifier step needs a non-empty batch")
    logits, cache = mlp_forward(classifier, labeled_x)
    _, grad = softmax_cross_entropy(logits, labeled_y)
    grads = mlp_backward(cache, grad)
    if pseudo_x is not None and len(pseudo_x) > 0 and cfg.pseudo_loss_weight != 0.0:
        logits_u, cache_u = mlp_forward(classifier, pseudo_x)
        _, grad_u = softmax_cross_entropy(logits_u, pseudo_y)
        grads_u = mlp_backward(cache_u, grad_u)
        grads = [g + cfg.pseudo_loss_weight * gu for g, gu in zip(grads, grads_u)]
    optimizer.step(grads)


def discounted_return(rewards, gamma: float, t: int) -> float:
    """Return-to-go G_t = sum_k gamma^k * rewards[t+k] over the buffered window."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if not 0 <= t < len(rewards):
        raise ValueError(f"index {t} out of range for {len(rewards)} rewards")
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must be in [0, 1]")
    tail = rewards[t:]
    return float(np.sum(tail * gamma ** np.arange(len(tail))))


def _policy_surrogate_grads(
    policy: MlpModel, trajectory: Trajectory, gamma: float
) -> tuple[float, list[np.ndarray]]:
    """Surrogate J = sum_t G_t * mean_batch log pi(a_t|s_t) and dJ/dparams."""
    rewards = [s.reward for s in trajectory.steps]
    surrogate = 0.0
    total: list[np.ndarray] | None = None
    for t, step in enumerate(trajectory.steps):
        g_t = discounted_return(rewards, gamma, t)
        logits, cache = mlp_forward(policy, step.states)
        logp = log_softmax(logits)
        n = len(step.actions)
        surrogate += g_t * float(logp[np.arange(n), step.actions].mean())
        # d(mean log pi)/dlogits = (onehot - softmax) / n
        dlogits = -np.exp(logp)
        dlogits[np.arange(n), step.actions] += 1.0
        dlogits *= g_t / n
        grads = mlp_backward(cache, dlogits)
        total = grads if total is None else [a + b for a, b in zip(total, grads)]
    assert total is not None
    return surrogate, total


def policy_update(
    policy: MlpModel,
    trajectory: Trajectory,
    cfg: EngineConfig,
    optimizer: AdamW | None = None,
) -> float:
    """Ascend the return-weighted log-probability surrogate by one optimizer
    step; returns the surrogate value before the update."""
    if len(trajectory) == 0:
        raise ValueError("policy update requires a non-empty trajectory")
    if optimizer is None:
        optimizer = AdamW(policy.parameters(), cfg.policy_lr,
                          weight_decay=cfg.weight_decay)
    surrogate, grads = _policy_surrogate_grads(policy, trajectory, cfg.gamma)
    optimizer.step([-g for g in grads])  # optimizer minimizes; ascend J
    trajectory.steps.clear()
    return surrogate


# ---------------------------------------------------------------------------
# evaluation

def evaluate(classifier: MlpModel, samples: list[Sample],
             positive_class: int = 1) -> MetricsReport:
    x = np.stack([s.features for s in samples])
    y = _labels(samples)
    logits, _ = mlp_forward(classifier, x)
    preds = logits.argmax(axis=1)
    scores = np.exp(log_softmax(logits))[:, positive_class]
    return MetricsReport(
        accuracy=accuracy(preds, y),
        f1=f1_binary(preds, y, positive_class),
        auc=auc_roc(scores, (y == positive_class).astype(int)),
        n_samples=len(samples),
        positive_class=positive_class,
    )


# ---------------------------------------------------------------------------
# training loops

def train(splits: DatasetSplits, cfg: EngineConfig) -> TrainResult:
    """Full pseudo-supervisor loop.

    Each step: evaluate validation loss, sample pseudo labels for an unlabeled
    mini-batch, update the classifier on labeled + pseudo batches, re-evaluate
    the same validation mini-batch, log the clamped reward, and every
    cfg.beta steps apply one policy-gradient update.

    With an empty unlabeled split the same loop degenerates to supervised
    training (the pseudo branch is simply never entered).
    """
    if not splits.labeled_train or not splits.validation or not splits.test:
        raise ValueError("labeled_train, validation and test must be non-empty")
    rngs = _rngs(cfg.seed)
    input_dim = len(splits.labeled_train[0].features)
    classifier = init_mlp([input_dim, *cfg.hidden_dims, cfg.n_classes], rngs["init"])
    opt_c = AdamW(classifier.parameters(), cfg.classifier_lr,
                  weight_decay=cfg.weight_decay)
    warmup_supervised(classifier, splits.labeled_train, cfg, rngs["warmup"], opt_c)

    if cfg.policy_warm_start:
        policy = clone_model(classifier)
    else:
        policy = init_mlp([input_dim, *cfg.hidden_dims, cfg.n_classes], rngs["init"])
    opt_p = AdamW(policy.parameters(), cfg.policy_lr, weight_decay=cfg.weight_decay)

    history = History()
    trajectory = Trajectory(cfg.beta)
    unlabeled = splits.unlabeled_train
    step = 0
    final_metrics: MetricsReport | None = None
    for epoch in range(1, cfg.epochs + 1):
        for batch in _labeled_batches(splits.labeled_train, cfg.batch_labeled,
                                      rngs["data"]):
            step += 1
            xl = _stack(batch, cfg, rngs["aug"])
            yl = _labels(batch)
            if unlabeled:
                val_batch = _draw(splits.validation, cfg.batch_val, rngs["val"])
                xv = np.stack([s.features for s in val_batch])
                yv = _labels(val_batch)
                loss_before = eval_val_loss(classifier, xv, yv)
                u_batch = _draw(unlabeled, cfg.batch_unlabeled, rngs["policy"])
                xu = _stack(u_batch, cfg, rngs["aug"])
                actions, log_probs = sample_pseudo_labels(policy, xu, rngs["policy"])
                classifier_step(classifier, xl, yl, xu, actions, opt_c, cfg)
                loss_after = eval_val_loss(classifier, xv, yv)
                reward = compute_reward(loss_before, loss_after)
                trajectory.append(TrajectoryStep(xu, actions, log_probs, reward))
                updated = False
                if trajectory.full():
                    policy_update(policy, trajectory, cfg, opt_p)
                    updated = True
                history.steps.append(
                    StepRecord(step, epoch, loss_before, loss_after, reward, updated)
                )
            else:
                classifier_step(classifier, xl, yl, None, None, opt_c, cfg)
                history.steps.append(StepRecord(step, epoch, None, None, None, False))
        final_metrics = evaluate(classifier, splits.test)
        history.epochs.append(EpochRecord(epoch, final_metrics))
    return TrainResult(classifier, policy, history, final_metrics)


def train_supervised_only(splits: DatasetSplits, cfg: EngineConfig) -> TrainResult:
    """Supervised baseline: the same loop with the unlabeled split stripped."""
    stripped = DatasetSplits(
        splits.labeled_train, [], splits.validation, splits.test
    )
    result = train(stripped, cfg)
    return TrainResult(result.classifier, None, result.history, result.final_metrics)


@dataclass
class SelfTrainingResult(TrainResult):
    pseudo_label_accuracy: list[float] = field(default_factory=list)
    n_selected: list[int] = field(default_factory=list)


def train_self_training(
    splits: DatasetSplits, cfg: EngineConfig, confidence_threshold: float
) -> SelfTrainingResult:
    """Naive self-training baseline: each epoch, unlabeled samples whose max
    softmax probability reaches the threshold join training with their argmax
    as pseudo label."""
    if not 0.5 < confidence_threshold <= 1.0:
        raise ValueError("confidence_threshold must be in (0.5, 1]")
    if not splits.labeled_train or not splits.validation or not splits.test:
        raise ValueError("labeled_train, validation and test must be non-empty")
    rngs = _rngs(cfg.seed)
    input_dim = len(splits.labeled_train[0].features)
    classifier = init_mlp([input_dim, *cfg.hidden_dims, cfg.n_classes], rngs["init"])
    opt_c = AdamW(classifier.parameters(), cfg.classifier_lr,
                  weight_decay=cfg.weight_decay)
    warmup_supervised(classifier, splits.labeled_train, cfg, rngs["warmup"], opt_c)

    history = History()
    pseudo_acc: list[float] = []
    n_selected: list[int] = []
    unlabeled = splits.unlabeled_train
    step = 0
    final_metrics: MetricsReport | None = None
    for epoch in range(1, cfg.epochs + 1):
        selected: list[tuple[Sample, int]] = []
        if unlabeled:
            xu_all = np.stack([s.features for s in unlabeled])
            logits, _ = mlp_forward(classifier, xu_all)
            probs = np.exp(log_softmax(logits))
            conf = probs.max(axis=1)
            preds = probs.argmax(axis=1)
            selected = [
                (s, int(p))
                for s, p, c in zip(unlabeled, preds, conf)
                if c >= confidence_threshold
            ]
        n_selected.append(len(selected))
        if selected:
            hits = [int(p == s.hidden_label) for s, p in selected
                    if s.hidden_label is not None]
            pseudo_acc.append(float(np.mean(hits)) if hits else float("nan"))
        else:
            pseudo_acc.append(float("nan"))
        for batch in _labeled_batches(splits.labeled_train, cfg.batch_labeled,
                                      rngs["data"]):
            step += 1
            xl = _stack(batch, cfg, rngs["aug"])
            yl = _labels(batch)
            if selected:
                idx = rngs["policy"].choice(
                    len(selected),
                    size=min(cfg.batch_unlabeled, len(selected)),
                    replace=False,
                )
                xs = np.stack([selected[i][0].features for i in idx])
                ys = np.array([selected[i][1] for i in idx], dtype=np.int64)
                classifier_step(classifier, xl, yl, xs, ys, opt_c, cfg)
            else:
                classifier_step(classifier, xl, yl, None, None, opt_c, cfg)
            history.steps.append(StepRecord(step, epoch, None, None, None, False))
        final_metrics = evaluate(classifier, splits.test)
        history.epochs.append(EpochRecord(epoch, final_metrics))
    return SelfTrainingResult(classifier, None, history, final_metrics,
                              pseudo_acc, n_selected)

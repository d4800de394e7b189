"""Training objectives, the Adam optimizer loop, and model selection.

Three loss kinds over a value network V:

- supervised: |V(s) - V*(s)|, averaged over all states of a batch.
- l0: Bellman residual |V(s) - (1 + min over successors V(s'))|.
- l1: one-sided hinge max(0, (1 + min V(s')) - V(s)).

For l0/l1, goal states contribute |V(s)| and the batch total is the mean
over non-goal states plus the mean over goal states (each over its own
subpopulation). Optional regularizers anchor V between V* and delta * V*.
Multi-seed training keeps the checkpoint with the best validation loss.
"""

from __future__ import annotations

import dataclasses
import hashlib
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .derived import Augmenter, AugmentationSpec
from .gnn import (
    EmbeddingFrame,
    ForwardTape,
    GnnHyper,
    GnnParams,
    StateGraph,
    _make_frame,
    backward,
    forward,
    init_params,
    state_seed,
)
from .grounding import State
from .state_space import Dataset, DatasetEntry

log = logging.getLogger("gnnplan.training")

LOSS_KINDS = ("supervised", "l0", "l1")


class TrainingError(Exception):
    """Aborts: signature mismatches, NaN gradients, malformed batches."""


@dataclass(frozen=True)
class LossConfig:
    kind: str = "l1"
    delta: float = 2.0
    regularizers: bool = True

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.delta < 1:
            raise ValueError(f"delta must be >= 1, got {self.delta}")


@dataclass(frozen=True)
class TrainConfig:
    hyper: GnnHyper = GnnHyper()
    loss: LossConfig = LossConfig()
    learning_rate: float = 0.0002
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    max_epochs: int = 100
    time_budget: float | None = None
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    augmentation: AugmentationSpec | None = None
    eval_seed: int = 0
    # Optional early stopping, disabled by default: stop a seed when the
    # validation loss has not improved for `patience` epochs or has reached
    # `target_validation_loss`.
    patience: int | None = None
    target_validation_loss: float | None = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not self.seeds:
            raise ValueError("at least one training seed is required")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max epochs must be >= 0")


@dataclass
class Checkpoint:
    params: GnnParams
    config: TrainConfig
    seed: int
    epoch: int
    train_loss: float
    validation_loss: float
    provenance: dict = field(default_factory=dict)


def loss_supervised(v: float, vstar: float) -> float:
    """|V(s) - V*(s)|."""
    return abs(v - vstar)


def _min_first(values: Sequence[float]) -> tuple[int, float]:
    best, best_v = 0, values[0]
    for j, x in enumerate(values):
        if x < best_v:
            best, best_v = j, x
    return best, best_v


def loss_l0_prime(v: float, succ_values: Sequence[float], is_goal: bool) -> float:
    """Bellman residual; |V| on goal states."""
    if is_goal:
        return abs(v)
    if not succ_values:
        raise ValueError("non-goal state with no successors")
    return abs(v - (1.0 + min(succ_values)))


def loss_l1_prime(v: float, succ_values: Sequence[float], is_goal: bool) -> float:
    """Hinge on the Bellman inequality V >= 1 + min V(s'); |V| on goals."""
    if is_goal:
        return abs(v)
    if not succ_values:
        raise ValueError("non-goal state with no successors")
    return max(0.0, (1.0 + min(succ_values)) - v)


def loss_regularized(base: float, v: float, vstar: float, delta: float) -> float:
    """base + max(0, V* - V) + max(0, V - delta * V*)."""
    return base + max(0.0, vstar - v) + max(0.0, v - delta * vstar)


def _sign(x: float) -> float:
    return 1.0 if x > 0 else (-1.0 if x < 0 else 0.0)


def _entry_terms(
    config: LossConfig, v: float, succ_values: Sequence[float], vstar: float, is_goal: bool
) -> tuple[float, float, int | None, float]:
    """Per-state loss and its derivatives.

    Returns (loss, d loss / d V(s), index of the minimizing successor or
    None, d loss / d V(s'_min)). Ties pick the first minimizing successor in
    canonical order; hinges at exactly zero contribute no gradient.
    """
    if is_goal:
        return abs(v), _sign(v), None, 0.0
    if config.kind == "supervised":
        return abs(v - vstar), _sign(v - vstar), None, 0.0
    if not succ_values:
        raise ValueError("non-goal state with no successors")
    jmin, vmin = _min_first(succ_values)
    target = 1.0 + vmin
    if config.kind == "l0":
        base = abs(v - target)
        dv = _sign(v - target)
        dmin = -dv
    else:
        gap = target - v
        base = max(0.0, gap)
        dv = -1.0 if gap > 0 else 0.0
        dmin = 1.0 if gap > 0 else 0.0
    loss = base
    if config.regularizers:
        if vstar - v > 0:
            loss += vstar - v
            dv -= 1.0
        if v - config.delta * vstar > 0:
            loss += v - config.delta * vstar
            dv += 1.0
    return loss, dv, jmin, dmin


def _entry_weights(entries: Sequence, kind: str) -> list[float]:
    """Averaging weight of each entry under the batch-total definition."""
    if kind == "supervised":
        return [1.0 / len(entries)] * len(entries)
    goals = sum(1 for e in entries if e.is_goal)
    non = len(entries) - goals
    return [(1.0 / goals) if e.is_goal else (1.0 / non) for e in entries]


@dataclass
class PreparedEntry:
    """A dataset entry with augmentation applied and graphs prebuilt."""

    instance_id: str
    vstar: int
    is_goal: bool
    graph: StateGraph
    succ_graphs: tuple[StateGraph, ...]
    frame: EmbeddingFrame | None = None
    succ_frames: tuple[EmbeddingFrame, ...] | None = None


def prepare_entries(
    entries: Sequence[DatasetEntry],
    signature: dict[str, int],
    augment: Callable[[State], State] | None = None,
    hyper: GnnHyper | None = None,
    eval_seed: int | None = None,
) -> list[PreparedEntry]:
    """Build graphs once per state; with ``eval_seed`` also pin the
    fixed-seed embedding frames (used for validation)."""
    out = []
    for e in entries:
        root = augment(e.state) if augment else e.state
        succs = [augment(s) if augment else s for s in e.successors]
        frame = None
        succ_frames = None
        if eval_seed is not None:
            if hyper is None:
                raise ValueError("eval_seed requires hyper to build frames")
            frame = _make_frame(
                root.model.instance.objects,
                hyper,
                np.random.default_rng(state_seed(root, eval_seed)),
            )
            succ_frames = tuple(
                _make_frame(
                    s.model.instance.objects,
                    hyper,
                    np.random.default_rng(state_seed(s, eval_seed)),
                )
                for s in succs
            )
        out.append(
            PreparedEntry(
                e.instance_id,
                e.vstar,
                e.is_goal,
                StateGraph.from_state(root, signature),
                tuple(StateGraph.from_state(s, signature) for s in succs),
                frame,
                succ_frames,
            )
        )
    return out


def batch_loss(
    params: GnnParams,
    batch: Sequence[DatasetEntry] | Sequence[PreparedEntry],
    config: LossConfig,
    hyper: GnnHyper | None = None,
    rng: np.random.Generator | None = None,
    augment: Callable[[State], State] | None = None,
) -> tuple[float, dict[str, np.ndarray]]:
    """Loss of a batch of root states and its exact parameter gradient.

    V is evaluated on every root and (for l0/l1 non-goal roots) on every
    successor; gradients flow through the root and through the first
    minimizing successor.
    """
    if not batch:
        raise TrainingError("empty batch")
    if isinstance(batch[0], DatasetEntry):
        batch = prepare_entries(batch, params.signature, augment)
    weights = _entry_weights(batch, config.kind)
    grads = params.zero_grads()
    total = 0.0
    for e, w in zip(batch, weights):
        v, tape = forward(params, e.graph, hyper, rng=rng, frame=e.frame)
        succ_values: list[float] = []
        succ_tapes: list[ForwardTape] = []
        if config.kind != "supervised" and not e.is_goal:
            for i, g in enumerate(e.succ_graphs):
                sf = e.succ_frames[i] if e.succ_frames is not None else None
                sv, stape = forward(params, g, hyper, rng=rng, frame=sf)
                succ_values.append(sv)
                succ_tapes.append(stape)
        loss, dv, jmin, dmin = _entry_terms(config, v, succ_values, e.vstar, e.is_goal)
        total += w * loss
        if dv != 0.0:
            backward(tape, params, seed=w * dv, out=grads)
        if jmin is not None and dmin != 0.0:
            backward(succ_tapes[jmin], params, seed=w * dmin, out=grads)
    return total, grads


def dataset_loss(
    value_fn: Callable[[State], float],
    entries: Sequence[DatasetEntry],
    config: LossConfig,
) -> float:
    """Pure loss arithmetic over an arbitrary value function (no gradients).

    Used for validation and for checking that the exact V* lookup zeroes the
    losses on fully expanded instances.
    """
    if not entries:
        raise TrainingError("empty dataset")
    weights = _entry_weights(entries, config.kind)
    total = 0.0
    for e, w in zip(entries, weights):
        v = value_fn(e.state)
        succ = (
            [value_fn(s) for s in e.successors]
            if (config.kind != "supervised" and not e.is_goal)
            else []
        )
        loss, _, _, _ = _entry_terms(config, v, succ, e.vstar, e.is_goal)
        total += w * loss
    return total


def _prepared_loss(
    params: GnnParams, prepared: Sequence[PreparedEntry], config: LossConfig
) -> float:
    """Validation loss over prepared entries with pinned frames."""
    weights = _entry_weights(prepared, config.kind)
    total = 0.0
    for e, w in zip(prepared, weights):
        v, _ = forward(params, e.graph, frame=e.frame)
        succ = []
        if config.kind != "supervised" and not e.is_goal:
            assert e.succ_frames is not None
            succ = [
                forward(params, g, frame=f)[0] for g, f in zip(e.succ_graphs, e.succ_frames)
            ]
        loss, _, _, _ = _entry_terms(config, v, succ, e.vstar, e.is_goal)
        total += w * loss
    return total


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @staticmethod
    def for_params(params: GnnParams) -> "AdamState":
        return AdamState(params.zero_grads(), params.zero_grads(), 0)


def optimizer_step(
    params: GnnParams,
    grads: dict[str, np.ndarray],
    moments: AdamState,
    t: int | None = None,
    config: TrainConfig | None = None,
) -> tuple[GnnParams, AdamState]:
    """One Adam update with bias correction, in place."""
    cfg = config or TrainConfig()
    if t is None:
        t = moments.t + 1
    lr, b1, b2, eps = cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {name!r}")
    for name, arr in params.named_arrays():
        g = grads[name]
        m = moments.m[name]
        v = moments.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        arr -= lr * m_hat / (np.sqrt(v_hat) + eps)
        if not np.all(np.isfinite(arr)):
            raise TrainingError(f"non-finite parameter {name!r} after update")
    moments.t = t
    params.version += 1
    return params, moments


def dataset_hash(dataset: Dataset) -> str:
    """Stable content hash of a dataset for checkpoint provenance."""
    h = hashlib.blake2b(digest_size=16)
    h.update(dataset.partition.encode())
    for e in dataset.entries:
        h.update(e.instance_id.encode())
        h.update(str(e.vstar).encode())
        for a in e.state.canonical:
            h.update(str(a).encode())
        h.update(b";")
    return h.hexdigest()


def _check_same_domain(train_ds: Dataset, valid_ds: Dataset) -> None:
    domains = {
        id(e.state.model.domain): e.state.model.domain
        for e in (*train_ds.entries, *valid_ds.entries)
    }
    signatures = {tuple(sorted(d.signature().items())) for d in domains.values()}
    if len(signatures) > 1:
        raise TrainingError("dataset/domain signature mismatch across entries")


def train(
    train_ds: Dataset,
    valid_ds: Dataset,
    config: TrainConfig,
    epoch_callback: Callable[[int, int, float, float], None] | None = None,
) -> Checkpoint:
    """Run the epoch loop once per seed and return the checkpoint with the
    best validation loss across seeds.

    The validation loss uses the fixed-seed embedding mode and never updates
    parameters. The wall-clock budget covers the whole call; when it expires
    the best checkpoint so far is returned (a budget of 0 yields the
    epoch-0 checkpoint of the first seed, with a warning).
    """
    if not train_ds.entries or not valid_ds.entries:
        raise TrainingError("empty training or validation dataset")
    _check_same_domain(train_ds, valid_ds)
    domain = train_ds.entries[0].state.model.domain
    augment = None
    signature = domain.signature()
    if config.augmentation is not None:
        augmenter = Augmenter(domain, config.augmentation)
        augment = augmenter.augment
        signature = augmenter.signature()

    prepared_train = prepare_entries(train_ds.entries, signature, augment)
    prepared_valid = prepare_entries(
        valid_ds.entries, signature, augment, hyper=config.hyper, eval_seed=config.eval_seed
    )
    provenance = {
        "train": dataset_hash(train_ds),
        "validation": dataset_hash(valid_ds),
    }

    start = time.monotonic()

    def out_of_budget() -> bool:
        return config.time_budget is not None and time.monotonic() - start >= config.time_budget

    best: Checkpoint | None = None
    stopped_early = False
    for seed in config.seeds:
        hyper = dataclasses.replace(config.hyper, seed=seed)
        params = init_params(signature, hyper)
        rng = np.random.default_rng(seed)
        moments = AdamState.for_params(params)
        val0 = _prepared_loss(params, prepared_valid, config.loss)
        seed_best = Checkpoint(params.copy(), config, seed, 0, float("nan"), val0, dict(provenance))
        log.info("seed %d epoch 0 validation %.6f", seed, val0)
        since_improved = 0
        for epoch in range(1, config.max_epochs + 1):
            if out_of_budget():
                stopped_early = True
                break
            order = rng.permutation(len(prepared_train))
            losses = []
            for lo in range(0, len(order), config.batch_size):
                chunk = [prepared_train[i] for i in order[lo : lo + config.batch_size]]
                loss, grads = batch_loss(params, chunk, config.loss, hyper, rng=rng)
                optimizer_step(params, grads, moments, config=config)
                losses.append(loss)
            train_loss = float(np.mean(losses))
            val_loss = _prepared_loss(params, prepared_valid, config.loss)
            log.info("seed %d epoch %d train %.6f validation %.6f", seed, epoch, train_loss, val_loss)
            if epoch_callback is not None:
                epoch_callback(seed, epoch, train_loss, val_loss)
            if val_loss < seed_best.validation_loss:
                seed_best = Checkpoint(
                    params.copy(), config, seed, epoch, train_loss, val_loss, dict(provenance)
                )
                since_improved = 0
            else:
                since_improved += 1
            if (
                config.target_validation_loss is not None
                and val_loss <= config.target_validation_loss
            ):
                break
            if config.patience is not None and since_improved >= config.patience:
                break
        if best is None or seed_best.validation_loss < best.validation_loss:
            best = seed_best
        if out_of_budget():
            stopped_early = True
            break
    assert best is not None
    if stopped_early:
        log.warning("wall-clock budget exhausted; returning best checkpoint so far")
        best.provenance["budget_warning"] = True
    return best

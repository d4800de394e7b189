"""Relational message-passing value network over ground states.

The network embeds every object of an instance, runs L rounds in which each
true atom sends one message per argument position (computed by a predicate
specific MLP from the concatenated argument embeddings), aggregates incident
messages per object with a componentwise smooth maximum, updates embeddings,
and finally reads out a scalar value from the summed object embeddings.

Gradients are computed by hand-written reverse-mode accumulation over a tape
of forward intermediates; no autodiff framework is involved. All arithmetic
is 64-bit.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .grounding import State
from .pddl import Atom, Domain

CHECKPOINT_FORMAT = "gnnplan-checkpoint 1"


class CheckpointError(Exception):
    """Malformed checkpoint or signature mismatch on load."""


class StaleTapeError(Exception):
    """backward() called with a tape older than the current parameters."""


@dataclass(frozen=True)
class GnnHyper:
    k: int = 64
    layers: int = 30
    alpha: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.k <= 0 or self.k % 2 != 0:
            raise ValueError(f"embedding dimension k must be even and positive, got {self.k}")
        if self.layers < 1:
            raise ValueError(f"layer count must be >= 1, got {self.layers}")
        if self.alpha <= 0:
            raise ValueError(f"smooth-max sharpness must be > 0, got {self.alpha}")

    def to_dict(self) -> dict:
        return {"k": self.k, "layers": self.layers, "alpha": self.alpha, "seed": self.seed}

    @staticmethod
    def from_dict(d: dict) -> "GnnHyper":
        return GnnHyper(int(d["k"]), int(d["layers"]), float(d["alpha"]), int(d["seed"]))


@dataclass
class Mlp:
    """Dense layer with ReLU followed by a dense linear layer."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(x @ self.w1.T + self.b1, 0.0) @ self.w2.T + self.b2

    def arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        yield "w1", self.w1
        yield "b1", self.b1
        yield "w2", self.w2
        yield "b2", self.b2


def _init_mlp(rng: np.random.Generator, in_dim: int, out_dim: int) -> Mlp:
    # Hidden width equals input width; fan-in-scaled uniform weights, zero biases.
    hidden = in_dim
    bound1 = 1.0 / np.sqrt(in_dim)
    bound2 = 1.0 / np.sqrt(hidden)
    return Mlp(
        w1=rng.uniform(-bound1, bound1, size=(hidden, in_dim)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-bound2, bound2, size=(out_dim, hidden)),
        b2=np.zeros(out_dim),
    )


@dataclass
class GnnParams:
    """All weights of the network for one (augmented) predicate signature."""

    hyper: GnnHyper
    signature: dict[str, int]
    message: dict[str, Mlp]
    update: Mlp
    readout_obj: Mlp
    readout_out: Mlp
    init_scheme: str = "fan-in-uniform"
    version: int = 0  # bumped on every in-place mutation; used to detect stale tapes

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        for name in sorted(self.message):
            for part, arr in self.message[name].arrays():
                yield f"message.{name}.{part}", arr
        for prefix, mlp in (
            ("update", self.update),
            ("readout_obj", self.readout_obj),
            ("readout_out", self.readout_out),
        ):
            for part, arr in mlp.arrays():
                yield f"{prefix}.{part}", arr

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(arr) for name, arr in self.named_arrays()}

    def parameter_count(self) -> int:
        return sum(arr.size for _, arr in self.named_arrays())

    def copy(self) -> "GnnParams":
        def cp(m: Mlp) -> Mlp:
            return Mlp(m.w1.copy(), m.b1.copy(), m.w2.copy(), m.b2.copy())

        return GnnParams(
            hyper=self.hyper,
            signature=dict(self.signature),
            message={n: cp(m) for n, m in self.message.items()},
            update=cp(self.update),
            readout_obj=cp(self.readout_obj),
            readout_out=cp(self.readout_out),
            init_scheme=self.init_scheme,
            version=0,
        )


def init_params(domain: Domain | dict[str, int], hyper: GnnHyper) -> GnnParams:
    """Fresh parameters for the given (augmented) domain, deterministic in
    the hyperparameter seed. Arity-0 predicates send no messages and get no
    message MLP."""
    signature = domain.signature() if isinstance(domain, Domain) else dict(domain)
    k = hyper.k
    rng = np.random.default_rng(hyper.seed)
    message: dict[str, Mlp] = {}
    for name in sorted(signature):
        arity = signature[name]
        if arity >= 1:
            message[name] = _init_mlp(rng, arity * k, arity * k)
    update = _init_mlp(rng, 2 * k, k)
    readout_obj = _init_mlp(rng, k, k)
    readout_out = _init_mlp(rng, k, 1)
    return GnnParams(hyper, signature, message, update, readout_obj, readout_out)


@dataclass
class EmbeddingFrame:
    """Per-object embedding vectors for one iteration."""

    objects: tuple[str, ...]
    matrix: np.ndarray  # (len(objects), k)

    def vector(self, obj: str) -> np.ndarray:
        return self.matrix[self.objects.index(obj)]


def _make_frame(objects: tuple[str, ...], hyper: GnnHyper, rng: np.random.Generator) -> EmbeddingFrame:
    half = hyper.k // 2
    matrix = np.zeros((len(objects), hyper.k))
    matrix[:, half:] = rng.standard_normal((len(objects), half))
    return EmbeddingFrame(objects, matrix)


def initial_embeddings(state: State, hyper: GnnHyper, rng: np.random.Generator) -> EmbeddingFrame:
    """f_0(o) = zeros in the first k/2 coordinates, standard normal draws in
    the rest, one vector per object of the instance."""
    return _make_frame(state.model.instance.objects, hyper, rng)


def smax(values, alpha: float) -> float:
    """Smooth maximum: max(x) + log(sum(exp(alpha * (x - max(x))))) / alpha."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("smax of an empty collection")
    top = float(np.max(x))
    return top + float(np.log(np.sum(np.exp(alpha * (x - top))))) / alpha


class StateGraph:
    """Precomputed message-passing wiring for one state.

    Atoms are kept in canonical (sorted) order, which groups them by
    predicate; the flat message order is atom-major, argument-position-minor.
    Aggregation segments come from a stable sort of message targets, so the
    combination order within an object's segment is canonical and bit-stable.
    """

    __slots__ = (
        "objects",
        "atoms",
        "groups",
        "n_messages",
        "order",
        "seg_starts",
        "seg_counts",
        "seg_id",
        "seg_objects",
    )

    def __init__(self, objects: tuple[str, ...], atoms, signature: dict[str, int] | None = None):
        self.objects = tuple(objects)
        self.atoms: tuple[Atom, ...] = tuple(sorted(atoms))
        obj_index = {o: i for i, o in enumerate(self.objects)}
        if signature is not None:
            for a in self.atoms:
                arity = signature.get(a.predicate)
                if arity is None:
                    raise ValueError(f"atom {a} over unknown predicate {a.predicate!r}")
                if arity != a.arity:
                    raise ValueError(f"atom {a} has arity {a.arity}, declared {arity}")

        # groups: (predicate, argument row matrix, flat start, flat stop)
        self.groups: list[tuple[str, np.ndarray, int, int]] = []
        targets: list[np.ndarray] = []
        flat = 0
        i = 0
        while i < len(self.atoms):
            name = self.atoms[i].predicate
            j = i
            while j < len(self.atoms) and self.atoms[j].predicate == name:
                j += 1
            arity = self.atoms[i].arity
            if arity > 0:
                try:
                    rows = np.array(
                        [[obj_index[o] for o in a.args] for a in self.atoms[i:j]],
                        dtype=np.int64,
                    )
                except KeyError as exc:
                    raise ValueError(f"atom argument {exc.args[0]!r} is not an object") from None
                count = rows.size
                self.groups.append((name, rows, flat, flat + count))
                targets.append(rows.reshape(-1))
                flat += count
            i = j
        self.n_messages = flat
        if flat:
            target = np.concatenate(targets)
            self.order = np.argsort(target, kind="stable")
            sorted_targets = target[self.order]
            boundaries = np.flatnonzero(np.diff(sorted_targets)) + 1
            self.seg_starts = np.concatenate(([0], boundaries))
            ends = np.concatenate((boundaries, [flat]))
            self.seg_counts = ends - self.seg_starts
            self.seg_id = np.repeat(np.arange(len(self.seg_starts)), self.seg_counts)
            self.seg_objects = sorted_targets[self.seg_starts]
        else:
            self.order = np.zeros(0, dtype=np.int64)
            self.seg_starts = np.zeros(0, dtype=np.int64)
            self.seg_counts = np.zeros(0, dtype=np.int64)
            self.seg_id = np.zeros(0, dtype=np.int64)
            self.seg_objects = np.zeros(0, dtype=np.int64)

    @classmethod
    def from_state(cls, state: State, signature: dict[str, int] | None = None) -> "StateGraph":
        return cls(state.model.instance.objects, state.atoms, signature)


@dataclass
class _LayerTape:
    F: np.ndarray  # (n, k) input embeddings of the layer
    H: dict[str, np.ndarray]  # per predicate, post-ReLU hidden of the message MLP
    E: np.ndarray  # (T, k) shifted exponentials, sorted-by-target order
    S: np.ndarray  # (segments, k) sums of E
    M: np.ndarray  # (segments, k) componentwise segment maxima
    AGG: np.ndarray  # (n, k) aggregated messages (zero rows for silent objects)
    HU: np.ndarray  # (n, 2k) post-ReLU hidden of the update MLP


@dataclass
class ForwardTape:
    """Everything needed to reproduce V exactly and backpropagate exactly."""

    graph: StateGraph
    frame: EmbeddingFrame
    layers: list[_LayerTape]
    F_final: np.ndarray
    H1: np.ndarray
    R_sum: np.ndarray
    H2: np.ndarray
    value: float
    alpha: float
    params_version: int


def _as_graph(params: GnnParams, state: State | StateGraph) -> StateGraph:
    if isinstance(state, StateGraph):
        return state
    return StateGraph.from_state(state, params.signature)


def forward(
    params: GnnParams,
    state: State | StateGraph,
    hyper: GnnHyper | None = None,
    rng: np.random.Generator | None = None,
    frame: EmbeddingFrame | None = None,
) -> tuple[float, ForwardTape]:
    """Run the network on one state; returns the value and the tape.

    Either an rng stream (to draw the random halves) or a prebuilt frame
    must be supplied.
    """
    hyper = hyper or params.hyper
    graph = _as_graph(params, state)
    for name, rows, _, _ in graph.groups:
        mlp = params.message.get(name)
        if mlp is None:
            raise ValueError(f"atom over unknown predicate {name!r}")
        if params.signature.get(name) != rows.shape[1]:
            raise ValueError(f"predicate {name!r} arity mismatch with parameters")
    n, k = len(graph.objects), hyper.k
    if frame is None:
        if rng is None:
            raise ValueError("forward needs an rng stream or a prebuilt frame")
        frame = _make_frame(graph.objects, hyper, rng)
    if frame.matrix.shape != (n, k):
        raise ValueError(f"frame shape {frame.matrix.shape} does not match ({n}, {k})")

    alpha = hyper.alpha
    T = graph.n_messages
    F = np.array(frame.matrix, dtype=np.float64)
    layers: list[_LayerTape] = []
    for _ in range(hyper.layers):
        Hs: dict[str, np.ndarray] = {}
        msgs = np.empty((T, k))
        for name, rows, start, stop in graph.groups:
            mlp = params.message[name]
            X = F[rows].reshape(rows.shape[0], -1)
            H = np.maximum(X @ mlp.w1.T + mlp.b1, 0.0)
            Y = H @ mlp.w2.T + mlp.b2
            msgs[start:stop] = Y.reshape(-1, k)
            Hs[name] = H
        AGG = np.zeros((n, k))
        if T:
            Ms = msgs[graph.order]
            M = np.maximum.reduceat(Ms, graph.seg_starts, axis=0)
            E = np.exp(alpha * (Ms - M[graph.seg_id]))
            S = np.add.reduceat(E, graph.seg_starts, axis=0)
            AGG[graph.seg_objects] = M + np.log(S) / alpha
        else:
            E = np.zeros((0, k))
            S = np.zeros((0, k))
            M = np.zeros((0, k))
        U = np.concatenate([F, AGG], axis=1)
        HU = np.maximum(U @ params.update.w1.T + params.update.b1, 0.0)
        F_next = HU @ params.update.w2.T + params.update.b2
        layers.append(_LayerTape(F, Hs, E, S, M, AGG, HU))
        F = F_next

    H1 = np.maximum(F @ params.readout_obj.w1.T + params.readout_obj.b1, 0.0)
    R = H1 @ params.readout_obj.w2.T + params.readout_obj.b2
    R_sum = R.sum(axis=0)
    H2 = np.maximum(R_sum @ params.readout_out.w1.T + params.readout_out.b1, 0.0)
    V = float(H2 @ params.readout_out.w2.T[:, 0] + params.readout_out.b2[0])
    tape = ForwardTape(
        graph, frame, layers, F, H1, R_sum, H2, V, alpha, params.version
    )
    return V, tape


def backward(
    tape: ForwardTape,
    params: GnnParams,
    seed: float = 1.0,
    out: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Exact gradient of seed * V with respect to every parameter.

    Pass ``out`` to accumulate into an existing gradient dictionary (used to
    sum contributions over a batch).
    """
    if tape.params_version != params.version:
        raise StaleTapeError("parameters changed since this tape was recorded")
    grads = out if out is not None else params.zero_grads()
    graph = tape.graph
    k = params.hyper.k
    n = len(graph.objects)

    def mlp_back(prefix: str, mlp: Mlp, X: np.ndarray, H: np.ndarray, dY: np.ndarray) -> np.ndarray:
        dH = dY @ mlp.w2
        dZ = dH * (H > 0)
        grads[f"{prefix}.w2"] += dY.T @ H
        grads[f"{prefix}.b2"] += dY.sum(axis=0)
        grads[f"{prefix}.w1"] += dZ.T @ X
        grads[f"{prefix}.b1"] += dZ.sum(axis=0)
        return dZ @ mlp.w1

    dV = np.array([[float(seed)]])
    dR_sum = mlp_back("readout_out", params.readout_out, tape.R_sum[None, :], tape.H2[None, :], dV)[0]
    dR = np.broadcast_to(dR_sum, (n, k))
    dF = mlp_back("readout_obj", params.readout_obj, tape.F_final, tape.H1, dR)

    for lt in reversed(tape.layers):
        U = np.concatenate([lt.F, lt.AGG], axis=1)
        dU = mlp_back("update", params.update, U, lt.HU, dF)
        dF = dU[:, :k].copy()
        dAGG = dU[:, k:]
        if graph.n_messages:
            # d smax / d x_j is the softmax weight E_j / S of its segment.
            dseg = dAGG[graph.seg_objects]
            dMs = (lt.E / lt.S[graph.seg_id]) * dseg[graph.seg_id]
            dmsgs = np.empty_like(dMs)
            dmsgs[graph.order] = dMs
            for name, rows, start, stop in graph.groups:
                mlp = params.message[name]
                dY = dmsgs[start:stop].reshape(rows.shape[0], -1)
                X = lt.F[rows].reshape(rows.shape[0], -1)
                dX = mlp_back(f"message.{name}", mlp, X, lt.H[name], dY)
                np.add.at(dF, rows.reshape(-1), dX.reshape(-1, k))
    return grads


def smax_bound_violations(tape: ForwardTape, tol: float = 1e-9) -> int:
    """Count aggregation entries outside [max, max + ln(count)/alpha]."""
    bad = 0
    for lt in tape.layers:
        if lt.M.size == 0:
            continue
        counts = tape.graph.seg_counts[:, None]
        agg = lt.M + np.log(lt.S) / tape.alpha
        upper = lt.M + np.log(counts) / tape.alpha
        bad += int(np.sum(agg < lt.M - tol))
        bad += int(np.sum(agg > upper + tol))
    return bad


def state_seed(state: State, eval_seed: int = 0) -> int:
    """Stable per-(state, seed) integer for the fixed-seed embedding mode."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(eval_seed).encode())
    for o in state.model.instance.objects:
        h.update(o.encode())
        h.update(b";")
    for a in state.canonical:
        h.update(str(a).encode())
        h.update(b";")
    return int.from_bytes(h.digest(), "big")


def value_of(
    params: GnnParams,
    state: State,
    hyper: GnnHyper | None = None,
    mode: str = "fixed-seed",
    eval_seed: int = 0,
    rng: np.random.Generator | None = None,
) -> float:
    """V(s) under the chosen rng policy.

    fixed-seed: the random halves are drawn from a generator keyed by the
    state's canonical form and ``eval_seed``, so repeated calls agree.
    stochastic: fresh draws from the supplied stream.
    """
    if mode == "fixed-seed":
        rng = np.random.default_rng(state_seed(state, eval_seed))
    elif mode == "stochastic":
        if rng is None:
            raise ValueError("stochastic mode needs an rng stream")
    else:
        raise ValueError(f"unknown value mode {mode!r}")
    value, _ = forward(params, state, hyper, rng=rng)
    return value


def make_value_fn(
    params: GnnParams,
    augment: Callable[[State], State] | None = None,
    eval_seed: int = 0,
) -> Callable[[State], float]:
    """Deterministic State -> V callable for policy execution and validation."""

    def fn(state: State) -> float:
        s = augment(state) if augment is not None else state
        return value_of(params, s, mode="fixed-seed", eval_seed=eval_seed)

    return fn


def save_checkpoint(path: str, params: GnnParams, extra: dict | None = None) -> None:
    """Write a versioned npz container with weights and metadata."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "hyper": params.hyper.to_dict(),
        "signature": params.signature,
        "init_scheme": params.init_scheme,
        "extra": extra or {},
    }
    arrays = {name: arr for name, arr in params.named_arrays()}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as f:
        np.savez(f, **arrays)


def _relu_pattern(tape: ForwardTape) -> list[np.ndarray]:
    """Boolean activation masks of every ReLU in the forward pass."""
    masks: list[np.ndarray] = []
    for lt in tape.layers:
        for name in sorted(lt.H):
            masks.append(lt.H[name] > 0)
        masks.append(lt.HU > 0)
    masks.append(tape.H1 > 0)
    masks.append(tape.H2 > 0)
    return masks


def _same_pattern(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))


def gradient_check(
    seed: int = 0,
    n_states: int = 6,
    param_seeds: tuple[int, ...] = (0, 1),
    coords_per_array: int = 4,
    step: float = 1e-5,
) -> dict:
    """Compare the hand-written gradients against central finite differences.

    Runs over randomly built states of a small synthetic signature (one
    nullary, one unary, one binary predicate). Coordinates whose ReLU
    activation pattern flips inside the probe interval are skipped, because
    the value is only piecewise differentiable there. Returns a dict with
    max_rel_err, checked and skipped counts.
    """
    signature = {"busy": 0, "clear": 1, "on": 2}
    objects = tuple(f"o{i}" for i in range(1, 5))
    all_atoms = [Atom("busy", ())]
    all_atoms += [Atom("clear", (o,)) for o in objects]
    all_atoms += [Atom("on", (a, b)) for a in objects for b in objects]
    master = np.random.default_rng(seed)
    graphs = []
    for _ in range(n_states):
        count = int(master.integers(2, len(all_atoms)))
        picked = master.choice(len(all_atoms), size=count, replace=False)
        graphs.append(StateGraph(objects, [all_atoms[i] for i in picked], signature))

    hyper = GnnHyper(k=4, layers=2, alpha=8.0, seed=seed)
    max_rel = 0.0
    checked = 0
    skipped = 0
    for ps in param_seeds:
        params = init_params(
            signature, GnnHyper(k=hyper.k, layers=hyper.layers, alpha=hyper.alpha, seed=ps)
        )
        for gi, graph in enumerate(graphs):
            frame = _make_frame(graph.objects, hyper, np.random.default_rng(seed * 7919 + gi))
            _, tape = forward(params, graph, hyper, frame=frame)
            grads = backward(tape, params)
            pattern = _relu_pattern(tape)
            for name, arr in params.named_arrays():
                flat = arr.reshape(-1)
                gflat = grads[name].reshape(-1)
                for c in master.choice(flat.size, size=min(coords_per_array, flat.size), replace=False):
                    old = flat[c]
                    flat[c] = old + step
                    v_plus, tape_plus = forward(params, graph, hyper, frame=frame)
                    flat[c] = old - step
                    v_minus, tape_minus = forward(params, graph, hyper, frame=frame)
                    flat[c] = old
                    if not (
                        _same_pattern(pattern, _relu_pattern(tape_plus))
                        and _same_pattern(pattern, _relu_pattern(tape_minus))
                    ):
                        skipped += 1
                        continue
                    fd = (v_plus - v_minus) / (2.0 * step)
                    rel = abs(gflat[c] - fd) / max(1.0, abs(gflat[c]), abs(fd))
                    max_rel = max(max_rel, rel)
                    checked += 1
    return {"max_rel_err": max_rel, "checked": checked, "skipped": skipped}


def load_checkpoint(
    path: str, expected_signature: dict[str, int] | None = None
) -> tuple[GnnParams, dict]:
    """Read a checkpoint; rejects format or predicate-signature mismatches."""
    with np.load(path) as data:
        if "__meta__" not in data:
            raise CheckpointError(f"{path}: missing metadata")
        meta = json.loads(bytes(data["__meta__"]).decode())
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(f"{path}: unknown format {meta.get('format')!r}")
        signature = {str(p): int(a) for p, a in meta["signature"].items()}
        if expected_signature is not None and dict(expected_signature) != signature:
            raise CheckpointError(
                f"{path}: checkpoint signature does not match the requested domain"
            )
        hyper = GnnHyper.from_dict(meta["hyper"])
        params = init_params(signature, hyper)
        params.init_scheme = meta.get("init_scheme", params.init_scheme)
        for name, arr in params.named_arrays():
            if name not in data:
                raise CheckpointError(f"{path}: missing parameter array {name!r}")
            stored = data[name]
            if stored.shape != arr.shape:
                raise CheckpointError(
                    f"{path}: array {name!r} has shape {stored.shape}, expected {arr.shape}"
                )
            arr[...] = stored
    return params, meta.get("extra", {})

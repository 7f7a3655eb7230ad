"""Per-token binary tagger: a bidirectional LSTM with a shared dense sigmoid
head, written directly on numpy with exact backpropagation through time.

Gate layout inside the stacked parameter tensors is [input, forget, cell,
output]; each direction owns input weights (4h x d), recurrent weights
(4h x h), and biases (4h). The head applies the same (2h) -> 1 sigmoid
classifier at every position. All math runs in float64; training batches
group sequences of identical length, so no padding positions ever exist.
"""

from __future__ import annotations

import abc
import json
import logging
import time
from dataclasses import dataclass

import numpy as np

from .corpus import TokenSequence
from .errors import NumericalError, ValidationError
from .seeds import derive_seed

log = logging.getLogger(__name__)

PROB_CLIP = 1e-7
CHECKPOINT_VERSION = 1


@dataclass
class LstmDirectionParams:
    w_gates: np.ndarray  # (4h, d)
    u_gates: np.ndarray  # (4h, h)
    b_gates: np.ndarray  # (4h,)


@dataclass
class TaggerModel:
    forward_params: LstmDirectionParams
    backward_params: LstmDirectionParams
    head_w: np.ndarray  # (2h,)
    head_b: np.ndarray  # scalar, shape ()
    d: int
    h: int
    threshold: float = 0.5
    version: int = 0  # bumped on every in-place parameter update

    def param_items(self) -> list[tuple[str, np.ndarray]]:
        return [
            ("fwd.w", self.forward_params.w_gates),
            ("fwd.u", self.forward_params.u_gates),
            ("fwd.b", self.forward_params.b_gates),
            ("bwd.w", self.backward_params.w_gates),
            ("bwd.u", self.backward_params.u_gates),
            ("bwd.b", self.backward_params.b_gates),
            ("head.w", self.head_w),
            ("head.b", self.head_b),
        ]


@dataclass(frozen=True)
class TrainingConfig:
    """Optimizer recipe; the published setting is RMSprop at 5e-5 for 5 epochs."""

    learning_rate: float = 5e-5
    epochs: int = 5
    batch_size: int = 32
    rho: float = 0.9
    epsilon: float = 1e-8
    seed: int = 0
    gradient_clip: float | None = 5.0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if not 0 < self.rho < 1:
            raise ValidationError("rho must be in (0, 1)")


def _sigmoid(x):
    # exp overflow for very negative logits correctly lands on 0.0
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def init_model(d: int, h: int, seed: int) -> TaggerModel:
    """Uniform(-1/sqrt(h), 1/sqrt(h)) weights, forget-gate biases at 1."""
    if d <= 0 or h <= 0:
        raise ValidationError("d and h must be positive")
    rng = np.random.default_rng(seed)
    s = 1.0 / np.sqrt(h)

    def direction():
        b = np.zeros(4 * h)
        b[h : 2 * h] = 1.0
        return LstmDirectionParams(
            w_gates=rng.uniform(-s, s, size=(4 * h, d)),
            u_gates=rng.uniform(-s, s, size=(4 * h, h)),
            b_gates=b,
        )

    return TaggerModel(
        forward_params=direction(),
        backward_params=direction(),
        head_w=rng.uniform(-s, s, size=2 * h),
        head_b=np.zeros(()),
        d=d,
        h=h,
    )


def _run_direction(params: LstmDirectionParams, xs: np.ndarray, h: int):
    """One direction over (B, T, d) inputs, already ordered in scan order.

    Returns hidden states (B, T, h) and the per-step activations needed for
    the backward pass.
    """
    b_sz, t_len, _ = xs.shape
    hs = np.zeros((b_sz, t_len, h))
    steps = []
    h_prev = np.zeros((b_sz, h))
    c_prev = np.zeros((b_sz, h))
    for t in range(t_len):
        z = xs[:, t] @ params.w_gates.T + h_prev @ params.u_gates.T + params.b_gates
        i = _sigmoid(z[:, :h])
        f = _sigmoid(z[:, h : 2 * h])
        g = np.tanh(z[:, 2 * h : 3 * h])
        o = _sigmoid(z[:, 3 * h :])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h_t = o * tc
        hs[:, t] = h_t
        steps.append((i, f, g, o, tc, h_prev, c_prev))
        h_prev, c_prev = h_t, c
    return hs, steps


def forward_batch(model: TaggerModel, inputs: np.ndarray):
    """Probabilities for a batch of same-length sequences, (B, T, d) -> (B, T)."""
    xs = np.asarray(inputs, dtype=np.float64)
    if xs.ndim != 3 or xs.shape[2] != model.d:
        raise ValidationError(f"expected inputs of shape (B, T, {model.d}), got {xs.shape}")
    b_sz, t_len, _ = xs.shape
    if t_len == 0:
        return np.zeros((b_sz, 0)), {"model": model, "version": model.version, "empty": True}
    h = model.h
    hs_f, steps_f = _run_direction(model.forward_params, xs, h)
    hs_b_rev, steps_b = _run_direction(model.backward_params, xs[:, ::-1], h)
    hs_b = hs_b_rev[:, ::-1]
    concat = np.concatenate([hs_f, hs_b], axis=2)  # (B, T, 2h)
    logits = concat @ model.head_w + model.head_b
    probs = _sigmoid(logits)
    cache = {
        "model": model,
        "version": model.version,
        "xs": xs,
        "steps_f": steps_f,
        "steps_b": steps_b,
        "concat": concat,
        "probs": probs,
    }
    return probs, cache


def forward(model: TaggerModel, inputs):
    """Single-sequence convenience wrapper: (T, d) -> (T,) probabilities."""
    xs = np.asarray(inputs, dtype=np.float64)
    if xs.size == 0:
        xs = xs.reshape(0, model.d)
    probs, cache = forward_batch(model, xs[None, :, :])
    return probs[0], cache


def loss(probs: np.ndarray, labels: np.ndarray) -> float:
    """Mean per-token binary cross-entropy with probabilities clipped to
    [1e-7, 1 - 1e-7]."""
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if p.shape != y.shape:
        raise ValidationError(f"probs/labels length mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        return 0.0
    pc = np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)
    return float(-(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)).mean())


def _zero_grads(model: TaggerModel) -> dict[str, np.ndarray]:
    return {name: np.zeros_like(arr) for name, arr in model.param_items()}


def _direction_backward(params, steps, xs, d_hs, h, grads, prefix):
    """BPTT through one direction; xs and d_hs are in this direction's scan order."""
    b_sz, t_len, _ = xs.shape
    dw = grads[prefix + ".w"]
    du = grads[prefix + ".u"]
    db = grads[prefix + ".b"]
    dh_next = np.zeros((b_sz, h))
    dc_next = np.zeros((b_sz, h))
    for t in range(t_len - 1, -1, -1):
        i, f, g, o, tc, h_prev, c_prev = steps[t]
        dh = d_hs[:, t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        dz = np.concatenate(
            [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)],
            axis=1,
        )
        dw += dz.T @ xs[:, t]
        du += dz.T @ h_prev
        db += dz.sum(axis=0)
        dh_next = dz @ params.u_gates


def backward(model: TaggerModel, cache, labels) -> dict[str, np.ndarray]:
    """Gradients of the pooled mean-token cross-entropy for the cached batch."""
    if cache.get("model") is not model or cache.get("version") != model.version:
        raise ValidationError("stale cache: parameters changed since the forward pass")
    if cache.get("empty"):
        return _zero_grads(model)
    probs = cache["probs"]
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != probs.shape:
        raise ValidationError(f"labels shape {y.shape} does not match probs {probs.shape}")
    n_tokens = probs.size
    h = model.h

    pc = np.clip(probs, PROB_CLIP, 1.0 - PROB_CLIP)
    inside = (probs > PROB_CLIP) & (probs < 1.0 - PROB_CLIP)
    dpc = (-(y / pc) + (1.0 - y) / (1.0 - pc)) / n_tokens
    dlogit = np.where(inside, dpc * probs * (1.0 - probs), 0.0)  # (B, T)

    grads = _zero_grads(model)
    concat = cache["concat"]
    grads["head.w"] += np.einsum("bt,bth->h", dlogit, concat)
    grads["head.b"] += dlogit.sum()
    dconcat = dlogit[:, :, None] * model.head_w  # (B, T, 2h)

    xs = cache["xs"]
    _direction_backward(
        model.forward_params, cache["steps_f"], xs, dconcat[:, :, :h], h, grads, "fwd"
    )
    _direction_backward(
        model.backward_params,
        cache["steps_b"],
        xs[:, ::-1],
        dconcat[:, ::-1, h:],
        h,
        grads,
        "bwd",
    )
    return grads


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients jointly so the global L2 norm is at most max_norm."""
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


def rmsprop_step(params, grads, state, config: TrainingConfig):
    """In-place RMSprop update: s <- rho s + (1-rho) g^2; p -= lr g / (sqrt(s) + eps)."""
    params = dict(params)
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in {name}")
        if name not in state:
            state[name] = np.zeros_like(p)
        s = state[name]
        s *= config.rho
        s += (1.0 - config.rho) * g * g
        p -= config.learning_rate * g / (np.sqrt(s) + config.epsilon)
    return params, state


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    wall_seconds: float
    dev_macro_f1: float | None = None


def _make_batches(lengths, batch_size, rng):
    """Shuffled batches of same-length sequences (exact-length bucketing)."""
    order = rng.permutation(len(lengths))
    buckets: dict[int, list[int]] = {}
    for idx in order:
        buckets.setdefault(lengths[idx], []).append(int(idx))
    batches = []
    for length in sorted(buckets):
        group = buckets[length]
        for lo in range(0, len(group), batch_size):
            batches.append(group[lo : lo + batch_size])
    rng.shuffle(batches)
    return batches


def train(
    model: TaggerModel,
    sequences: list[TokenSequence],
    embedder,
    config: TrainingConfig,
    dev_eval=None,
) -> tuple[TaggerModel, list[EpochRecord]]:
    """Train in place for exactly config.epochs and report per-epoch mean loss.

    ``embedder(sequence) -> (T, d) array`` supplies token vectors. Sequences
    are embedded once up front; batches group identical lengths so the loss
    has no padding terms. ``dev_eval(model) -> float``, when given, is called
    after each epoch and recorded alongside the training loss.
    """
    data = []
    for seq in sequences:
        if not seq.tokens:
            continue
        xs = np.asarray(embedder(seq), dtype=np.float32)
        data.append((xs, np.asarray(seq.labels, dtype=np.float64)))
    if not data:
        raise ValidationError("no non-empty training sequences")

    rng = np.random.default_rng(derive_seed(config.seed, "shuffle"))
    state: dict[str, np.ndarray] = {}
    params = dict(model.param_items())
    lengths = [xs.shape[0] for xs, _ in data]
    history: list[EpochRecord] = []
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        total_loss, total_tokens = 0.0, 0
        for batch_no, batch in enumerate(_make_batches(lengths, config.batch_size, rng)):
            xs = np.stack([data[i][0] for i in batch]).astype(np.float64)
            ys = np.stack([data[i][1] for i in batch])
            probs, cache = forward_batch(model, xs)
            batch_loss = loss(probs, ys)
            if not np.isfinite(batch_loss):
                raise NumericalError(f"training diverged at epoch {epoch}, batch {batch_no}")
            grads = backward(model, cache, ys)
            if config.gradient_clip is not None:
                clip_gradients(grads, config.gradient_clip)
            rmsprop_step(params, grads, state, config)
            model.version += 1
            total_loss += batch_loss * ys.size
            total_tokens += ys.size
        record = EpochRecord(
            epoch=epoch,
            mean_loss=total_loss / total_tokens,
            wall_seconds=time.perf_counter() - started,
        )
        if dev_eval is not None:
            record.dev_macro_f1 = float(dev_eval(model))
        history.append(record)
        log.info("epoch %d: mean loss %.6f", epoch, record.mean_loss)
    return model, history


def predict_instance(model: TaggerModel, inputs, token_indices) -> tuple[int, float]:
    """Mean span probability, thresholded at model.threshold (>= means complex)."""
    token_indices = tuple(token_indices)
    if not token_indices:
        raise ValidationError("instance covers no tokens")
    probs, _ = forward(model, inputs)
    p = float(np.mean(probs[list(token_indices)]))
    return (1 if p >= model.threshold else 0), p


def save_checkpoint(model: TaggerModel, path):
    """Single-file checkpoint: JSON header (shapes, dims, threshold) followed by
    raw little-endian float64 tensor bytes. Byte-identical for identical models."""
    tensors = model.param_items()
    header = {
        "format": "xlcwi-tagger",
        "version": CHECKPOINT_VERSION,
        "kind": "bilstm",
        "d": model.d,
        "h": model.h,
        "threshold": model.threshold,
        "dtype": "<f8",
        "tensors": [{"name": name, "shape": list(arr.shape)} for name, arr in tensors],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def save_echo_gold_checkpoint(path):
    """Stub checkpoint for the gold-echoing test model."""
    header = {"format": "xlcwi-tagger", "version": CHECKPOINT_VERSION, "kind": "echo-gold"}
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")


def load_checkpoint(path):
    """Returns a TaggerModel, or the string "echo-gold" for the stub kind."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != "xlcwi-tagger":
            raise ValidationError(f"{path}: not a tagger checkpoint")
        if header["kind"] == "echo-gold":
            return "echo-gold"
        tensors = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            tensors[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return TaggerModel(
        forward_params=LstmDirectionParams(tensors["fwd.w"], tensors["fwd.u"], tensors["fwd.b"]),
        backward_params=LstmDirectionParams(tensors["bwd.w"], tensors["bwd.u"], tensors["bwd.b"]),
        head_w=tensors["head.w"],
        head_b=tensors["head.b"].reshape(()),
        d=header["d"],
        h=header["h"],
        threshold=header["threshold"],
    )


class ClassifierInterface(abc.ABC):
    """Anything that can score an annotated span; the seam where external
    token classifiers (e.g. pretrained transformers) could plug in."""

    threshold: float = 0.5
    model_id: str = "classifier"

    @abc.abstractmethod
    def predict_instance(self, sequence: TokenSequence, instance_index: int) -> float:
        """Probability in [0, 1] that the instance's span is complex."""


class BilstmClassifier(ClassifierInterface):
    """Embeds a sequence from shared-space tables and scores spans by mean
    per-token probability."""

    def __init__(self, model: TaggerModel, tables, model_id="bilstm"):
        self.model = model
        self.tables = tables  # language -> EmbeddingTable in the shared space
        self.threshold = model.threshold
        self.model_id = model_id
        self._cache: dict[tuple, np.ndarray] = {}

    def embed(self, sequence: TokenSequence) -> np.ndarray:
        table = self.tables.get(sequence.language)
        if table is None:
            raise ValidationError(f"no embedding table for language {sequence.language}")
        rows = [table.lookup(tok.surface)[0] for tok in sequence.tokens]
        if not rows:
            return np.zeros((0, table.dim), dtype=np.float64)
        return np.asarray(rows, dtype=np.float64)

    def sequence_probabilities(self, sequence: TokenSequence) -> np.ndarray:
        # keyed by content, not object identity: identical sentences share one
        # forward pass, and the key stays valid across corpora
        key = (sequence.language, sequence.sentence, self.model.version)
        if key not in self._cache:
            probs, _ = forward(self.model, self.embed(sequence))
            self._cache[key] = probs
        return self._cache[key]

    def predict_instance(self, sequence: TokenSequence, instance_index: int) -> float:
        token_indices = sequence.instance_refs.get(instance_index)
        if not token_indices:
            raise ValidationError(f"instance {instance_index} not present in sequence")
        probs = self.sequence_probabilities(sequence)
        return float(np.mean(probs[list(token_indices)]))


class EchoGoldClassifier(ClassifierInterface):
    """Test stub that returns each instance's gold label as its probability."""

    model_id = "echo-gold"

    def __init__(self, instances):
        self.instances = tuple(instances)

    def predict_instance(self, sequence: TokenSequence, instance_index: int) -> float:
        return float(self.instances[instance_index].binary_label)

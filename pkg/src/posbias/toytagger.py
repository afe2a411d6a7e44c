"""A desk-scale tagger with learned absolute position embeddings.

The model embeds tokens as token_table[t] + segment + position_table[p],
optionally applies one head of scaled dot-product self-attention with a
residual connection (no layer norm, no feed-forward block), and classifies
each token with an affine layer. Gradients are derived by hand and training
is plain SGD, which keeps every step inspectable: position rows never visited
during training stay exactly at their random initialization, and that is the
artifact this package studies.

Also houses a synthetic corpus generator whose entity start positions follow
a truncated geometric law, so the position distribution seen in training can
be skewed by a single knob.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Dataset, Sentence, Split, Task, Token
from .transforms import EncodedBatch, EncodedSequence, apply_transform, encode_for_training

logger = logging.getLogger(__name__)

UNK_TOKEN = "[UNK]"

DEFAULT_SEEDS = (23456, 34567, 45678, 56789, 67890)

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 32
    max_positions: int = 512
    vocab_size: int | None = None  # derived from the corpus when None
    num_labels: int | None = None
    use_attention: bool = True
    learning_rate: float = 1e-3
    epochs: int = 5
    seed: int = DEFAULT_SEEDS[0]
    batch_size: int = 16
    eval_batch_size: int = 64


@dataclass
class Model:
    config: ModelConfig
    vocab: dict[str, int]
    labels: tuple[str, ...]
    token_table: np.ndarray      # (V, d)
    position_table: np.ndarray   # (max_positions, d)
    segment_vector: np.ndarray   # (d,), kept at zeros and never updated
    w_q: np.ndarray              # (d, d)
    w_k: np.ndarray
    w_v: np.ndarray
    classifier_w: np.ndarray     # (d, L)
    classifier_b: np.ndarray     # (L,)

    # segment_vector is deliberately excluded: it is a frozen zero vector
    TRAINABLE = (
        "token_table", "position_table", "w_q", "w_k", "w_v",
        "classifier_w", "classifier_b",
    )
    PARAMS = TRAINABLE + ("segment_vector",)

    def parameter_items(self) -> list[tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in self.PARAMS]

    @property
    def label_to_id(self) -> dict[str, int]:
        return {lab: i for i, lab in enumerate(self.labels)}


def init_model(cfg: ModelConfig, vocab: dict[str, int], labels: Sequence[str]) -> Model:
    """Uniform(-0.1, 0.1) everywhere except the zero segment vector."""
    if cfg.vocab_size is not None and cfg.vocab_size != len(vocab):
        raise ValueError(f"config vocab_size {cfg.vocab_size} != vocabulary size {len(vocab)}")
    if cfg.num_labels is not None and cfg.num_labels != len(labels):
        raise ValueError(f"config num_labels {cfg.num_labels} != label count {len(labels)}")
    cfg = replace(cfg, vocab_size=len(vocab), num_labels=len(labels))
    rng = np.random.default_rng(cfg.seed)
    d, v, l = cfg.d_model, len(vocab), len(labels)

    def u(*shape):
        return rng.uniform(-0.1, 0.1, size=shape)

    return Model(
        config=cfg,
        vocab=dict(vocab),
        labels=tuple(labels),
        token_table=u(v, d),
        position_table=u(cfg.max_positions, d),
        segment_vector=np.zeros(d),
        w_q=u(d, d),
        w_k=u(d, d),
        w_v=u(d, d),
        classifier_w=u(d, l),
        classifier_b=u(l),
    )


def build_vocab(ds: Dataset) -> dict[str, int]:
    from .corpus import CLS_TOKEN, SEP_TOKEN

    vocab = {UNK_TOKEN: 0, CLS_TOKEN: 1, SEP_TOKEN: 2}
    for surface in sorted({tok.surface for s in ds.sentences for tok in s.tokens}):
        if surface not in vocab:
            vocab[surface] = len(vocab)
    return vocab


# ---------------------------------------------------------------------------
# batched forward / backward over padded arrays

def _pack(model: Model, seqs: Sequence, require_labels: bool) -> dict[str, np.ndarray]:
    """Pad a list of sequences into id/position/label arrays plus a validity mask."""
    cfg = model.config
    label_to_id = model.label_to_id
    n_max = max(len(s.tokens) for s in seqs)
    b = len(seqs)
    tid = np.zeros((b, n_max), dtype=np.intp)
    pid = np.zeros((b, n_max), dtype=np.intp)
    y = np.full((b, n_max), -1, dtype=np.intp)
    valid = np.zeros((b, n_max), dtype=bool)
    for i, seq in enumerate(seqs):
        n = len(seq.tokens)
        positions = np.asarray(seq.position_ids, dtype=np.intp)
        if positions.max() >= cfg.max_positions:
            raise ValueError(
                f"position id {int(positions.max())} outside the learned range "
                f"0..{cfg.max_positions - 1}"
            )
        tid[i, :n] = [model.vocab.get(tok.surface, 0) for tok in seq.tokens]
        pid[i, :n] = positions
        valid[i, :n] = True
        if require_labels:
            for j, tok in enumerate(seq.tokens):
                if tok.is_special:
                    continue
                if tok.label not in label_to_id:
                    raise ValueError(f"label {tok.label!r} outside the model's label space")
                y[i, j] = label_to_id[tok.label]
    return {"tid": tid, "pid": pid, "y": y, "valid": valid}


def _forward(model: Model, arrays: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    tid, pid, valid = arrays["tid"], arrays["pid"], arrays["valid"]
    x = model.token_table[tid] + model.position_table[pid] + model.segment_vector
    x = x * valid[..., None]
    cache: dict[str, np.ndarray] = {"x": x}
    if model.config.use_attention:
        q = x @ model.w_q
        k = x @ model.w_k
        v = x @ model.w_v
        inv = 1.0 / math.sqrt(model.config.d_model)
        scores = (q @ k.transpose(0, 2, 1)) * inv
        scores = np.where(valid[:, None, :], scores, -np.inf)
        scores -= scores.max(axis=-1, keepdims=True)
        weights = np.exp(scores)
        weights /= weights.sum(axis=-1, keepdims=True)
        context = weights @ v
        h = (x + context) * valid[..., None]
        cache.update(q=q, k=k, v=v, weights=weights, inv=np.float64(inv))
    else:
        h = x
    cache["h"] = h
    cache["z"] = h @ model.classifier_w + model.classifier_b
    return cache


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _loss_value(model: Model, arrays: Mapping[str, np.ndarray]):
    """Mean masked cross-entropy as a scalar in the model's own dtype."""
    y = arrays["y"]
    counted = y >= 0
    n_counted = int(counted.sum())
    if n_counted == 0:
        raise ValueError("batch contains no tokens that contribute to the loss")
    logp = _log_softmax(_forward(model, arrays)["z"])
    rows, cols = np.nonzero(counted)
    return -logp[rows, cols, y[rows, cols]].sum() / n_counted


def forward(model: Model, seq) -> np.ndarray:
    """Per-token scores (n, num_labels) for one sequence."""
    arrays = _pack(model, [seq], require_labels=False)
    return _forward(model, arrays)["z"][0]


def loss_and_grads(model: Model, batch: EncodedBatch) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over non-ignored tokens plus gradients for every tensor."""
    arrays = _pack(model, batch.sequences, require_labels=True)
    y, valid = arrays["y"], arrays["valid"]
    counted = y >= 0
    n_counted = int(counted.sum())
    if n_counted == 0:
        raise ValueError("batch contains no tokens that contribute to the loss")

    cache = _forward(model, arrays)
    z = cache["z"]
    logp = _log_softmax(z)
    rows, cols = np.nonzero(counted)
    loss = float(-logp[rows, cols, y[rows, cols]].sum() / n_counted)

    dz = np.exp(logp) * counted[..., None]
    dz[rows, cols, y[rows, cols]] -= 1.0
    dz /= n_counted

    h = cache["h"]
    grads: dict[str, np.ndarray] = {
        "classifier_w": np.einsum("bnd,bnl->dl", h, dz),
        "classifier_b": dz.sum(axis=(0, 1)),
    }
    dh = dz @ model.classifier_w.T
    if model.config.use_attention:
        dh *= valid[..., None]
        x, q, k, v = cache["x"], cache["q"], cache["k"], cache["v"]
        weights, inv = cache["weights"], float(cache["inv"])
        dx = dh.copy()
        dcontext = dh
        dweights = dcontext @ v.transpose(0, 2, 1)
        dv = weights.transpose(0, 2, 1) @ dcontext
        # softmax backward per row; masked columns carry exactly zero weight
        dscores = weights * (dweights - (dweights * weights).sum(axis=-1, keepdims=True))
        dscores *= inv
        dq = dscores @ k
        dk = dscores.transpose(0, 2, 1) @ q
        grads["w_q"] = np.einsum("bnd,bne->de", x, dq)
        grads["w_k"] = np.einsum("bnd,bne->de", x, dk)
        grads["w_v"] = np.einsum("bnd,bne->de", x, dv)
        dx += dq @ model.w_q.T + dk @ model.w_k.T + dv @ model.w_v.T
    else:
        dx = dh
        d = model.config.d_model
        grads["w_q"] = np.zeros((d, d))
        grads["w_k"] = np.zeros((d, d))
        grads["w_v"] = np.zeros((d, d))
    dx *= valid[..., None]

    d = model.config.d_model
    dtok = np.zeros_like(model.token_table)
    np.add.at(dtok, arrays["tid"].ravel(), dx.reshape(-1, d))
    dpos = np.zeros_like(model.position_table)
    np.add.at(dpos, arrays["pid"].ravel(), dx.reshape(-1, d))
    grads["token_table"] = dtok
    grads["position_table"] = dpos
    grads["segment_vector"] = dx.sum(axis=(0, 1))
    return loss, grads


def finite_difference_check(model: Model, seq, epsilon: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    The relative error for one coordinate is |g_a - g_n| divided by
    max(1e-8, |g_a| + |g_n|). Numeric losses are evaluated in extended
    precision so that coordinates with near-zero gradients measure the
    analytic path rather than float64 cancellation noise.
    """
    batch = EncodedBatch(sequences=(seq,), max_len=model.config.max_positions, seed=0)
    _, grads = loss_and_grads(model, batch)

    work = Model(
        config=model.config,
        vocab=model.vocab,
        labels=model.labels,
        **{name: p.astype(np.longdouble) for name, p in model.parameter_items()},
    )
    arrays = _pack(work, [seq], require_labels=True)
    eps = np.longdouble(epsilon)
    worst = 0.0
    for name, param in work.parameter_items():
        flat = param.reshape(-1)
        g_flat = grads[name].reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + eps
            up = _loss_value(work, arrays)
            flat[idx] = original - eps
            down = _loss_value(work, arrays)
            flat[idx] = original
            numeric = float((up - down) / (2 * eps))
            analytic = float(g_flat[idx])
            err = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
            worst = max(worst, err)
    return worst


def predict(model: Model, seq) -> list[str]:
    """Argmax labels; special tokens come back as IGN."""
    return predict_batch(model, [seq])[0]


def predict_batch(model: Model, seqs: Sequence) -> list[list[str]]:
    from .corpus import IGNORE_LABEL

    out: list[list[str]] = []
    size = max(1, model.config.eval_batch_size)
    for start in range(0, len(seqs), size):
        chunk = seqs[start : start + size]
        arrays = _pack(model, chunk, require_labels=False)
        z = _forward(model, arrays)["z"]
        ids = z.argmax(axis=-1)
        for i, seq in enumerate(chunk):
            out.append(
                [
                    IGNORE_LABEL if tok.is_special else model.labels[ids[i, j]]
                    for j, tok in enumerate(seq.tokens)
                ]
            )
    return out


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainAudit:
    """Filled in by train() when passed: per-batch losses and visited positions."""

    losses: list[float] = field(default_factory=list)
    epoch_means: list[float] = field(default_factory=list)
    positions_seen: np.ndarray | None = None

    def coverage(self, lo: int, hi: int) -> float:
        """Fraction of [lo, hi] visited by non-[CLS] tokens during training."""
        if self.positions_seen is None or hi < lo:
            return 0.0
        return float(self.positions_seen[lo : hi + 1].mean())


def _batch_seed(run_seed: int, epoch: int, batch_index: int) -> int:
    return int(np.random.SeedSequence((run_seed, epoch, batch_index)).generate_state(1)[0])


def train(
    cfg: ModelConfig,
    ds: Dataset,
    transform: str = "none",
    rpp_lower_bound: int | None = None,
    audit: TrainAudit | None = None,
) -> Model:
    """SGD training with per-epoch shuffling and an optional batch transform.

    The transform ('none', 'rpp', or 'cp') is applied to every encoded batch
    with a seed derived from (run seed, epoch, batch index), so runs are
    reproducible bit for bit.
    """
    ds.validate()
    vocab = build_vocab(ds)
    labels = tuple(sorted(ds.label_inventory))
    model = init_model(cfg, vocab, labels)
    cfg = model.config
    encoded = [encode_for_training(s, cfg.max_positions) for s in ds.sentences]
    if audit is not None:
        audit.positions_seen = np.zeros(cfg.max_positions, dtype=bool)

    shuffle_rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(encoded))
        epoch_losses: list[float] = []
        for bi, start in enumerate(range(0, len(encoded), cfg.batch_size)):
            seqs = tuple(encoded[i] for i in order[start : start + cfg.batch_size])
            seed = _batch_seed(cfg.seed, epoch, bi)
            batch = EncodedBatch(sequences=seqs, max_len=cfg.max_positions, seed=seed)
            batch, _ = apply_transform(batch, transform, seed, rpp_lower_bound=rpp_lower_bound)
            loss, grads = loss_and_grads(model, batch)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {bi} (transform={transform})"
                )
            for name in Model.TRAINABLE:
                getattr(model, name)[...] -= cfg.learning_rate * grads[name]
            epoch_losses.append(loss)
            if audit is not None:
                audit.losses.append(loss)
                for seq in batch.sequences:
                    pos = np.asarray(seq.position_ids[1:], dtype=np.intp)
                    audit.positions_seen[pos] = True
        if audit is not None:
            audit.epoch_means.append(float(np.mean(epoch_losses)))
        logger.debug("epoch %d: mean loss %.6f", epoch, float(np.mean(epoch_losses)))
    return model


# ---------------------------------------------------------------------------
# checkpoints

def save_model(model: Model, path) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": {
            k: getattr(model.config, k)
            for k in (
                "d_model", "max_positions", "vocab_size", "num_labels", "use_attention",
                "learning_rate", "epochs", "seed", "batch_size", "eval_batch_size",
            )
        },
        "vocab": model.vocab,
        "labels": list(model.labels),
    }
    arrays = {name: getattr(model, name) for name in Model.PARAMS}
    np.savez_compressed(path, meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8), **arrays)


def load_model(path) -> Model:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
        cfg = ModelConfig(**meta["config"])
        return Model(
            config=cfg,
            vocab={k: int(v) for k, v in meta["vocab"].items()},
            labels=tuple(meta["labels"]),
            **{name: data[name].copy() for name in Model.PARAMS},
        )


# ---------------------------------------------------------------------------
# synthetic corpus

@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the skewed synthetic NER corpus.

    Every sentence holds exactly one entity span whose start position follows
    a truncated geometric law with parameter position_skew (0 means uniform
    starts). Each class vocabulary is split into a begin pool and an inside
    pool: span-initial tokens draw from the former, continuations from the
    latter, so the tag is decodable from the surface form. Filler vocabulary
    is small and therefore well covered by training; making the entity pools
    large instead yields rare surface forms whose recognition must lean on
    corpus-level regularities rather than memorized token identities.
    """

    n_train: int = 10000
    n_test: int = 2000
    filler_vocab_size: int = 400
    entity_vocab_sizes: Mapping[str, int] = field(
        default_factory=lambda: {"PER": 40, "LOC": 40}
    )
    position_skew: float = 0.3
    length_range: tuple[int, int] = (8, 25)
    entity_len_range: tuple[int, int] = (1, 3)
    seed: int = 1234


def _start_pmf(skew: float, n_starts: int) -> np.ndarray:
    if skew <= 0.0:
        return np.full(n_starts, 1.0 / n_starts)
    s = np.arange(n_starts, dtype=np.float64)
    pmf = (1.0 - skew) ** s * skew
    return pmf / pmf.sum()


def _sample_split(
    sc: SynthConfig,
    rng: np.random.Generator,
    n: int,
    split: Split,
    fillers: list[str],
    pools: dict[str, tuple[list[str], list[str]]],
) -> Dataset:
    classes = sorted(pools)
    lo, hi = sc.length_range
    sentences = []
    for i in range(n):
        length = int(rng.integers(lo, hi, endpoint=True))
        e_len = int(rng.integers(sc.entity_len_range[0], sc.entity_len_range[1], endpoint=True))
        while e_len > length:
            e_len = int(rng.integers(sc.entity_len_range[0], sc.entity_len_range[1], endpoint=True))
        n_starts = length - e_len + 1
        start = 1 + int(rng.choice(n_starts, p=_start_pmf(sc.position_skew, n_starts)))
        cls = classes[int(rng.integers(len(classes)))]
        begin_pool, inside_pool = pools[cls]
        tokens = []
        for pos in range(1, length + 1):
            if pos == start:
                surface = begin_pool[int(rng.integers(len(begin_pool)))]
                label = "B-" + cls
            elif start < pos < start + e_len:
                surface = inside_pool[int(rng.integers(len(inside_pool)))]
                label = "I-" + cls
            else:
                surface = fillers[int(rng.integers(len(fillers)))]
                label = "O"
            tokens.append(Token(surface=surface, label=label))
        sentences.append(Sentence(id=f"synth-{split.value}-{i}", tokens=tuple(tokens)))
    return Dataset(name="synthetic", split=split, sentences=tuple(sentences), task=Task.NER_BIO)


def generate_synthetic_corpus(sc: SynthConfig) -> tuple[Dataset, Dataset]:
    """Deterministic (train, test) pair for a given SynthConfig."""
    if not 0.0 <= sc.position_skew < 1.0:
        raise ValueError(f"position_skew must be in [0, 1), got {sc.position_skew}")
    if sc.length_range[0] < sc.entity_len_range[0]:
        raise ValueError("sentences must be long enough to hold an entity")
    rng = np.random.default_rng(sc.seed)
    fillers = [f"w{i:04d}" for i in range(sc.filler_vocab_size)]
    pools = {}
    for cls, size in sc.entity_vocab_sizes.items():
        n_begin = (size + 1) // 2
        surfaces = [f"{cls.lower()}{i:05d}" for i in range(size)]
        pools[cls] = (surfaces[:n_begin], surfaces[n_begin:])
        if sc.entity_len_range[1] > 1 and not pools[cls][1]:
            raise ValueError(
                f"class {cls} vocab too small for multi-token spans (size {size})"
            )
    train_ds = _sample_split(sc, rng, sc.n_train, Split.TRAIN, fillers, pools)
    test_ds = _sample_split(sc, rng, sc.n_test, Split.TEST, fillers, pools)
    return train_ds, test_ds

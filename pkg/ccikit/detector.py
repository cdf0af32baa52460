"""CCI detector: comment encoder, edit-script encoder and similarity classifier.

The comment goes through embedding -> Bi-GRU -> mean pool to give ``c``.
The rendered edit script goes through embedding -> Bi-GRU -> multi-head
self-attention -> mean pool to give ``m``. A two-layer MLP on ``[c; m]``
gives the probability that the old comment is inconsistent with the new code.

Training minimizes mean BCE plus ``lambda * (1 - mean cosine(c, m))`` with
Adam. All gradients are computed by hand in :mod:`ccikit.nn_ops`.
"""

import logging
import statistics
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Protocol, Sequence, Tuple

import numpy as np
import orjson
from pydantic import BaseModel, Field

from ccikit.config import DetectorConfig
from ccikit.diffscript import MARKERS, build_edit_script, render_edit_script
from ccikit.errors import ConfigError, DataError, ShapeError
from ccikit.evalkit import ClassificationMetrics, classification_metrics
from ccikit.file_writer import JsonlWriter, write_json
from ccikit.lexing import TokenSeq, tokenize_code, tokenize_comment
from ccikit.models import CciCase, Corpus, Prediction
from ccikit.nn_ops import (
    AttentionCache,
    BiGruCache,
    ClassifierCache,
    Grads,
    attention_backward,
    bigru_backward,
    bigru_encode,
    classifier_backward,
    classifier_forward,
    cosine,
    cosine_grad,
    joint_loss,
    multi_head_attention,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
UNK = "<unk>"
RESERVED_TOKENS: Tuple[str, ...] = (UNK,) + tuple(sorted(MARKERS))
THRESHOLD = 0.5


class CommentEncoder(Protocol):
    """Maps a comment to a vector of length ``embed_dim``."""

    def __call__(self, comment: TokenSeq) -> np.ndarray: ...


class PrecomputedCommentEncoder:
    """Comment vectors computed elsewhere, keyed by lowercased comment words.

    Reads JSON Lines records ``{"text": ..., "vector": [...]}``.
    """

    def __init__(self, vectors: Dict[str, Sequence[float]]) -> None:
        self._vectors = {self.key_for(text): np.asarray(vec, dtype=np.float64) for text, vec in vectors.items()}

    @staticmethod
    def key_for(text) -> str:
        words = text.tokens if isinstance(text, TokenSeq) else tokenize_comment(text).tokens
        return " ".join(w.lower() for w in words)

    @classmethod
    def from_jsonl(cls, path: str) -> "PrecomputedCommentEncoder":
        vectors: Dict[str, Sequence[float]] = {}
        with open(path, "rb") as fh:
            for raw in fh:
                if raw.strip():
                    rec = orjson.loads(raw)
                    vectors[rec["text"]] = rec["vector"]
        return cls(vectors)

    def __call__(self, comment: TokenSeq) -> np.ndarray:
        key = self.key_for(comment)
        if key not in self._vectors:
            raise DataError(f"no precomputed vector for comment {key[:60]!r}")
        return self._vectors[key]


class Vocabulary:
    def __init__(self, tokens: Sequence[str]) -> None:
        if tuple(tokens[: len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise DataError("vocabulary must start with the reserved tokens")
        self.tokens: List[str] = list(tokens)
        self.index: Dict[str, int] = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise DataError("vocabulary has duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def lookup(self, tokens: Iterable[str]) -> np.ndarray:
        unk = self.index[UNK]
        return np.array([self.index.get(tok, unk) for tok in tokens], dtype=np.int64)

    @classmethod
    def build(cls, sequences: Iterable[Sequence[str]], cap: int) -> "Vocabulary":
        """Most frequent tokens first, ties alphabetical, reserved tokens always present."""
        counts: Counter = Counter()
        for seq in sequences:
            counts.update(tok for tok in seq if tok not in RESERVED_TOKENS)
        room = max(0, cap - len(RESERVED_TOKENS))
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:room]
        return cls(list(RESERVED_TOKENS) + [tok for tok, _ in ranked])


def comment_tokens(text: str) -> TokenSeq:
    return TokenSeq(tuple(w.lower() for w in tokenize_comment(text).tokens), "comment")


def diff_tokens(old_code: str, new_code: str) -> TokenSeq:
    return render_edit_script(build_edit_script(tokenize_code(old_code), tokenize_code(new_code)))


def _case_sequences(case: CciCase) -> Tuple[TokenSeq, TokenSeq]:
    return comment_tokens(case.old_comment), diff_tokens(case.old_code, case.new_code)


def build_vocabulary(corpus: Corpus, config: DetectorConfig) -> Vocabulary:
    seqs: List[Sequence[str]] = []
    for case in corpus.cases:
        comment, diff = _case_sequences(case)
        seqs.append(comment.tokens)
        seqs.append(diff.tokens)
    vocab = Vocabulary.build(seqs, config.vocab_size)
    logger.info("vocab-built cases=%d size=%d", len(corpus), len(vocab))
    return vocab


class DetectorModel:
    """Parameters plus the vocabulary and config they were built for."""

    def __init__(
        self,
        config: DetectorConfig,
        vocab: Vocabulary,
        params: Dict[str, np.ndarray],
        comment_encoder: Optional[CommentEncoder] = None,
    ) -> None:
        self.config = config
        self.vocab = vocab
        self.params = params
        self.comment_encoder = comment_encoder
        self.validate()

    def validate(self) -> None:
        expected = parameter_shapes(self.config, len(self.vocab))
        for name, shape in expected.items():
            if name not in self.params:
                raise ShapeError(f"missing parameter {name}")
            if self.params[name].shape != shape:
                raise ShapeError(f"parameter {name} has shape {self.params[name].shape}, expected {shape}")
            if not np.all(np.isfinite(self.params[name])):
                raise DataError(f"parameter {name} is not finite")

    def copy(self) -> "DetectorModel":
        return DetectorModel(
            self.config.model_copy(),
            self.vocab,
            {k: v.copy() for k, v in self.params.items()},
            self.comment_encoder,
        )

    @property
    def parameter_count(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "config": self.config.model_dump(mode="json", by_alias=True),
            "vocabulary": self.vocab.tokens,
            "parameters": {
                name: {"shape": list(arr.shape), "data": arr.ravel()} for name, arr in sorted(self.params.items())
            },
        }

    def save(self, path: str) -> None:
        write_json(path, self.to_json_dict())
        logger.info("detector-saved path=%s params=%d", path, self.parameter_count)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "DetectorModel":
        version = doc.get("schema_version")
        if version != SCHEMA_VERSION:
            raise DataError(f"unsupported detector model schema_version={version}")
        config = DetectorConfig.model_validate(doc["config"])
        vocab = Vocabulary(doc["vocabulary"])
        params = {
            name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
            for name, entry in doc["parameters"].items()
        }
        return cls(config, vocab, params)

    @classmethod
    def load(cls, path: str) -> "DetectorModel":
        try:
            with open(path, "rb") as fh:
                doc = orjson.loads(fh.read())
        except (OSError, orjson.JSONDecodeError) as exc:
            raise DataError(f"cannot read detector model {path}: {exc}") from exc
        return cls.from_json_dict(doc)


def parameter_shapes(config: DetectorConfig, vocab_len: int) -> Dict[str, Tuple[int, ...]]:
    d, hidden, heads = config.embed_dim, config.gru_hidden, config.attention_heads
    dk = d // heads
    shapes: Dict[str, Tuple[int, ...]] = {"embedding": (vocab_len, d)}
    for enc in ("comment.", "diff."):
        for direction in ("fwd.", "bwd."):
            p = enc + direction
            for gate in ("z", "r", "h"):
                shapes[p + "W" + gate] = (hidden, d)
                shapes[p + "U" + gate] = (hidden, hidden)
                shapes[p + "b" + gate] = (hidden,)
        shapes[enc + "Wf"] = (d, hidden)
        shapes[enc + "Wb"] = (d, hidden)
        shapes[enc + "b"] = (d,)
    shapes.update({"attn.Wq": (heads, d, dk), "attn.Wk": (heads, d, dk), "attn.Wv": (heads, d, dk), "attn.Wo": (d, d)})
    shapes.update({"clf.W1": (d, 2 * d), "clf.b1": (d,), "clf.w2": (d,), "clf.b2": (1,)})
    return shapes


def init_model(config: DetectorConfig, vocab: Vocabulary, comment_encoder: Optional[CommentEncoder] = None) -> DetectorModel:
    """Seeded initialization: uniform fan-in scaling for recurrent weights, zero biases."""
    rng = np.random.default_rng(config.seed)
    params: Dict[str, np.ndarray] = {}
    for name, shape in parameter_shapes(config, len(vocab)).items():
        leaf = name.rsplit(".", 1)[-1]
        if name == "embedding":
            params[name] = rng.normal(0.0, 0.1, shape)
        elif leaf.startswith("b"):
            params[name] = np.zeros(shape)
        elif leaf.startswith(("W", "U")) and len(shape) == 2 and not name.startswith(("attn.", "clf.")):
            bound = 1.0 / np.sqrt(shape[1])
            params[name] = rng.uniform(-bound, bound, shape)
        elif name == "clf.W1":
            params[name] = rng.normal(0.0, np.sqrt(2.0 / shape[1]), shape)
        else:
            params[name] = rng.normal(0.0, 1.0 / np.sqrt(config.embed_dim), shape)
    return DetectorModel(config, vocab, params, comment_encoder)


# -- forward / backward ----------------------------------------------------------


@dataclass
class CaseFeatures:
    case_id: str
    comment_type: str
    comment: TokenSeq
    comment_ids: np.ndarray
    diff_ids: np.ndarray
    label: Optional[int]


def featurize(model: DetectorModel, case: CciCase) -> CaseFeatures:
    comment, diff = _case_sequences(case)
    if len(comment) == 0:
        raise DataError(f"case {case.id} has an empty old_comment after tokenization")
    if len(diff) == 0:
        raise DataError(f"case {case.id} has no code tokens")
    limit = model.config.max_seq_len
    return CaseFeatures(
        case_id=case.id,
        comment_type=case.comment_type,
        comment=comment,
        comment_ids=model.vocab.lookup(comment.tokens[:limit]),
        diff_ids=model.vocab.lookup(diff.tokens[:limit]),
        label=case.label,
    )


@dataclass
class _Forward:
    p: float
    c: np.ndarray
    m: np.ndarray
    comment_cache: Optional[BiGruCache]
    diff_cache: BiGruCache
    attn_cache: AttentionCache
    clf_cache: ClassifierCache


def _encode_comment_ids(model: DetectorModel, ids: np.ndarray) -> Tuple[np.ndarray, BiGruCache]:
    if ids.size == 0:
        raise DataError("cannot encode an empty comment")
    states, cache = bigru_encode(model.params["embedding"][ids], model.params, "comment.")
    return states.mean(axis=0), cache


def _encode_diff_ids(model: DetectorModel, ids: np.ndarray) -> Tuple[np.ndarray, BiGruCache, AttentionCache]:
    if ids.size == 0:
        raise DataError("cannot encode an empty edit script")
    states, gru_cache = bigru_encode(model.params["embedding"][ids], model.params, "diff.")
    attended, attn_cache = multi_head_attention(states, model.params, "attn.")
    return attended.mean(axis=0), gru_cache, attn_cache


def encode_comment(model: DetectorModel, comment: TokenSeq) -> np.ndarray:
    if len(comment) == 0:
        raise DataError("cannot encode an empty comment")
    if model.comment_encoder is not None:
        return _external_vector(model, comment)
    lowered = [tok.lower() for tok in comment.tokens[: model.config.max_seq_len]]
    vec, _ = _encode_comment_ids(model, model.vocab.lookup(lowered))
    return vec


def encode_diff(model: DetectorModel, rendered_script: TokenSeq) -> np.ndarray:
    vec, _, _ = _encode_diff_ids(model, model.vocab.lookup(rendered_script.tokens[: model.config.max_seq_len]))
    return vec


def _external_vector(model: DetectorModel, comment: TokenSeq) -> np.ndarray:
    vec = np.asarray(model.comment_encoder(comment), dtype=np.float64)
    if vec.shape != (model.config.embed_dim,):
        raise ShapeError(f"external comment vector has shape {vec.shape}, expected ({model.config.embed_dim},)")
    return vec


def classify(model: DetectorModel, c: np.ndarray, m: np.ndarray) -> float:
    p, _ = classifier_forward(c, m, model.params)
    return p


def _forward(model: DetectorModel, feats: CaseFeatures) -> _Forward:
    if model.comment_encoder is not None:
        c, comment_cache = _external_vector(model, feats.comment), None
    else:
        c, comment_cache = _encode_comment_ids(model, feats.comment_ids)
    m, diff_cache, attn_cache = _encode_diff_ids(model, feats.diff_ids)
    p, clf_cache = classifier_forward(c, m, model.params)
    return _Forward(p, c, m, comment_cache, diff_cache, attn_cache, clf_cache)


def _backward_case(
    model: DetectorModel, feats: CaseFeatures, fwd: _Forward, weight: float, config: DetectorConfig, grads: Grads
) -> float:
    """Accumulate ``weight * d(loss_i)`` into ``grads``; return ``weight * loss_i``."""
    params = model.params
    y = float(feats.label)
    eps = config.prob_clamp
    pc = min(max(fwd.p, eps), 1.0 - eps)
    sign = 1.0 - 2.0 * y if config.similarity_mode == "label" else 1.0
    cos = cosine(fwd.c, fwd.m)
    loss_i = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)) + config.lambda_ * (1.0 - sign * cos)

    # clamped probabilities carry no gradient
    dlogit = weight * (fwd.p - y) if eps < fwd.p < 1.0 - eps else 0.0
    dc, dm = classifier_backward(dlogit, fwd.clf_cache, params, "clf.", grads)
    gc, gm = cosine_grad(fwd.c, fwd.m)
    dc = dc - weight * config.lambda_ * sign * gc
    dm = dm - weight * config.lambda_ * sign * gm

    emb = grads.setdefault("embedding", np.zeros_like(params["embedding"]))
    t_diff = feats.diff_ids.size
    d_attended = np.tile(dm / t_diff, (t_diff, 1))
    d_states = attention_backward(d_attended, fwd.attn_cache, params, "attn.", grads)
    d_x = bigru_backward(d_states, fwd.diff_cache, params, "diff.", grads)
    np.add.at(emb, feats.diff_ids, d_x)

    if fwd.comment_cache is not None:
        t_com = feats.comment_ids.size
        d_x = bigru_backward(np.tile(dc / t_com, (t_com, 1)), fwd.comment_cache, params, "comment.", grads)
        np.add.at(emb, feats.comment_ids, d_x)
    return weight * float(loss_i)


def batch_loss_and_grads(
    model: DetectorModel, batch: Sequence[CaseFeatures], config: Optional[DetectorConfig] = None
) -> Tuple[float, Grads]:
    """Mean joint loss over ``batch`` and its gradient for every parameter."""
    cfg = config or model.config
    if not batch:
        raise DataError("loss needs at least one case")
    grads: Grads = {}
    total = 0.0
    weight = 1.0 / len(batch)
    for feats in batch:
        if feats.label is None:
            raise DataError(f"case {feats.case_id} is unlabeled")
        total += _backward_case(model, feats, _forward(model, feats), weight, cfg, grads)
    return total, grads


def batch_loss(model: DetectorModel, batch: Sequence[CaseFeatures], config: Optional[DetectorConfig] = None) -> float:
    cfg = config or model.config
    fwds = [_forward(model, f) for f in batch]
    return joint_loss(
        [f.p for f in fwds],
        [feat.label for feat in batch],
        [f.c for f in fwds],
        [f.m for f in fwds],
        cfg.lambda_,
        cfg.prob_clamp,
        cfg.similarity_mode,
    )


# -- training ------------------------------------------------------------------


class AdamOptimizer:
    def __init__(self, params: Dict[str, np.ndarray], lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: Dict[str, np.ndarray], grads: Grads) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            params[name] -= self.lr * (self.m[name] / bc1) / (np.sqrt(self.v[name] / bc2) + self.eps)


class EpochRecord(BaseModel):
    epoch: int
    loss: float
    valid_f1: Optional[float] = None


def _require_labels(corpus: Corpus) -> None:
    if not corpus.cases:
        raise DataError("corpus is empty")
    unlabeled = [c.id for c in corpus.cases if c.label is None]
    if unlabeled:
        raise DataError(f"{len(unlabeled)} unlabeled case(s), e.g. {unlabeled[:3]}")


def train(
    model_init: DetectorModel,
    corpus: Corpus,
    config: Optional[DetectorConfig] = None,
    *,
    valid: Optional[Corpus] = None,
) -> Tuple[DetectorModel, List[EpochRecord]]:
    """Train a copy of ``model_init``; ``model_init`` itself is left untouched.

    Architecture comes from the model; ``config`` supplies the training
    settings (epochs, lambda, learning rate, batch size, seed).
    """
    cfg = config or model_init.config
    for dim in ("embed_dim", "gru_hidden", "attention_heads"):
        if getattr(cfg, dim) != getattr(model_init.config, dim):
            raise ConfigError(f"training config {dim}={getattr(cfg, dim)} does not match the model")
    _require_labels(corpus)
    if valid is not None:
        _require_labels(valid)

    model = model_init.copy()
    model.config = cfg
    feats = [featurize(model, case) for case in corpus.cases]
    rng = np.random.default_rng(cfg.seed)
    opt = AdamOptimizer(model.params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    history: List[EpochRecord] = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(feats))
        total = 0.0
        for start in range(0, len(feats), cfg.batch_size):
            batch = [feats[i] for i in order[start : start + cfg.batch_size]]
            loss, grads = batch_loss_and_grads(model, batch, cfg)
            opt.step(model.params, grads)
            total += loss * len(batch)
        record = EpochRecord(epoch=epoch, loss=total / len(feats))
        if valid is not None:
            record.valid_f1 = evaluate(model, valid).metrics.f1
        history.append(record)
        logger.info("detector-epoch epoch=%d loss=%.6f valid_f1=%s", epoch, record.loss, record.valid_f1)
    return model, history


def fit(corpus: Corpus, config: DetectorConfig, *, valid: Optional[Corpus] = None,
        comment_encoder: Optional[CommentEncoder] = None) -> Tuple[DetectorModel, List[EpochRecord]]:
    """Build the vocabulary from ``corpus``, initialize with ``config.seed`` and train."""
    _require_labels(corpus)
    model0 = init_model(config, build_vocabulary(corpus, config), comment_encoder)
    return train(model0, corpus, config, valid=valid)


# -- inference and evaluation ------------------------------------------------------


def _prediction(case_id: str, fwd: _Forward) -> Prediction:
    return Prediction(
        case_id=case_id,
        probability=fwd.p,
        verdict="inconsistent" if fwd.p > THRESHOLD else "consistent",
        comment_vector=fwd.c.tolist(),
        code_vector=fwd.m.tolist(),
    )


def predict(model: DetectorModel, case: CciCase) -> Prediction:
    for field in ("old_comment", "old_code", "new_code"):
        if not getattr(case, field):
            raise DataError(f"case {case.id} is missing {field}")
    return _prediction(case.id, _forward(model, featurize(model, case)))


def predict_corpus(model: DetectorModel, corpus: Corpus) -> List[Prediction]:
    return [predict(model, case) for case in corpus.cases]


def write_predictions(predictions: Sequence[Prediction], path: str) -> None:
    with JsonlWriter(path) as writer:
        writer.write_all(predictions)


class DetectionReport(BaseModel):
    schema_version: int = 1
    metrics: ClassificationMetrics
    by_comment_type: Dict[str, ClassificationMetrics] = Field(default_factory=dict)
    validated: Optional[ClassificationMetrics] = None
    misclassified: List[str] = Field(default_factory=list)


def evaluate(model, corpus: Corpus, validated_ids: Optional[Iterable[str]] = None) -> DetectionReport:
    """Confusion metrics overall, per comment type and on a validated subset.

    ``model`` is anything with ``predict(case) -> Prediction`` or a
    :class:`DetectorModel`.
    """
    _require_labels(corpus)
    predictor: Callable[[CciCase], Prediction] = (
        (lambda case: predict(model, case)) if isinstance(model, DetectorModel) else model.predict
    )
    preds: List[int] = []
    labels: List[int] = []
    types: Dict[str, Tuple[List[int], List[int]]] = {}
    misclassified: List[str] = []
    wanted = set(validated_ids) if validated_ids is not None else None
    val_preds: List[int] = []
    val_labels: List[int] = []
    for case in corpus.cases:
        pred = int(predictor(case).verdict == "inconsistent")
        preds.append(pred)
        labels.append(case.label)
        bucket = types.setdefault(case.comment_type, ([], []))
        bucket[0].append(pred)
        bucket[1].append(case.label)
        if pred != case.label:
            misclassified.append(case.id)
        if wanted is not None and case.id in wanted:
            val_preds.append(pred)
            val_labels.append(case.label)
    report = DetectionReport(
        metrics=classification_metrics(preds, labels),
        by_comment_type={t: classification_metrics(p, y) for t, (p, y) in sorted(types.items())},
        validated=classification_metrics(val_preds, val_labels) if val_labels else None,
        misclassified=misclassified,
    )
    logger.info(
        "detector-evaluated cases=%d f1=%.4f acc=%.4f misclassified=%d",
        len(corpus),
        report.metrics.f1,
        report.metrics.accuracy,
        len(misclassified),
    )
    return report


_SUMMARY_FIELDS = ("accuracy", "precision", "recall", "f1")


class RepeatReport(BaseModel):
    schema_version: int = 1
    seeds: List[int]
    runs: List[ClassificationMetrics]
    median: Dict[str, float]


def repeat_train_evaluate(
    train_corpus: Corpus, test_corpus: Corpus, config: DetectorConfig, runs: int = 5
) -> RepeatReport:
    """Train with seeds ``seed .. seed + runs - 1`` and report the median of each metric."""
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    seeds = [config.seed + i for i in range(runs)]
    vocab = build_vocabulary(train_corpus, config)
    results: List[ClassificationMetrics] = []
    for seed in seeds:
        cfg = config.model_copy(update={"seed": seed})
        model, _ = train(init_model(cfg, vocab), train_corpus, cfg)
        results.append(evaluate(model, test_corpus).metrics)
    median = {f: statistics.median(getattr(r, f) for r in results) for f in _SUMMARY_FIELDS}
    logger.info("detector-repeats runs=%d median_f1=%.4f", runs, median["f1"])
    return RepeatReport(seeds=seeds, runs=results, median=median)


def lambda_sweep(
    train_corpus: Corpus, valid_corpus: Corpus, config: DetectorConfig, lambdas: Sequence[float]
) -> List[Dict[str, float]]:
    """One training run per lambda, all from the same initialization."""
    vocab = build_vocabulary(train_corpus, config)
    model0 = init_model(config, vocab)
    rows: List[Dict[str, float]] = []
    for lam in lambdas:
        cfg = config.model_copy(update={"lambda_": float(lam)})
        model, _ = train(model0, train_corpus, cfg)
        metrics = evaluate(model, valid_corpus).metrics
        rows.append({"lambda": float(lam), **{f: getattr(metrics, f) for f in _SUMMARY_FIELDS}})
        logger.info("lambda-sweep lambda=%s f1=%.4f", lam, metrics.f1)
    return rows

"""Gated fusion of two pooled encoder vectors plus head training.

The only trainable object in the standard path: a sigmoid gate over the
concatenated pooled vectors interpolates between per-branch linear
projections, and a single linear classifier maps the fused vector to a
logit. Training uses class-balanced binary cross-entropy with analytic
gradients; encoders stay frozen throughout. Head math runs in f64 so the
analytic gradients match high-precision finite differences.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from .bundle import BundleError, TensorBundle
from .encoder import EncoderModel, pooled_for_text
from .tensor import ShapeError, Tensor
from .tokenizers import Vocab


class TrainingError(ValueError):
    """Invalid training inputs (e.g. a single-class split)."""


@dataclass
class ClassWeights:
    """Inverse-frequency weights w_c = N / (2 N_c) from training labels."""

    w0: float
    w1: float

    @classmethod
    def from_labels(cls, labels) -> "ClassWeights":
        labels = np.asarray(labels)
        n0 = int(np.sum(labels == 0))
        n1 = int(np.sum(labels == 1))
        if n0 == 0 or n1 == 0:
            raise TrainingError("class-balanced weights undefined: training split has a single class")
        n = n0 + n1
        return cls(w0=n / (2.0 * n0), w1=n / (2.0 * n1))

    def per_sample(self, labels) -> np.ndarray:
        labels = np.asarray(labels)
        return np.where(labels == 1, self.w1, self.w0).astype(np.float64)


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 20
    batch: int = 32
    seed: int = 42
    optimizer: str = "adam"  # "adam" (b1=0.9, b2=0.999, eps=1e-8) or "sgd"
    momentum: float = 0.9
    patience: int = 5
    fusion_dim: int = 256

    def __post_init__(self) -> None:
        if self.lr < 0:
            raise TrainingError(f"lr must be >= 0, got {self.lr}")
        if self.epochs < 1 or self.batch < 1:
            raise TrainingError("epochs and batch must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise TrainingError(f"unknown optimizer {self.optimizer!r}")


_PARAM_NAMES = ("w_a", "b_a", "w_b", "b_b", "w_g", "b_g", "w", "b")


@dataclass
class FusionHead:
    """Gate + per-branch projections + linear classifier.

    w_a: [d_f, d_a]   b_a: [d_f]     branch-A projection
    w_b: [d_f, d_b]   b_b: [d_f]     branch-B projection
    w_g: [d_f, d_a+d_b]  b_g: [d_f]  gate over [hA; hB]
    w:   [d_f]        b: scalar      classifier
    """

    w_a: np.ndarray
    b_a: np.ndarray
    w_b: np.ndarray
    b_b: np.ndarray
    w_g: np.ndarray
    b_g: np.ndarray
    w: np.ndarray
    b: np.ndarray  # shape (1,)

    @property
    def d_a(self) -> int:
        return self.w_a.shape[1]

    @property
    def d_b(self) -> int:
        return self.w_b.shape[1]

    @property
    def d_f(self) -> int:
        return self.w_a.shape[0]

    @classmethod
    def init(cls, d_a: int, d_b: int, d_f: int, seed: int) -> "FusionHead":
        """Uniform +/- 1/sqrt(fan_in) weights, zero biases."""
        rng = np.random.default_rng(seed)

        def u(shape, fan_in):
            bound = 1.0 / math.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        return cls(
            w_a=u((d_f, d_a), d_a),
            b_a=np.zeros(d_f),
            w_b=u((d_f, d_b), d_b),
            b_b=np.zeros(d_f),
            w_g=u((d_f, d_a + d_b), d_a + d_b),
            b_g=np.zeros(d_f),
            w=u((d_f,), d_f),
            b=np.zeros(1),
        )

    def params(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _PARAM_NAMES}

    def copy(self) -> "FusionHead":
        return copy.deepcopy(self)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


# Gate components are contractually inside the open interval (0,1); clamp
# away the exact 0/1 that f64 sigmoid saturation would otherwise produce.
_GATE_EPS = 1e-12


def _gate(x):
    return np.clip(_sigmoid(x), _GATE_EPS, 1.0 - _GATE_EPS)


def fuse_forward(h: FusionHead, ha, hb) -> tuple[np.ndarray, np.ndarray]:
    """(fused, gate) with g = sigmoid(w_g @ [hA;hB] + b_g) and
    fused = g * (w_a @ hA + b_a) + (1 - g) * (w_b @ hB + b_b)."""
    ha = _as_vector(ha)
    hb = _as_vector(hb)
    if ha.shape[0] != h.d_a or hb.shape[0] != h.d_b:
        raise ShapeError(
            f"pooled vectors {ha.shape} / {hb.shape} do not match head dims "
            f"({h.d_a}, {h.d_b})"
        )
    u = np.concatenate([ha, hb])
    g = _gate(h.w_g @ u + h.b_g)
    fused = g * (h.w_a @ ha + h.b_a) + (1.0 - g) * (h.w_b @ hb + h.b_b)
    return fused, g


def classify_logit(h: FusionHead, fused) -> float:
    fused = _as_vector(fused)
    if fused.shape[0] != h.d_f:
        raise ShapeError(f"fused vector {fused.shape} does not match head dim {h.d_f}")
    return float(h.w @ fused + h.b[0])


def head_logit(h: FusionHead, ha, hb) -> float:
    return classify_logit(h, fuse_forward(h, ha, hb)[0])


def _as_vector(x) -> np.ndarray:
    if isinstance(x, Tensor):
        x = x.data
    return np.asarray(x, dtype=np.float64).reshape(-1)


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def cb_bce(z, y, cw: ClassWeights) -> float:
    """Class-balanced BCE over logits, via the stable log-sum form."""
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    losses = _softplus(z) - y * z
    return float(np.mean(cw.per_sample(y) * losses))


@dataclass
class HeadGradients:
    w_a: np.ndarray
    b_a: np.ndarray
    w_b: np.ndarray
    b_b: np.ndarray
    w_g: np.ndarray
    b_g: np.ndarray
    w: np.ndarray
    b: np.ndarray

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in _PARAM_NAMES}


def _batch_forward(h: FusionHead, feats_a: np.ndarray, feats_b: np.ndarray):
    u = np.hstack([feats_a, feats_b])
    g = _gate(u @ h.w_g.T + h.b_g)
    pa = feats_a @ h.w_a.T + h.b_a
    pb = feats_b @ h.w_b.T + h.b_b
    fused = g * pa + (1.0 - g) * pb
    z = fused @ h.w + h.b[0]
    return u, g, pa, pb, fused, z


def batch_logits(h: FusionHead, feats_a: np.ndarray, feats_b: np.ndarray) -> np.ndarray:
    return _batch_forward(h, feats_a, feats_b)[5]


def head_gradients(
    h: FusionHead, feats_a: np.ndarray, feats_b: np.ndarray, y, cw: ClassWeights
) -> HeadGradients:
    """Analytic gradients of cb_bce(classify_logit(fuse_forward(...))) w.r.t.
    every head parameter, averaged over the batch."""
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if n == 0:
        raise TrainingError("gradient batch is empty")
    u, g, pa, pb, fused, z = _batch_forward(h, feats_a, feats_b)
    delta = cw.per_sample(y) * (_sigmoid(z) - y) / n  # dL/dz per sample
    d_fused = delta[:, None] * h.w[None, :]
    d_pa = d_fused * g
    d_pb = d_fused * (1.0 - g)
    d_gate_pre = d_fused * (pa - pb) * g * (1.0 - g)
    return HeadGradients(
        w_a=d_pa.T @ feats_a,
        b_a=d_pa.sum(axis=0),
        w_b=d_pb.T @ feats_b,
        b_b=d_pb.sum(axis=0),
        w_g=d_gate_pre.T @ u,
        b_g=d_gate_pre.sum(axis=0),
        w=delta @ fused,
        b=np.array([delta.sum()]),
    )


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

class _Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float) -> None:
        self.lr = lr
        self.b1, self.b2, self.eps = 0.9, 0.999, 1e-8
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for k, p in params.items():
            gr = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * gr
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * gr * gr
            m_hat = self.m[k] / (1 - self.b1**self.t)
            v_hat = self.v[k] / (1 - self.b2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class _SGD:
    def __init__(self, params: dict[str, np.ndarray], lr: float, momentum: float) -> None:
        self.lr = lr
        self.momentum = momentum
        self.vel = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        for k, p in params.items():
            self.vel[k] = self.momentum * self.vel[k] + grads[k]
            p -= self.lr * self.vel[k]


def _make_optimizer(tc: TrainConfig, params: dict[str, np.ndarray]):
    if tc.optimizer == "adam":
        return _Adam(params, tc.lr)
    return _SGD(params, tc.lr, tc.momentum)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_auroc: float


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    best_dev_auroc: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "epochs": [
                {"epoch": e.epoch, "train_loss": e.train_loss, "dev_auroc": e.dev_auroc}
                for e in self.epochs
            ],
            "best_epoch": self.best_epoch,
            "best_dev_auroc": self.best_dev_auroc,
        }


def pooled_features(model: EncoderModel, vocab: Vocab, samples) -> np.ndarray:
    """Pooled vector per sample, single-window truncation, corpus order."""
    return np.stack([
        pooled_for_text(model, vocab, s.text).data.astype(np.float64) for s in samples
    ])


def _train_loop(params_holder, loss_grad_fn, dev_auroc_fn, n_train: int, tc: TrainConfig):
    """Shared epoch loop: seeded shuffling, checkpoint selection on dev AUROC
    (ties keep the earlier epoch), early stop after `patience` stale epochs."""
    rng = np.random.default_rng(tc.seed)
    opt = _make_optimizer(tc, params_holder.params())
    log = TrainLog()
    best = params_holder.copy()
    stale = 0
    for epoch in range(tc.epochs):
        order = rng.permutation(n_train)
        losses = []
        for lo in range(0, n_train, tc.batch):
            idx = order[lo : lo + tc.batch]
            loss, grads = loss_grad_fn(params_holder, idx)
            opt.step(params_holder.params(), grads)
            losses.append(loss)
        dev_score = dev_auroc_fn(params_holder)
        log.epochs.append(EpochRecord(epoch, float(np.mean(losses)), dev_score))
        if log.best_epoch < 0 or dev_score > log.best_dev_auroc:
            log.best_epoch = epoch
            log.best_dev_auroc = dev_score
            best = params_holder.copy()
            stale = 0
        else:
            stale += 1
            if stale >= tc.patience:
                break
    return best, log


def train_head(
    enc_a: EncoderModel,
    vocab_a: Vocab,
    enc_b: EncoderModel,
    vocab_b: Vocab,
    train_samples,
    dev_samples,
    tc: TrainConfig,
) -> tuple[FusionHead, TrainLog]:
    """Train the fusion head on frozen encoders; returns the checkpoint with
    the best dev AUROC plus the per-epoch training log."""
    from .metrics import auroc

    if not train_samples or not dev_samples:
        raise TrainingError("train and dev splits must be non-empty")
    y_train = np.array([s.label for s in train_samples])
    y_dev = np.array([s.label for s in dev_samples])
    cw = ClassWeights.from_labels(y_train)

    fa = pooled_features(enc_a, vocab_a, train_samples)
    fb = pooled_features(enc_b, vocab_b, train_samples)
    fa_dev = pooled_features(enc_a, vocab_a, dev_samples)
    fb_dev = pooled_features(enc_b, vocab_b, dev_samples)

    head = FusionHead.init(fa.shape[1], fb.shape[1], tc.fusion_dim, tc.seed)

    def loss_grad(h: FusionHead, idx):
        z = batch_logits(h, fa[idx], fb[idx])
        loss = cb_bce(z, y_train[idx], cw)
        grads = head_gradients(h, fa[idx], fb[idx], y_train[idx], cw)
        return loss, grads.as_dict()

    def dev_auroc(h: FusionHead) -> float:
        return auroc(batch_logits(h, fa_dev, fb_dev), y_dev)

    return _train_loop(head, loss_grad, dev_auroc, len(train_samples), tc)


# ---------------------------------------------------------------------------
# Linear probe (frozen-encoder baseline)
# ---------------------------------------------------------------------------

@dataclass
class LinearProbe:
    """Logistic-regression probe over one encoder's pooled vectors."""

    w: np.ndarray
    b: np.ndarray  # shape (1,)

    @classmethod
    def init(cls, d: int, seed: int) -> "LinearProbe":
        rng = np.random.default_rng(seed)
        bound = 1.0 / math.sqrt(d)
        return cls(w=rng.uniform(-bound, bound, size=d), b=np.zeros(1))

    def params(self) -> dict[str, np.ndarray]:
        return {"w": self.w, "b": self.b}

    def copy(self) -> "LinearProbe":
        return copy.deepcopy(self)


def probe_logits(p: LinearProbe, feats: np.ndarray) -> np.ndarray:
    return feats @ p.w + p.b[0]


def probe_gradients(p: LinearProbe, feats: np.ndarray, y, cw: ClassWeights):
    y = np.asarray(y, dtype=np.float64)
    delta = cw.per_sample(y) * (_sigmoid(probe_logits(p, feats)) - y) / y.shape[0]
    return {"w": delta @ feats, "b": np.array([delta.sum()])}


def linear_probe_fit(
    enc: EncoderModel, vocab: Vocab, train_samples, dev_samples, tc: TrainConfig
) -> tuple[LinearProbe, TrainLog]:
    from .metrics import auroc

    if not train_samples or not dev_samples:
        raise TrainingError("train and dev splits must be non-empty")
    y_train = np.array([s.label for s in train_samples])
    y_dev = np.array([s.label for s in dev_samples])
    cw = ClassWeights.from_labels(y_train)
    feats = pooled_features(enc, vocab, train_samples)
    feats_dev = pooled_features(enc, vocab, dev_samples)
    probe = LinearProbe.init(feats.shape[1], tc.seed)

    def loss_grad(p: LinearProbe, idx):
        z = probe_logits(p, feats[idx])
        return cb_bce(z, y_train[idx], cw), probe_gradients(p, feats[idx], y_train[idx], cw)

    def dev_auroc(p: LinearProbe) -> float:
        return auroc(probe_logits(p, feats_dev), y_dev)

    return _train_loop(probe, loss_grad, dev_auroc, len(train_samples), tc)


# ---------------------------------------------------------------------------
# Head checkpoint I/O
# ---------------------------------------------------------------------------

def head_to_bundle(h: FusionHead, extra_metadata: dict[str, str] | None = None) -> TensorBundle:
    b = TensorBundle()
    for name, arr in h.params().items():
        b.add(f"head.{name}", Tensor(arr))
    b.metadata.update({
        "kind": "fusion-head",
        "d_a": str(h.d_a),
        "d_b": str(h.d_b),
        "d_f": str(h.d_f),
    })
    if extra_metadata:
        b.metadata.update(extra_metadata)
    return b


def head_from_bundle(b: TensorBundle) -> FusionHead:
    if b.metadata.get("kind") != "fusion-head":
        raise BundleError("bundle is not a fusion-head checkpoint")
    kwargs = {}
    for name in _PARAM_NAMES:
        kwargs[name] = b[f"head.{name}"].data.astype(np.float64)
    return FusionHead(**kwargs)

"""Dense conditional VAE and plain autoencoder with hand-written backprop.

Everything runs in float64 numpy. Batches are row-major: a batch of
descriptors is an ``(B, D)`` array, one-hot labels are ``(B, K)``.

CVAE layout::

    x_in = [y | x] -> enc1 -> enc2 -> enc3 = [mu | logvar]
    z = mu + exp(logvar / 2) * eps
    [y | z] -> dec1 -> dec2 -> out -> sigmoid

Hidden layers use relu (or leaky relu) followed by inverted dropout while
training. ``enc3`` is affine so that ``logvar`` can be negative.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    DomainError,
    EmptyTrainingSet,
    LengthMismatch,
    NonFiniteActivation,
    NonFiniteGradient,
    ShapeMismatch,
)

log = logging.getLogger(__name__)

ACTIVATION_SLOPES = {"relu": 0.0, "leaky": 0.01}
CVAE_LAYERS = ("enc1", "enc2", "enc3", "dec1", "dec2", "out")
DROPOUT_LAYERS = ("enc1", "enc2", "dec1", "dec2")
AE_WIDTHS = (256, 128, 64, 128, 256)

_INFER_CHUNK = 1024


# --- parameters --------------------------------------------------------------


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


@dataclass(eq=False)
class CvaeParams:
    n_in: int
    n_labels: int
    latent_dim: int
    enc_widths: tuple[int, int] = (2048, 2048)
    dec_widths: tuple[int, int] = (2048, 2048)
    keep_ratio: float = 0.99
    activation: str = "relu"
    weights: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.enc_widths = tuple(int(w) for w in self.enc_widths)
        self.dec_widths = tuple(int(w) for w in self.dec_widths)
        if self.activation not in ACTIVATION_SLOPES:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0 < self.keep_ratio <= 1:
            raise ValueError("keep_ratio must be in (0, 1]")
        for name, (fi, fo) in self.layer_shapes().items():
            w, b = self.weights.get(name + ".W"), self.weights.get(name + ".b")
            if w is not None and (w.shape != (fi, fo) or b is None or b.shape != (fo,)):
                raise ShapeMismatch(f"layer {name}: expected ({fi}, {fo})")

    @property
    def patch_size(self) -> int:
        return self.n_in // 3 - 1

    def layer_shapes(self) -> dict[str, tuple[int, int]]:
        e1, e2 = self.enc_widths
        d1, d2 = self.dec_widths
        K, dz = self.n_labels, self.latent_dim
        return {
            "enc1": (K + self.n_in, e1),
            "enc2": (e1, e2),
            "enc3": (e2, 2 * dz),
            "dec1": (K + dz, d1),
            "dec2": (d1, d2),
            "out": (d2, self.n_in),
        }

    def W(self, name):
        return self.weights[name + ".W"]

    def b(self, name):
        return self.weights[name + ".b"]

    def copy(self) -> "CvaeParams":
        return CvaeParams(
            self.n_in, self.n_labels, self.latent_dim, self.enc_widths, self.dec_widths,
            self.keep_ratio, self.activation, {k: v.copy() for k, v in self.weights.items()},
        )


def init_cvae(n_in, n_labels, latent_dim, enc_widths=(2048, 2048), dec_widths=(2048, 2048),
              keep_ratio=0.99, activation="relu", rng=None) -> CvaeParams:
    rng = rng if rng is not None else np.random.default_rng(0)
    p = CvaeParams(n_in, n_labels, latent_dim, enc_widths, dec_widths, keep_ratio, activation)
    for name, (fi, fo) in p.layer_shapes().items():
        p.weights[name + ".W"] = glorot(rng, fi, fo)
        p.weights[name + ".b"] = np.zeros(fo)
    return p


@dataclass(eq=False)
class AeParams:
    n_in: int
    widths: tuple[int, ...] = AE_WIDTHS
    weights: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)

    @property
    def patch_size(self) -> int:
        return self.n_in // 3 - 1

    @property
    def layer_names(self) -> list[str]:
        return [f"ae{i + 1}" for i in range(len(self.widths))] + ["out"]

    def layer_shapes(self) -> dict[str, tuple[int, int]]:
        dims = (self.n_in, *self.widths, self.n_in)
        return {name: (dims[i], dims[i + 1]) for i, name in enumerate(self.layer_names)}

    def copy(self) -> "AeParams":
        return AeParams(self.n_in, self.widths, {k: v.copy() for k, v in self.weights.items()})


def init_ae(n_in, widths=AE_WIDTHS, rng=None) -> AeParams:
    rng = rng if rng is not None else np.random.default_rng(0)
    p = AeParams(n_in, widths)
    for name, (fi, fo) in p.layer_shapes().items():
        p.weights[name + ".W"] = glorot(rng, fi, fo)
        p.weights[name + ".b"] = np.zeros(fo)
    return p


# --- elementwise pieces ------------------------------------------------------


def sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def _act(p, slope):
    return np.maximum(p, 0.0) if slope == 0.0 else np.where(p > 0, p, slope * p)


def _dact(p, slope):
    return np.where(p > 0, 1.0, slope)


def _check_finite(a, what):
    if not np.all(np.isfinite(a)):
        raise NonFiniteActivation(f"non-finite values in {what}")


def _as_batch(a, width, what):
    a = np.asarray(a, dtype=np.float64)
    single = a.ndim == 1
    a = np.atleast_2d(a)
    if a.shape[1] != width:
        raise ShapeMismatch(f"{what} has width {a.shape[1]}, expected {width}")
    return a, single


def _mask(masks, name):
    return None if masks is None else masks.get(name)


def draw_masks(params: CvaeParams, batch: int, rng: np.random.Generator) -> dict[str, np.ndarray] | None:
    """Inverted-dropout masks (entries 0 or 1/keep_ratio) for each hidden layer."""
    kr = params.keep_ratio
    if kr >= 1.0:
        return None
    widths = dict(zip(DROPOUT_LAYERS, (*params.enc_widths, *params.dec_widths)))
    return {name: (rng.random((batch, w)) < kr) / kr for name, w in widths.items()}


# --- CVAE forward ------------------------------------------------------------


def _encode(params: CvaeParams, x, y, masks):
    slope = ACTIVATION_SLOPES[params.activation]
    x_in = np.concatenate([y, x], axis=1)
    p1 = x_in @ params.W("enc1") + params.b("enc1")
    h1 = _act(p1, slope)
    m1 = _mask(masks, "enc1")
    if m1 is not None:
        h1 = h1 * m1
    p2 = h1 @ params.W("enc2") + params.b("enc2")
    h2 = _act(p2, slope)
    m2 = _mask(masks, "enc2")
    if m2 is not None:
        h2 = h2 * m2
    o = h2 @ params.W("enc3") + params.b("enc3")
    dz = params.latent_dim
    return o[:, :dz], o[:, dz:], dict(x_in=x_in, p1=p1, h1=h1, p2=p2, h2=h2)


def _decode(params: CvaeParams, z, y, masks):
    slope = ACTIVATION_SLOPES[params.activation]
    zc = np.concatenate([y, z], axis=1)
    p3 = zc @ params.W("dec1") + params.b("dec1")
    h3 = _act(p3, slope)
    m3 = _mask(masks, "dec1")
    if m3 is not None:
        h3 = h3 * m3
    p4 = h3 @ params.W("dec2") + params.b("dec2")
    h4 = _act(p4, slope)
    m4 = _mask(masks, "dec2")
    if m4 is not None:
        h4 = h4 * m4
    logits = h4 @ params.W("out") + params.b("out")
    return logits, dict(zc=zc, p3=p3, h3=h3, p4=p4, h4=h4)


def encode(params: CvaeParams, x, y, dropout_mask=None):
    """Gaussian posterior parameters ``(mu, logvar)`` for descriptor(s) ``x`` with one-hot ``y``."""
    xb, single = _as_batch(x, params.n_in, "descriptor")
    yb, _ = _as_batch(y, params.n_labels, "label")
    if len(yb) != len(xb):
        raise ShapeMismatch("descriptor and label batch sizes differ")
    mu, logvar, _ = _encode(params, xb, yb, dropout_mask)
    _check_finite(mu, "mu")
    _check_finite(logvar, "logvar")
    return (mu[0], logvar[0]) if single else (mu, logvar)


def reparameterize(mu, logvar, noise):
    mu, logvar, noise = (np.asarray(a, dtype=np.float64) for a in (mu, logvar, noise))
    if not (mu.shape == logvar.shape == noise.shape):
        raise LengthMismatch("mu, logvar and noise must have equal shapes")
    return mu + np.exp(0.5 * logvar) * noise


def decode(params: CvaeParams, z, y, dropout_mask=None):
    """Bernoulli means in (0, 1) for latent code(s) ``z`` with one-hot ``y``."""
    zb, single = _as_batch(z, params.latent_dim, "latent")
    yb, _ = _as_batch(y, params.n_labels, "label")
    if len(yb) != len(zb):
        raise ShapeMismatch("latent and label batch sizes differ")
    logits, _ = _decode(params, zb, yb, dropout_mask)
    _check_finite(logits, "decoder output")
    out = sigmoid(logits)
    return out[0] if single else out


# --- losses ------------------------------------------------------------------


def kl_divergence(mu, logvar) -> np.ndarray:
    """Per-sample ``KL(N(mu, exp(logvar)) || N(0, I))``."""
    mu, logvar = np.atleast_2d(mu), np.atleast_2d(logvar)
    return -0.5 * np.sum(1.0 + logvar - mu * mu - np.exp(logvar), axis=1)


def binary_cross_entropy(x_target, x_out) -> np.ndarray:
    """Per-sample summed BCE. ``x_out`` must lie strictly inside (0, 1)."""
    t, o = np.atleast_2d(x_target), np.atleast_2d(x_out)
    if t.shape != o.shape:
        raise LengthMismatch("target and output shapes differ")
    if np.any(o <= 0.0) or np.any(o >= 1.0):
        raise DomainError("outputs must lie in the open interval (0, 1)")
    return -np.sum(t * np.log(o) + (1.0 - t) * np.log1p(-o), axis=1)


def bce_with_logits(x_target, logits) -> np.ndarray:
    """Same as `binary_cross_entropy` of ``sigmoid(logits)``, evaluated stably."""
    return np.sum(np.logaddexp(0.0, logits) - x_target * logits, axis=1)


def elbo_loss(x_target, x_out, mu, logvar) -> float:
    """Batch-mean of summed BCE plus KL to the standard normal."""
    return float(np.mean(binary_cross_entropy(x_target, x_out) + kl_divergence(mu, logvar)))


# --- CVAE backward -----------------------------------------------------------


def cvae_loss_and_gradients(params: CvaeParams, x, x_target, y, noise, masks=None):
    """Mean ELBO over the batch and its exact gradient w.r.t. every weight and bias.

    ``noise`` (B, latent_dim) and ``masks`` are the realizations used in the
    forward pass, so the result is a deterministic function of its inputs.
    Returns ``(loss, grads, parts)`` with ``parts = {"bce": ..., "kl": ...}``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    B = len(x)
    if B == 0:
        raise EmptyTrainingSet("empty batch")
    slope = ACTIVATION_SLOPES[params.activation]
    mu, logvar, ec = _encode(params, x, y, masks)
    std = np.exp(0.5 * logvar)
    z = mu + std * noise
    logits, dc = _decode(params, z, y, masks)
    bce = bce_with_logits(x_target, logits)
    kl = kl_divergence(mu, logvar)
    loss = float(np.mean(bce + kl))
    if not np.isfinite(loss):
        raise NonFiniteActivation("non-finite loss")

    g: dict[str, np.ndarray] = {}

    def dense_back(name, inp, dout):
        g[name + ".W"] = inp.T @ dout
        g[name + ".b"] = dout.sum(axis=0)
        return dout @ params.W(name).T

    def hidden_back(dh, pre, name):
        m = _mask(masks, name)
        if m is not None:
            dh = dh * m
        return dh * _dact(pre, slope)

    dlogits = (sigmoid(logits) - x_target) / B
    dh4 = dense_back("out", dc["h4"], dlogits)
    dh3 = dense_back("dec2", dc["h3"], hidden_back(dh4, dc["p4"], "dec2"))
    dzc = dense_back("dec1", dc["zc"], hidden_back(dh3, dc["p3"], "dec1"))
    dz = dzc[:, params.n_labels:]
    dmu = dz + mu / B
    dlogvar = dz * noise * 0.5 * std - 0.5 * (1.0 - np.exp(logvar)) / B
    dh2 = dense_back("enc3", ec["h2"], np.concatenate([dmu, dlogvar], axis=1))
    dh1 = dense_back("enc2", ec["h1"], hidden_back(dh2, ec["p2"], "enc2"))
    dense_back("enc1", ec["x_in"], hidden_back(dh1, ec["p1"], "enc1"))

    for k, v in g.items():
        if not np.all(np.isfinite(v)):
            raise NonFiniteGradient(f"non-finite gradient for {k}")
    return loss, g, {"bce": float(np.mean(bce)), "kl": float(np.mean(kl))}


def gradients(params: CvaeParams, x_noisy, x_clean, labels_onehot, noise, masks=None):
    """Gradient dict of the batch-mean ELBO (see `cvae_loss_and_gradients`)."""
    return cvae_loss_and_gradients(params, x_noisy, x_clean, labels_onehot, noise, masks)[1]


def cvae_loss(params: CvaeParams, x, x_target, y, noise, masks=None) -> float:
    """Forward-only batch-mean ELBO with fixed noise/masks (finite-difference oracle target)."""
    mu, logvar, _ = _encode(params, x, y, masks)
    z = mu + np.exp(0.5 * logvar) * noise
    logits, _ = _decode(params, z, y, masks)
    return float(np.mean(bce_with_logits(x_target, logits) + kl_divergence(mu, logvar)))


# --- optimizer ---------------------------------------------------------------


class Adam:
    def __init__(self, lr=3e-5, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k in sorted(params):
            gk = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(gk)
                self.v[k] = np.zeros_like(gk)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * gk
            v *= self.beta2
            v += (1.0 - self.beta2) * (gk * gk)
            params[k] -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


# --- training ----------------------------------------------------------------


@dataclass
class TrainConfig:
    learning_rate: float = 3e-5
    lr_decay: float = 0.998
    batch_size: int = 256
    epochs: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    keep_ratio: float = 0.99
    seed: int = 0
    latent_dim: int = 64
    enc_widths: tuple[int, int] = (2048, 2048)
    dec_widths: tuple[int, int] = (2048, 2048)
    activation: str = "relu"
    val_fraction: float = 0.05
    ae_widths: tuple[int, ...] = AE_WIDTHS

    def __post_init__(self):
        if not 0 < self.keep_ratio <= 1:
            raise ValueError("keep_ratio must be in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")


@dataclass
class EpochStats:
    epoch: int
    learning_rate: float
    train_loss: float
    val_loss: float | None


def _split(n: int, frac: float, rng: np.random.Generator):
    perm = rng.permutation(n)
    n_val = int(round(n * frac))
    if n_val >= n:
        n_val = 0
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _check_pairs(x_noisy, x_clean, labels=None, K=None):
    xn = np.asarray(x_noisy, dtype=np.float64)
    xc = np.asarray(x_clean, dtype=np.float64)
    if xn.size == 0 or len(xn) == 0:
        raise EmptyTrainingSet("no training pairs")
    if xn.shape != xc.shape:
        raise ShapeMismatch("noisy and clean descriptor arrays differ in shape")
    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (len(xn),):
            raise ShapeMismatch("one label per pair expected")
        if np.any(labels < 0) or np.any(labels >= K):
            raise ValueError(f"labels must lie in [0, {K})")
    return xn, xc, labels


def cvae_eval_loss(params: CvaeParams, x, x_target, labels) -> float:
    """Deterministic ELBO (z = mu, no dropout) averaged over all rows."""
    total = 0.0
    for s in range(0, len(x), _INFER_CHUNK):
        y = _onehot(labels[s:s + _INFER_CHUNK], params.n_labels)
        xs = x[s:s + _INFER_CHUNK]
        mu, logvar, _ = _encode(params, xs, y, None)
        logits, _ = _decode(params, mu, y, None)
        total += float(np.sum(bce_with_logits(x_target[s:s + _INFER_CHUNK], logits) + kl_divergence(mu, logvar)))
    return total / len(x)


def _onehot(labels, K):
    out = np.zeros((len(labels), K))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def train_cvae(x_noisy, x_clean, labels, K: int, cfg: TrainConfig | None = None,
               on_epoch: Callable[[EpochStats], None] | None = None,
               params: CvaeParams | None = None) -> CvaeParams:
    """Fit a CVAE mapping noisy descriptors to clean ones.

    Deterministic for a fixed ``cfg.seed``: initialization, the train/val split,
    shuffling, latent noise and dropout masks all come from one PCG64 stream.
    The learning rate is multiplied by ``cfg.lr_decay`` after every epoch.
    """
    cfg = cfg or TrainConfig()
    xn, xc, labels = _check_pairs(x_noisy, x_clean, labels, K)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    if params is None:
        params = init_cvae(xn.shape[1], K, cfg.latent_dim, cfg.enc_widths, cfg.dec_widths,
                           cfg.keep_ratio, cfg.activation, rng)
    train_idx, val_idx = _split(len(xn), cfg.val_fraction, rng)
    opt = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    for epoch in range(1, cfg.epochs + 1):
        order = train_idx[rng.permutation(len(train_idx))]
        total = 0.0
        for s in range(0, len(order), cfg.batch_size):
            bi = order[s:s + cfg.batch_size]
            y = _onehot(labels[bi], K)
            noise = rng.standard_normal((len(bi), params.latent_dim))
            masks = draw_masks(params, len(bi), rng)
            loss, grads, _ = cvae_loss_and_gradients(params, xn[bi], xc[bi], y, noise, masks)
            opt.step(params.weights, grads)
            total += loss * len(bi)
        val = cvae_eval_loss(params, xn[val_idx], xc[val_idx], labels[val_idx]) if len(val_idx) else None
        stats = EpochStats(epoch, opt.lr, total / len(order), val)
        log.info("cvae epoch %d lr=%.3g train=%.5f val=%s", epoch, opt.lr, stats.train_loss, val)
        if on_epoch is not None:
            on_epoch(stats)
        opt.lr *= cfg.lr_decay
    return params


def infer_cvae(params: CvaeParams, descriptors, labels) -> np.ndarray:
    """Deterministic denoising pass: ``z = mu``, dropout off. Accepts one row or a batch."""
    X, single = _as_batch(descriptors, params.n_in, "descriptor")
    lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if len(lab) != len(X):
        raise ShapeMismatch("one label per descriptor expected")
    if np.any(lab < 0) or np.any(lab >= params.n_labels):
        raise ShapeMismatch(f"labels must lie in [0, {params.n_labels})")
    out = np.empty_like(X)
    for s in range(0, len(X), _INFER_CHUNK):
        y = _onehot(lab[s:s + _INFER_CHUNK], params.n_labels)
        mu, _, _ = _encode(params, X[s:s + _INFER_CHUNK], y, None)
        logits, _ = _decode(params, mu, y, None)
        out[s:s + _INFER_CHUNK] = sigmoid(logits)
    _check_finite(out, "inference output")
    return out[0] if single else out


# --- plain autoencoder -------------------------------------------------------


def _ae_forward(params: AeParams, x):
    acts = [x]
    h = x
    for name in params.layer_names:
        h = sigmoid(h @ params.weights[name + ".W"] + params.weights[name + ".b"])
        acts.append(h)
    return acts


def ae_loss_and_gradients(params: AeParams, x, x_target):
    """Mean squared error over all entries and its gradients."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if len(x) == 0:
        raise EmptyTrainingSet("empty batch")
    acts = _ae_forward(params, x)
    out = acts[-1]
    diff = out - x_target
    loss = float(np.mean(diff * diff))
    g = {}
    d = 2.0 * diff / diff.size
    for i in range(len(params.layer_names) - 1, -1, -1):
        name = params.layer_names[i]
        a = acts[i + 1]
        dp = d * a * (1.0 - a)
        g[name + ".W"] = acts[i].T @ dp
        g[name + ".b"] = dp.sum(axis=0)
        d = dp @ params.weights[name + ".W"].T
    for k, v in g.items():
        if not np.all(np.isfinite(v)):
            raise NonFiniteGradient(f"non-finite gradient for {k}")
    return loss, g


def ae_loss(params: AeParams, x, x_target) -> float:
    out = _ae_forward(params, np.atleast_2d(x))[-1]
    return float(np.mean((out - x_target) ** 2))


def train_ae(x_noisy, x_clean, cfg: TrainConfig | None = None,
             on_epoch: Callable[[EpochStats], None] | None = None) -> AeParams:
    cfg = cfg or TrainConfig()
    xn, xc, _ = _check_pairs(x_noisy, x_clean)
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    params = init_ae(xn.shape[1], cfg.ae_widths, rng)
    train_idx, val_idx = _split(len(xn), cfg.val_fraction, rng)
    opt = Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    for epoch in range(1, cfg.epochs + 1):
        order = train_idx[rng.permutation(len(train_idx))]
        total = 0.0
        for s in range(0, len(order), cfg.batch_size):
            bi = order[s:s + cfg.batch_size]
            loss, grads = ae_loss_and_gradients(params, xn[bi], xc[bi])
            opt.step(params.weights, grads)
            total += loss * len(bi)
        val = ae_loss(params, xn[val_idx], xc[val_idx]) if len(val_idx) else None
        stats = EpochStats(epoch, opt.lr, total / len(order), val)
        log.info("ae epoch %d lr=%.3g train=%.6f val=%s", epoch, opt.lr, stats.train_loss, val)
        if on_epoch is not None:
            on_epoch(stats)
        opt.lr *= cfg.lr_decay
    return params


def infer_ae(params: AeParams, descriptors) -> np.ndarray:
    X, single = _as_batch(descriptors, params.n_in, "descriptor")
    out = np.empty_like(X)
    for s in range(0, len(X), _INFER_CHUNK):
        out[s:s + _INFER_CHUNK] = _ae_forward(params, X[s:s + _INFER_CHUNK])[-1]
    return out[0] if single else out

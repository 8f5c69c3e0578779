"""MLP autoencoder with hand-derived backpropagation and Adam training.

Three reconstruction objectives are supported on the residual R = X - G(X):
the squared Frobenius norm, the entrywise l1 norm, and the scale-invariant
l1/l2 ratio.  Batches are matrices whose columns are samples.
"""

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import numkit
from .numkit import Rng
from .report import SolveReport

LOSS_KINDS = ("squared_frobenius", "l1", "l1_over_l2")
ACTIVATION_KINDS = ("relu", "sigmoid", "identity")

RESIDUAL_FLOOR = 1e-30  # below this Frobenius norm the ratio loss is undefined

CHECKPOINT_MAGIC = b"RAEC"


class DegenerateResidualError(ValueError):
    """Raised by the l1/l2 ratio loss when the residual is numerically zero."""


@dataclass(frozen=True)
class RobustLoss:
    kind: str

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")


SQUARED_FROBENIUS = RobustLoss("squared_frobenius")
L1 = RobustLoss("l1")
L1_OVER_L2 = RobustLoss("l1_over_l2")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 128
    seed: int = 0
    loss: RobustLoss = L1
    shuffle: bool = True
    snapshot_every: int = 0
    learning_rate: float = 1e-4

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.snapshot_every < 0:
            raise ValueError(f"snapshot_every must be >= 0, got {self.snapshot_every}")


def _activate(kind, a):
    if kind == "relu":
        return np.maximum(a, 0.0)
    if kind == "sigmoid":
        return _sigmoid(a)
    return a


def _activate_prime(kind, a):
    if kind == "relu":
        return (a > 0.0).astype(np.float64)  # subgradient 0 at the kink
    if kind == "sigmoid":
        s = _sigmoid(a)
        return s * (1.0 - s)
    return np.ones_like(a)


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


class MlpAutoencoder:
    """Encoder/decoder MLP; `weights[l]` is (out_dim, in_dim) for layer l."""

    def __init__(self, encoder_dims, decoder_dims, weights, biases,
                 hidden_activation="relu", output_activation="sigmoid"):
        encoder_dims = [int(d) for d in encoder_dims]
        decoder_dims = [int(d) for d in decoder_dims]
        if len(encoder_dims) < 2 or len(decoder_dims) < 2:
            raise ValueError("encoder and decoder need at least one layer each")
        if encoder_dims[-1] != decoder_dims[0]:
            raise ValueError(
                f"encoder output {encoder_dims[-1]} != decoder input {decoder_dims[0]}"
            )
        if decoder_dims[-1] != encoder_dims[0]:
            raise ValueError(
                f"decoder output {decoder_dims[-1]} != encoder input {encoder_dims[0]}"
            )
        if encoder_dims[-1] >= encoder_dims[0]:
            raise ValueError(
                f"latent dim {encoder_dims[-1]} must be < data dim {encoder_dims[0]}"
            )
        if hidden_activation not in ACTIVATION_KINDS or output_activation not in ACTIVATION_KINDS:
            raise ValueError(f"activations must be in {ACTIVATION_KINDS}")
        chain = encoder_dims + decoder_dims[1:]
        if len(weights) != len(chain) - 1 or len(biases) != len(chain) - 1:
            raise ValueError("one weight matrix and bias vector per layer required")
        for l, (w, b) in enumerate(zip(weights, biases)):
            want = (chain[l + 1], chain[l])
            if w.shape != want:
                raise ValueError(f"layer {l} weight shape {w.shape} != {want}")
            if b.shape != (chain[l + 1],):
                raise ValueError(f"layer {l} bias shape {b.shape} != ({chain[l + 1]},)")
        self.encoder_dims = encoder_dims
        self.decoder_dims = decoder_dims
        self.weights = list(weights)
        self.biases = list(biases)
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation

    @property
    def n(self):
        return self.encoder_dims[0]

    @property
    def p_latent(self):
        return self.encoder_dims[-1]

    @property
    def layer_dims(self):
        return self.encoder_dims + self.decoder_dims[1:]

    def copy(self):
        return MlpAutoencoder(
            self.encoder_dims,
            self.decoder_dims,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.hidden_activation,
            self.output_activation,
        )


def init(encoder_dims, decoder_dims, seed, hidden_activation="relu",
         output_activation="sigmoid"):
    """Seeded Glorot-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    chain = [int(d) for d in encoder_dims] + [int(d) for d in decoder_dims[1:]]
    rng = Rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(chain[:-1], chain[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpAutoencoder(encoder_dims, decoder_dims, weights, biases,
                          hidden_activation, output_activation)


def forward(model, batch):
    """Reconstruction and the per-layer cache needed by backward()."""
    x = numkit.as_matrix(batch, "batch")
    if x.shape[0] != model.n:
        raise ValueError(f"batch has {x.shape[0]} rows, model expects {model.n}")
    z = x
    cache = []
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        a = w @ z + b[:, None]
        cache.append((z, a))
        kind = model.output_activation if l == last else model.hidden_activation
        z = _activate(kind, a)
    return z, cache


def denoise(model, corrupted):
    """Single forward pass; no cache, no parameter updates."""
    x = numkit.as_matrix(corrupted, "corrupted")
    if x.shape[0] != model.n:
        raise ValueError(f"input has {x.shape[0]} rows, model expects {model.n}")
    z = x
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        kind = model.output_activation if l == last else model.hidden_activation
        z = _activate(kind, w @ z + b[:, None])
    return z


def loss_value(loss, inputs, reconstruction):
    """Objective on the residual R = inputs - reconstruction."""
    x = numkit.as_matrix(inputs, "inputs")
    y = numkit.as_matrix(reconstruction, "reconstruction")
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: inputs {x.shape} vs reconstruction {y.shape}")
    r = x - y
    if loss.kind == "squared_frobenius":
        return float(np.sum(r * r))
    if loss.kind == "l1":
        return float(np.sum(np.abs(r)))
    fro = math.sqrt(np.sum(r * r))
    if fro < RESIDUAL_FLOOR:
        raise DegenerateResidualError(
            f"degenerate residual: Frobenius norm {fro:.2e} below {RESIDUAL_FLOOR:.0e}"
        )
    return float(np.sum(np.abs(r)) / fro)


def loss_gradient(loss, inputs, reconstruction):
    """Gradient of the objective with respect to the reconstruction."""
    x = numkit.as_matrix(inputs, "inputs")
    y = numkit.as_matrix(reconstruction, "reconstruction")
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: inputs {x.shape} vs reconstruction {y.shape}")
    r = x - y
    if loss.kind == "squared_frobenius":
        d_residual = 2.0 * r
    elif loss.kind == "l1":
        d_residual = np.sign(r)  # sign(0) = 0
    else:
        fro = math.sqrt(np.sum(r * r))
        if fro < RESIDUAL_FLOOR:
            raise DegenerateResidualError(
                f"degenerate residual: Frobenius norm {fro:.2e} below {RESIDUAL_FLOOR:.0e}"
            )
        l1 = np.sum(np.abs(r))
        d_residual = np.sign(r) / fro - (l1 / fro**3) * r
    return -d_residual


def backward(model, cache, output_gradient):
    """Parameter gradients via reverse-mode chain rule through the cache."""
    layers = len(model.weights)
    if len(cache) != layers:
        raise ValueError(f"stale cache: {len(cache)} layers cached, model has {layers}")
    g = numkit.as_matrix(output_gradient, "output_gradient")
    if g.shape != cache[-1][1].shape:
        raise ValueError(
            f"stale cache: output gradient {g.shape} vs cached activation {cache[-1][1].shape}"
        )
    grad_w = [None] * layers
    grad_b = [None] * layers
    dz = g
    for l in range(layers - 1, -1, -1):
        z_in, a = cache[l]
        kind = model.output_activation if l == layers - 1 else model.hidden_activation
        da = dz * _activate_prime(kind, a)
        grad_w[l] = da @ z_in.T
        grad_b[l] = da.sum(axis=1)
        if l:
            dz = model.weights[l].T @ da
    return grad_w, grad_b


@dataclass
class AdamState:
    first_moment: list
    second_moment: list
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    learning_rate: float = 1e-4

    @classmethod
    def for_params(cls, params, learning_rate=1e-4):
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            learning_rate=learning_rate,
        )


def adam_step(params, grads, state):
    """One bias-corrected Adam update; parameters are modified in place."""
    if not (len(params) == len(grads) == len(state.first_moment)):
        raise ValueError("params/grads/state length mismatch")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


def _batches(count, batch_size, order):
    for start in range(0, count, batch_size):
        yield order[start : start + batch_size]


def train(model, corrupted, config, snapshot_callback=None):
    """Mini-batch Adam on the corrupted matrix only; the model is updated in place.

    The objective trace holds one entry per epoch (mean of its batch
    objectives).  Batches whose ratio-loss residual degenerates are skipped
    and counted in the report, not raised.
    """
    x = numkit.as_matrix(corrupted, "corrupted")
    if x.shape[0] != model.n:
        raise ValueError(f"data has {x.shape[0]} rows, model expects {model.n}")
    rng = Rng(config.seed)
    params = model.weights + model.biases
    state = AdamState.for_params(params, config.learning_rate)
    count = x.shape[1]
    steps = 0
    skipped = 0
    trace = []
    for epoch in range(config.epochs):
        order = rng.permutation(count) if config.shuffle else np.arange(count)
        epoch_losses = []
        for ids in _batches(count, config.batch_size, order):
            xb = np.ascontiguousarray(x[:, ids])
            recon, cache = forward(model, xb)
            try:
                objective = loss_value(config.loss, xb, recon)
                g_out = loss_gradient(config.loss, xb, recon)
            except DegenerateResidualError:
                skipped += 1
                continue
            grad_w, grad_b = backward(model, cache, g_out)
            adam_step(params, grad_w + grad_b, state)
            epoch_losses.append(objective)
            steps += 1
        trace.append(float(np.mean(epoch_losses)) if epoch_losses else math.nan)
        if snapshot_callback is not None and config.snapshot_every > 0:
            if (epoch + 1) % config.snapshot_every == 0:
                snapshot_callback(epoch + 1, model)
    report = SolveReport(
        iterations=steps,
        objective_trace=trace,
        terminal_residual=trace[-1],
        converged=True,
        trace_stride=max(1, (count + config.batch_size - 1) // config.batch_size),
        skipped_steps=skipped,
    )
    return model, report


def train_linear_ae(data, p_latent, config):
    """Linear autoencoder min |X - B A X|_F^2 by mini-batch Adam; returns (A, B)."""
    x = numkit.as_matrix(data, "data")
    n, count = x.shape
    p_latent = int(p_latent)
    if not 0 < p_latent < n:
        raise ValueError(f"p_latent must be in (0, {n}), got {p_latent}")
    rng = Rng(config.seed)
    bound = math.sqrt(6.0 / (n + p_latent))
    a_map = rng.uniform(-bound, bound, (p_latent, n))
    b_map = rng.uniform(-bound, bound, (n, p_latent))
    params = [a_map, b_map]
    state = AdamState.for_params(params, config.learning_rate)
    for _ in range(config.epochs):
        order = rng.permutation(count) if config.shuffle else np.arange(count)
        for ids in _batches(count, config.batch_size, order):
            xb = np.ascontiguousarray(x[:, ids])
            code = a_map @ xb
            residual = xb - b_map @ code
            grad_b = -2.0 * (residual @ code.T)
            grad_a = -2.0 * (b_map.T @ residual) @ xb.T
            adam_step(params, [grad_a, grad_b], state)
    return a_map, b_map


# --- checkpoints ---------------------------------------------------------------

def save_checkpoint(path, model, seed=0, loss_kind="l1", epoch=0):
    """One file: magic, u32 JSON header length, JSON header with a byte-offset
    index, then one RMAT block per weight and bias in layer order."""
    blocks = []
    for l, w in enumerate(model.weights):
        blocks.append((f"w{l}", numkit.rmat_bytes(w)))
    for l, b in enumerate(model.biases):
        blocks.append((f"b{l}", numkit.rmat_bytes(b.reshape(-1, 1))))
    index = []
    offset = 0
    for name, payload in blocks:
        index.append({"name": name, "offset": offset, "size": len(payload)})
        offset += len(payload)
    header = {
        "format": "rae-checkpoint",
        "version": 1,
        "encoder_dims": model.encoder_dims,
        "decoder_dims": model.decoder_dims,
        "activations": {
            "hidden": model.hidden_activation,
            "output": model.output_activation,
        },
        "seed": int(seed),
        "loss_kind": loss_kind,
        "epoch": int(epoch),
        "blocks": index,
    }
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(encoded)))
        fh.write(encoded)
        for _, payload in blocks:
            fh.write(payload)


def load_checkpoint(path):
    """Returns (model, header dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"bad checkpoint magic in {path}")
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    if header.get("version") != 1:
        raise ValueError(f"unsupported checkpoint version {header.get('version')}")
    base = 8 + hlen
    parts = {}
    for entry in header["blocks"]:
        block, used = numkit.rmat_from_bytes(raw, base + entry["offset"])
        if used != entry["size"]:
            raise ValueError(f"checkpoint block {entry['name']} has inconsistent size")
        parts[entry["name"]] = block
    layer_count = len(header["encoder_dims"]) + len(header["decoder_dims"]) - 2
    weights = [parts[f"w{l}"] for l in range(layer_count)]
    biases = [parts[f"b{l}"].reshape(-1) for l in range(layer_count)]
    model = MlpAutoencoder(
        header["encoder_dims"],
        header["decoder_dims"],
        weights,
        biases,
        header["activations"]["hidden"],
        header["activations"]["output"],
    )
    return model, header

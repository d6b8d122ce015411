"""Dense networks, positional encoding, Adam, and the sparse-latent BRDF net.

Everything trains through the autodiff tape; gradients for every layer are
finite-difference checked in the tests.  Weight blobs serialize to a common
binary container with a versioned JSON header so visibility / indirect /
BRDF fields share one loader.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, as_tensor, concat, parameter, where
from .brdf import R_MIN

BLOB_MAGIC = b"INVSGW01"


@dataclass(frozen=True)
class PositionalEncoding:
    """NeRF-style sinusoidal lift: [x, sin(2^0 pi x), cos(2^0 pi x), ...]."""

    freqs: int
    include_input: bool = True

    def out_dim(self, in_dim: int) -> int:
        return in_dim * (2 * self.freqs + (1 if self.include_input else 0))

    def encode(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        parts = [x] if self.include_input else []
        for f in range(self.freqs):
            arg = (2.0 ** f) * np.pi * x
            parts.append(np.sin(arg))
            parts.append(np.cos(arg))
        return np.concatenate(parts, axis=-1)


def pos_encode(x, enc: PositionalEncoding) -> np.ndarray:
    return enc.encode(x)


class Mlp:
    """Dense ReLU network; linear output (callers apply their own decode)."""

    def __init__(self, sizes, seed=0, dtype=np.float64):
        self.sizes = list(sizes)
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(parameter(rng.uniform(-bound, bound, (fan_in, fan_out)), dtype=dtype))
            self.biases.append(parameter(rng.uniform(-bound, bound, fan_out), dtype=dtype))

    @property
    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def forward(self, x) -> Tensor:
        h = as_tensor(np.asarray(x, dtype=self.dtype) if not isinstance(x, Tensor) else x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if not np.all(np.isfinite(h.data)):
                raise FloatingPointError(f"non-finite activations entering layer {i}")
            h = h @ w + b
            if i != last:
                h = h.relu()
        return h

    __call__ = forward

    def param_arrays(self):
        return [p.data for p in self.params]

    def load_param_arrays(self, arrays):
        for p, a in zip(self.params, arrays):
            if p.data.shape != a.shape:
                raise ValueError("weight blob layer shapes do not match the network")
            p.data = a.astype(self.dtype)

    def checksum(self) -> float:
        return float(sum(np.sum(np.abs(p.data.astype(np.float64))) for p in self.params))


# -- optimizer ---------------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    skipped: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adam_step(state: AdamState, params, grads):
    """One bias-corrected Adam update, in place; non-finite grads skip the step."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if any(not np.all(np.isfinite(g)) for g in grads):
        state.skipped += 1
        return params
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


class Adam:
    """Convenience wrapper stepping a list of parameter Tensors."""

    def __init__(self, params, lr=5e-4):
        self.params = list(params)
        self.state = AdamState(lr=lr)

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adam_step(self.state, [p.data for p in self.params], grads)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# -- losses from the sparse-latent prior --------------------------------------

def kl_sparsity(zbatch, rho: float = 0.05, eps: float = 1e-6) -> Tensor:
    """Bernoulli KL between the target activation rho and per-channel batch means."""
    z = as_tensor(zbatch)
    rho_hat = z.mean(axis=0)
    # clamp channel means away from {0, 1} so the logs stay finite
    inside = (rho_hat.data >= eps) & (rho_hat.data <= 1.0 - eps)
    rho_hat = where(inside, rho_hat, as_tensor(np.clip(rho_hat.data, eps, 1.0 - eps)))
    term = rho * (rho / rho_hat).log() + (1.0 - rho) * ((1.0 - rho) / (1.0 - rho_hat)).log()
    return term.sum()


def smooth_loss(decode_fn, zbatch, noise) -> Tensor:
    """Mean over the batch of the L1 distance between decodes of z and z+noise.

    ``decode_fn`` maps a latent Tensor to a decoded Tensor [N, D]; ``noise``
    is a fixed ndarray drawn by the caller (zero-mean normal).
    """
    z = as_tensor(zbatch)
    base = decode_fn(z)
    shifted = decode_fn(z + as_tensor(np.asarray(noise, dtype=z.data.dtype)))
    return (base - shifted).abs().sum(axis=-1).mean()


class SparseLatentBrdfNet:
    """Encoder-decoder SVBRDF: position -> sparse latent -> (albedo, roughness).

    The encoder bounds the latent to (0, 1) with a sigmoid so the sparsity
    target is meaningful; the decoder bounds albedo to (0, 1) and roughness
    to (R_MIN, 1).
    """

    def __init__(self, latent_dim=32, hidden=512, depth=4, decoder_hidden=128,
                 pe_freqs=10, seed=0, dtype=np.float64):
        self.encoding = PositionalEncoding(pe_freqs)
        enc_in = self.encoding.out_dim(3)
        self.encoder = Mlp([enc_in] + [hidden] * depth + [latent_dim], seed=seed, dtype=dtype)
        self.decoder = Mlp([latent_dim, decoder_hidden, 4], seed=seed + 1, dtype=dtype)
        self.latent_dim = latent_dim
        self.dtype = dtype

    @property
    def params(self):
        return self.encoder.params + self.decoder.params

    def encode(self, x: np.ndarray) -> Tensor:
        return self.encoder.forward(self.encoding.encode(np.asarray(x, dtype=self.dtype))).sigmoid()

    def decode(self, z: Tensor):
        out = self.decoder.forward(z)
        albedo = out[:, 0:3].sigmoid()
        roughness = out[:, 3].sigmoid() * (1.0 - R_MIN) + R_MIN
        return albedo, roughness

    def decode_raw(self, z: Tensor) -> Tensor:
        """Concatenated (albedo, roughness) decode used by the smoothness loss."""
        a, r = self.decode(z)
        return concat([a, r.reshape(-1, 1)], axis=1)

    def forward(self, x: np.ndarray):
        z = self.encode(x)
        albedo, roughness = self.decode(z)
        return albedo, roughness, z


class DirectBrdfNet:
    """Ablation variant: position maps straight to (albedo, roughness)."""

    def __init__(self, hidden=512, depth=4, pe_freqs=10, seed=0, dtype=np.float64):
        self.encoding = PositionalEncoding(pe_freqs)
        self.net = Mlp([self.encoding.out_dim(3)] + [hidden] * depth + [4], seed=seed, dtype=dtype)
        self.dtype = dtype

    @property
    def params(self):
        return self.net.params

    def forward(self, x: np.ndarray):
        out = self.net.forward(self.encoding.encode(np.asarray(x, dtype=self.dtype)))
        albedo = out[:, 0:3].sigmoid()
        roughness = out[:, 3].sigmoid() * (1.0 - R_MIN) + R_MIN
        return albedo, roughness, None


# -- weight blob container -----------------------------------------------------

def save_blob(path, type_tag: str, meta: dict, arrays):
    """Versioned binary container: magic, JSON header, raw array bytes."""
    header = {
        "type": type_tag,
        "meta": meta,
        "arrays": [{"shape": list(a.shape), "dtype": str(a.dtype)} for a in arrays],
    }
    hj = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(BLOB_MAGIC)
        f.write(struct.pack("<I", len(hj)))
        f.write(hj)
        for a in arrays:
            f.write(np.ascontiguousarray(a).tobytes())


def load_blob(path, expect_type=None):
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != BLOB_MAGIC:
            raise ValueError(f"{path}: not a weight blob (bad magic at offset 0)")
        (hlen,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(hlen).decode())
        if expect_type is not None and header["type"] != expect_type:
            raise ValueError(f"{path}: blob type {header['type']!r}, expected {expect_type!r}")
        arrays = []
        for spec in header["arrays"]:
            n = int(np.prod(spec["shape"])) if spec["shape"] else 1
            dt = np.dtype(spec["dtype"])
            buf = f.read(n * dt.itemsize)
            arrays.append(np.frombuffer(buf, dtype=dt).reshape(spec["shape"]).copy())
    return header["type"], header["meta"], arrays

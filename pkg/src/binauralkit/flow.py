"""Toy-scale conditional flow matching: linear interpolation paths, a small
velocity-field perceptron per channel with exact reverse-mode gradients, the
dual-channel training objective, Euler sampling, conditioning assembly and a
weight checkpoint format."""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

CHECKPOINT_MAGIC = b"SV2A"
CHECKPOINT_VERSION = 1
DEFAULT_EMBED_DIM = 8
DEFAULT_LATENT_RATE = 31.25

_PARAM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")


def timestep_embedding(t, dim):
    """Fourier encoding of a timestep in [0, 1]: interleaved
    (sin(2 pi 2^k t), cos(2 pi 2^k t)) pairs for k = 0 .. dim/2 - 1."""
    if dim % 2 != 0:
        raise ValueError("embedding dimension must be even")
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    freqs = 2.0 * np.pi * (2.0 ** np.arange(dim // 2))
    angles = t[:, None] * freqs[None, :]
    out = np.empty((len(t), dim))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out[0] if scalar else out


@dataclass(frozen=True)
class ConditioningBundle:
    """Global/frame conditioning inputs: clip-level text and visual vectors,
    per-frame sync vectors and an optional spatial feature stream."""

    f_text: np.ndarray
    f_vis: np.ndarray
    f_sync: np.ndarray = None
    s_sound: object = None

    def __post_init__(self):
        object.__setattr__(self, "f_text", np.asarray(self.f_text, dtype=np.float64))
        object.__setattr__(self, "f_vis", np.asarray(self.f_vis, dtype=np.float64))
        if self.f_sync is not None:
            f_sync = np.asarray(self.f_sync, dtype=np.float64)
            if f_sync.ndim != 2:
                raise ValueError("f_sync must be T x d")
            object.__setattr__(self, "f_sync", f_sync)


def assemble_global_cond(bundle, t, embed_dim=DEFAULT_EMBED_DIM):
    """Clip-level condition vector: f_text then f_vis then e(t)."""
    return np.concatenate([bundle.f_text, bundle.f_vis, timestep_embedding(t, embed_dim)])


def assemble_frame_cond(bundle, t, embed_dim=DEFAULT_EMBED_DIM):
    """Per-frame condition matrix: each row is f_sync[k] followed by the
    shared clip-level vector."""
    if bundle.f_sync is None:
        raise ValueError("bundle has no per-frame sync features")
    cg = assemble_global_cond(bundle, t, embed_dim)
    return np.concatenate(
        [bundle.f_sync, np.broadcast_to(cg, (len(bundle.f_sync), len(cg)))], axis=1
    )


def upsample_linear(frames, n_out):
    """Endpoint-anchored linear interpolation of a T x d sequence to n_out
    frames: positions are linspace(0, T-1, n_out)."""
    frames = np.asarray(frames, dtype=np.float64)
    t = len(frames)
    if t == 0:
        raise ValueError("cannot upsample an empty sequence")
    if n_out < 1:
        raise ValueError("target length must be >= 1")
    if t == 1:
        return np.repeat(frames, n_out, axis=0)
    pos = np.linspace(0.0, t - 1.0, n_out)
    out = np.empty((n_out, frames.shape[1]))
    for j in range(frames.shape[1]):
        out[:, j] = np.interp(pos, np.arange(t), frames[:, j])
    return out


class SpatialProjection:
    """Learnable map from raw spatial features to a per-frame latent stream:
    temporal convolution (kernel 3, edge-padded) -> 2-layer perceptron ->
    per-frame layer normalization with learned scale and shift."""

    def __init__(self, in_dim=5, hidden=32, out_dim=16, kernel=3, rng_seed=0):
        rng = np.random.default_rng(rng_seed)
        self.kernel = kernel
        self.conv_w = rng.normal(0.0, 1.0 / np.sqrt(in_dim * kernel), (kernel, in_dim, hidden))
        self.conv_b = np.zeros(hidden)
        self.w1 = rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, hidden))
        self.b1 = np.zeros(hidden)
        self.w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, out_dim))
        self.b2 = np.zeros(out_dim)
        self.ln_scale = np.ones(out_dim)
        self.ln_shift = np.zeros(out_dim)
        self.ln_eps = 1e-5

    def apply(self, frames):
        """frames: T x in_dim -> T x out_dim."""
        frames = np.asarray(frames, dtype=np.float64)
        half = self.kernel // 2
        padded = np.pad(frames, ((half, half), (0, 0)), mode="edge")
        conv = np.zeros((len(frames), self.conv_w.shape[2]))
        for k in range(self.kernel):
            conv += padded[k : k + len(frames)] @ self.conv_w[k]
        conv += self.conv_b
        hidden = np.tanh(conv @ self.w1 + self.b1)
        pre = hidden @ self.w2 + self.b2
        mean = pre.mean(axis=1, keepdims=True)
        var = pre.var(axis=1, keepdims=True)
        normed = (pre - mean) / np.sqrt(var + self.ln_eps)
        return normed * self.ln_scale + self.ln_shift


def spatial_condition(s_sound, target_rate=DEFAULT_LATENT_RATE, proj=None):
    """Upsample a spatial feature sequence to the latent frame rate and
    project it through a SpatialProjection."""
    if len(s_sound.features) == 0:
        raise ValueError("empty spatial feature sequence")
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    proj = proj or SpatialProjection()
    n_out = max(1, int(round(len(s_sound.features) * target_rate / s_sound.frame_rate)))
    return proj.apply(upsample_linear(s_sound.features, n_out))


def interpolate(x0, x1, t):
    """x_t = (1 - t) x0 + t x1, elementwise."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ValueError("shape mismatch between endpoints")
    t = np.asarray(t, dtype=np.float64)
    if t.ndim == 1 and x0.ndim == 2:
        t = t[:, None]
    return (1.0 - t) * x0 + t * x1


def target_velocity(x0, x1):
    """Ground-truth velocity of the linear path: x1 - x0 (t-independent)."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    if x0.shape != x1.shape:
        raise ValueError("shape mismatch between endpoints")
    return x1 - x0


class VelocityFieldNet:
    """Two-hidden-layer tanh perceptron approximating v(x_t, t, C).

    Input is x_t concatenated with the timestep embedding and (optionally) a
    condition vector; output has the latent dimension.
    """

    def __init__(self, latent_dim, cond_dim=0, hidden_width=64,
                 embed_dim=DEFAULT_EMBED_DIM, rng_seed=0):
        self.latent_dim = latent_dim
        self.cond_dim = cond_dim
        self.hidden_width = hidden_width
        self.embed_dim = embed_dim
        in_dim = latent_dim + embed_dim + cond_dim
        rng = np.random.default_rng(rng_seed)
        self.w1 = rng.normal(0.0, 1.0 / np.sqrt(in_dim), (in_dim, hidden_width))
        self.b1 = np.zeros(hidden_width)
        self.w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden_width), (hidden_width, hidden_width))
        self.b2 = np.zeros(hidden_width)
        self.w3 = rng.normal(0.0, 1.0 / np.sqrt(hidden_width), (hidden_width, latent_dim))
        self.b3 = np.zeros(latent_dim)

    def _inputs(self, x, t, cond):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (len(x),))
        parts = [x, timestep_embedding(t, self.embed_dim)]
        if self.cond_dim:
            if cond is None:
                raise ValueError("net expects a condition vector")
            cond = np.atleast_2d(np.asarray(cond, dtype=np.float64))
            if cond.shape != (len(x), self.cond_dim):
                cond = np.broadcast_to(cond, (len(x), self.cond_dim))
            parts.append(cond)
        return np.concatenate(parts, axis=1)

    def _forward_cached(self, x, t, cond):
        z = self._inputs(x, t, cond)
        a1 = np.tanh(z @ self.w1 + self.b1)
        a2 = np.tanh(a1 @ self.w2 + self.b2)
        v = a2 @ self.w3 + self.b3
        return z, a1, a2, v

    def forward(self, x, t, cond=None):
        """Velocity for a batch (B x d) or a single vector."""
        single = np.asarray(x).ndim == 1
        v = self._forward_cached(x, t, cond)[3]
        return v[0] if single else v

    def parameters(self):
        return {name: getattr(self, name) for name in _PARAM_NAMES}

    def set_parameters(self, params):
        for name in _PARAM_NAMES:
            setattr(self, name, np.array(params[name], dtype=np.float64))


def cfm_loss(net, x0, x1, t, cond=None):
    """Mean over the batch of ||v(x_t, t, C) - (x1 - x0)||^2."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
    if len(x0) == 0:
        raise ValueError("empty batch")
    xt = interpolate(x0, x1, np.asarray(t, dtype=np.float64))
    v = net.forward(xt, t, cond)
    diff = v - target_velocity(x0, x1)
    return float(np.mean(np.sum(diff**2, axis=1)))


def backward(net, x0, x1, t, cond=None):
    """Exact reverse-mode gradients of cfm_loss w.r.t. every net parameter."""
    x0 = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    x1 = np.atleast_2d(np.asarray(x1, dtype=np.float64))
    if len(x0) == 0:
        raise ValueError("empty batch")
    xt = interpolate(x0, x1, np.asarray(t, dtype=np.float64))
    z, a1, a2, v = net._forward_cached(xt, t, cond)
    b = len(x0)
    dv = 2.0 * (v - target_velocity(x0, x1)) / b
    grads = {"w3": a2.T @ dv, "b3": dv.sum(axis=0)}
    dh2 = (dv @ net.w3.T) * (1.0 - a2**2)
    grads["w2"] = a1.T @ dh2
    grads["b2"] = dh2.sum(axis=0)
    dh1 = (dh2 @ net.w2.T) * (1.0 - a1**2)
    grads["w1"] = z.T @ dh1
    grads["b1"] = dh1.sum(axis=0)
    return grads


def binaural_cfm_loss(net_l, net_r, x0_l, x1_l, x0_r, x1_r, t, cond=None):
    """Dual-channel objective: the sum of the per-channel losses, with the
    timestep and condition shared across channels."""
    if np.shape(x0_l)[0] != np.shape(x0_r)[0]:
        raise ValueError("left/right batches must be paired")
    return cfm_loss(net_l, x0_l, x1_l, t, cond) + cfm_loss(net_r, x0_r, x1_r, t, cond)


class AdamState:
    """Adaptive-moment gradient descent state for one parameter set."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def update(self, params, grads, learning_rate):
        self.step_count += 1
        bias1 = 1.0 - self.beta1**self.step_count
        bias2 = 1.0 - self.beta2**self.step_count
        out = {}
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g**2
            m_hat = self.m[k] / bias1
            v_hat = self.v[k] / bias2
            out[k] = p - learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)
        return out


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    steps: int = 2000
    rng_seed: int = 0
    hidden_width: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    shared_weights: bool = False
    divergence_limit: float = 1e6

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or self.steps < 0:
            raise ValueError("invalid training hyperparameters")


@dataclass(frozen=True)
class FlowDataset:
    """Paired per-channel targets plus an optional shared condition matrix.

    When x0_left/x0_right are stored, items keep a fixed noise pairing across
    epochs; otherwise training draws fresh standard-normal noise per step.
    """

    x1_left: np.ndarray
    x1_right: np.ndarray
    cond: np.ndarray = None
    x0_left: np.ndarray = None
    x0_right: np.ndarray = None

    def __post_init__(self):
        x1_left = np.atleast_2d(np.asarray(self.x1_left, dtype=np.float64))
        x1_right = np.atleast_2d(np.asarray(self.x1_right, dtype=np.float64))
        if x1_left.shape != x1_right.shape:
            raise ValueError("channel targets must be paired")
        object.__setattr__(self, "x1_left", x1_left)
        object.__setattr__(self, "x1_right", x1_right)
        if self.cond is not None:
            cond = np.atleast_2d(np.asarray(self.cond, dtype=np.float64))
            if len(cond) != len(x1_left):
                raise ValueError("condition rows must match targets")
            object.__setattr__(self, "cond", cond)
        if (self.x0_left is None) != (self.x0_right is None):
            raise ValueError("stored noise must cover both channels")
        if self.x0_left is not None:
            x0_left = np.atleast_2d(np.asarray(self.x0_left, dtype=np.float64))
            x0_right = np.atleast_2d(np.asarray(self.x0_right, dtype=np.float64))
            if x0_left.shape != x1_left.shape or x0_right.shape != x1_right.shape:
                raise ValueError("stored noise must match target shapes")
            object.__setattr__(self, "x0_left", x0_left)
            object.__setattr__(self, "x0_right", x0_right)

    def __len__(self):
        return len(self.x1_left)

    @property
    def latent_dim(self):
        return self.x1_left.shape[1]


def constant_target_dataset(n_items, latent_dim, target, rng_seed=0):
    """Toy translation task: stored noise x0 ~ N(0, I) paired with
    x1 = x0 + target, so the exact velocity field is the constant target."""
    rng = np.random.default_rng(rng_seed)
    x0_l = rng.standard_normal((n_items, latent_dim))
    x0_r = rng.standard_normal((n_items, latent_dim))
    return FlowDataset(
        x1_left=x0_l + target,
        x1_right=x0_r + target,
        x0_left=x0_l,
        x0_right=x0_r,
    )


def make_nets(latent_dim, cond_dim, cfg):
    """Left/right velocity nets: independent weights by default, or one
    shared net with a channel-flag condition input when cfg.shared_weights."""
    extra = 1 if cfg.shared_weights else 0
    net_l = VelocityFieldNet(
        latent_dim, cond_dim + extra, cfg.hidden_width, rng_seed=cfg.rng_seed
    )
    if cfg.shared_weights:
        return net_l, net_l
    net_r = VelocityFieldNet(
        latent_dim, cond_dim, cfg.hidden_width, rng_seed=cfg.rng_seed + 1
    )
    return net_l, net_r


def _channel_cond(cond, flag, shared, batch):
    if not shared:
        return cond
    flag_col = np.full((batch, 1), flag)
    return flag_col if cond is None else np.concatenate([cond, flag_col], axis=1)


def train(net_l, net_r, dataset, cfg):
    """Single-threaded, seed-deterministic dual-channel training loop.

    Each step draws a batch of target pairs, fresh standard-normal noise per
    channel and one shared timestep per pair, then applies one adaptive-moment
    update per net. Aborts if the loss exceeds cfg.divergence_limit.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    shared = net_l is net_r
    adam_l = AdamState(net_l.parameters(), cfg.beta1, cfg.beta2, cfg.adam_eps)
    adam_r = adam_l if shared else AdamState(net_r.parameters(), cfg.beta1, cfg.beta2, cfg.adam_eps)
    trace = np.empty(cfg.steps)
    for step in range(cfg.steps):
        idx = rng.integers(0, len(dataset), cfg.batch_size)
        x1_l, x1_r = dataset.x1_left[idx], dataset.x1_right[idx]
        cond = None if dataset.cond is None else dataset.cond[idx]
        if dataset.x0_left is not None:
            x0_l, x0_r = dataset.x0_left[idx], dataset.x0_right[idx]
        else:
            x0_l = rng.standard_normal(x1_l.shape)
            x0_r = rng.standard_normal(x1_r.shape)
        t = rng.uniform(0.0, 1.0, cfg.batch_size)
        cond_l = _channel_cond(cond, 1.0, shared, cfg.batch_size)
        cond_r = _channel_cond(cond, -1.0, shared, cfg.batch_size)

        loss = cfm_loss(net_l, x0_l, x1_l, t, cond_l) + cfm_loss(net_r, x0_r, x1_r, t, cond_r)
        if not np.isfinite(loss) or loss > cfg.divergence_limit:
            raise RuntimeError(f"training diverged at step {step}: loss {loss}")
        trace[step] = loss

        grads_l = backward(net_l, x0_l, x1_l, t, cond_l)
        grads_r = backward(net_r, x0_r, x1_r, t, cond_r)
        if shared:
            grads = {k: grads_l[k] + grads_r[k] for k in grads_l}
            net_l.set_parameters(adam_l.update(net_l.parameters(), grads, cfg.learning_rate))
        else:
            net_l.set_parameters(adam_l.update(net_l.parameters(), grads_l, cfg.learning_rate))
            net_r.set_parameters(adam_r.update(net_r.parameters(), grads_r, cfg.learning_rate))
    return trace


def sample_euler(net, x0, cond=None, steps=32):
    """Integrate the velocity field from t=0 to 1 with fixed-step Euler."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.array(x0, dtype=np.float64)
    for k in range(steps):
        x = x + net.forward(x, k / steps, cond) / steps
        if not np.all(np.isfinite(x)):
            raise RuntimeError(f"non-finite state at Euler step {k}")
    return x


def save_checkpoint(path, nets):
    """Write net weights: magic, format version, per-net dims and parameter
    arrays as little-endian float64."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(nets)))
        for net in nets:
            fh.write(
                struct.pack(
                    "<IIII", net.latent_dim, net.cond_dim, net.hidden_width, net.embed_dim
                )
            )
            for name in _PARAM_NAMES:
                arr = np.ascontiguousarray(getattr(net, name), dtype="<f8")
                fh.write(arr.tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        if fh.read(4) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a velocity-field checkpoint")
        version, count = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        nets = []
        for _ in range(count):
            latent_dim, cond_dim, hidden, embed_dim = struct.unpack("<IIII", fh.read(16))
            net = VelocityFieldNet(latent_dim, cond_dim, hidden, embed_dim)
            params = {}
            in_dim = latent_dim + embed_dim + cond_dim
            shapes = {
                "w1": (in_dim, hidden), "b1": (hidden,),
                "w2": (hidden, hidden), "b2": (hidden,),
                "w3": (hidden, latent_dim), "b3": (latent_dim,),
            }
            for name in _PARAM_NAMES:
                shape = shapes[name]
                n = int(np.prod(shape))
                params[name] = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape)
            net.set_parameters(params)
            nets.append(net)
    return nets


def save_loss_trace(path, trace):
    with open(path, "w", newline="") as fh:
        fh.write("step,loss\n")
        for step, loss in enumerate(trace):
            fh.write(f"{step},{loss:.12g}\n")

"""Forward-only spatial-frequency aggregation transformer (numpy, float64).

Feature maps are ``(C, H, W)`` arrays.  Weights are random, drawn from a
seeded generator; the network is a structural exercise and carries no
learned prior.

Attention treats each channel as a token: for a head of width ``d`` the
attention matrix is ``d x d`` and the ``H*W`` spatial samples form the
feature axis.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import erf

from .cube import HsiCube, OtfStack, ShapeError

AUX_OTF_PLANES = 6
AUX_PLANES = 1 + AUX_OTF_PLANES
LN_EPS = 1e-5
FFN_EXPANSION = 2


@dataclass(frozen=True)
class SfatConfig:
    channels: int
    levels: int = 3
    heads: tuple = (1, 2, 4)
    beta: float = 1.0
    seed: int = 0
    bands: int | None = None  # input/output bands; defaults to ``channels``
    position_embedding: bool = True

    def __post_init__(self):
        object.__setattr__(self, "heads", tuple(int(h) for h in self.heads))
        if self.bands is None:
            object.__setattr__(self, "bands", self.channels)
        if self.channels < 1 or self.bands < 1:
            raise ValueError("SfatConfig: channels and bands must be >= 1")
        if self.levels < 1:
            raise ValueError(f"SfatConfig: levels must be >= 1, got {self.levels}")
        if len(self.heads) != self.levels:
            raise ValueError(f"SfatConfig: need {self.levels} head counts, got {len(self.heads)}")
        for level, h in enumerate(self.heads):
            width = self.level_channels(level)
            if h < 1 or width % h:
                raise ValueError(
                    f"SfatConfig: level {level} width {width} not divisible by {h} heads"
                )

    def level_channels(self, level: int) -> int:
        return self.channels * 2**level


@dataclass(frozen=True, eq=False)
class BlockWeights:
    """One SFA-AB block: attention, frequency branch, FFN and two layer norms."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    alpha: np.ndarray  # per head
    pe1: np.ndarray  # depthwise 3x3, (C, 3, 3)
    pe2: np.ndarray
    theta1: np.ndarray  # pointwise, (C, C)
    theta1_b: np.ndarray
    theta2: np.ndarray
    theta2_b: np.ndarray
    beta: float
    ln1: tuple
    ln2: tuple
    ffn1: np.ndarray  # (E, C)
    ffn_dw: np.ndarray  # (E, 3, 3)
    ffn2: np.ndarray  # (C, E)


@dataclass(frozen=True, eq=False)
class SfatWeights:
    embed: tuple  # conv3x3 (C, bands + 7, 3, 3), bias
    encoder: tuple  # BlockWeights per level except the last
    down: tuple  # conv4x4 stride 2, (2C, C, 4, 4), bias
    bottleneck: BlockWeights
    up: tuple  # deconv2x2 stride 2, (2C, C, 2, 2), bias
    fuse: tuple  # 1x1, (C, 2C), bias
    decoder: tuple
    head: tuple  # conv3x3 (bands, C, 3, 3), bias


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    a = rng.uniform(-bound, bound, size=shape)
    a.setflags(write=False)
    return a


def _block(rng, c, heads, beta) -> BlockWeights:
    e = FFN_EXPANSION * c
    ones, zeros = np.ones(c), np.zeros(c)
    return BlockWeights(
        wq=_uniform(rng, (c, c), c),
        wk=_uniform(rng, (c, c), c),
        wv=_uniform(rng, (c, c), c),
        wo=_uniform(rng, (c, c), c),
        bo=_uniform(rng, (c,), c),
        alpha=np.ones(heads),
        pe1=_uniform(rng, (c, 3, 3), 9),
        pe2=_uniform(rng, (c, 3, 3), 9),
        theta1=_uniform(rng, (c, c), c),
        theta1_b=_uniform(rng, (c,), c),
        theta2=_uniform(rng, (c, c), c),
        theta2_b=_uniform(rng, (c,), c),
        beta=float(beta),
        ln1=(ones, zeros),
        ln2=(ones, zeros),
        ffn1=_uniform(rng, (e, c), c),
        ffn_dw=_uniform(rng, (e, 3, 3), 9),
        ffn2=_uniform(rng, (c, e), e),
    )


@functools.lru_cache(maxsize=16)
def build_weights(config: SfatConfig) -> SfatWeights:
    rng = np.random.default_rng(config.seed)
    c0 = config.channels
    cin = config.bands + AUX_PLANES
    embed = (_uniform(rng, (c0, cin, 3, 3), 9 * cin), _uniform(rng, (c0,), 9 * cin))
    encoder, down, up, fuse, decoder = [], [], [], [], []
    for level in range(config.levels - 1):
        c = config.level_channels(level)
        encoder.append(_block(rng, c, config.heads[level], config.beta))
        down.append((_uniform(rng, (2 * c, c, 4, 4), 16 * c), _uniform(rng, (2 * c,), 16 * c)))
    last = config.levels - 1
    bottleneck = _block(rng, config.level_channels(last), config.heads[last], config.beta)
    for level in reversed(range(config.levels - 1)):
        c = config.level_channels(level)
        up.append((_uniform(rng, (2 * c, c, 2, 2), 2 * c), _uniform(rng, (c,), 2 * c)))
        fuse.append((_uniform(rng, (c, 2 * c), 2 * c), _uniform(rng, (c,), 2 * c)))
        decoder.append(_block(rng, c, config.heads[level], config.beta))
    head = (_uniform(rng, (config.bands, c0, 3, 3), 9 * c0), _uniform(rng, (config.bands,), 9 * c0))
    return SfatWeights(embed, tuple(encoder), tuple(down), bottleneck, tuple(up), tuple(fuse),
                       tuple(decoder), head)


# -- primitives ---------------------------------------------------------------


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def layer_norm(x, gain, bias):
    """Normalise each spatial position over channels."""
    mu = x.mean(axis=0, keepdims=True)
    var = x.var(axis=0, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * gain[:, None, None] + bias[:, None, None]


def pointwise(x, w, b=None):
    out = np.einsum("oi,ihw->ohw", w, x)
    if b is not None:
        out = out + b[:, None, None]
    return out


def conv2d(x, w, b=None, stride=1, pad=0):
    """Zero-padded cross-correlation, ``w`` of shape (Cout, Cin, kh, kw)."""
    _, kh, kw = w.shape[1:]
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    ho = (xp.shape[1] - kh) // stride + 1
    wo = (xp.shape[2] - kw) // stride + 1
    out = np.zeros((w.shape[0], ho, wo))
    for a in range(kh):
        for c in range(kw):
            patch = xp[:, a: a + stride * (ho - 1) + 1: stride, c: c + stride * (wo - 1) + 1: stride]
            out += np.einsum("oi,ihw->ohw", w[:, :, a, c], patch)
    if b is not None:
        out += b[:, None, None]
    return out


def depthwise3x3(x, w):
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1)))
    _, h, wd = x.shape
    out = np.zeros_like(x)
    for a in range(3):
        for c in range(3):
            out += w[:, a, c, None, None] * xp[:, a: a + h, c: c + wd]
    return out


def deconv2x2(x, w, b):
    """Stride-2 transposed convolution, ``w`` of shape (Cin, Cout, 2, 2)."""
    cin, h, wd = x.shape
    out = np.zeros((w.shape[1], 2 * h, 2 * wd))
    for a in range(2):
        for c in range(2):
            out[:, a::2, c::2] = np.einsum("io,ihw->ohw", w[:, :, a, c], x)
    return out + b[:, None, None]


def _interp_matrix(n_in, n_out):
    # half-pixel centres, edges clamped
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = min(max((i + 0.5) * scale - 0.5, 0.0), n_in - 1)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        t = src - lo
        m[i, lo] += 1.0 - t
        m[i, hi] += t
    return m


def bilinear_resize(x, height, width):
    ry = _interp_matrix(x.shape[-2], height)
    rx = _interp_matrix(x.shape[-1], width)
    return np.einsum("yh,chw,xw->cyx", ry, x, rx)


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


# -- attention and frequency branch ------------------------------------------


def _l2_normalize(a, axis):
    return a / np.maximum(np.linalg.norm(a, axis=axis, keepdims=True), 1e-12)


def attention_maps(x, w: BlockWeights, heads: int):
    """Per-head ``d x d`` attention matrices; row ``q`` holds weights over keys."""
    c, h, wd = x.shape
    if c % heads:
        raise ShapeError(f"{c} channels not divisible by {heads} heads")
    if len(w.alpha) != heads:
        raise ShapeError(f"block has {len(w.alpha)} head scales, {heads} heads requested")
    tokens = x.reshape(c, h * wd).T
    q = _l2_normalize(tokens @ w.wq, axis=0)
    k = _l2_normalize(tokens @ w.wk, axis=0)
    d = c // heads
    maps = []
    for j in range(heads):
        sl = slice(j * d, (j + 1) * d)
        logits = w.alpha[j] * (q[:, sl].T @ k[:, sl])  # (query, key)
        maps.append(softmax(logits, axis=-1))
    return maps


def ss_msa(x, w: BlockWeights, heads: int, position_embedding=True):
    c, h, wd = x.shape
    maps = attention_maps(x, w, heads)
    v = x.reshape(c, h * wd).T @ w.wv  # (HW, C)
    d = c // heads
    mixed = np.concatenate([v[:, j * d:(j + 1) * d] @ maps[j].T for j in range(heads)], axis=1)
    out = (mixed @ w.wo + w.bo).T.reshape(c, h, wd)
    if position_embedding:
        vmap = v.T.reshape(c, h, wd)
        out = out + depthwise3x3(gelu(depthwise3x3(vmap, w.pe1)), w.pe2)
    return out


def fs_amplitude(x, w: BlockWeights):
    """Orthonormal real 2-D spectrum amplitude passed through f_theta, at
    half-spectrum resolution ``(H, W // 2 + 1)``."""
    amp = np.abs(np.fft.rfft2(x, axes=(-2, -1), norm="ortho"))
    return pointwise(gelu(pointwise(amp, w.theta1, w.theta1_b)), w.theta2, w.theta2_b)


def fs_branch(x, w: BlockWeights):
    _, h, wd = x.shape
    return bilinear_resize(fs_amplitude(x, w), h, wd)


def sfa_msa(x, w: BlockWeights, heads: int, beta=None, position_embedding=True):
    beta = w.beta if beta is None else beta
    attn = ss_msa(x, w, heads, position_embedding)
    if beta == 0:
        return attn
    return attn + beta * fs_branch(x, w)


def ffn(x, w: BlockWeights):
    hidden = gelu(pointwise(x, w.ffn1))
    return pointwise(gelu(depthwise3x3(hidden, w.ffn_dw)), w.ffn2)


def sfa_block(x, w: BlockWeights, heads: int, position_embedding=True):
    x = x + sfa_msa(layer_norm(x, *w.ln1), w, heads, position_embedding=position_embedding)
    return x + ffn(layer_norm(x, *w.ln2), w)


# -- full network -------------------------------------------------------------


def band_groups(bands: int, groups: int = AUX_OTF_PLANES):
    out = []
    for g in range(groups):
        lo = (g * bands) // groups
        hi = max(lo + 1, ((g + 1) * bands) // groups)
        out.append(range(lo, hi))
    return out


def auxiliary_planes(chi: float, otf: OtfStack | None, height: int, width: int):
    """One constant chi plane plus six centred mean-|OTF| planes."""
    planes = [np.full((height, width), float(chi))]
    if otf is None:
        planes.extend(np.zeros((height, width)) for _ in range(AUX_OTF_PLANES))
    else:
        mag = np.abs(otf.data)
        for group in band_groups(mag.shape[0]):
            plane = np.fft.fftshift(mag[list(group)].mean(axis=0))
            if plane.shape != (height, width):
                plane = bilinear_resize(plane[None], height, width)[0]
            planes.append(plane)
    return np.stack(planes)


def _record(trace, name, x):
    if trace is not None:
        trace.append((name, x.shape))


def sfat_forward(cube: HsiCube, chi: float, config: SfatConfig, weights: SfatWeights,
                 otf: OtfStack | None = None, trace=None) -> HsiCube:
    """Residual U-shaped pass: returns ``I + R``.

    ``trace``, when a list, receives ``(stage name, shape)`` pairs.
    """
    if not chi > 0:
        raise ValueError(f"chi must be > 0, got {chi}")
    bands, h, w = cube.shape
    if bands != config.bands:
        raise ShapeError(f"cube has {bands} bands, network expects {config.bands}")
    factor = 2 ** (config.levels - 1)
    if h % factor or w % factor:
        raise ShapeError(f"spatial dims {h}x{w} not divisible by {factor}")
    pe = config.position_embedding
    x = np.concatenate([cube.data, auxiliary_planes(chi, otf, h, w)])
    _record(trace, "input", x)
    x = conv2d(x, *weights.embed, pad=1)
    _record(trace, "embed", x)
    skips = []
    for level in range(config.levels - 1):
        x = sfa_block(x, weights.encoder[level], config.heads[level], pe)
        skips.append(x)
        _record(trace, f"encoder{level}", x)
        x = conv2d(x, *weights.down[level], stride=2, pad=1)
        _record(trace, f"down{level}", x)
    x = sfa_block(x, weights.bottleneck, config.heads[-1], pe)
    _record(trace, "bottleneck", x)
    for i, level in enumerate(reversed(range(config.levels - 1))):
        x = deconv2x2(x, *weights.up[i])
        _record(trace, f"up{level}", x)
        x = pointwise(np.concatenate([x, skips[level]]), *weights.fuse[i])
        x = sfa_block(x, weights.decoder[i], config.heads[level], pe)
        _record(trace, f"decoder{level}", x)
    residual = conv2d(x, *weights.head, pad=1)
    _record(trace, "residual", residual)
    return HsiCube(cube.data + residual)


def without_head(weights: SfatWeights) -> SfatWeights:
    """Copy of ``weights`` whose output convolution is all zeros."""
    w, b = weights.head
    return replace(weights, head=(np.zeros_like(w), np.zeros_like(b)))

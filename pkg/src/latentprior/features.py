"""Fixed random feature embeddings.

A FeatureNet is a seeded two-layer leaky-ReLU network mapping flat images
to a k-vector. Instances stand in for the pretrained embeddings the full
pipeline would use: a perceptual loss proxy during inversion, the Frechet
feature map, and the identity embedding. Each role gets its own fixed seed;
weights are never trained.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .seeding import STREAM_FEATURES, rng_from

SLOPE = 0.2
# Fixed seed of the reconstruction-loss proxy network; part of the loss
# definition, not a tunable.
PROXY_SEED = 101
DEFAULT_HIDDEN = 128
DEFAULT_FEATURES = 64


@dataclass(frozen=True)
class FeatureNet:
    w1: np.ndarray  # (hidden, n_in)
    b1: np.ndarray
    w2: np.ndarray  # (k, hidden)
    b2: np.ndarray

    @property
    def n_in(self) -> int:
        return self.w1.shape[1]

    @property
    def n_out(self) -> int:
        return self.w2.shape[0]


def init_feature_net(seed: int, n_in: int, hidden: int = DEFAULT_HIDDEN,
                     k: int = DEFAULT_FEATURES) -> FeatureNet:
    rng = rng_from(seed, STREAM_FEATURES)
    w1 = rng.standard_normal((hidden, n_in)) * np.sqrt(2.0 / n_in)
    b1 = rng.standard_normal(hidden) * 0.1
    w2 = rng.standard_normal((k, hidden)) * np.sqrt(2.0 / hidden)
    b2 = rng.standard_normal(k) * 0.1
    return FeatureNet(w1, b1, w2, b2)


@lru_cache(maxsize=8)
def proxy_net(n_in: int) -> FeatureNet:
    """The loss-proxy network for a given image size (cached, fixed seed)."""
    return init_feature_net(PROXY_SEED, n_in)


def embed(net: FeatureNet, images) -> np.ndarray:
    """Embed (n, n_in) images (or one flat image) into feature space."""
    arr = np.asarray(images, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != net.n_in:
        raise ValueError(f"expected (n, {net.n_in}) images, got {arr.shape}")
    h_pre = arr @ net.w1.T + net.b1
    h = np.where(h_pre >= 0, h_pre, SLOPE * h_pre)
    f_pre = h @ net.w2.T + net.b2
    f = np.where(f_pre >= 0, f_pre, SLOPE * f_pre)
    return f[0] if single else f


def embed_vjp(net: FeatureNet, image, feature_cotangent) -> np.ndarray:
    """Gradient of <features, cotangent> with respect to one flat image."""
    x = np.asarray(image, dtype=np.float64)
    cot = np.asarray(feature_cotangent, dtype=np.float64)
    if x.shape != (net.n_in,) or cot.shape != (net.n_out,):
        raise ValueError("image / cotangent shape mismatch")
    h_pre = net.w1 @ x + net.b1
    h = np.where(h_pre >= 0, h_pre, SLOPE * h_pre)
    f_pre = net.w2 @ h + net.b2
    g_fpre = cot * np.where(f_pre >= 0, 1.0, SLOPE)
    g_h = g_fpre @ net.w2
    g_hpre = g_h * np.where(h_pre >= 0, 1.0, SLOPE)
    return g_hpre @ net.w1


def min_preactivation_gap(net: FeatureNet, image) -> float:
    """Smallest |pre-activation| for one image; see the generator twin."""
    x = np.asarray(image, dtype=np.float64)
    h_pre = net.w1 @ x + net.b1
    h = np.where(h_pre >= 0, h_pre, SLOPE * h_pre)
    f_pre = net.w2 @ h + net.b2
    return float(min(np.min(np.abs(h_pre)), np.min(np.abs(f_pre))))

"""Two-layer feed-forward encoder with hand-written backprop and an Adam step."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TRAINABLE = ("W1", "b1", "W2", "b2")


@dataclass
class EncoderParams:
    """features -> standardise -> tanh(W1) -> W2 (projector output u) -> u/|u|.

    ``in_mean`` and ``in_scale`` are fixed at construction from the training
    features and never updated.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    in_mean: np.ndarray
    in_scale: np.ndarray

    @classmethod
    def init(cls, train_features: np.ndarray, hidden: int, embed_dim: int,
             rng: np.random.Generator) -> "EncoderParams":
        x = np.asarray(train_features, dtype=np.float64)
        f = x.shape[1]
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale = np.where(scale > 1e-8, scale, 1.0)
        return cls(
            W1=rng.normal(0.0, 1.0 / np.sqrt(f), size=(f, hidden)),
            b1=np.zeros(hidden),
            W2=rng.normal(0.0, 1.0 / np.sqrt(hidden), size=(hidden, embed_dim)),
            b2=np.zeros(embed_dim),
            in_mean=mean,
            in_scale=scale,
        )

    @property
    def feature_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.W2.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in (*TRAINABLE, "in_mean", "in_scale")}

    def copy(self) -> "EncoderParams":
        return EncoderParams(**{k: v.copy() for k, v in self.arrays().items()})

    def n_parameters(self) -> int:
        return int(sum(getattr(self, k).size for k in TRAINABLE))


@dataclass
class ForwardCache:
    h: np.ndarray
    act: np.ndarray
    u: np.ndarray
    norm: np.ndarray
    z: np.ndarray


def forward(params: EncoderParams, features: np.ndarray) -> ForwardCache:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.feature_dim:
        raise ValueError(f"expected features of width {params.feature_dim}, got shape {x.shape}")
    h = (x - params.in_mean) / params.in_scale
    act = np.tanh(h @ params.W1 + params.b1)
    u = act @ params.W2 + params.b2
    norm = np.linalg.norm(u, axis=1, keepdims=True)
    return ForwardCache(h=h, act=act, u=u, norm=norm, z=u / norm)


def backward(params: EncoderParams, cache: ForwardCache, g_z: np.ndarray,
             g_u: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Parameter gradients given d/dz and a direct d/du contribution."""
    z = cache.z
    du = (g_z - z * np.sum(z * g_z, axis=1, keepdims=True)) / cache.norm
    if g_u is not None:
        du = du + g_u
    d_act = du @ params.W2.T
    d_pre = d_act * (1.0 - cache.act**2)
    return {
        "W2": cache.act.T @ du,
        "b2": du.sum(axis=0),
        "W1": cache.h.T @ d_pre,
        "b1": d_pre.sum(axis=0),
    }


@dataclass
class Adam:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def step(self, params: EncoderParams, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, g in grads.items():
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p = getattr(params, name)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

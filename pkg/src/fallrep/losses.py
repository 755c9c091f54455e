"""Composite objective: masked trajectory contrast, physics attraction and a
variance hinge, with exact gradients.

Embedding inputs are treated as free variables: the functions use plain dot
products and never renormalise, so finite-difference checks can perturb
rows freely. Callers are responsible for passing unit rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .relations import RelationGraph

UNIT_TOL = 1e-6


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.2
    tau_p: float = 0.2
    lambda_phys: float = 1.0
    lambda_var: float = 0.1
    var_gamma: float = 1.0
    var_eps: float = 1e-4

    def __post_init__(self):
        if self.tau <= 0 or self.tau_p <= 0:
            raise ValueError("temperatures must be positive")
        if self.lambda_phys < 0 or self.lambda_var < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.var_gamma <= 0 or self.var_eps < 0:
            raise ValueError("var_gamma must be positive and var_eps nonnegative")


@dataclass(frozen=True)
class LossBreakdown:
    motion: float
    physics: float
    variance: float
    total: float
    skipped_motion_anchors: int
    skipped_physics_anchors: int
    lambda_phys: float
    lambda_var: float


def cosine_sim(z_i, z_j) -> float:
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    for z in (z_i, z_j):
        if abs(np.linalg.norm(z) - 1.0) > UNIT_TOL:
            raise LossError(f"input is not unit-normalised (norm {np.linalg.norm(z):.8f})")
    return float(z_i @ z_j)


def _candidates(graph: RelationGraph, embeddings: np.ndarray, bank_embeddings) -> np.ndarray:
    if len(graph.bank_rows):
        if bank_embeddings is None:
            raise LossError("relation graph references bank rows but no bank embeddings were given")
        return np.vstack([embeddings, np.asarray(bank_embeddings)[graph.bank_rows]])
    return embeddings


def _ratio_term(sims: np.ndarray, num: np.ndarray, den: np.ndarray) -> float:
    if not den.any():
        raise LossError("empty denominator set")
    return float(logsumexp(sims[den]) - logsumexp(sims[num]))


def motion_loss(i: int, graph: RelationGraph, embeddings, config: LossConfig = LossConfig(),
                bank_embeddings=None, masked: bool = True) -> float:
    """Trajectory contrast for anchor ``i``; 0 when it has no trajectory positive.

    ``masked=False`` uses the full candidate set as denominator (the unmasked form).
    """
    if not graph.traj_pos[i].any():
        return 0.0
    cand = _candidates(graph, np.asarray(embeddings, dtype=np.float64), bank_embeddings)
    sims = cand @ cand[i] / config.tau
    den = graph.denominator[i] if masked else graph.candidates[i]
    return _ratio_term(sims, graph.traj_pos[i], den)


def physics_loss(i: int, graph: RelationGraph, embeddings, config: LossConfig = LossConfig(),
                 bank_embeddings=None) -> float:
    """Cross-trajectory same-class attraction for anchor ``i``; 0 when skipped."""
    if not graph.phys_pos[i].any():
        return 0.0
    cand = _candidates(graph, np.asarray(embeddings, dtype=np.float64), bank_embeddings)
    sims = cand @ cand[i] / config.tau_p
    return _ratio_term(sims, graph.phys_pos[i], graph.cross_traj[i])


def variance_loss(pre_projection, config: LossConfig = LossConfig()) -> float:
    return _variance(np.asarray(pre_projection, dtype=np.float64), config, grad=False)[0]


def _variance(u: np.ndarray, config: LossConfig, grad: bool):
    if u.ndim != 2 or u.shape[0] < 2:
        raise LossError("variance term needs at least two rows")
    n, d = u.shape
    centered = u - u.mean(axis=0)
    std = np.sqrt((centered**2).mean(axis=0) + config.var_eps)
    gap = config.var_gamma - std
    value = float(np.maximum(gap, 0.0).mean())
    if not grad:
        return value, None
    active = (gap > 0) & (std > 0)
    g = np.where(active, -centered / (n * d * np.where(std > 0, std, 1.0)), 0.0)
    return value, g


def _contrast_branch(sims: np.ndarray, num: np.ndarray, den: np.ndarray, active: np.ndarray):
    """Per-anchor -log(sum_num exp / sum_den exp) and d/d sims, for active rows."""
    losses = np.zeros(sims.shape[0])
    g = np.zeros_like(sims)
    if not active.any():
        return losses, g
    s = sims[active]
    n_m, d_m = num[active], den[active]
    if not d_m.any(axis=1).all():
        raise LossError("empty denominator set")
    s_num = np.where(n_m, s, -np.inf)
    s_den = np.where(d_m, s, -np.inf)
    lse_num = logsumexp(s_num, axis=1, keepdims=True)
    lse_den = logsumexp(s_den, axis=1, keepdims=True)
    losses[active] = (lse_den - lse_num)[:, 0]
    g[active] = np.exp(s_den - lse_den) - np.exp(s_num - lse_num)
    return losses, g


def _evaluate(graph: RelationGraph, embeddings, pre_projection, config: LossConfig,
              bank_embeddings, lambda_phys, grad: bool):
    z = np.asarray(embeddings, dtype=np.float64)
    n = graph.n_anchors
    if z.shape[0] != n:
        raise LossError(f"{z.shape[0]} embedding rows for {n} anchors")
    lam_p = config.lambda_phys if lambda_phys is None else float(lambda_phys)
    lam_v = config.lambda_var
    cand = _candidates(graph, z, bank_embeddings)
    dots = z @ cand.T

    m_active = graph.traj_pos.any(axis=1)
    p_active = graph.phys_pos.any(axis=1)
    if not m_active.any():
        raise LossError("every anchor lacks a trajectory positive; motion term undefined")

    m_loss, m_g = _contrast_branch(dots / config.tau, graph.traj_pos, graph.denominator, m_active)
    p_loss, p_g = _contrast_branch(dots / config.tau_p, graph.phys_pos, graph.cross_traj, p_active)
    motion = float(m_loss[m_active].mean())
    physics = float(p_loss[p_active].mean()) if p_active.any() else 0.0

    u = None if pre_projection is None else np.asarray(pre_projection, dtype=np.float64)
    if u is None or (lam_v == 0 and u.shape[0] < 2):
        if lam_v > 0:
            raise LossError("variance term requested without pre-projection outputs")
        variance, g_var = 0.0, None
    else:
        variance, g_var = _variance(u, config, grad)

    breakdown = LossBreakdown(
        motion=motion,
        physics=physics,
        variance=variance,
        total=motion + lam_p * physics + lam_v * variance,
        skipped_motion_anchors=int((~m_active).sum()),
        skipped_physics_anchors=int((~p_active).sum()),
        lambda_phys=lam_p,
        lambda_var=lam_v,
    )
    if not grad:
        return breakdown, None, None

    # d total / d dots, anchors averaged per branch
    g_dots = m_g / (config.tau * m_active.sum())
    if p_active.any() and lam_p != 0:
        g_dots = g_dots + p_g * (lam_p / (config.tau_p * p_active.sum()))
    g_z = g_dots @ cand + g_dots[:, :n].T @ z
    g_u = None
    if u is not None:
        g_u = lam_v * g_var if (g_var is not None and lam_v != 0) else np.zeros_like(u)
    return breakdown, g_z, g_u


def composite_loss(graph: RelationGraph, embeddings, pre_projection=None,
                   config: LossConfig = LossConfig(), bank_embeddings=None,
                   lambda_phys: float | None = None) -> LossBreakdown:
    """Evaluate the weighted sum of the three terms over one batch.

    ``lambda_phys`` overrides ``config.lambda_phys`` (used by warmup scheduling).
    """
    return _evaluate(graph, embeddings, pre_projection, config, bank_embeddings, lambda_phys, False)[0]


def loss_gradient(graph: RelationGraph, embeddings, pre_projection=None,
                  config: LossConfig = LossConfig(), bank_embeddings=None,
                  lambda_phys: float | None = None):
    """Return ``(breakdown, d_total/d_embeddings, d_total/d_pre_projection)``.

    Bank rows are constants; no gradient is returned for them.
    """
    return _evaluate(graph, embeddings, pre_projection, config, bank_embeddings, lambda_phys, True)

"""Classical proximal gradient descent for the pan-sharpening energy.

    E(z) = 1/2 ||x - S z||^2 + 1/2 ||y - z R||^2 + lam * J(z)

with exact operators from :mod:`lgteun.degradation`.  Each iteration takes a
gradient step on the two quadratic data terms and then applies the proximal
map of ``eta * lam * J``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lgteun.degradation import DegradationSpec, apply_R, apply_R_adjoint, apply_S, apply_S_adjoint
from lgteun.errors import ContractError, DivergenceError, ShapeError

PROX_CHOICES = ("identity", "soft")
DIVERGENCE_LIMIT = 1e12


@dataclass
class PgdConfig:
    eta: float | None = None  # None: 1/L from power iteration
    lam: float = 0.0
    max_iters: int = 100
    tol: float = 0.0
    prox: str = "identity"

    def __post_init__(self):
        if self.eta is not None and not self.eta > 0:
            raise ContractError(f"eta must be > 0, got {self.eta}")
        if self.lam < 0:
            raise ContractError(f"lambda must be >= 0, got {self.lam}")
        if self.max_iters < 0:
            raise ContractError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.prox not in PROX_CHOICES:
            raise ContractError(f"prox must be one of {PROX_CHOICES}, got {self.prox!r}")


def _check(z, x, y, spec):
    s = spec.scale
    if x.shape != (z.shape[0] // s, z.shape[1] // s, z.shape[2]) or z.shape[0] % s or z.shape[1] % s:
        raise ShapeError(f"LrMS {x.shape} inconsistent with HrMS {z.shape} at scale {s}")
    if y.shape != z.shape[:2] + (1,):
        raise ShapeError(f"PAN {y.shape} inconsistent with HrMS {z.shape}")


def grad_f(z, x, y, spec: DegradationSpec):
    """S^T (S z - x) + (z R - y) R^T."""
    _check(z, x, y, spec)
    return (apply_S_adjoint(apply_S(z, spec) - x, spec)
            + apply_R_adjoint(apply_R(z, spec) - y, spec, z.shape[-1]))


def gradient_step(z, x, y, eta: float, spec: DegradationSpec):
    if eta < 0:
        raise ContractError(f"eta must be >= 0, got {eta}")
    if eta == 0:
        return z
    return z - eta * grad_f(z, x, y, spec)


def prox_soft_threshold(z, tau: float):
    if tau < 0:
        raise ContractError(f"threshold must be >= 0, got {tau}")
    return np.sign(z) * np.maximum(np.abs(z) - tau, 0.0)


def data_objective(z, x, y, spec: DegradationSpec) -> float:
    rx = (x - apply_S(z, spec)).astype(np.float64)
    ry = (y - apply_R(z, spec)).astype(np.float64)
    return 0.5 * float(np.sum(rx * rx)) + 0.5 * float(np.sum(ry * ry))


def objective(z, x, y, cfg: PgdConfig, spec: DegradationSpec) -> float:
    val = data_objective(z, x, y, spec)
    if cfg.prox == "soft":
        val += cfg.lam * float(np.abs(z.astype(np.float64)).sum())
    return val


def lipschitz_estimate(shape, spec: DegradationSpec, iters: int = 20, seed: int = 0) -> float:
    """Largest eigenvalue of S^T S + R R^T by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(shape)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = apply_S_adjoint(apply_S(v, spec), spec) + apply_R_adjoint(apply_R(v, spec), spec, shape[-1])
        lam = float(np.vdot(v, w))
        v = w / np.linalg.norm(w)
    return lam


def pgd_solve(x, y, z0, cfg: PgdConfig, spec: DegradationSpec):
    """Run PGD from ``z0``; returns the final iterate and the objective trace.

    ``history[0]`` is the objective at ``z0``; one entry is appended per
    iteration.
    """
    _check(z0, x, y, spec)
    eta = cfg.eta
    if eta is None:
        # 1.01 margin keeps a 20-step power estimate on the safe side of 1/L
        eta = 1.0 / (1.01 * lipschitz_estimate(z0.shape, spec))
    z = z0
    history = [objective(z, x, y, cfg, spec)]
    for _ in range(cfg.max_iters):
        half = gradient_step(z, x, y, eta, spec)
        new = prox_soft_threshold(half, eta * cfg.lam) if cfg.prox == "soft" else half
        val = objective(new, x, y, cfg, spec)
        if not np.isfinite(val) or val > DIVERGENCE_LIMIT:
            raise DivergenceError(f"PGD diverged (objective {val:.3g}) with step size eta={eta:g}")
        history.append(val)
        denom = np.linalg.norm(z)
        change = np.linalg.norm(new - z) / denom if denom > 0 else np.linalg.norm(new - z)
        z = new
        if cfg.tol > 0 and change < cfg.tol:
            break
    return z, history

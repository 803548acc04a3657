"""Quick oracle suites run by ``lgteun selfcheck``."""
from __future__ import annotations

import numpy as np

from lgteun import oracles, spectral
from lgteun.degradation import DegradationSpec, apply_R, apply_R_adjoint, apply_S, apply_S_adjoint
from lgteun.lgt import LgtConfig, Scope, wmsa
from lgteun.train import grad_check, mae_loss
from lgteun.unfold import UnfoldConfig, init_model, lgteun_forward


def check_fft(rng) -> float:
    worst = 0.0
    for _ in range(5):
        h, w = rng.integers(2, 7, 2)
        x = rng.standard_normal((h, w, 2))
        full = oracles.naive_dft2(x)
        s = spectral.rfft2(x)
        worst = max(worst, np.abs(s.real - full[:, : w // 2 + 1].real).max(),
                    np.abs(s.imag - full[:, : w // 2 + 1].imag).max(),
                    np.abs(spectral.irfft2(s, w) - x).max())
    return worst


def check_adjoint(rng) -> float:
    spec = DegradationSpec(spectral_response=np.array([0.2, 0.3, 0.5]))
    worst = 0.0
    for _ in range(5):
        z = rng.standard_normal((16, 16, 3))
        x = rng.standard_normal((4, 4, 3))
        y = rng.standard_normal((16, 16, 1))
        lhs, rhs = np.vdot(apply_S(z, spec), x), np.vdot(z, apply_S_adjoint(x, spec))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-30))
        lhs, rhs = np.vdot(apply_R(z, spec), y), np.vdot(z, apply_R_adjoint(y, spec))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1e-30))
    return worst


def check_wmsa(rng) -> float:
    c, m, heads = 4, 4, 2
    x = rng.standard_normal((8, 8, c))
    p = {"qkv.w": rng.standard_normal((c, 3 * c)), "qkv.b": rng.standard_normal(3 * c),
         "proj.w": rng.standard_normal((c, c)), "proj.b": rng.standard_normal(c),
         "pos": rng.standard_normal((heads, m * m, m * m))}
    fast = wmsa(x, Scope(p), m, heads)
    slow = oracles.brute_wmsa(x, p["qkv.w"], p["qkv.b"], p["proj.w"], p["proj.b"], p["pos"], m, heads)
    return float(np.abs(fast - slow).max())


def check_gradients(rng) -> float:
    cfg = UnfoldConfig(stages=1, bands=2, lgt=LgtConfig(channels=8, window=4, heads=2,
                                                        encoder_blocks=1, decoder_blocks=1))
    params = init_model(cfg, seed=1, dtype=np.float64)
    params = {k: v + 0.05 * rng.standard_normal(v.shape) for k, v in params.items()}
    x = rng.random((4, 4, 2))
    y = rng.random((16, 16, 1))
    offset = rng.choice([-0.5, 0.5], size=(16, 16, 2))
    gt = np.asarray(lgteun_forward(x, y, params, cfg)) + offset
    report = grad_check(lambda p: mae_loss(lgteun_forward(x, y, p, cfg), gt), params,
                        max_coords=4, seed=0)
    return report.max_error


SUITES = {
    "fft": (check_fft, 1e-10),
    "adjoint": (check_adjoint, 1e-8),
    "wmsa": (check_wmsa, 1e-6),
    "gradcheck": (check_gradients, 1e-4),
}


def run(seed: int = 0, echo=print) -> bool:
    ok = True
    for name, (fn, tol) in SUITES.items():
        err = fn(np.random.default_rng(seed))
        passed = err <= tol
        ok &= passed
        echo(f"{'PASS' if passed else 'FAIL'} {name}: max error {err:.3e} (tol {tol:g})")
    return ok

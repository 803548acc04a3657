import numpy as np
import pytest

from lgteun import oracles
from lgteun.errors import FormatError, ShapeError
from lgteun.lgt import LgtConfig, Scope, prior_forward
from lgteun.tensor import Graph, ops
from lgteun.unfold import (INIT_RECIPE, UnfoldConfig, count_params, data_module, init_model, learned_R,
                           learned_S, lgteun_forward, load_checkpoint, save_checkpoint)

SMALL = LgtConfig(channels=8, window=4, heads=2)


def _cfg(stages=2, bands=2):
    return UnfoldConfig(stages=stages, bands=bands, lgt=SMALL)


def _randomized(params, rng, scale=0.05):
    return {k: v + scale * rng.standard_normal(np.shape(v)) for k, v in params.items()}


def _data_keys(params):
    return sorted(k for k in params if k.startswith("data."))


def test_one_data_weight_set_for_any_depth():
    keys = [_data_keys(init_model(_cfg(k), dtype=np.float64)) for k in (0, 1, 2, 5)]
    assert all(k == keys[0] for k in keys)
    assert len(keys[0]) == 8
    p = init_model(_cfg(3), dtype=np.float64)
    assert [k for k in p if k.endswith(".eta")] == ["stage0.eta", "stage1.eta", "stage2.eta"]
    assert all(float(p[f"stage{k}.eta"]) == pytest.approx(0.1) for k in range(3))


def test_init_is_seeded():
    a, b = init_model(_cfg(), seed=4), init_model(_cfg(), seed=4)
    assert all(a[k].tobytes() == b[k].tobytes() for k in a)
    c = init_model(_cfg(), seed=5)
    assert any(a[k].tobytes() != c[k].tobytes() for k in a)


def test_zero_step_keeps_input(rng):
    p = _randomized(init_model(_cfg(), dtype=np.float64), rng)
    z = rng.standard_normal((16, 16, 2))
    out = data_module(z, rng.standard_normal((4, 4, 2)), rng.standard_normal((16, 16, 1)), 0.0, p)
    np.testing.assert_array_equal(out, z)


def test_consistent_inputs_are_stationary_at_init(rng):
    p = init_model(_cfg(), dtype=np.float64)
    z = rng.uniform(0, 1, (16, 16, 2))
    x = learned_S(z, Scope(p, "data."))
    y = learned_R(z, Scope(p, "data."))
    assert np.abs(data_module(z, x, y, 0.1, p) - z).max() <= 1e-5


def test_data_module_matches_manual_composition(rng):
    p = _randomized(init_model(_cfg(), dtype=np.float64), rng, 0.2)
    z = rng.standard_normal((16, 16, 2))
    x = rng.standard_normal((4, 4, 2))
    y = rng.standard_normal((16, 16, 1))

    def down(t, k):
        return oracles.naive_depthwise(ops.resample_bicubic(t, 0.5), k, 1, "reflect")

    def up(t, k):
        return oracles.naive_depthwise(ops.resample_bicubic(t, 2), k, 1, "reflect")

    s_z = down(down(z, p["data.down0.k"]), p["data.down1.k"])
    spatial = up(up(s_z - x, p["data.up0.k"]), p["data.up1.k"])
    r_z = np.einsum("hwb,bo->hwo", z, p["data.R.w"]) + p["data.R.b"]
    spectral = np.einsum("hwo,ob->hwb", r_z - y, p["data.RT.w"]) + p["data.RT.b"]
    ref = z - 0.37 * (spatial + spectral)
    assert np.abs(data_module(z, x, y, 0.37, p) - ref).max() <= 1e-6


def test_data_module_shape_checks(rng):
    p = init_model(_cfg())
    with pytest.raises(ShapeError):
        data_module(np.zeros((16, 16, 2)), np.zeros((8, 8, 2)), np.zeros((16, 16, 1)), 0.1, p)
    with pytest.raises(ShapeError):
        data_module(np.zeros((16, 16, 2)), np.zeros((4, 4, 2)), np.zeros((16, 16, 2)), 0.1, p)


def test_zero_stages_is_bicubic(rng):
    x = rng.uniform(0, 1, (4, 4, 2))
    out = lgteun_forward(x, rng.uniform(0, 1, (16, 16, 1)), init_model(_cfg(0)), _cfg(0))
    np.testing.assert_array_equal(out, ops.resample_bicubic(x, 4))


def test_two_stage_intermediates(rng):
    cfg = _cfg(2)
    p = _randomized(init_model(cfg, dtype=np.float64), rng)
    x = rng.uniform(0, 1, (4, 4, 2))
    y = rng.uniform(0, 1, (16, 16, 1))
    z, inter = lgteun_forward(x, y, p, cfg, return_intermediates=True)
    assert len(inter) == 5
    assert all(t.shape == (16, 16, 2) for t in inter)
    assert inter[-1] is z
    np.testing.assert_array_equal(inter[0], ops.resample_bicubic(x, 4))
    np.testing.assert_array_equal(inter[2], prior_forward(inter[1], p, cfg.lgt, "stage0.prior."))


def test_full_size_extents():
    cfg = UnfoldConfig(stages=1, bands=4, lgt=LgtConfig(channels=8, window=8))
    r = np.random.default_rng(0)
    out = lgteun_forward(r.uniform(0, 1, (32, 32, 4)).astype(np.float32),
                         r.uniform(0, 1, (128, 128, 1)).astype(np.float32), init_model(cfg), cfg)
    assert out.shape == (128, 128, 4) and out.dtype == np.float32


def test_batched_forward_matches_single(rng):
    cfg = _cfg(1)
    p = _randomized(init_model(cfg, dtype=np.float64), rng)
    x = rng.uniform(0, 1, (3, 4, 4, 2))
    y = rng.uniform(0, 1, (3, 16, 16, 1))
    batch = lgteun_forward(x, y, p, cfg)
    for i in range(3):
        np.testing.assert_allclose(batch[i], lgteun_forward(x[i], y[i], p, cfg), atol=1e-12)


def test_identity_priors_keep_consistent_inputs_fixed():
    cfg = _cfg(2, bands=3)
    p = init_model(cfg, dtype=np.float64)
    for k in p:
        if ".prior." in k:
            p[k] = np.zeros_like(p[k])
    x = np.broadcast_to(np.array([0.2, 0.5, 0.7]), (4, 4, 3)).copy()
    z0 = ops.resample_bicubic(x, 4)
    y = np.full((16, 16, 1), np.mean([0.2, 0.5, 0.7]))
    assert np.abs(lgteun_forward(x, y, p, cfg) - z0).max() <= 1e-4


def test_stage_named_in_shape_errors():
    cfg = UnfoldConfig(stages=1, bands=2, lgt=LgtConfig(channels=8, window=8))
    with pytest.raises(ShapeError, match="stage 0"):
        lgteun_forward(np.zeros((2, 2, 2)), np.zeros((8, 8, 1)), init_model(cfg), cfg)
    with pytest.raises(ShapeError, match="bands"):
        lgteun_forward(np.zeros((4, 4, 3)), np.zeros((16, 16, 1)), init_model(cfg), cfg)


def _stage_grads(params, cfg, x, y, target, live_stage):
    """Backward pass in which only stage ``live_stage`` sees the data weights as variables."""
    g = Graph()
    live = g.params({k: v for k, v in params.items() if k.startswith("data.")})
    z = ops.resample_bicubic(x, 4)
    for k in range(cfg.stages):
        store = dict(params)
        if k == live_stage:
            store.update(live)
        z = data_module(z, x, y, params[f"stage{k}.eta"], store)
        z = prior_forward(z, params, cfg.lgt, f"stage{k}.prior.")
    return g.backward(ops.sum_all(ops.mul(z, target)))


def test_shared_gradient_is_sum_of_stage_contributions(rng):
    cfg = _cfg(2)
    params = _randomized(init_model(cfg, seed=2, dtype=np.float64), rng, 0.1)
    x = rng.uniform(0, 1, (4, 4, 2))
    y = rng.uniform(0, 1, (16, 16, 1))
    target = rng.standard_normal((16, 16, 2))
    g = Graph()
    out = lgteun_forward(x, y, g.params(params), cfg)
    tied = g.backward(ops.sum_all(ops.mul(out, target)))
    g0 = _stage_grads(params, cfg, x, y, target, 0)
    g1 = _stage_grads(params, cfg, x, y, target, 1)
    for k in _data_keys(params):
        assert np.any(g0[k]) and np.any(g1[k])
        np.testing.assert_allclose(tied[k], g0[k] + g1[k], atol=1e-10, rtol=0)


def test_param_count_grows_with_stages():
    counts = [count_params(init_model(_cfg(k))) for k in (0, 1, 2, 3)]
    per_stage = counts[2] - counts[1]
    assert counts[1] - counts[0] == per_stage == counts[3] - counts[2] > 0


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_checkpoint_round_trip(tmp_path, dtype):
    cfg = _cfg(2)
    p = init_model(cfg, seed=9, dtype=dtype)
    save_checkpoint(tmp_path / "m.ckpt", p, cfg, {"adam_steps": 3})
    q, cfg2, header = load_checkpoint(tmp_path / "m.ckpt")
    assert cfg2 == cfg
    assert header["init_recipe"] == INIT_RECIPE and header["adam_steps"] == 3
    assert list(q) == list(p)
    assert all(q[k].dtype == dtype and q[k].tobytes() == p[k].tobytes() for k in p)


def test_checkpoint_bad_magic(tmp_path):
    (tmp_path / "x.ckpt").write_bytes(b"JUNKJUNK")
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "x.ckpt")


def test_checkpoint_truncated(tmp_path):
    cfg = _cfg(1)
    save_checkpoint(tmp_path / "m.ckpt", init_model(cfg), cfg)
    raw = (tmp_path / "m.ckpt").read_bytes()
    (tmp_path / "m.ckpt").write_bytes(raw[: len(raw) // 2])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "m.ckpt")

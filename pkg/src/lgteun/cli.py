"""Command-line entry point: ``lgteun <subcommand> [flags]``.

Subcommands: synth, train, infer, eval, prox-demo, stages, selfcheck.
All randomness comes from ``--seed``; there are no environment settings.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from lgteun import metrics, selfcheck
from lgteun.config import RunConfig, load_run_config
from lgteun.degradation import (DegradationSpec, SceneTriple, gaussian_kernel, synth_wald,
                                write_scene_set)
from lgteun.errors import ContractError, LgteunError
from lgteun.lgt import LgtConfig
from lgteun.pgd import PgdConfig, pgd_solve
from lgteun.preview import save_preview
from lgteun.tensor import ops
from lgteun.tensor.io import load_tensor, save_tensor
from lgteun.train import TrainConfig, fit
from lgteun.unfold import UnfoldConfig, init_model, lgteun_forward, load_checkpoint, save_checkpoint

log = logging.getLogger("lgteun")

DTYPES = {"single": np.float32, "double": np.float64}


def _shared(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory or file")
    p.add_argument("--precision", choices=sorted(DTYPES))
    p.add_argument("--threads", type=int, help="worker threads (evaluation only)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lgteun", description="Unfolded pan-sharpening toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write synthetic reduced-resolution scene triples")
    _shared(p)
    p.add_argument("--count", type=int)
    p.add_argument("--size", type=int)
    p.add_argument("--bands", type=int)
    p.add_argument("--blur-size", dest="blur_size", type=int)
    p.add_argument("--blur-sigma", dest="blur_sigma", type=float)
    p.add_argument("--noise-sigma-x", dest="noise_sigma_x", type=float)
    p.add_argument("--noise-sigma-y", dest="noise_sigma_y", type=float)
    p.add_argument("--png", action="store_const", const=True)

    p = sub.add_parser("train", help="train a model on a directory of scene triples")
    _shared(p)
    p.add_argument("--data")
    for flag in ("stages", "channels", "window", "heads", "epochs", "batch"):
        p.add_argument(f"--{flag}", type=int)
    p.add_argument("--decay-every", dest="decay_every", type=int)
    p.add_argument("--ckpt-every", dest="ckpt_every", type=int)
    for flag in ("lr0", "decay", "beta1", "beta2"):
        p.add_argument(f"--{flag}", type=float)
    p.add_argument("--adam-eps", dest="adam_eps", type=float)

    p = sub.add_parser("infer", help="predict an HrMS image from LrMS + PAN")
    _shared(p)
    p.add_argument("--ckpt")
    p.add_argument("--lrms")
    p.add_argument("--pan")

    p = sub.add_parser("eval", help="reduced-resolution metrics as CSV")
    _shared(p)
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--gt", nargs="+", required=True)

    p = sub.add_parser("prox-demo", help="classical PGD with an explicit proximal map")
    _shared(p)
    p.add_argument("--lrms")
    p.add_argument("--pan")
    p.add_argument("--gt", help="synthesize LrMS/PAN from this HrMS image instead")
    p.add_argument("--prox", choices=("identity", "soft"))
    p.add_argument("--lam", type=float)
    p.add_argument("--iters", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--tol", type=float)

    p = sub.add_parser("stages", help="dump per-stage intermediates with PNG previews")
    _shared(p)
    p.add_argument("--ckpt")
    p.add_argument("--lrms")
    p.add_argument("--pan")

    p = sub.add_parser("selfcheck", help="run the oracle suites")
    _shared(p)
    return ap


def _run_config(args) -> RunConfig:
    skip = {"command", "config", "verbose", "pred"}
    if args.command == "eval":
        skip.add("gt")
    overrides = {k: v for k, v in vars(args).items() if k not in skip}
    return load_run_config(args.config, overrides)


def _require(rc: RunConfig, *keys):
    missing = [k for k in keys if rc.get(k) is None]
    if missing:
        raise ContractError(f"missing required option(s): {', '.join('--' + k.replace('_', '-') for k in missing)}")


def _dtype(rc):
    return DTYPES[rc.get("precision", "single")]


# ------------------------------------------------------------ subcommands

def cmd_synth(rc: RunConfig) -> int:
    _require(rc, "out")
    spec = DegradationSpec(
        blur_kernel=gaussian_kernel(rc.get("blur_size", 7), rc.get("blur_sigma", 1.0)),
        noise_sigma_x=rc.get("noise_sigma_x", 0.0), noise_sigma_y=rc.get("noise_sigma_y", 0.0))
    stems = write_scene_set(rc.get("out"), rc.get("count", 8), rc.get("size", 128), rc.get("bands", 4),
                            rc.get("seed", 0), spec, _dtype(rc))
    if rc.get("png", False):
        for stem in stems:
            tri = SceneTriple.load(stem)
            for part in ("gt", "lrms", "pan"):
                save_preview(f"{stem}.{part}.png", getattr(tri, part))
    print(f"wrote {len(stems)} scene triples to {rc.get('out')}")
    return 0


def _load_dataset(data_dir, dtype):
    stems = sorted(str(p)[: -len(".gt.mst")] for p in Path(data_dir).glob("*.gt.mst"))
    if not stems:
        raise ContractError(f"no *.gt.mst scenes found in {data_dir}")
    out = []
    for s in stems:
        t = SceneTriple.load(s)
        out.append(SceneTriple(t.gt.astype(dtype), t.lrms.astype(dtype), t.pan.astype(dtype)))
    return stems, out


def cmd_train(rc: RunConfig) -> int:
    _require(rc, "data", "out")
    dtype = _dtype(rc)
    stems, dataset = _load_dataset(rc.get("data"), dtype)
    bands = dataset[0].gt.shape[-1]
    lgt = LgtConfig(channels=rc.get("channels", 4 * bands), window=rc.get("window", 8),
                    heads=rc.get("heads", 2))
    model_cfg = UnfoldConfig(stages=rc.get("stages", 2), bands=bands, lgt=lgt)
    tcfg = TrainConfig(lr0=rc.get("lr0", 1.5e-3), decay=rc.get("decay", 0.85),
                       decay_every=rc.get("decay_every", 100), beta1=rc.get("beta1", 0.9),
                       beta2=rc.get("beta2", 0.999), adam_eps=rc.get("adam_eps", 1e-8),
                       batch=rc.get("batch", 4), epochs=rc.get("epochs", 1), seed=rc.get("seed", 0))
    out = Path(rc.get("out"))
    out.mkdir(parents=True, exist_ok=True)
    every = rc.get("ckpt_every", 0)
    params = init_model(model_cfg, seed=tcfg.seed, dtype=dtype)

    with open(out / "train_log.csv", "w") as fh:
        fh.write("epoch,lr,loss\n")

        def on_epoch(epoch, lr, loss, p):
            fh.write(f"{epoch},{lr:.10g},{loss:.10g}\n")
            log.info("epoch %d lr %.4g loss %.6f", epoch, lr, loss)
            if every and (epoch + 1) % every == 0:
                save_checkpoint(out / f"model_epoch{epoch + 1:05d}.ckpt", p, model_cfg)

        params, state = fit(params, dataset, tcfg, model_cfg, on_epoch=on_epoch)

    save_checkpoint(out / "model.ckpt", params, model_cfg, {"adam_steps": state.t})
    first = dataset[0]
    save_tensor(out / "train_pred.mst", np.asarray(lgteun_forward(first.lrms, first.pan, params, model_cfg)))
    print(f"trained {state.t} steps; checkpoint {out / 'model.ckpt'}")
    return 0


def _load_model(rc):
    params, cfg, _ = load_checkpoint(rc.get("ckpt"))
    if rc.get("precision"):
        params = {k: v.astype(_dtype(rc)) for k, v in params.items()}
    dtype = next(iter(params.values())).dtype
    return params, cfg, dtype


def cmd_infer(rc: RunConfig) -> int:
    _require(rc, "ckpt", "lrms", "pan", "out")
    params, cfg, dtype = _load_model(rc)
    pred = lgteun_forward(load_tensor(rc.get("lrms")).astype(dtype), load_tensor(rc.get("pan")).astype(dtype),
                          params, cfg)
    save_tensor(rc.get("out"), np.asarray(pred, dtype=dtype))
    print(f"wrote {rc.get('out')} {np.shape(pred)}")
    return 0


def cmd_eval(rc: RunConfig, preds, gts) -> int:
    if len(preds) != len(gts):
        raise ContractError(f"{len(preds)} predictions but {len(gts)} references")

    def one(pair):
        p, g = pair
        return metrics.evaluate(load_tensor(p), load_tensor(g)).csv_row(Path(p).name)

    threads = max(1, rc.get("threads", 1))
    pairs = list(zip(preds, gts))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(one, pairs))
    else:
        rows = [one(pair) for pair in pairs]
    text = "\n".join([metrics.csv_metadata(), metrics.CSV_HEADER, *rows]) + "\n"
    sys.stdout.write(text)
    if rc.get("out"):
        Path(rc.get("out")).write_text(text)
    return 0


def cmd_prox_demo(rc: RunConfig) -> int:
    _require(rc, "out")
    dtype = _dtype(rc)
    spec = DegradationSpec()
    if rc.get("gt"):
        gt = load_tensor(rc.get("gt")).astype(dtype)
        tri = synth_wald(gt, spec)
        lrms, pan = tri.lrms, tri.pan
    else:
        _require(rc, "lrms", "pan")
        lrms, pan = load_tensor(rc.get("lrms")).astype(dtype), load_tensor(rc.get("pan")).astype(dtype)
    cfg = PgdConfig(eta=rc.get("eta"), lam=rc.get("lam", 0.0), max_iters=rc.get("iters", 100),
                    tol=rc.get("tol", 0.0), prox=rc.get("prox", "identity"))
    z0 = np.asarray(ops.resample_bicubic(lrms, spec.scale))
    z, history = pgd_solve(lrms, pan, z0, cfg, spec)
    out = Path(rc.get("out"))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "pgd_trace.csv", "w") as fh:
        fh.write("iter,objective\n")
        for i, v in enumerate(history):
            fh.write(f"{i},{v:.12g}\n")
    save_tensor(out / "pgd_result.mst", np.asarray(z, dtype=dtype))
    print(f"PGD: {len(history) - 1} iterations, objective {history[0]:.6g} -> {history[-1]:.6g}")
    return 0


def cmd_stages(rc: RunConfig) -> int:
    _require(rc, "ckpt", "lrms", "pan", "out")
    params, cfg, dtype = _load_model(rc)
    _, inter = lgteun_forward(load_tensor(rc.get("lrms")).astype(dtype), load_tensor(rc.get("pan")).astype(dtype),
                              params, cfg, return_intermediates=True)
    out = Path(rc.get("out"))
    out.mkdir(parents=True, exist_ok=True)
    for i, z in enumerate(inter):
        label = f"z{i // 2}" if i % 2 == 0 else f"z{i // 2}_5"
        arr = np.asarray(z, dtype=dtype)
        save_tensor(out / f"stage{i:02d}_{label}.mst", arr)
        save_preview(out / f"stage{i:02d}_{label}.png", arr)
    print(f"wrote {len(inter)} intermediates to {out}")
    return 0


def cmd_selfcheck(rc: RunConfig) -> int:
    return 0 if selfcheck.run(rc.get("seed", 0)) else 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = _run_config(args)
        if args.command == "eval":
            return cmd_eval(rc, args.pred, args.gt)
        handler = {
            "synth": cmd_synth, "train": cmd_train, "infer": cmd_infer,
            "prox-demo": cmd_prox_demo, "stages": cmd_stages, "selfcheck": cmd_selfcheck,
        }[args.command]
        return handler(rc)
    except (LgteunError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

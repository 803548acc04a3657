import numpy as np
import pytest
from PIL import Image

from lgteun.cli import main
from lgteun.config import load_run_config, parse_config_text
from lgteun.errors import ContractError
from lgteun.tensor.io import load_tensor, save_tensor
from lgteun.unfold import load_checkpoint

TRAIN = ["--stages", "1", "--channels", "8", "--window", "4", "--epochs", "2", "--batch", "2"]


@pytest.fixture(scope="module")
def scenes(tmp_path_factory):
    out = tmp_path_factory.mktemp("scenes")
    assert main(["synth", "--count", "4", "--size", "32", "--bands", "2", "--seed", "7", "--out", str(out)]) == 0
    return out


# ------------------------------------------------------------ config files

def test_config_parsing(tmp_path):
    text = "# comment\nseed = 5\nlr0 = 0.01   # trailing\nprecision = double\npng = yes\n\n"
    vals = parse_config_text(text)
    assert vals == {"seed": 5, "lr0": 0.01, "precision": "double", "png": True}
    (tmp_path / "c.cfg").write_text(text, encoding="utf-8")
    rc = load_run_config(tmp_path / "c.cfg", {"seed": 9, "lr0": None})
    assert rc.get("seed") == 9 and rc.get("lr0") == 0.01


@pytest.mark.parametrize("text", ["bogus = 1", "seed = abc", "precision = half", "no equals sign"])
def test_config_rejects_bad_lines(text):
    with pytest.raises(ContractError):
        parse_config_text(text)


# ------------------------------------------------------------ subcommands

def test_synth_writes_triples(tmp_path, capsys):
    assert main(["synth", "--count", "8", "--size", "128", "--bands", "4", "--seed", "7",
                 "--out", str(tmp_path)]) == 0
    assert len(list(tmp_path.glob("*.gt.mst"))) == 8
    assert load_tensor(tmp_path / "scene000.lrms.mst").shape == (32, 32, 4)
    assert "8 scene triples" in capsys.readouterr().out


def test_synth_png_previews(tmp_path):
    assert main(["synth", "--count", "1", "--size", "16", "--bands", "3", "--out", str(tmp_path), "--png"]) == 0
    img = Image.open(tmp_path / "scene000.gt.png")
    assert img.size == (48, 16) and img.mode == "L"
    side = (tmp_path / "scene000.gt.png.txt").read_text().splitlines()
    assert len(side) == 3 and side[0].startswith("band 0: min=")


def test_synth_precision_and_config(tmp_path):
    (tmp_path / "run.cfg").write_text("count = 2\nsize = 16\nbands = 2\nprecision = double\n")
    assert main(["synth", "--config", str(tmp_path / "run.cfg"), "--out", str(tmp_path / "d")]) == 0
    assert load_tensor(tmp_path / "d" / "scene001.gt.mst").dtype == np.float64


def test_train_then_infer_reproduces_training_prediction(tmp_path, scenes):
    run = tmp_path / "run"
    assert main(["train", "--data", str(scenes), "--out", str(run), "--ckpt-every", "1", *TRAIN]) == 0
    log = (run / "train_log.csv").read_text().splitlines()
    assert log[0] == "epoch,lr,loss" and len(log) == 3
    assert (run / "model_epoch00001.ckpt").exists() and (run / "model_epoch00002.ckpt").exists()
    _, cfg, header = load_checkpoint(run / "model.ckpt")
    assert cfg.stages == 1 and header["adam_steps"] == 4
    assert main(["infer", "--ckpt", str(run / "model.ckpt"), "--lrms", str(scenes / "scene000.lrms.mst"),
                 "--pan", str(scenes / "scene000.pan.mst"), "--out", str(tmp_path / "pred.mst")]) == 0
    pred, ref = load_tensor(tmp_path / "pred.mst"), load_tensor(run / "train_pred.mst")
    assert np.abs(pred - ref).max() <= 1e-6


def test_eval_prints_one_row(tmp_path, scenes, capsys):
    gt = load_tensor(scenes / "scene000.gt.mst")
    save_tensor(tmp_path / "p.mst", np.clip(gt + 0.01, 0, 1))
    assert main(["eval", "--pred", str(tmp_path / "p.mst"), "--gt", str(scenes / "scene000.gt.mst")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("#") and lines[1] == "image,psnr,ssim,q_avg,sam,ergas"
    assert len(lines) == 3 and lines[2].startswith("p.mst,")


def test_eval_threads_keep_input_order(tmp_path, scenes, capsys):
    preds, gts = [], []
    for i in range(4):
        gt = load_tensor(scenes / f"scene{i:03d}.gt.mst")
        save_tensor(tmp_path / f"p{i}.mst", np.clip(gt + 0.01 * (i + 1), 0, 1))
        preds.append(str(tmp_path / f"p{i}.mst"))
        gts.append(str(scenes / f"scene{i:03d}.gt.mst"))
    assert main(["eval", "--pred", *preds, "--gt", *gts]) == 0
    serial = capsys.readouterr().out
    assert main(["eval", "--threads", "3", "--pred", *preds, "--gt", *gts, "--out", str(tmp_path / "m.csv")]) == 0
    assert capsys.readouterr().out == serial == (tmp_path / "m.csv").read_text()
    assert [r.split(",")[0] for r in serial.splitlines()[2:]] == ["p0.mst", "p1.mst", "p2.mst", "p3.mst"]


def test_eval_count_mismatch_is_a_one_line_error(tmp_path, scenes, capsys):
    g = str(scenes / "scene000.gt.mst")
    assert main(["eval", "--pred", g, "--gt", g, g]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error:")


def test_prox_demo_trace(tmp_path, scenes):
    out = tmp_path / "pgd"
    assert main(["prox-demo", "--lrms", str(scenes / "scene000.lrms.mst"), "--pan", str(scenes / "scene000.pan.mst"),
                 "--iters", "20", "--out", str(out)]) == 0
    rows = (out / "pgd_trace.csv").read_text().splitlines()
    assert rows[0] == "iter,objective" and len(rows) == 22
    vals = [float(r.split(",")[1]) for r in rows[1:]]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert load_tensor(out / "pgd_result.mst").shape == (32, 32, 2)


def test_prox_demo_from_gt_with_soft_threshold(tmp_path, scenes):
    assert main(["prox-demo", "--gt", str(scenes / "scene001.gt.mst"), "--prox", "soft", "--lam", "1e-3",
                 "--iters", "5", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "pgd_result.mst").exists()


def test_stages_dump(tmp_path, scenes):
    run = tmp_path / "run"
    main(["train", "--data", str(scenes), "--out", str(run), *TRAIN])
    assert main(["stages", "--ckpt", str(run / "model.ckpt"), "--lrms", str(scenes / "scene000.lrms.mst"),
                 "--pan", str(scenes / "scene000.pan.mst"), "--out", str(tmp_path / "st")]) == 0
    names = sorted(p.name for p in (tmp_path / "st").glob("*.mst"))
    assert names == ["stage00_z0.mst", "stage01_z0_5.mst", "stage02_z1.mst"]
    assert (tmp_path / "st" / "stage02_z1.png").exists() and (tmp_path / "st" / "stage02_z1.png.txt").exists()


def test_selfcheck_passes(capsys):
    assert main(["selfcheck"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [ln.split()[1].rstrip(":") for ln in lines] == ["fft", "adjoint", "wmsa", "gradcheck"]
    assert all(ln.startswith("PASS") for ln in lines)


def test_usage_errors_exit_2(capsys):
    for argv in (["bogus"], ["synth", "--nope"], ["eval"], []):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 2


def test_missing_required_option(capsys):
    assert main(["infer", "--out", "x.mst"]) == 1
    assert "--ckpt" in capsys.readouterr().err


def test_missing_file_is_reported(tmp_path, capsys):
    assert main(["infer", "--ckpt", str(tmp_path / "none.ckpt"), "--lrms", "a", "--pan", "b",
                 "--out", str(tmp_path / "o.mst")]) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_unknown_config_key_fails(tmp_path, capsys):
    (tmp_path / "bad.cfg").write_text("colour = blue\n")
    assert main(["synth", "--config", str(tmp_path / "bad.cfg"), "--out", str(tmp_path)]) == 1
    assert "colour" in capsys.readouterr().err

import json
import os

import numpy as np
import pytest

from sparsect import io
from sparsect.cli import main
from sparsect.phantoms import shepp_logan
from sparsect.tomo import ScanGeometry, radon

SMALL = ["--size", "32", "--detectors", "48", "--full-views", "36"]


def _gen(tmp_path, name="data", count=4, views=6, mult=3, seed=5):
    out = str(tmp_path / name)
    code = main([
        "gen-data", "--out", out, "--count", str(count), "--views", str(views),
        "--teacher-mult", str(mult), "--seed", str(seed), "--i0", "1e8", *SMALL,
    ])
    assert code == 0
    return out


def _write_config(tmp_path, **overrides):
    values = dict(iterations=4, batch_size=2, seed=1)
    values.update(overrides)
    path = tmp_path / "config.txt"
    path.write_text("".join(f"{k} = {v}\n" for k, v in values.items()))
    return str(path)


def test_gen_data_writes_files_and_manifest(tmp_path):
    out = _gen(tmp_path, count=8)
    files = [f for f in os.listdir(out) if f.endswith(".gdi")]
    assert len(files) == 24
    assert os.path.exists(os.path.join(out, "manifest.txt"))
    assert os.path.exists(os.path.join(out, "run.json"))


def test_gen_data_rerun_is_byte_identical(tmp_path):
    out_a = _gen(tmp_path, name="a")
    out_b = _gen(tmp_path, name="b")
    for fname in sorted(os.listdir(out_a)):
        if fname.endswith(".gdi"):
            a = open(os.path.join(out_a, fname), "rb").read()
            b = open(os.path.join(out_b, fname), "rb").read()
            assert a == b, fname


def test_gen_data_bad_divisor_exits_2(tmp_path):
    code = main([
        "gen-data", "--out", str(tmp_path / "x"), "--count", "1",
        "--views", "7", *SMALL,
    ])
    assert code == 2


def test_unknown_flag_exits_2(tmp_path):
    code = main(["gen-data", "--out", str(tmp_path / "x"), "--count", "1", "--frobnicate"])
    assert code == 2


def test_train_eval_reconstruct_pipeline(tmp_path):
    data = _gen(tmp_path, count=4)
    run_dir = str(tmp_path / "run")
    config = _write_config(tmp_path)
    assert main(["train", "--data", data, "--config", config, "--out", run_dir]) == 0
    assert os.path.exists(os.path.join(run_dir, "student.gdc"))
    log = open(os.path.join(run_dir, "log.csv")).read().splitlines()
    assert log[0] == "iter,lr,pixelS,pixelT,rdd,bcd,cos_mean"
    assert len(log) == 5
    manifest = json.load(open(os.path.join(run_dir, "run.json")))
    assert manifest["command"] == "train"

    report = str(tmp_path / "report.csv")
    ckpt = os.path.join(run_dir, "student.gdc")
    assert main(["eval", "--data", data, "--ckpt", ckpt, "--out", report]) == 0
    lines = open(report).read().splitlines()
    assert lines[0] == "id,psnr_fbp,psnr_model,ssim_fbp,ssim_model,rmse_fbp,rmse_model"
    assert lines[-1].startswith("mean,")
    assert len(lines) == 6  # header + 4 samples + mean

    pgm = str(tmp_path / "recon.pgm")
    infile = os.path.join(data, "00000_student.gdi")
    assert main(["reconstruct", "--ckpt", ckpt, "--in", infile, "--out", pgm]) == 0
    header = open(pgm, "rb").read(11)
    assert header == b"P5\n32 32\n25"  # start of 'P5\n<w> <h>\n255\n'
    assert os.path.exists(str(tmp_path / "recon.gdi"))


def test_train_baseline_flag(tmp_path):
    data = _gen(tmp_path, count=4)
    run_dir = str(tmp_path / "base")
    config = _write_config(tmp_path)
    assert main(["train", "--data", data, "--config", config, "--out", run_dir,
                 "--baseline"]) == 0
    manifest = json.load(open(os.path.join(run_dir, "run.json")))
    assert manifest["baseline"] is True
    assert manifest["alpha"] == 0.0


def test_train_determinism_byte_identical(tmp_path):
    data = _gen(tmp_path, count=4)
    config = _write_config(tmp_path)
    runs = []
    for name in ("r1", "r2"):
        run_dir = str(tmp_path / name)
        assert main(["train", "--data", data, "--config", config, "--out", run_dir]) == 0
        runs.append({
            "log": open(os.path.join(run_dir, "log.csv"), "rb").read(),
            "ckpt": open(os.path.join(run_dir, "student.gdc"), "rb").read(),
        })
    assert runs[0]["log"] == runs[1]["log"]
    assert runs[0]["ckpt"] == runs[1]["ckpt"]


def test_train_resume_continues_iteration_counter(tmp_path):
    data = _gen(tmp_path, count=4)
    config = _write_config(tmp_path)
    run_dir = str(tmp_path / "resume")
    assert main(["train", "--data", data, "--config", config, "--out", run_dir]) == 0
    state = os.path.join(run_dir, "state.gdc")
    assert main(["train", "--data", data, "--config", config, "--out", run_dir,
                 "--resume", state]) == 0
    rows = open(os.path.join(run_dir, "log.csv")).read().splitlines()[1:]
    iters = [int(line.split(",")[0]) for line in rows]
    assert iters == list(range(8))  # 4 fresh + 4 resumed, one counter


def test_train_missing_data_dir_exits_2(tmp_path):
    assert main(["train", "--data", str(tmp_path / "nope"), "--out",
                 str(tmp_path / "out")]) == 2


def test_eval_empty_dataset_exits_2(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    (empty / "manifest.txt").write_text("")
    assert main(["eval", "--data", str(empty), "--ckpt", "x", "--out",
                 str(tmp_path / "r.csv")]) == 2


def test_reconstruct_bad_magic_exits_2(tmp_path):
    data = _gen(tmp_path, count=2)
    run_dir = str(tmp_path / "run")
    config = _write_config(tmp_path)
    main(["train", "--data", data, "--config", config, "--out", run_dir])
    bad = tmp_path / "bad.gdi"
    bad.write_bytes(b"XXXX" + b"\x00" * 32)
    code = main(["reconstruct", "--ckpt", os.path.join(run_dir, "student.gdc"),
                 "--in", str(bad), "--out", str(tmp_path / "o.pgm")])
    assert code == 2


def test_fbp_command_full_vs_sparse(tmp_path):
    geom = ScanGeometry()
    phantom = shepp_logan(64)
    sino = radon(phantom, geom)
    sino_path = str(tmp_path / "s.gds")
    io.save_sinogram(sino_path, sino.values, sino.angles)

    full_path = str(tmp_path / "full.gdi")
    sparse_path = str(tmp_path / "sparse.gdi")
    assert main(["fbp", "--sino", sino_path, "--views", "180", "--out", full_path,
                 "--size", "64"]) == 0
    assert main(["fbp", "--sino", sino_path, "--views", "12", "--out", sparse_path,
                 "--size", "64"]) == 0
    from sparsect.metrics import psnr

    full_psnr = psnr(io.load_grid(full_path).astype(np.float64), phantom)
    sparse_psnr = psnr(io.load_grid(sparse_path).astype(np.float64), phantom)
    assert full_psnr >= 30.0
    assert sparse_psnr <= full_psnr - 5.0


def test_fbp_unknown_filter_exits_2(tmp_path):
    code = main(["fbp", "--sino", "x.gds", "--views", "12", "--filter", "bogus",
                 "--out", "y.gdi"])
    assert code == 2

import re

import numpy as np
import pandas as pd
import pytest

from core.data_loading import save_checkpoint
from core.mae import ComHymba
from core.main import THREAD_VARIABLES, main
from core.utils.utils import model_parameters


@pytest.fixture(autouse=True)
def restore_thread_variables(monkeypatch):
    for name in THREAD_VARIABLES:
        monkeypatch.setenv(name, "1")


def generate(out, capsys, seed=4):
    assert main(["generate", "--seed", str(seed), "--samples", "3", "--L", "4", "--K", "8", "--ntx", "2",
                 "--nrx", "2", "--paths", "3", "--out", str(out)]) == 0
    return re.search(r"checksum ([0-9a-f]{64})", capsys.readouterr().out).group(1)


@pytest.fixture
def dataset(tmp_path, capsys):
    generate(tmp_path / "data", capsys)
    return tmp_path / "data"


def test_usage_errors(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
    with pytest.raises(SystemExit):
        main(["bench", "--dims", "16x32", "--out", "t.csv"])


def test_generate_is_reproducible(tmp_path, capsys):
    first = generate(tmp_path / "a", capsys)
    assert generate(tmp_path / "b", capsys) == first
    assert generate(tmp_path / "c", capsys, seed=5) != first


@pytest.mark.parametrize("bad", [["--ntx", "0"], ["--paths", "0"], ["--delay-spread=-1e-7"], ["--processes", "0"]])
def test_generate_rejects_bad_arguments(tmp_path, capsys, bad):
    assert main(["generate", "--L", "4", "--K", "4", *bad, "--out", str(tmp_path / "x")]) == 1
    assert capsys.readouterr().err.startswith("error: ")
    assert not (tmp_path / "x").exists()


def test_pretrain_resume_and_eval(tmp_path, dataset):
    whole, split = tmp_path / "whole", tmp_path / "split"
    assert main(["pretrain", "--data", str(dataset), "--steps", "4", "--out", str(whole)]) == 0
    assert main(["pretrain", "--data", str(dataset), "--steps", "4", "--stop-at", "2", "--out", str(split)]) == 0
    assert len(pd.read_csv(split / "losses.csv")) == 2
    assert main(["pretrain", "--data", str(dataset), "--resume", str(split / "checkpoint"), "--out", str(split)]) == 0

    a, b = pd.read_csv(whole / "losses.csv"), pd.read_csv(split / "losses.csv")
    assert b["step"].tolist() == [0, 1, 2, 3]
    assert np.allclose(a["L_total"], b["L_total"], rtol=1e-12, atol=0)

    assert main(["eval", "--ckpt", str(whole / "checkpoint"), "--data", str(dataset)]) == 0
    report = pd.read_csv(whole / "checkpoint" / "eval_report.csv")
    assert list(report.columns) == ["sample", "nmse_model", "nmse_baseline"]
    assert len(report) == 3

    comb = tmp_path / "comb.csv"
    assert main(["eval", "--ckpt", str(whole / "checkpoint"), "--data", str(dataset), "--mask", "comb-frequency",
                 "--snr-db", "20", "--report", str(comb)]) == 0
    assert comb.is_file()


def test_eval_rejects_unknown_mask(tmp_path, dataset, capsys):
    save_checkpoint(tmp_path / "ckpt", ComHymba(model_parameters("toy")))
    assert main(["eval", "--ckpt", str(tmp_path / "ckpt"), "--data", str(dataset), "--mask", "comb-depth"]) == 1
    assert "comb-depth" in capsys.readouterr().err


def test_resume_needs_optimizer_state(tmp_path, dataset, capsys):
    save_checkpoint(tmp_path / "ckpt", ComHymba(model_parameters("toy")))
    assert main(["pretrain", "--data", str(dataset), "--resume", str(tmp_path / "ckpt"),
                 "--out", str(tmp_path / "run")]) == 1
    assert "optimizer state" in capsys.readouterr().err


def test_bench_writes_tables(tmp_path, capsys):
    out = tmp_path / "bench" / "t.csv"
    assert main(["bench", "--dims", "4x4x4", "8x8x8", "--scale", "toy", "--reps", "5", "--out", str(out)]) == 0
    frame = pd.read_csv(out)
    assert len(frame) == 4 and set(frame["variant"]) == {"comhymba", "transformer"}
    speedup = pd.read_csv(tmp_path / "bench" / "t_speedup.csv")
    assert speedup["tokens"].tolist() == [8, 64]
    assert "speedup" in capsys.readouterr().out


def test_bench_validation_failures(tmp_path, capsys):
    out = str(tmp_path / "t.csv")
    assert main(["bench", "--dims", "4x4x4", "--scale", "toy", "--reps", "1", "--out", out]) == 1
    assert main(["bench", "--scale", "toy", "--out", out]) == 1
    assert main(["bench", "--dims", "5x4x4", "--scale", "toy", "--reps", "5", "--out", out]) == 1
    err = capsys.readouterr().err
    assert err.count("error: ") == 3

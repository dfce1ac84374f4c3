import logging

import numpy as np
import pandas as pd
import pytest

import core.bench.latency as latency
from core.bench import (
    BENCH_COLUMNS, SPEEDUP_COLUMNS, bench_case, bench_forward, dims_for_tokens, run_benchmark, scaling_fit,
    speedup_table, speedup_trend, variant_config,
)
from core.mae import ComHymba, count_parameters
from core.utils.errors import ConfigurationError, MetricError
from core.utils.utils import model_parameters

LENGTHS = [256, 512, 1024, 2048, 4096]


@pytest.mark.parametrize("power", [1.0, 2.0])
def test_scaling_fit_recovers_power_law(power):
    times = [3e-3 * n ** power for n in LENGTHS]
    assert scaling_fit(LENGTHS, times) == pytest.approx(power, abs=0.01)


def test_scaling_fit_rejects_bad_sweeps():
    with pytest.raises(ConfigurationError):
        scaling_fit([256, 512, 4096], [1.0, 2.0, 3.0])
    with pytest.raises(ConfigurationError):
        scaling_fit([256, 320, 400, 512], [1.0, 2.0, 3.0, 4.0])
    with pytest.raises(ConfigurationError):
        scaling_fit(LENGTHS, [1.0, 2.0])
    with pytest.raises(MetricError):
        scaling_fit(LENGTHS, [1.0, 2.0, 0.0, 4.0, 5.0])
    with pytest.raises(MetricError):
        scaling_fit(LENGTHS, [1.0, 2.0, np.nan, 4.0, 5.0])


def record(variant, L, median, tokens=None):
    return {"variant": variant, "scale": "toy", "L": L, "K": 8, "Ns": 8, "tokens": tokens or L,
            "median_ms": median, "p10_ms": median, "p90_ms": median, "threads": 1}


def test_speedup_table_ratios():
    table = speedup_table([record("comhymba", 16, 2.0), record("transformer", 16, 2.0),
                           record("comhymba", 64, 2.0), record("transformer", 64, 7.0)])
    assert list(table.columns) == SPEEDUP_COLUMNS
    assert table["ratio"].tolist() == [1.0, 3.5]
    assert speedup_trend(table)
    assert not speedup_trend(table.assign(ratio=[3.5, 1.0]))


def test_speedup_table_drops_incomplete_cases(caplog):
    records = [record("comhymba", 16, 2.0), record("transformer", 16, 4.0), record("comhymba", 32, 1.0),
               record("comhymba", 64, 2.0), record("transformer", 64, np.nan)]
    with caplog.at_level(logging.WARNING):
        table = speedup_table(records)
    assert table["L"].tolist() == [16]
    assert caplog.text.count("row omitted") == 2
    with pytest.raises(MetricError):
        speedup_trend(table)


def test_bench_case_validation():
    case = bench_case("toy", (8, 8, 8))
    assert (case.n_time, case.n_freq, case.n_space, case.repetitions, case.warmup) == (8, 8, 8, 10, 2)
    with pytest.raises(ConfigurationError, match="repetitions"):
        bench_case("toy", (8, 8, 8), repetitions=1)
    with pytest.raises(ConfigurationError):
        bench_case("toy", (8, 8, 8), warmup=1)
    with pytest.raises(ConfigurationError):
        bench_case("toy", (0, 8, 8))


def test_variant_config(toy_config):
    assert variant_config("comhymba", toy_config).full_attention_layers == []
    assert variant_config("comhymba", toy_config, keep_full_layers=True).full_attention_layers == [0, 1]
    base = variant_config("transformer", toy_config)
    assert base.mixer == "attention" and base.n_meta == 0
    with pytest.raises(ConfigurationError):
        variant_config("rnn", toy_config)


def test_bench_forward_record():
    case = bench_case("toy", (8, 8, 8), repetitions=5)
    row = bench_forward("comhymba", case, threads=3)
    assert set(row) == set(BENCH_COLUMNS)
    assert row["tokens"] == 64 and row["threads"] == 3
    assert 0 < row["p10_ms"] <= row["median_ms"] <= row["p90_ms"]


def test_out_of_memory_is_recorded_as_failure(monkeypatch, caplog):
    def exhausted(fn, repetitions, warmup):
        raise MemoryError
    monkeypatch.setattr(latency, "_timings", exhausted)
    with caplog.at_level(logging.WARNING):
        row = bench_forward("transformer", bench_case("toy", (4, 4, 4), repetitions=5))
    assert np.isnan(row["median_ms"])
    assert "out of memory" in caplog.text


def test_run_benchmark_table():
    cases = [bench_case("toy", dims, repetitions=5) for dims in ((4, 4, 4), (8, 8, 8))]
    frame = run_benchmark(cases, progress=False)
    assert isinstance(frame, pd.DataFrame)
    assert list(frame.columns) == BENCH_COLUMNS
    assert frame["variant"].tolist() == ["comhymba", "transformer"] * 2
    assert frame["tokens"].tolist() == [8, 8, 64, 64]
    assert len(speedup_table(frame)) == 2


def test_dims_for_tokens():
    small = model_parameters("small")
    assert dims_for_tokens(64, small) == (8, 16, 16)
    assert dims_for_tokens(10, small) == (20, 4, 4)
    toy = model_parameters("toy")
    for n in LENGTHS:
        L, K, Ns = dims_for_tokens(n, toy)
        assert (L // 2) * (K // 2) * (Ns // 2) == n


@pytest.mark.slow
def test_latency_scaling_exponents(toy_config):
    medians = {}
    for variant in ("comhymba", "transformer"):
        medians[variant] = [bench_forward(variant, bench_case("toy", dims_for_tokens(n, toy_config), repetitions=5))
                            ["median_ms"] for n in LENGTHS]
    assert scaling_fit(LENGTHS, medians["comhymba"]) <= 1.25
    assert scaling_fit(LENGTHS, medians["transformer"]) >= 1.7
    ratios = np.asarray(medians["transformer"]) / np.asarray(medians["comhymba"])
    assert ratios[-1] > ratios[0]


@pytest.mark.parametrize("scale", ["toy", "small"])
def test_baseline_encoder_is_parameter_matched(scale):
    config = model_parameters(scale)
    hybrid = count_parameters(ComHymba(variant_config("comhymba", config)), "enc.")
    full = count_parameters(ComHymba(variant_config("transformer", config)), "enc.")
    assert abs(full - hybrid) / hybrid < 0.05

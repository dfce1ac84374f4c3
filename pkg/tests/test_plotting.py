import numpy as np
import pandas as pd

from core.bench import BENCH_COLUMNS
from core.mae.train import LOSS_COLUMNS
from core.plotting import plot_loss_curves, plot_scaling


def test_plot_loss_curves(tmp_path):
    steps = np.arange(6)
    frame = pd.DataFrame({"step": steps, "lr": 1e-3, "rho": np.linspace(0.4, 0.6, 6), "L_stat": 1.0 / (steps + 1),
                          "L_eng": 0.1, "L_phase": 0.2, "L_total": 1.0 / (steps + 1) + 0.3}, columns=LOSS_COLUMNS)
    frame.to_csv(tmp_path / "losses.csv", index=False)
    out = plot_loss_curves(tmp_path / "losses.csv")
    assert out == tmp_path / "losses.png" and out.stat().st_size > 0


def test_plot_scaling(tmp_path):
    rows = []
    for variant, power in (("comhymba", 1.0), ("transformer", 2.0)):
        for n in (256, 512, 1024, 2048):
            t = 1e-4 * n ** power
            rows.append({"variant": variant, "scale": "toy", "L": n, "K": 2, "Ns": 2, "tokens": n,
                         "median_ms": t, "p10_ms": 0.9 * t, "p90_ms": 1.1 * t, "threads": 1})
    rows[-1]["median_ms"] = np.nan
    pd.DataFrame(rows, columns=BENCH_COLUMNS).to_csv(tmp_path / "bench.csv", index=False)
    out = plot_scaling(tmp_path / "bench.csv", tmp_path / "scaling.png")
    assert out == tmp_path / "scaling.png" and out.is_file()

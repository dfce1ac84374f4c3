import numpy as np
import pytest

from core.masking import (
    MaskPlan, curriculum_ratio, load_plan, make_plan, mask_block, mask_cuboids, mask_dimension, mask_pilot,
    mask_pilot_comb, mask_random, sample_strategy, save_plan, schedule_from, strategy_feasible,
)
from core.masking.curriculum import CurriculumSchedule
from core.patchify import patch_grid
from core.utils.errors import MaskingError
from core.utils.utils import STRATEGIES, TrainConfig


def grid_of(g_l, g_k, g_s):
    return patch_grid((g_l, g_k, g_s), 1, 1, 1)


def test_random_counts():
    grid = grid_of(2, 2, 2)
    assert not mask_random(grid, 0.0, 0).masked.any()
    assert mask_random(grid, 0.75, 0).masked.sum() == 6
    with pytest.raises(MaskingError):
        mask_random(grid, 0.95, 0)
    with pytest.raises(MaskingError):
        mask_random(grid, 1.0, 0)


def test_random_is_uniform_over_indices():
    grid = grid_of(2, 2, 2)
    draws = 100_000
    counts = np.zeros(8)
    for seed in range(draws):
        counts += mask_random(grid, 0.5, seed).masked
    sigma = np.sqrt(0.25 / draws)
    assert np.all(np.abs(counts / draws - 0.5) < 5 * sigma)


def test_dimension_slabs():
    grid = grid_of(4, 3, 2)
    plan = mask_dimension(grid, "time", 0.25, 0)
    assert plan.masked.sum() == 3 * 2
    assert plan.strategy == "dimension-time"
    assert not mask_dimension(grid, "space", 0.0, 0).masked.any()


def test_dimension_run_is_contiguous():
    grid = grid_of(2, 8, 2)
    for seed in range(20):
        plan = mask_dimension(grid, "frequency", 0.5, seed)
        slabs = np.unique(grid.coords()[plan.masked][:, 1])
        assert len(slabs) == 4
        assert np.all(np.diff(slabs) == 1)
        assert plan.masked.sum() == 4 * 2 * 2


def test_dimension_run_too_long():
    with pytest.raises(MaskingError):
        mask_dimension(grid_of(4, 2, 2), "time", 0.9, 0)
    with pytest.raises(MaskingError):
        mask_dimension(grid_of(4, 2, 2), "depth", 0.5, 0)


def test_pilot_single_cube():
    plan = mask_pilot(grid_of(2, 2, 2))
    assert plan.masked.sum() == 7
    assert plan.observed.tolist() == [0]


def test_pilot_one_visible_per_cube():
    grid = grid_of(4, 4, 4)
    plan = mask_pilot(grid)
    assert len(plan.observed) == 8
    assert plan.achieved_ratio == 0.875
    coords = grid.coords()
    for a in range(0, 4, 2):
        for b in range(0, 4, 2):
            for c in range(0, 4, 2):
                in_cube = ((coords >= [a, b, c]) & (coords < [a + 2, b + 2, c + 2])).all(axis=1)
                assert (~plan.masked[in_cube]).sum() == 1
    assert np.all(coords[plan.observed] % 2 == 0)


def test_pilot_needs_even_extents():
    with pytest.raises(MaskingError, match="frequency"):
        mask_pilot(grid_of(4, 3, 2))


def test_comb_pilots():
    grid = grid_of(2, 8, 2)
    plan = mask_pilot_comb(grid, "frequency", 4)
    assert plan.strategy == "comb-frequency"
    assert sorted(np.unique(grid.coords()[plan.observed][:, 1]).tolist()) == [0, 4]
    assert plan.achieved_ratio == 0.75
    with pytest.raises(MaskingError):
        mask_pilot_comb(grid, "frequency", 1)


def test_cuboids():
    grid = grid_of(4, 4, 4)
    assert mask_cuboids(grid, [((0, 0, 0), (2, 2, 2))]).masked.sum() == 8
    with pytest.raises(MaskingError):
        mask_cuboids(grid, [((0, 0, 0), (4, 4, 4))])
    with pytest.raises(MaskingError):
        mask_cuboids(grid, [((3, 0, 0), (2, 1, 1))])


def test_block_coverage_sweep():
    grid = grid_of(8, 8, 8)
    for seed in range(100):
        plan = mask_block(grid, 0.6, seed)
        assert 0.6 <= plan.achieved_ratio <= 0.75
        assert plan.cuboids
        assert plan.bitmap() == mask_block(grid, 0.6, seed).bitmap()


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_partition_law_and_reproducibility(strategy):
    grid = grid_of(4, 4, 2)
    for seed in range(100):
        plan = make_plan(strategy, grid, 0.75, seed)
        observed, masked = set(plan.observed.tolist()), set(plan.masked_indices.tolist())
        assert observed.isdisjoint(masked)
        assert observed | masked == set(range(grid.n_patches))
        assert observed
        assert plan.bitmap() == make_plan(strategy, grid, 0.75, seed).bitmap()


AWKWARD_GRIDS = [(1, 2, 4), (3, 3, 3), (2, 4, 1), (1, 1, 5), (2, 1, 1)]


@pytest.mark.parametrize("counts", AWKWARD_GRIDS)
@pytest.mark.parametrize("ratio", [0.0, 0.3, 0.95])
def test_feasible_strategies_mask_and_observe(counts, ratio):
    grid = grid_of(*counts)
    for strategy in STRATEGIES:
        if not strategy_feasible(strategy, grid):
            continue
        for seed in range(20):
            plan = make_plan(strategy, grid, ratio, seed)
            assert plan.masked.any() and not plan.masked.all()


def test_strategy_feasibility():
    assert not strategy_feasible("pilot", grid_of(2, 4, 1))
    assert not strategy_feasible("pilot", grid_of(3, 2, 2))
    assert strategy_feasible("pilot", grid_of(2, 4, 2))
    assert strategy_feasible("dimension", grid_of(1, 1, 2))
    single = grid_of(1, 1, 1)
    assert not any(strategy_feasible(s, single) for s in STRATEGIES)
    with pytest.raises(MaskingError):
        make_plan("dimension", single, 0.5, 0)
    with pytest.raises(MaskingError):
        make_plan("random", single, 0.5, 0)
    with pytest.raises(MaskingError, match="even patch counts"):
        make_plan("pilot", grid_of(2, 4, 1), 0.5, 0)
    with pytest.raises(MaskingError):
        strategy_feasible("stripes", single)


def test_plan_requires_an_observed_patch():
    with pytest.raises(ValueError):
        MaskPlan(strategy="random", ratio=0.5, masked=np.ones(4, dtype=bool))


def test_plan_file_round_trip(tmp_path):
    plan = mask_block(grid_of(4, 4, 4), 0.5, 9)
    save_plan(plan, tmp_path / "plan.json")
    loaded = load_plan(tmp_path / "plan.json")
    assert loaded.bitmap() == plan.bitmap()
    assert loaded.cuboids == plan.cuboids
    assert loaded.strategy == "block" and loaded.seed == 9


def test_curriculum_endpoints():
    schedule = schedule_from(TrainConfig(), 1000)
    assert curriculum_ratio(schedule, 0) == 0.5
    assert curriculum_ratio(schedule, 1000) == 0.75
    assert curriculum_ratio(schedule, 500) == pytest.approx(0.625)
    assert curriculum_ratio(schedule, 5000) == 0.75
    with pytest.raises(ValueError):
        CurriculumSchedule(start=0.8, end=0.5, total_steps=10)


def test_strategy_sampler():
    assert {sample_strategy(t, 0, (1, 0, 0, 0)) for t in range(50)} == {"random"}
    draws = [sample_strategy(t, 5) for t in range(10_000)]
    for s in STRATEGIES:
        assert abs(draws.count(s) / len(draws) - 0.25) < 0.02
    assert [sample_strategy(t, 5) for t in range(20)] == draws[:20]
    with pytest.raises(MaskingError):
        sample_strategy(0, 0, (0, 0, 0, 0))

import math
from dataclasses import replace

import numpy as np
import pytest

from pulse.generator import initial_state, synthesize
from pulse.objective import ObjectiveConfig, downscaling_loss
from pulse.resample import build_downscaler
from pulse.search import Direction, OptimConfig, multi_restart, restart_seeds, run_pulse

SHORT = OptimConfig(steps=15, seed=3)


@pytest.fixture(scope="module")
def problem(desk_spec):
    r = build_downscaler("bicubic", 32, 4)
    lr = r.apply(synthesize(desk_spec, initial_state(desk_spec, [7, 0, 0])))
    return desk_spec, r, lr


def test_defaults():
    cfg = OptimConfig()
    assert (cfg.steps, cfg.lr, cfg.retraction) == (100, 0.4, "tangent")


@pytest.mark.parametrize("kw", [{"steps": 0}, {"lr": 0}, {"restarts": 0}, {"retraction": "exp"},
                                {"optimizer": "lbfgs"}, {"noise_lr": -1}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        OptimConfig(**kw)


def test_run_result_contract(problem):
    spec, r, lr = problem
    res = run_pulse(lr, spec, r, ObjectiveConfig(), SHORT)
    assert len(res.trajectory) == SHORT.steps + 1
    assert res.loss == res.trajectory.min()
    assert res.loss == pytest.approx(downscaling_loss(res.image, lr, r), abs=1e-15)
    assert res.converged == (res.loss <= 1e-3)
    assert res.seed == SHORT.seed and res.restart == 0
    assert res.trajectory[res.best_step] == res.loss
    assert np.all(np.diff(np.minimum.accumulate(res.trajectory)) <= 0)


def test_search_decreases_loss(problem):
    spec, r, lr = problem
    res = run_pulse(lr, spec, r, ObjectiveConfig(), replace(SHORT, steps=40))
    assert res.loss < 0.5 * res.trajectory[0]


def test_norms_stay_on_sphere(problem):
    spec, r, lr = problem
    log = []
    run_pulse(lr, spec, r, ObjectiveConfig(), SHORT, style_norm_log=log)
    assert len(log) == SHORT.steps
    assert np.max(np.abs(np.array(log) - 1.0)) <= 1e-9


@pytest.mark.parametrize("retraction", ["tangent", "renormalize"])
@pytest.mark.parametrize("optimizer", ["sgd", "momentum", "adam"])
def test_all_update_rules_run(problem, retraction, optimizer):
    spec, r, lr = problem
    cfg = replace(SHORT, steps=3, retraction=retraction, optimizer=optimizer)
    res = run_pulse(lr, spec, r, ObjectiveConfig(), cfg)
    assert np.all(np.isfinite(res.trajectory))


def test_bit_identical_reruns(problem):
    spec, r, lr = problem
    a = run_pulse(lr, spec, r, ObjectiveConfig(), SHORT)
    b = run_pulse(lr, spec, r, ObjectiveConfig(), SHORT)
    assert a.image.tobytes() == b.image.tobytes()
    assert a.trajectory.tobytes() == b.trajectory.tobytes()


def test_shape_mismatch(problem):
    spec, r, _ = problem
    with pytest.raises(ValueError):
        run_pulse(np.zeros((16, 16)), spec, r, ObjectiveConfig(), SHORT)


def test_single_restart_equals_run(problem):
    spec, r, lr = problem
    (only,) = multi_restart(lr, spec, r, ObjectiveConfig(), SHORT, n=1)
    direct = run_pulse(lr, spec, r, ObjectiveConfig(), SHORT)
    assert only.image.tobytes() == direct.image.tobytes()


def test_restarts_sorted_and_distinct(problem):
    spec, r, lr = problem
    runs = multi_restart(lr, spec, r, ObjectiveConfig(), SHORT, n=3)
    assert [x.loss for x in runs] == sorted(x.loss for x in runs)
    assert sorted(x.restart for x in runs) == [0, 1, 2]
    images = [x.image for x in runs]
    assert all(np.max(np.abs(a - b)) > 0 for i, a in enumerate(images) for b in images[i + 1:])


def test_noise_mode_keeps_styles(problem):
    spec, r, lr = problem
    seeds = restart_seeds(SHORT, 3, "noise")
    assert [s for s, _ in seeds] == [SHORT.seed] * 3
    assert len({ns for _, ns in seeds}) == 3
    runs = multi_restart(lr, spec, r, ObjectiveConfig(), replace(SHORT, steps=2), n=3, mode="noise")
    assert len({x.image.tobytes() for x in runs}) == 3


def test_restart_seeds_are_prefix_stable():
    assert restart_seeds(SHORT, 5, "restart")[:3] == restart_seeds(SHORT, 3, "restart")
    with pytest.raises(ValueError):
        restart_seeds(SHORT, 2, "shuffle")


def test_parallel_matches_serial(problem):
    spec, r, lr = problem
    cfg = replace(SHORT, steps=3)
    serial = multi_restart(lr, spec, r, ObjectiveConfig(), cfg, n=2)
    parallel = multi_restart(lr, spec, r, ObjectiveConfig(), cfg, n=2, jobs=2)
    assert [x.image.tobytes() for x in serial] == [x.image.tobytes() for x in parallel]


def test_adam_direction_is_scale_free():
    d = Direction(OptimConfig(optimizer="adam"))
    g = np.array([1e-6, -3e-6])
    assert np.allclose(d(g), np.sign(g), atol=1e-2)


def test_sgd_direction_is_gradient():
    d = Direction(OptimConfig(optimizer="sgd"))
    g = np.array([0.5, -2.0])
    assert np.array_equal(d(g), g)


def test_momentum_direction_accumulates():
    d = Direction(OptimConfig(optimizer="momentum", momentum=0.5))
    g = np.array([1.0])
    d(g)
    assert d(g)[0] == pytest.approx(1.5)


def test_unconverged_flag_on_noise(desk_spec):
    r = build_downscaler("bicubic", 32, 4)
    noise = np.random.default_rng(0).random((8, 8))
    res = run_pulse(noise, desk_spec, r, ObjectiveConfig(), SHORT)
    assert not res.converged
    assert res.image is not None and math.isfinite(res.loss)

from dataclasses import replace

import numpy as np
import pytest

from pulse.bench import BenchReport, GroupStats, recovery_experiment, robustness_experiment, success_rate
from pulse.formats import write_image
from pulse.generator import initial_state, synthesize
from pulse.resample import build_downscaler
from pulse.search import OptimConfig

FAST = OptimConfig(steps=5, restarts=2)


def test_zero_trials_rate_undefined(tiny_spec):
    report = recovery_experiment(tiny_spec, 2, 0, FAST)
    assert report.rate() is None
    assert report.to_csv() == "group,attempts,successes,rate\nrecovery,0,0,n/a\n"


def test_rate_is_exact_ratio():
    g = GroupStats(attempts=3, successes=2, runs=15)
    assert g.rate == 2 / 3
    report = BenchReport({"a": g, "b": GroupStats()}, {})
    assert report.to_csv().splitlines()[1:] == ["a,3,2,0.6667", "b,0,0,n/a"]
    assert "n/a" in report.to_text()


def test_recovery_report_counts(tiny_spec):
    report = recovery_experiment(tiny_spec, 2, 3, FAST, seed=4)
    stats = report.groups["recovery"]
    assert stats.attempts == 3 and stats.runs == 3 * FAST.restarts
    assert stats.successes == sum(it["converged"] for it in report.items)
    assert all(len(it["losses"]) == FAST.restarts for it in report.items)


def test_recovery_deterministic(tiny_spec):
    a = recovery_experiment(tiny_spec, 2, 2, FAST, seed=1)
    b = recovery_experiment(tiny_spec, 2, 2, FAST, seed=1)
    assert a.to_csv() == b.to_csv()
    assert [it["losses"] for it in a.items] == [it["losses"] for it in b.items]


def test_more_restarts_never_lower_rate(tiny_spec):
    rates = []
    losses = []
    for n in (1, 2, 4):
        rep = recovery_experiment(tiny_spec, 2, 4, replace(FAST, steps=20, restarts=n), seed=2)
        rates.append(rep.rate())
        losses.append([it["losses"] for it in rep.items])
    assert rates == sorted(rates)
    # earlier restarts are unchanged when more are added
    for small, big in zip(losses, losses[1:]):
        assert all(b[:len(s)] == s for s, b in zip(small, big))


def test_robustness_statistics(tiny_spec):
    rep = robustness_experiment(tiny_spec, "gaussian", 25, 3, seed=0, scale_factor=2, opt_config=FAST)
    assert len(rep.extra["residual_clean"]) == len(rep.extra["residual_noisy"]) == 3
    assert 0 <= rep.extra["denoised_fraction"] <= 1
    assert list(rep.groups) == ["gaussian:25"]


def test_robustness_with_zero_noise_is_recovery(tiny_spec):
    rob = robustness_experiment(tiny_spec, "gaussian", 0, 2, seed=5, scale_factor=2, opt_config=FAST)
    rec = recovery_experiment(tiny_spec, 2, 2, FAST, seed=5)
    assert [it["losses"] for it in rob.items] == [it["losses"] for it in rec.items]
    assert rob.extra["residual_noisy"] == [0.0, 0.0]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory, desk_spec):
    root = tmp_path_factory.mktemp("data")
    r = build_downscaler("bicubic", 32, 4)
    (root / "generated").mkdir()
    (root / "noise").mkdir()
    (root / "empty").mkdir()
    rng = np.random.default_rng(0)
    for i in range(2):
        write_image(root / "generated" / f"{i}.pgm", r.apply(synthesize(desk_spec, initial_state(desk_spec, 100 + i))))
        write_image(root / "noise" / f"{i}.pgm", rng.random((8, 8)))
    write_image(root / "generated" / "wrong_size.pgm", rng.random((6, 6)))
    (root / "noise" / "broken.pgm").write_bytes(b"P5\n8 8\n255\n")
    (root / "noise" / "notes.txt").write_text("ignored")
    return root


@pytest.fixture(scope="module")
def dataset_report(dataset, desk_spec):
    return success_rate(dataset, desk_spec, runs_per_image=3)


def test_success_rate_controls(dataset_report):
    rep = dataset_report
    assert rep.rate("generated") > rep.rate("noise")
    assert rep.rate("empty") is None
    assert rep.groups["generated"].attempts == 2 and rep.groups["generated"].runs == 6


def test_bad_items_reported_not_dropped(dataset_report):
    skipped = dict(dataset_report.skipped)
    assert set(skipped) == {"generated/wrong_size.pgm", "noise/broken.pgm"}
    assert "skipped generated/wrong_size.pgm" in dataset_report.to_text()


def test_success_rate_csv_reproducible(dataset, dataset_report, desk_spec):
    again = success_rate(dataset, desk_spec, runs_per_image=3)
    assert again.to_csv() == dataset_report.to_csv()
    assert dataset_report.to_csv().splitlines()[0] == "group,attempts,successes,rate"


def test_missing_root(tmp_path, desk_spec):
    with pytest.raises(FileNotFoundError):
        success_rate(tmp_path / "absent", desk_spec)

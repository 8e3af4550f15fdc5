import numpy as np
import pytest

from gradleak.errors import ConfigError
from gradleak.recovery import ENGINE_PSO, RecoveryConfig
from gradleak.robustness import GAUSSIAN, LAPLACE, NoiseSpec, noise_sweep, perturb
from gradleak.tensor import RngHandle
from gradleak.victim import SMOOTHING, init_mlp, make_instance, make_label


def smoothing_instance(seed, dims=(256, 10)):
    rng = RngHandle(seed)
    model = init_mlp(dims, rng)
    x = rng.uniform(0, 1, dims[0])
    label = make_label(SMOOTHING, int(rng.integers(dims[-1])), rng, dims[-1])
    return make_instance(model, x, label)


def test_noise_spec_validation():
    with pytest.raises(ConfigError):
        NoiseSpec("cauchy", 0.1)
    with pytest.raises(ConfigError):
        NoiseSpec(GAUSSIAN, 0.0)
    assert NoiseSpec(LAPLACE, 0.1).std == pytest.approx(np.sqrt(2) * 0.1)


def test_perturb_vanishing_scale_limit():
    inst = smoothing_instance(0, dims=(16, 6))
    noisy = perturb(inst.capture, NoiseSpec(GAUSSIAN, 1e-300), RngHandle(1))
    dev = np.abs(noisy.last_weight_grad - inst.capture.last_weight_grad).max()
    assert dev < 1e-250


def test_perturb_deterministic():
    inst = smoothing_instance(1, dims=(16, 6))
    a = perturb(inst.capture, NoiseSpec(LAPLACE, 0.01), RngHandle(7))
    b = perturb(inst.capture, NoiseSpec(LAPLACE, 0.01), RngHandle(7))
    assert np.array_equal(a.last_weight_grad, b.last_weight_grad)


def test_perturb_leaves_original_and_other_layers_alone():
    inst = smoothing_instance(2, dims=(12, 8, 6))
    before = [g.copy() for g in inst.capture.weight_grads]
    noisy = perturb(inst.capture, NoiseSpec(GAUSSIAN, 0.05), RngHandle(3))
    # original untouched
    for b0, g in zip(before, inst.capture.weight_grads):
        assert np.array_equal(b0, g)
    # all but the head bit-identical in the copy
    for li in range(len(before) - 1):
        assert np.array_equal(noisy.weight_grads[li], before[li])
    assert not np.array_equal(noisy.last_weight_grad, before[-1])


def test_perturb_all_layers_flag():
    inst = smoothing_instance(3, dims=(12, 8, 6))
    noisy = perturb(inst.capture, NoiseSpec(GAUSSIAN, 0.05), RngHandle(4),
                    all_layers=True)
    for li in range(len(inst.capture.weight_grads)):
        assert not np.array_equal(noisy.weight_grads[li],
                                  inst.capture.weight_grads[li])


def test_noise_statistics_match_spec():
    rng = RngHandle(5)
    n = 1_000_000
    for family, scale, expected_std in ((GAUSSIAN, 0.03, 0.03),
                                        (LAPLACE, 0.03, np.sqrt(2) * 0.03)):
        draws = NoiseSpec(family, scale).draw(n, rng)
        assert abs(draws.std() - expected_std) / expected_std < 0.02
        assert abs(draws.mean()) < 5 * expected_std / np.sqrt(n)


def test_noise_sweep_requires_instances():
    with pytest.raises(ConfigError):
        noise_sweep([], [1e-3], [GAUSSIAN], RecoveryConfig(), RngHandle(0))


def test_noise_sweep_small_grid():
    instances = [smoothing_instance(100 + i, dims=(512, 10)) for i in range(8)]
    cfg = RecoveryConfig(engine=ENGINE_PSO)
    report = noise_sweep(instances, [1e-4, 1e-3], [GAUSSIAN], cfg, RngHandle(9))
    assert len(report.points) == 2
    for point in report.points:
        assert point.accuracy == 100.0
        # scalar error tracks the injected noise scale
        assert point.mean_ls < 10 * point.scale
    assert report.points[0].mean_ls < report.points[1].mean_ls


def test_noise_sweep_csv(tmp_path):
    instances = [smoothing_instance(200, dims=(256, 10))]
    cfg = RecoveryConfig(engine=ENGINE_PSO)
    report = noise_sweep(instances, [1e-4], [GAUSSIAN, LAPLACE], cfg, RngHandle(2))
    path = tmp_path / "sweep.csv"
    report.write_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "family,scale,accuracy,mean_Ls,mean_Lr"
    assert len(lines) == 3

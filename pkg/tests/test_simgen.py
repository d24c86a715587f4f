import numpy as np
import pytest
from scipy.special import expit

from funcate.basis import fourier
from funcate.exceptions import InvalidArgumentError, NoValidRunsError
from funcate.simgen import (
    SimDesign,
    generate_outcome,
    generate_subjects,
    latent_scores,
    latent_to_scalar,
    run_cell,
    run_rng,
    simulate_dataset,
    summarize,
    trim_outliers,
    true_propensity,
)


def test_zero_latent_row(grid101):
    Z = np.zeros((1, 6))
    np.testing.assert_allclose(latent_to_scalar(Z), [[0.0, 0.0, 1.0 - np.exp(0.5)]], atol=1e-15)
    assert 1.0 - np.exp(0.5) == pytest.approx(-0.6487, abs=1e-4)


def test_generate_subjects_shapes(grid101):
    Z, W, sample = generate_subjects(7, np.random.default_rng(0), grid101)
    assert Z.shape == (7, 6) and W.shape == (7, 3) and sample.values.shape == (7, 101)
    # trajectories are the Fourier expansion of the latent scores
    A = latent_scores(Z)
    t = grid101.points
    expected = sum(A[:, [k - 1]] * fourier(k, t) for k in range(1, 7))
    np.testing.assert_allclose(sample.values, expected, atol=1e-12)


def test_latent_moments():
    Z = np.random.default_rng(1).standard_normal((1_000_000, 6))
    assert abs(latent_to_scalar(Z)[:, 2].mean()) < 0.01
    assert abs(latent_scores(Z)[:, 0].var() / 4.0 - 1.0) < 0.02


def test_true_propensity_examples(grid101):
    t = grid101.points
    zeros = np.zeros(101)
    assert true_propensity(1, np.zeros(6), np.zeros(3), zeros, grid101) == 0.5
    assert true_propensity(1, np.zeros(6), np.zeros(3), fourier(1, t), grid101) == pytest.approx(expit(2.0), abs=1e-3)
    assert expit(2.0) == pytest.approx(0.8808, abs=1e-4)
    assert true_propensity(3, np.zeros(6), np.ones(3), fourier(2, t), grid101) == 0.5
    with pytest.raises(InvalidArgumentError):
        true_propensity(4, np.zeros(6), np.zeros(3), zeros, grid101)


def test_psm2_predictor(grid101):
    # eta0(t, 0) integrates to -0.5 + int exp(-((t - 0.5) / 0.3)^2) dt
    t = np.linspace(0, 1, 200001)
    gauss = np.trapezoid(np.exp(-(((t - 0.5) / 0.3) ** 2)), t)
    p = true_propensity(2, np.zeros(6), np.zeros(3), np.zeros(101), grid101)
    assert p == pytest.approx(expit(-0.5 + gauss), abs=1e-4)


def test_outcome_examples():
    z = np.zeros(6)
    assert generate_outcome(1, 1, z, noise=0.0) == 210.0
    assert generate_outcome(1, 0, z, noise=0.0) == 200.0
    assert generate_outcome(2, 1, z, noise=0.0) == 0.0
    assert generate_outcome(2, 0, z, noise=0.0) == 0.0
    with pytest.raises(InvalidArgumentError):
        generate_outcome(3, 0, z, noise=0.0)


def test_outcome_om1_effect_is_ten():
    # E{Y(1) - Y(0)} = 10 since Z has mean zero
    Z = np.random.default_rng(2).standard_normal((200_000, 6))
    diff = generate_outcome(1, np.ones(len(Z)), Z, noise=np.zeros(len(Z))) - generate_outcome(
        1, np.zeros(len(Z)), Z, noise=np.zeros(len(Z))
    )
    assert abs(diff.mean() - 10.0) < 0.3


def test_psm3_treatment_fraction():
    sim = simulate_dataset(3, 1, 100_000, np.random.default_rng(3))
    Z = np.random.default_rng(99).standard_normal((400_000, 4))
    expected = expit(-Z[:, 0] + 0.5 * Z[:, 1] - 0.25 * Z[:, 2] - 0.1 * Z[:, 3]).mean()
    assert abs(sim.data.T.mean() - expected) < 0.01


def test_simulate_deterministic():
    a = simulate_dataset(1, 2, 80, run_rng(5, 3))
    b = simulate_dataset(1, 2, 80, run_rng(5, 3))
    np.testing.assert_array_equal(a.data.Y, b.data.Y)
    np.testing.assert_array_equal(a.data.sample.values, b.data.sample.values)
    c = simulate_dataset(1, 2, 80, run_rng(5, 4))
    assert not np.array_equal(a.data.Y, c.data.Y)


def test_trim_examples():
    kept, prop = trim_outliers([9.0, 10.0, 11.0])
    np.testing.assert_array_equal(kept, [9, 10, 11])
    assert prop == 1.0
    x = np.zeros(1000)
    x[-1] = 1e6
    kept, prop = trim_outliers(x)
    assert kept.size == 999 and kept.max() == 0.0 and prop == 0.999
    kept, prop = trim_outliers(np.full(5, 3.3))
    assert kept.size == 5 and prop == 1.0


def test_trim_single_pass():
    # after removing the far outlier, a second pass would flag 60 too; one pass keeps it
    x = np.concatenate([np.zeros(2000), [60.0, 1e7]])
    kept, _ = trim_outliers(x)
    assert 60.0 in kept and 1e7 not in kept


def test_trim_ignores_nonfinite():
    kept, prop = trim_outliers([1.0, np.nan, 2.0, np.inf])
    np.testing.assert_array_equal(kept, [1.0, 2.0])
    assert prop == 1.0
    with pytest.raises(NoValidRunsError):
        trim_outliers([np.nan, np.nan])


def test_summarize_examples():
    bias, rmse = summarize([9.0, 10.0, 11.0], 10.0)
    assert bias == 0.0 and rmse == pytest.approx(np.sqrt(2 / 3), abs=1e-15)
    assert summarize([10.0, 10.0], 10.0) == (0.0, 0.0)
    assert summarize([12.0, 12.0], 10.0) == (2.0, 2.0)
    with pytest.raises(NoValidRunsError):
        summarize([], 10.0)


@pytest.mark.parametrize(
    "kwargs",
    [dict(psm=4), dict(om=3), dict(n=49), dict(runs=0), dict(methods=("IPW",)), dict(methods=())],
)
def test_design_validation(kwargs):
    base = dict(psm=1, om=1, n=100, runs=2)
    base.update(kwargs)
    with pytest.raises(InvalidArgumentError):
        SimDesign(**base)


def test_design_normalizes_methods():
    assert SimDesign(1, 1, 100, 2, methods=("gfplm", "kbcb")).methods == ("GFPLM", "KBCB")


@pytest.fixture(scope="module")
def small_cell():
    design = SimDesign(1, 1, 200, 10, seed=7, methods=("GFPLM", "KBCB"))
    return design, run_cell(design, n_jobs=1)


def test_cell_shape(small_cell):
    design, summary = small_cell
    assert len(summary.rows) == 4
    assert [(r.method, r.estimator) for r in summary.rows] == [
        ("GFPLM", "HT"),
        ("GFPLM", "Hajek"),
        ("KBCB", "HT"),
        ("KBCB", "Hajek"),
    ]
    assert summary.true_tau == 10.0
    for r in summary.rows:
        assert 0 < r.retained <= 1
        assert r.rmse >= 0 and r.rmse**2 >= r.bias**2 - 1e-9


def test_cell_deterministic(small_cell):
    design, summary = small_cell
    again = run_cell(design, n_jobs=2)
    assert again.to_csv() == summary.to_csv()
    for key, values in summary.estimates.items():
        np.testing.assert_array_equal(values, again.estimates[key])


def test_cell_matches_manual_replication(small_cell):
    from funcate.ate import estimate_ate

    design, summary = small_cell
    d = simulate_dataset(1, 1, 200, run_rng(7, 4)).data
    est = estimate_ate(d, "KBCB")
    assert summary.estimates[("KBCB", "Hajek")][4] == est.hajek


def test_summary_csv(small_cell):
    _, summary = small_cell
    lines = summary.to_csv().splitlines()
    assert lines[0] == "psm,om,n,method,estimator,bias,rmse,retained"
    assert len(lines) == 5
    row = lines[2].split(",")
    assert row[:5] == ["1", "1", "200", "GFPLM", "Hajek"]
    assert float(row[6]) == summary.row("GFPLM", "Hajek").rmse


def test_summary_markdown(small_cell):
    _, summary = small_cell
    md = summary.to_markdown()
    assert "| GFPLM |" in md and "| KBCB |" in md
    assert f"{summary.row('KBCB', 'Hajek').rmse:.2f}" in md


def test_markdown_scales_om2():
    summary = run_cell(SimDesign(3, 2, 100, 3, seed=1, methods=("GFPLM",)), n_jobs=1)
    assert "values x 10" in summary.to_markdown()
    assert f"{10 * summary.row('GFPLM', 'Hajek').rmse:.2f}" in summary.to_markdown()
    assert summary.true_tau == 0.0


def test_failed_method_reported_missing():
    # 50 subjects cannot support the 53-parameter FGAM design
    summary = run_cell(SimDesign(1, 1, 50, 3, seed=2, methods=("FGAM", "GFPLM")), n_jobs=1)
    row = summary.row("FGAM", "Hajek")
    assert np.isnan(row.rmse) and row.n_failed == 3 and row.retained == 0.0
    assert summary.has_missing
    assert np.isfinite(summary.row("GFPLM", "Hajek").rmse)
    assert "| FGAM | - | - |" in summary.to_markdown()

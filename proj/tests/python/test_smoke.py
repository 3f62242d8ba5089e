import math
import os
import subprocess

import pytest

import firelgcp as fl


def small_config(variant=fl.ModelVariant.SHARED_SPATIAL, seed=3):
    c = fl.SimConfig()
    c.n_rows, c.n_cols, c.years = 4, 5, 2
    c.variant = variant
    c.hyper = fl.HyperParams(range=6.0, sd=0.8, rho=0.5)
    c.beta = [-1.0, 0.3]
    c.covariates = [fl.CovariateGenerator("elev", fl.CovariateKind.SMOOTH_FIELD, range=5.0)]
    c.mesh = fl.MeshOptions(3.0, 8.0, 5.0)
    c.seed = seed
    return c


def test_variogram_values():
    m = fl.VariogramModel.separable(
        fl.ExponentialComponent(0.562, 60.0, 0.438), fl.ExponentialComponent(0.8, 2.5, 0.2), 0.019)
    assert m(0.0, 0) == 0.0
    assert m.limit() == pytest.approx(0.019)
    assert m(30.0, 2) < m(120.0, 24)


def test_kriging_reproduces_stations():
    m = fl.VariogramModel.separable(
        fl.ExponentialComponent(1.0, 20.0, 0.0), fl.ExponentialComponent(1.0, 3.0, 0.0), 2.0)
    locs = [fl.Point2(0, 0), fl.Point2(10, 5), fl.Point2(3, 12)]
    data = fl.simulate_stations(m, locs, 12, 5.0, 4)
    r = fl.krige(m, data, locs, [6])
    for i, s in enumerate(data.stations):
        assert r.prediction[i, 0] == pytest.approx(s.values[5], abs=1e-8)


def test_matern_correlation_at_range():
    assert fl.matern_correlation(0.0, 10.0) == 1.0
    assert 0.1 < fl.matern_correlation(10.0, 10.0) < 0.16


def test_subsample_keeps_totals():
    recs = [fl.CountRecord(0, m, 1 if m == 3 else 0) for m in range(1, 13)]
    out = fl.subsample_zero_months(recs, 1)
    assert len(out) == 2
    assert sum(r.count for r in out) == 1
    assert sum(r.exposure for r in out) == pytest.approx(48.0)


def test_simulate_and_fit():
    d = fl.simulate_dataset(small_config())
    assert len(d.records) == 4 * 5 * 24
    model = fl.model_from_dataset(d, fl.ModelVariant.SHARED_SPATIAL)
    assert model.theta_names[:2] == ["range", "sd"]
    lm = fl.log_marginal_laplace(model, fl.HyperParams(range=6.0, sd=0.8))
    assert math.isfinite(lm)
    f = fl.fit(model, fl.HyperParams(range=5.0, sd=1.0), budget=200)
    assert f.diagnostics.outer_evaluations <= 200
    names = [h.name for h in f.hyper]
    assert "range" in names
    for b in f.fixed_effects:
        assert b.lower <= b.mean <= b.upper
    ors = fl.seasonal_odds_ratio(f, model, 1)
    assert len(ors) == 12 and ors[0].ratio == 1.0


def test_errors_map_to_python():
    with pytest.raises(ValueError):
        fl.VariogramModel.separable(
            fl.ExponentialComponent(1.0, -1.0), fl.ExponentialComponent(1.0, 1.0), 1.0)


def test_cli_entry_point(tmp_path):
    cfg = tmp_path / "sim.cfg"
    cfg.write_text("n_rows = 3\nn_cols = 3\nyears = 1\nvariant = FIXED_ONLY\nbeta = -1\nseed = 2\n")
    assert fl.run_cli(["--quiet", "simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")]) == 0
    assert (tmp_path / "sim" / "counts.csv").exists()
    exe = os.environ.get("FIRELGCP_CLI")
    if exe:
        r = subprocess.run([exe, "fit", "--counts", "missing.csv"], capture_output=True, text=True)
        assert r.returncode == 2

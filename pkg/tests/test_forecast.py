import json
import math
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from sunlease import forecast as fc
from sunlease.errors import ConvergenceError, DataFormatError, DomainError, ShapeError, UndefinedScoreError, VocabularyError
from sunlease.forecast.dataset import SynthParams, production_model, weather_text
from sunlease.forecast.features import feature_names, one_hot
from sunlease.solar import clearsky_slot

UTC = timezone.utc
OBS = fc.WeatherObservation(20.0, 18.0, 3.0, 4.0, "MostlySunny")
FCST = fc.WeatherForecast(25.0, 19.0, 3.5, 0.0, 55.0)


@pytest.fixture(scope="module")
def history():
    t0 = datetime(2016, 1, 1, tzinfo=UTC)
    slots = [t0 + timedelta(hours=k) for k in range(24 * 31)]
    return fc.HourlyClimatology.fit(slots, [0.1 * (s.hour % 12) for s in slots])


# --- features ---------------------------------------------------------------


def test_feature_dimension(barcelona, history):
    x = fc.build_features(barcelona, datetime(2016, 1, 10, 10, 20, tzinfo=UTC), OBS, FCST, 0.3, history)
    assert len(x) == len(x.as_array()) == 12 + len(fc.VOCABULARY) == len(feature_names())
    assert len(fc.build_features(barcelona, datetime(2016, 1, 10, 10, tzinfo=UTC), OBS, FCST, 0.3, history,
                                 ("Sunny", "MostlySunny", "Rain"))) == 15


def test_feature_targets_next_slot(barcelona, history):
    t = datetime(2016, 1, 10, 10, 20, tzinfo=UTC)
    x = fc.build_features(barcelona, t, OBS, FCST, 0.3, history)
    target = datetime(2016, 1, 10, 11, tzinfo=UTC)
    assert x.clearsky_power == clearsky_slot(barcelona, target)
    assert x.historical_hour_mean == pytest.approx(history.mean(target))
    assert x.last_production == 0.3


def test_night_features_have_no_clearsky(barcelona, history):
    x = fc.build_features(barcelona, datetime(2016, 1, 10, 22, tzinfo=UTC), OBS, FCST, 0.0, history)
    assert x.clearsky_power == 0.0


def test_one_hot():
    assert one_hot("Sunny", ("Sunny", "Cloudy", "Rain")) == (1.0, 0.0, 0.0)
    with pytest.raises(VocabularyError) as err:
        one_hot("Hail", ("Sunny", "Cloudy", "Rain"))
    assert "Sunny, Cloudy, Rain" in str(err.value)


def test_weather_validation():
    with pytest.raises(DomainError):
        fc.WeatherObservation(101, 10, 1, 1, "Sunny")
    with pytest.raises(DomainError):
        fc.WeatherForecast(50, 10, 1, -0.1, 50)


def test_climatology_fallbacks(history):
    assert history.mean(datetime(2016, 1, 3, 5, tzinfo=UTC)) == pytest.approx(0.5)
    # a month never seen falls back to that hour's mean over all months
    assert history.mean(datetime(2016, 7, 3, 5, tzinfo=UTC)) == pytest.approx(0.5)
    sparse = fc.HourlyClimatology.fit([datetime(2016, 1, 1, 12, tzinfo=UTC)], [0.8])
    assert sparse.mean(datetime(2016, 3, 1, 3, tzinfo=UTC)) == 0.8
    assert fc.HourlyClimatology.from_dict(history.to_dict()).to_dict() == history.to_dict()


# --- synthetic data ---------------------------------------------------------


def test_weather_text_thresholds():
    assert [weather_text(c) for c in (0, 10, 30, 60, 80, 95, 100)] == [
        "Sunny", "MostlySunny", "PartlyCloudy", "Cloudy", "Rain", "Storm", "Storm"
    ]


def test_production_model():
    assert production_model(0.8, 100, 20, 0.0, 1.0) == pytest.approx(0.2)
    assert production_model(0.8, 0, 35, 0.0, 1.0) == pytest.approx(0.8 * 0.96)
    assert production_model(0.0, 0, 20, 0.5, 1.0) == 0.0
    assert production_model(1.0, 0, 20, 0.5, 1.0) == 1.0


def test_overcast_zero_noise_is_quarter_clearsky(barcelona):
    s = fc.synth_series(3, 72, barcelona, params=SynthParams(noise_frac=0.0, fixed_cloud=100.0))
    cool = s.temperature <= 25
    assert np.allclose(s.production[cool], 0.25 * s.clearsky[cool])


def test_synth_is_deterministic(barcelona):
    a = fc.synth_dataset(4, 150, barcelona)
    b = fc.synth_dataset(4, 150, barcelona)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv() != fc.synth_dataset(5, 150, barcelona).to_csv()


def test_synth_bounds(synth7, barcelona):
    assert len(synth7) == 2000
    t = [r.target for r in synth7.records]
    assert min(t) >= 0 and max(t) <= barcelona.p_mpp
    ts = [r.t for r in synth7.records]
    assert ts == sorted(ts)
    with pytest.raises(DomainError):
        fc.synth_dataset(1, 99, barcelona)


def test_longer_series_extends_shorter(barcelona):
    short = fc.synth_series(9, 100, barcelona)
    long = fc.synth_series(9, 300, barcelona)
    assert np.array_equal(short.production, long.production[:100])


def test_dataset_csv_round_trip(small_set, barcelona):
    text = small_set.to_csv()
    again = fc.TrainingSet.from_csv(text, barcelona)
    assert again.to_csv() == text
    with pytest.raises(DataFormatError):
        fc.TrainingSet.from_csv("a,b\n", barcelona)
    bad = text.splitlines()
    bad[3] = bad[3].replace(",", ",x", 1)
    with pytest.raises(DataFormatError) as err:
        fc.TrainingSet.from_csv("\n".join(bad), barcelona)
    assert err.value.line == 4


def test_split(small_set):
    train, test = small_set.split(0.8)
    assert (len(train), len(test)) == (240, 60)
    assert train.records[-1].t < test.records[0].t
    for f in (0.0, 1.0, 0.001):
        with pytest.raises(DomainError):
            small_set.split(f)


# --- fitting ----------------------------------------------------------------


@pytest.mark.parametrize("kind", fc.KINDS)
def test_every_kind_predicts_finite(small_set, kind):
    model = fc.fit(small_set, kind)
    X, _ = small_set.design(model.climatology)
    pred = model.predict_many(X)
    assert np.all(np.isfinite(pred))
    assert np.all((pred >= 0) & (pred <= small_set.plant.p_mpp))


def test_naive_passthrough(small_set):
    model = fc.fit(small_set, "naive")
    x = np.zeros(18)
    x[0] = 0.8
    assert fc.predict(model, x) == 0.8
    with pytest.raises(ShapeError):
        fc.predict(model, np.zeros(5))


def test_linear_output_clipped(small_set):
    model = fc.fit(small_set, "ols")
    model.intercept -= 10.0
    X, _ = small_set.design(model.climatology)
    assert fc.predict(model, X[0]) == 0.0
    assert model.raw(X[:1])[0] < 0


def test_lasso_large_lambda_predicts_mean(small_set):
    model = fc.fit(small_set, "lasso", {"lambda": 1e6})
    assert np.all(model.weights == 0)
    X, y = small_set.design(model.climatology)
    day = X[:, 0] > 0
    assert model.intercept == pytest.approx(y[day].mean())


def test_degenerate_feature_flagged(small_set):
    X, y = small_set.design(small_set.climatology())
    X[:, 4] = 7.0
    model = fc.fit_matrix(X, y, "ridge", 1.0)
    assert model.weights[4] == 0.0
    assert any("obs_uv_index" in w for w in model.warnings)


def test_fit_preconditions(small_set):
    X, y = small_set.design(small_set.climatology())
    with pytest.raises(ShapeError):
        fc.fit_matrix(X[:10], y[:10], "ols", 1.0)
    with pytest.raises(ShapeError):
        fc.fit_matrix(X[:, :5], y, "ols", 1.0)
    with pytest.raises(DomainError):
        fc.fit_matrix(X, y, "gbm", 1.0)
    with pytest.raises(ConvergenceError):
        fc.fit_matrix(X, y, "svr", 1.0, {"max_iter": 3})


@pytest.mark.parametrize("kind", fc.KINDS)
def test_model_file_round_trip(small_set, kind):
    model = fc.fit(small_set, kind)
    text = fc.dumps(model)
    doc = json.loads(text)
    assert doc["kind"] == kind
    assert doc["vocabulary"] == list(fc.VOCABULARY)
    assert len(doc["features"]) == 18
    again = fc.loads(text)
    assert fc.dumps(again) == text
    X, _ = small_set.design(model.climatology)
    assert np.array_equal(model.predict_many(X), again.predict_many(X))


def test_retrain_is_identical(small_set):
    assert fc.dumps(fc.fit(small_set, "svr")) == fc.dumps(fc.fit(small_set, "svr"))


def test_model_file_errors():
    with pytest.raises(DataFormatError):
        fc.loads("{not json")
    with pytest.raises(DataFormatError):
        fc.loads('{"format": "other"}')
    with pytest.raises(DataFormatError):
        fc.loads('{"format": "sunlease-model", "kind": "ols"}')


# --- metrics ----------------------------------------------------------------


def test_r2_examples():
    assert fc.r2_score([1, 2, 3], [1, 2, 5]).r2 == pytest.approx(-1.0)
    y = np.array([0.3, 0.1, 0.7, 0.2])
    m = fc.r2_score(y, y)
    assert (m.r2, m.rmse, m.mae, m.n) == (1.0, 0.0, 0.0, 4)
    assert fc.r2_score(y, np.full(4, y.mean())).r2 == 0.0


def test_r2_errors():
    with pytest.raises(UndefinedScoreError):
        fc.r2_score([1, 1, 1], [1, 2, 3])
    with pytest.raises(ShapeError):
        fc.r2_score([1, 2], [1, 2, 3])
    with pytest.raises(ShapeError):
        fc.r2_score([1], [1])


def test_evaluate_ordering(eval7):
    assert eval7["ols"].r2 > eval7["naive"].r2
    assert eval7["svr"].r2 > eval7["naive"].r2
    assert all(m.n == 400 for m in eval7.values())
    for m in eval7.values():
        assert m.rmse >= m.mae >= 0
        assert math.isfinite(m.r2) and m.r2 <= 1


def test_evaluate_single_kind(small_set):
    rows = fc.evaluate(small_set, 0.8, ["naive"])
    assert [k for k, _ in rows] == ["naive"]
    assert "naive" in fc.metrics_table(rows)

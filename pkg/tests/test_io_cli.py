import json

import numpy as np
import pytest

from mstat.cli import main
from mstat.io import (ConfigError, DataFormatError, MomentsCache, RunConfig, cache_key, load_csv,
                      write_csv)
from mstat.kernels import median_bandwidth
from mstat.moments import HMoments, NullMoments
from mstat.thresholds import online_arl


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def files(tmp_path):
    r = np.random.default_rng(0)
    ref = tmp_path / "ref.csv"
    write_csv(ref, r.normal(size=(1500, 2)))
    null = tmp_path / "null.csv"
    write_csv(null, r.normal(size=(40, 2)))
    shift = tmp_path / "shift.csv"
    write_csv(shift, np.vstack([r.normal(size=(20, 2)), r.normal(size=(60, 2)) + 2.0]))
    return tmp_path, ref, null, shift


# --- csv -----------------------------------------------------------------------


def test_minimal_csv(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("0.0\n1.0\n")
    ds = load_csv(p)
    assert len(ds) == 2 and ds.d == 1 and ds.rows[1, 0] == 1.0


def test_header_detected(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("x,y\n1,2\n\n3,4\n")
    ds = load_csv(p)
    assert ds.header == ["x", "y"] and ds.rows.tolist() == [[1, 2], [3, 4]]


def test_ragged_names_line(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("1,2\n3,4\n5\n")
    with pytest.raises(DataFormatError, match="line 3"):
        load_csv(p)


def test_non_numeric_names_cell(tmp_path):
    p = tmp_path / "n.csv"
    p.write_text("1,2\n3,oops\n")
    with pytest.raises(DataFormatError, match="line 2, column 2"):
        load_csv(p)
    q = tmp_path / "inf.csv"
    q.write_text("1\ninf\n")
    with pytest.raises(DataFormatError, match="non-finite"):
        load_csv(q)


def test_missing_and_empty(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "nope.csv")
    (tmp_path / "e.csv").write_text("a,b\n")
    with pytest.raises(DataFormatError):
        load_csv(tmp_path / "e.csv")


def test_round_trip_is_exact(tmp_path):
    x = np.random.default_rng(1).standard_cauchy(size=(3000, 20))
    write_csv(tmp_path / "big.csv", x)
    assert np.array_equal(load_csv(tmp_path / "big.csv").rows, x)


# --- config ----------------------------------------------------------------------


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError, match="seed"):
        RunConfig(mode="offline", N=5, B_max=10, alpha=0.05, data="d", ref="r").validate()
    with pytest.raises(ConfigError, match="B_max"):
        RunConfig(mode="offline", seed=1, N=5, alpha=0.05, data="d", ref="r").validate()
    with pytest.raises(ConfigError):
        RunConfig(mode="threshold").validate()
    with pytest.raises(ConfigError, match="unknown config keys"):
        RunConfig.from_dict({"mode": "threshold", "colour": 1})
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"mode": "threshold", "alpha": 0.05, "B_max": 20}))
    assert RunConfig.load(p).validate().B_max == 20


def test_moments_cache(tmp_path):
    h = HMoments(0.2, 0.05, 0.01, 0.0, 0.0, 0.01, 0.0, 0.0, n_draws=10, seed=1)
    cache = MomentsCache(tmp_path / "c")
    pool = np.arange(12.0).reshape(6, 2)
    key = cache_key(pool, 1.5, 10, 1)
    assert cache.get(key, 3, [5]) is None
    cache.put(key, NullMoments.build(h, 2, [4]))
    got = cache.get(key, 3, [5, 6])
    assert got == NullMoments.build(h, 3, [5, 6])
    assert cache_key(pool + 1e-12, 1.5, 10, 1) != key
    assert cache_key(pool, 1.5, 10, 2) != key


# --- command line -----------------------------------------------------------------


def test_threshold_offline(capsys):
    code, out, _ = run(capsys, "threshold", "--alpha", "0.05", "--B-max", "20")
    assert code == 0 and json.loads(out)["b"] == pytest.approx(2.90, abs=0.01)


def test_threshold_online_round_trip(capsys):
    code, out, _ = run(capsys, "threshold", "--arl", "5000", "--B0", "20")
    assert online_arl(json.loads(out)["b"], 20) == pytest.approx(5000, rel=1e-9)


def test_threshold_zero_skew_moments_match(capsys, tmp_path):
    h = HMoments(0.2, 0.05, 0, 0, 0, 0, 0, 0, n_draws=10, seed=0)
    p = tmp_path / "m.json"
    p.write_text(NullMoments.build(h, 5, range(2, 21)).to_json())
    _, plain, _ = run(capsys, "threshold", "--alpha", "0.01", "--B-max", "20")
    code, corr, _ = run(capsys, "threshold", "--alpha", "0.01", "--B-max", "20", "--corrected",
                        "--moments", str(p))
    assert code == 0 and json.loads(corr)["b"] == pytest.approx(json.loads(plain)["b"], abs=1e-12)


def test_detect_offline_exit_codes(capsys, files):
    d, ref, null, shift = files
    code, out, _ = run(capsys, "detect-offline", "--ref", str(ref), "--data", str(shift), "--N", "5",
                       "--B-max", "60", "--alpha", "0.05", "--seed", "3", "--n-draws", "4000")
    rep = json.loads(out)
    assert code == 2 and rep["alarm"] and 10 <= rep["change_location"] <= 30
    code, out, _ = run(capsys, "detect-offline", "--ref", str(ref), "--data", str(null), "--N", "5",
                       "--B-max", "40", "--alpha", "0.001", "--seed", "3", "--n-draws", "4000")
    assert code == 0 and not json.loads(out)["alarm"]


def test_bandwidth_comes_from_reference_only(capsys, files):
    d, ref, _, shift = files
    _, out, _ = run(capsys, "detect-offline", "--ref", str(ref), "--data", str(shift), "--N", "5",
                    "--B-max", "60", "--alpha", "0.05", "--seed", "3", "--n-draws", "2000")
    assert json.loads(out)["bandwidth"] == median_bandwidth(load_csv(ref).rows, seed=3)


def test_deterministic_and_csv_series(capsys, files):
    d, ref, _, shift = files
    args = ["detect-offline", "--ref", str(ref), "--data", str(shift), "--N", "5", "--B-max", "60",
            "--alpha", "0.05", "--seed", "8", "--n-draws", "2000"]
    _, a, _ = run(capsys, *args)
    _, b, _ = run(capsys, *args, "--format", "csv", "--out", str(d / "z.csv"))
    assert a == b
    text = (d / "z.csv").read_text().splitlines()
    assert text[0] == "B,Z,Z_std" and len(text) == 60
    z = load_csv(d / "z.csv").rows
    assert np.array_equal(z[:, 2], np.array(json.loads(a)["statistic"]))


def test_moments_command_uses_cache(capsys, files):
    d, ref, _, _ = files
    args = ["moments", "--ref", str(ref), "--N", "5", "--B0", "10", "--seed", "1", "--n-draws",
            "3000", "--moments-cache", str(d / "cache")]
    code, first, _ = run(capsys, *args)
    assert code == 0 and len(list((d / "cache").iterdir())) == 1
    _, second, _ = run(capsys, *args)
    assert first == second


def test_detect_online_jsonl_and_codes(capsys, files):
    d, ref, null, shift = files
    code, out, _ = run(capsys, "detect-online", "--ref", str(ref), "--data", str(shift), "--N", "5",
                       "--B0", "10", "--arl", "1000", "--seed", "2", "--jsonl",
                       "--out", str(d / "rep.json"))
    lines = [json.loads(s) for s in out.splitlines()]
    assert code == 2 and lines[-1]["alarm"] and not any(x["alarm"] for x in lines[:-1])
    assert lines[0]["t"] == 10
    rep = json.loads((d / "rep.json").read_text())
    assert rep["stopping_time"] == lines[-1]["t"] and rep["statistic"][-1] > rep["threshold"]
    code, out, _ = run(capsys, "detect-online", "--ref", str(ref), "--data", str(null), "--N", "5",
                       "--B0", "10", "--arl", "1e6", "--seed", "2")
    assert code == 0 and json.loads(out)["stopping_time"] is None


def test_errors_exit_one(capsys, files, tmp_path):
    d, ref, null, _ = files
    assert run(capsys, "bogus")[0] == 1
    assert run(capsys, "threshold", "--alpha", "0.05")[0] == 1
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3\n")
    code, _, err = run(capsys, "detect-offline", "--ref", str(bad), "--data", str(null), "--N", "5",
                       "--B-max", "40", "--alpha", "0.05", "--seed", "1")
    assert code == 1 and "line 2" in err
    code, _, err = run(capsys, "detect-offline", "--ref", str(ref), "--data", str(null), "--N", "5",
                       "--B-max", "40", "--alpha", "0.05")
    assert code == 1 and "seed" in err


def test_config_file_and_override(capsys, files):
    d, ref, null, _ = files
    cfg = d / "run.json"
    cfg.write_text(json.dumps({"mode": "offline", "seed": 4, "N": 5, "B_max": 40, "alpha": 0.05,
                               "ref": str(ref), "data": str(null), "n_draws": 2000}))
    code, out, _ = run(capsys, "detect-offline", "--config", str(cfg), "--alpha", "0.2")
    assert code in (0, 2) and json.loads(out)["alpha"] == 0.2


def test_simulate_command(capsys):
    code, out, _ = run(capsys, "simulate", "--experiment", "arl", "--seed", "0", "--param", "trials=3",
                       "--param", 'nulls=["gaussian"]', "--param", "B0=10", "--param", "horizon=200")
    doc = json.loads(out)
    assert code == 0 and doc["experiment"] == "arl" and doc["rows"][0]["null"] == "gaussian"


def test_offline_null_alarm_rate_through_cli(capsys, tmp_path):
    r = np.random.default_rng(21)
    ref = tmp_path / "ref.csv"
    # d = 20 as in the tabulated thresholds; low-dimensional nulls are more skewed
    write_csv(ref, r.normal(size=(2000, 20)))
    alarms = 0
    reps = 150
    for k in range(reps):
        data = tmp_path / f"d{k}.csv"
        write_csv(data, r.normal(size=(20, 20)))
        code, _, _ = run(capsys, "detect-offline", "--ref", str(ref), "--data", str(data), "--N", "5",
                         "--B-max", "20", "--alpha", "0.05", "--seed", str(k), "--n-draws", "20000",
                         "--moments-cache", str(tmp_path / "c"))
        assert code in (0, 2)
        alarms += code == 2
    assert 0.02 <= alarms / reps <= 0.10

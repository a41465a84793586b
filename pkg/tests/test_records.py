import hashlib
import json
import math
from pathlib import Path

import numpy as np
import pytest

from entroflow import cli, runner
from entroflow.config import (
    EstimateConfig,
    GrowthConfig,
    SweepConfig,
    SystemConfig,
    parse_config,
    serialize_config,
)
from entroflow.records import (
    ExperimentRecord,
    canonical_json,
    config_hash,
    jsonable,
    load_record,
    read_csv,
    verify_record,
    write_csv,
    write_record,
)

SMALL_ESTIMATE = EstimateConfig(
    resolution=48, n_schedule=(1, 2, 3, 4), delta_schedule=(0.2, 0.1)
)
SMALL_GROWTH = GrowthConfig(delta=0.05, N_schedule=(1, 2, 3, 4, 5, 6))


def run_small(cfg, out_dir, **kw):
    return runner.run(cfg, out_dir=str(out_dir), **kw)


def test_config_hash_is_sha256_of_canonical_json():
    payload = serialize_config(EstimateConfig())
    expect = hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()
    assert config_hash(payload) == expect
    assert (
        config_hash(payload)
        == "6899ba1e776729163dc911bf6049c8b3c15cd6fa2065c7c8b77652c4b4353bd3"
    )
    # key order cannot change the hash
    shuffled = dict(reversed(list(payload.items())))
    assert config_hash(shuffled) == config_hash(payload)


def test_jsonable_flattens_numpy_and_tuples():
    out = jsonable({"a": np.arange(3), "b": (np.float64(0.5), True)})
    assert out == {"a": [0, 1, 2], "b": [0.5, True]}
    assert type(out["b"][0]) is float
    json.dumps(out)


def test_csv_round_trip_preserves_float_text(tmp_path):
    header = ["n", "value", "flag", "label"]
    rows = [[1, 0.1, True, "alpha"], [2, 1 / 3, False, "beta"]]
    path = tmp_path / "table.csv"
    write_csv(path, header, rows)
    text = path.read_text()
    assert repr(1 / 3) in text
    assert "\r" not in text
    got_header, got_rows = read_csv(path)
    assert got_header == header
    assert got_rows[0] == ["1", repr(0.1), "1", "alpha"]
    assert not list(tmp_path.glob("*tmp*"))


def test_load_record_rejects_missing_fields(tmp_path):
    rec = ExperimentRecord(
        id=config_hash(serialize_config(SMALL_ESTIMATE)),
        config=serialize_config(SMALL_ESTIMATE),
        results={},
        seeds={},
        timings={},
    )
    rdir = write_record(rec, tmp_path)
    data = json.loads((rdir / "record.json").read_text())
    del data["seeds"]
    (rdir / "record.json").write_text(json.dumps(data))
    with pytest.raises(ValueError, match="seeds"):
        load_record(rdir)


@pytest.fixture(scope="module")
def estimate_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("est")
    record = run_small(SMALL_ESTIMATE, out, workers=1)
    return record, out / record.id


@pytest.fixture(scope="module")
def growth_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("gro")
    record = run_small(SMALL_GROWTH, out, workers=1)
    return record, out / record.id


def test_persisted_estimate_verifies(estimate_run):
    record, rdir = estimate_run
    report = verify_record(rdir)
    assert report.passed, report.failures
    assert report.record_id == record.id
    assert "PASS" in report.summary()


def test_verify_catches_id_mismatch(estimate_run, tmp_path):
    record, rdir = estimate_run
    data = json.loads((rdir / "record.json").read_text())
    data["id"] = "0" * 64
    clone = tmp_path / "clone"
    clone.mkdir()
    (clone / "record.json").write_text(json.dumps(data))
    (clone / "counts.csv").write_bytes((rdir / "counts.csv").read_bytes())
    report = verify_record(clone)
    assert not report.passed
    assert any("config hash" in f for f in report.failures)
    assert "FAIL" in report.summary()


def test_verify_catches_csv_tampering(estimate_run, tmp_path):
    record, rdir = estimate_run
    clone = tmp_path / "clone"
    clone.mkdir()
    (clone / "record.json").write_bytes((rdir / "record.json").read_bytes())
    header, rows = read_csv(rdir / "counts.csv")
    rows[2][2] = "1"
    write_csv(clone / "counts.csv", header, rows)
    report = verify_record(clone)
    assert not report.passed
    assert any("counts.csv" in f and "count" in f for f in report.failures)


def test_verify_catches_count_table_violation(estimate_run, tmp_path):
    record, rdir = estimate_run
    data = json.loads((rdir / "record.json").read_text())
    # forge a count drop inside the JSON payload and its CSV twin
    counts = data["results"]["counts"]
    counts[1][2] = 1
    clone = tmp_path / "clone"
    clone.mkdir()
    (clone / "record.json").write_text(json.dumps(data))
    write_csv(
        clone / "counts.csv",
        ["n", "delta", "count", "saturated"],
        [[n, d, c, s] for n, d, c, s in counts],
    )
    report = verify_record(clone)
    assert not report.passed
    assert any("drops" in f and "n=" in f and "delta=" in f for f in report.failures)


def test_verify_catches_center_arc_crowding(growth_run, tmp_path):
    record, rdir = growth_run
    data = json.loads((rdir / "record.json").read_text())
    arcs = data["results"]["center_arcs"]
    row = max(arcs, key=len)
    row[1] = row[0] + 0.01
    clone = tmp_path / "clone"
    clone.mkdir()
    (clone / "record.json").write_text(json.dumps(data))
    header, rows = read_csv(rdir / "growth.csv")
    write_csv(clone / "growth.csv", header, rows)
    report = verify_record(clone)
    assert not report.passed
    assert any("apart in arc" in f for f in report.failures)


def test_identity_system_estimate_rate_zero(tmp_path):
    cfg = EstimateConfig(
        system=SystemConfig(matrix=((1,),)),
        resolution=64,
        n_schedule=(1, 2, 3, 4),
        delta_schedule=(0.2, 0.1),
    )
    record = run_small(cfg, tmp_path, workers=1)
    assert record.results["rate"] == pytest.approx(0.0, abs=1e-12)
    counts = {(n, d): c for n, d, c, _ in record.results["counts"]}
    for (n, d), c in counts.items():
        assert c == counts[(1, d)]


def test_rerun_is_byte_identical_except_timings(tmp_path):
    a = run_small(SMALL_GROWTH, tmp_path / "a", workers=1)
    b = run_small(SMALL_GROWTH, tmp_path / "b", workers=1)
    assert a.id == b.id
    assert canonical_json(a.results) == canonical_json(b.results)
    assert a.seeds == b.seeds
    assert a.version == b.version
    csv_a = (tmp_path / "a" / a.id / "growth.csv").read_bytes()
    csv_b = (tmp_path / "b" / b.id / "growth.csv").read_bytes()
    assert csv_a == csv_b


def test_worker_count_does_not_change_results(tmp_path):
    a = run_small(SMALL_ESTIMATE, tmp_path / "w1", workers=1)
    b = run_small(SMALL_ESTIMATE, tmp_path / "w2", workers=2)
    assert canonical_json(a.results) == canonical_json(b.results)


def test_seed_override_changes_seeds_and_id(tmp_path):
    cfg = EstimateConfig(cloud="random", count=200, n_schedule=(1, 2, 3))
    base = run_small(cfg, tmp_path / "base", workers=1)
    seeded = run_small(cfg, tmp_path / "seeded", workers=1, seed=11)
    assert seeded.seeds == {"order_seed": 11, "cloud_seed": 11}
    assert seeded.id != base.id


def test_sweep_points_share_ids_with_direct_runs(tmp_path):
    sweep_cfg = SweepConfig(base=SMALL_GROWTH, grid=(("n", (4,)),))
    master, points = runner.sweep(sweep_cfg, out_dir=str(tmp_path))
    assert len(points) == 1
    direct = run_small(
        GrowthConfig(delta=0.05, N_schedule=(1, 2, 3, 4)), tmp_path / "direct"
    )
    assert points[0].id == direct.id
    assert master.results["points"][0]["error"] is None
    assert verify_record(tmp_path / master.id).passed


def test_sweep_records_point_failures_and_aggregate(tmp_path):
    sweep_cfg = SweepConfig(base=SMALL_GROWTH, grid=(("delta", (0.05, -1.0)),))
    master, points = runner.sweep(sweep_cfg, out_dir=str(tmp_path))
    rows = master.results["points"]
    assert len(rows) == 2 and len(points) == 1
    assert rows[0]["error"] is None
    assert "delta" in rows[1]["error"]
    header, agg = read_csv(tmp_path / master.id / "aggregate.csv")
    assert header == ["delta", "rate", "stderr"]
    assert math.isnan(float(agg[1][1]))
    report = verify_record(tmp_path / master.id)
    assert report.passed, report.failures


def test_sweep_rejects_non_sweep_config(tmp_path):
    with pytest.raises(ValueError, match="sweep"):
        runner.sweep(SMALL_ESTIMATE, out_dir=str(tmp_path))


def write_config(tmp_path, cfg):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(serialize_config(cfg)))
    return path


def test_cli_run_verify_list_roundtrip(tmp_path, capsys):
    cfg_path = write_config(tmp_path, SMALL_GROWTH)
    out = tmp_path / "runs"
    assert cli.main(["run", "--config", str(cfg_path), "--out", str(out)]) == 0
    run_line = capsys.readouterr().out
    assert "rate=" in run_line

    record_id = next(out.iterdir()).name
    assert cli.main(["verify", str(out / record_id)]) == 0
    assert "PASS" in capsys.readouterr().out

    assert cli.main(["list", "--out", str(out)]) == 0
    listing = capsys.readouterr().out
    assert record_id[:12] in listing and "growth" in listing


def test_cli_verify_reports_failure(tmp_path, capsys):
    cfg_path = write_config(tmp_path, SMALL_GROWTH)
    out = tmp_path / "runs"
    cli.main(["run", "--config", str(cfg_path), "--out", str(out)])
    capsys.readouterr()
    rdir = next(out.iterdir())
    data = json.loads((rdir / "record.json").read_text())
    data["config"]["delta"] = 0.123
    (rdir / "record.json").write_text(json.dumps(data))
    assert cli.main(["verify", str(rdir)]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_cli_bad_config_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"experiment": "estimate", "surprise": 1}))
    assert cli.main(["run", "--config", str(bad)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error:") and "surprise" in err
    assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 2

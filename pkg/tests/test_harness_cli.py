import json

import pytest

from rplsybil.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_TOPOLOGY, main, summarize
from rplsybil.harness import COLUMNS, export, read_rows, rows_to_csv, run_scenario, sort_rows
from rplsybil.scenario import ScenarioConfig, dump_config

SMALL = ScenarioConfig(node_count=15, sybil_ratio=0.2, duration_s=900.0)


@pytest.fixture
def cfg_file(tmp_path):
    path = tmp_path / "small.cfg"
    path.write_text(dump_config(SMALL))
    return str(path)


def test_empty_export_is_header_only(tmp_path):
    out = tmp_path / "e.csv"
    export([], str(out))
    assert out.read_text() == ",".join(COLUMNS) + "\n"


def test_csv_round_trip(tmp_path):
    row = run_scenario(SMALL).row()
    for name in ("r.csv", "r.jsonl"):
        path = tmp_path / name
        export([row], str(path), "jsonl" if name.endswith("jsonl") else "csv")
        back = read_rows(str(path))[0]
        assert back["seed"] == row["seed"] and back["overhead_bytes"] == row["overhead_bytes"]
        assert back["pdr"] == pytest.approx(row["pdr"])


def test_rows_sort_by_scenario_ratio_defense_seed():
    rows = [
        {"scenario_id": "a", "sybil_ratio": 0.3, "defense": "UITrust", "seed": 2},
        {"scenario_id": "a", "sybil_ratio": 0.1, "defense": "UITrust", "seed": 5},
        {"scenario_id": "a", "sybil_ratio": 0.3, "defense": "IdCount", "seed": 9},
        {"scenario_id": "a", "sybil_ratio": 0.3, "defense": "UITrust", "seed": 1},
    ]
    assert [(r["sybil_ratio"], r["defense"], r["seed"]) for r in sort_rows(rows)] == [
        (0.1, "UITrust", 5), (0.3, "IdCount", 9), (0.3, "UITrust", 1), (0.3, "UITrust", 2)]


def test_run_writes_row_and_trace(cfg_file, tmp_path):
    out, trace = tmp_path / "run.jsonl", tmp_path / "run.ndjson"
    assert main(["run", "--config", cfg_file, "--seed", "3", "--out", str(out), "--trace", str(trace)]) == EXIT_OK
    row = json.loads(out.read_text())
    assert row["seed"] == 3 and list(row) == list(COLUMNS)
    first = json.loads(trace.read_text().splitlines()[0])
    assert set(first) == {"t", "kind", "src", "dst", "bytes", "outcome"}


def test_sweep_and_report(cfg_file, tmp_path, capsys):
    out = tmp_path / "res"
    assert main(["sweep", "--config", cfg_file, "--seeds", "2", "--ratios", "0.2",
                 "--defenses", "UITrust,NoneMrhof", "--out", str(out)]) == EXIT_OK
    rows = read_rows(str(out / "results.csv"))
    assert len(rows) == 4
    assert main(["report", "--in", str(out), "--format", "csv", "--summary"]) == EXIT_OK
    text = capsys.readouterr().out
    assert text.splitlines()[0] == ",".join(COLUMNS)
    assert len(text.splitlines()) == 3
    assert len(summarize(rows)) == 2


def test_exit_codes(cfg_file, tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("sybil_ratio = 2\n")
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "x.csv")]) == EXIT_CONFIG
    assert main(["sweep", "--config", cfg_file, "--ratios", "0.1,x", "--out", str(tmp_path / "s")]) == EXIT_CONFIG
    topo = tmp_path / "topo.cfg"
    topo.write_text("node_count = 20\nfield_side_m = 1000\ntx_range_m = 5\n")
    assert main(["run", "--config", str(topo), "--out", str(tmp_path / "x.csv")]) == EXIT_TOPOLOGY
    assert main(["run", "--config", cfg_file, "--out", str(tmp_path / "missing" / "x.csv")]) == EXIT_IO
    assert main(["report", "--in", str(tmp_path / "nowhere")]) == EXIT_IO


def test_csv_text_is_stable():
    rows = [run_scenario(SMALL).row()]
    assert rows_to_csv(rows) == rows_to_csv([run_scenario(SMALL).row()])

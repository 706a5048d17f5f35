import json
import re

import numpy as np
import pytest
from click.testing import CliRunner

from rotwin.cli import main
from rotwin.compare import count_dataset
from rotwin.config import load_config, parse_config
from rotwin.dataset_io import read_dataset, write_dataset
from rotwin.errors import ConfigurationError, ParseError
from rotwin.hierarchy import RotationSet
from rotwin.inference import rwr_estimate
from rotwin.rng import make_rng
from rotwin.simgen import CopulaScenario, FrailtyScenario, simulate_arms

COPULA_TOML = """
schema_version = 1
hierarchy = [["death"], ["nonfatal1", "nonfatal2", "nonfatal3"]]
[[endpoints]]
id = "death"
[[endpoints]]
id = "nonfatal1"
[[endpoints]]
id = "nonfatal2"
[[endpoints]]
id = "nonfatal3"
"""

SIM_TOML = COPULA_TOML + """
[simulation]
design = "copula"
replicates = 3
seed = 2
reference_pairs = 2000
[simulation.scenario]
n_per_arm = 25
[simulation.grid]
study_days = [500, 1500]
alpha_nonfatal = [[0.15, 0.15, 0.15], [0.3, 0.05, 0.05]]
"""

TWO_TTE = """schema_version = 1
[[endpoints]]
id = "a"
[[endpoints]]
id = "b"
"""


@pytest.fixture
def runner():
    return CliRunner()


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.fixture
def copula_files(tmp_path):
    cfg = write(tmp_path, "c.toml", COPULA_TOML)
    ds = simulate_arms(CopulaScenario(n_per_arm=60, alpha_nonfatal=(0.3, 0.2, 0.1)),
                       make_rng(3, "cli"))
    data = str(write_dataset(ds, tmp_path / "d.csv"))
    return cfg, data, ds


# ---------------------------------------------------------------------------
# Config


def test_config_defaults_and_hierarchy():
    cfg = parse_config({"schema_version": 1, "endpoints": [{"id": "x"}, {"id": "y"}],
                        "hierarchy": [[1], [2]]})
    assert cfg.hierarchy.blocks == ((0,), (1,)) and cfg.alpha == 0.05
    cfg = parse_config({"schema_version": 1, "endpoints": [{"id": "x"}, {"id": "y"}]})
    assert cfg.hierarchy.blocks == ((0,), (1,))


@pytest.mark.parametrize("doc, match", [
    ({"schema_version": 2}, "schema_version"),
    ({"schema_version": 1, "alpha": 2.0}, "alpha"),
    ({"schema_version": 1, "endpoints": [{"id": "x", "kind": "blob"}]}, r"endpoints\[0\]"),
    ({"schema_version": 1, "endpoints": [{"id": "x", "margin": -1}]}, r"endpoints\[0\]"),
    ({"schema_version": 1, "endpoints": [{"id": "x"}, {"id": "x"}]}, "duplicate"),
    ({"schema_version": 1, "endpoints": [{"id": "x"}], "hierarchy": [["q"]]},
     r"hierarchy\[0\]\[0\]"),
    ({"schema_version": 1, "stratification": {"weights": {"s": -1}}}, "weights.s"),
    ({"schema_version": 1, "simulation": {"design": "copula", "bogus": 1}}, "bogus"),
])
def test_config_errors_are_positional(doc, match):
    with pytest.raises(ConfigurationError, match=match):
        parse_config(doc)


def test_toml_syntax_error_has_line(tmp_path):
    with pytest.raises(ConfigurationError, match="line 2"):
        load_config(write(tmp_path, "bad.toml", "schema_version = 1\nalpha = = 3\n"))


def test_simulation_section(tmp_path):
    cfg = load_config(write(tmp_path, "s.toml", SIM_TOML))
    assert cfg.simulation.replicates == 3
    assert cfg.simulation.grid["alpha_nonfatal"][1] == (0.3, 0.05, 0.05)
    assert cfg.weight_of("anything") == 1.0


# ---------------------------------------------------------------------------
# Dataset files


def test_four_row_fixture(tmp_path):
    path = write(tmp_path, "d.csv",
                 "id,arm,a_time,a_event,b_time,b_event\n"
                 "1,treatment,5,1,3,0\n2,control,4,0,2,1\n3,t,7,0,7,0\n4,c,1,1,1,1\n")
    cfg = load_config(write(tmp_path, "c.toml", TWO_TTE))
    ds = read_dataset(path, cfg.specs)
    assert len(ds) == 4 and ds.treated.sum() == 2
    subs = ds.subjects()
    assert subs[0].outcomes[0].time == 5.0 and subs[0].outcomes[0].event
    assert subs[1].stratum == "all"


@pytest.mark.parametrize("row, match", [
    ("1,treatment,-1,1,3,0", r"row 3, column 'a_time'"),
    ("1,placebo,1,1,3,0", r"row 3, column 'arm'"),
    ("1,treatment,1,2,3,0", r"row 3, column 'a_event'"),
    ("1,treatment,x,1,3,0", r"row 3, column 'a_time'"),
])
def test_malformed_cells_name_row_and_column(tmp_path, row, match):
    cfg = load_config(write(tmp_path, "c.toml", TWO_TTE))
    path = write(tmp_path, "d.csv",
                 "id,arm,a_time,a_event,b_time,b_event\n2,control,4,0,2,1\n" + row + "\n")
    with pytest.raises(ParseError, match=match):
        read_dataset(path, cfg.specs)


def test_missing_column_and_empty_arm(tmp_path):
    cfg = load_config(write(tmp_path, "c.toml", TWO_TTE))
    with pytest.raises(ParseError, match="column 'b_event'"):
        read_dataset(write(tmp_path, "d.csv", "id,arm,a_time,a_event,b_time\n"), cfg.specs)
    with pytest.raises(ParseError, match="both arms"):
        read_dataset(write(tmp_path, "e.csv", "id,arm,a_time,a_event,b_time,b_event\n"
                                             "1,t,1,1,1,1\n"), cfg.specs)


def test_count_must_be_integer(tmp_path):
    doc = {"schema_version": 1, "endpoints": [{"id": "n", "kind": "count",
                                               "direction": "smaller"}]}
    specs = parse_config(doc).specs
    with pytest.raises(ParseError, match="column 'n'"):
        read_dataset(write(tmp_path, "d.csv", "id,arm,n\n1,t,1.5\n2,c,1\n"), specs)


@pytest.mark.parametrize("scenario", [CopulaScenario(n_per_arm=20), FrailtyScenario(n_per_arm=20)])
def test_round_trip(tmp_path, scenario):
    ds = simulate_arms(scenario, make_rng(1, "rt"))
    back = read_dataset(write_dataset(ds, tmp_path / "x.csv"), scenario.endpoints)
    assert back.subjects() == ds.subjects()


# ---------------------------------------------------------------------------
# CLI


def test_rotations_command(runner, tmp_path):
    cfg = write(tmp_path, "c.toml", COPULA_TOML)
    r = runner.invoke(main, ["rotations", "--config", cfg])
    assert r.exit_code == 0
    assert r.output.splitlines()[0] == "6 rotation(s)"
    assert "1: death || nonfatal1,nonfatal2,nonfatal3" in r.output


def test_validate_reports_bad_hierarchy(runner, tmp_path):
    bad = COPULA_TOML.replace('["death"], ', '["death", "nonfatal1"], ')
    r = runner.invoke(main, ["validate", "--config", write(tmp_path, "b.toml", bad)])
    assert r.exit_code == 2 and "appears more than once" in r.output


def test_validate_ok_with_data(runner, copula_files):
    cfg, data, _ = copula_files
    r = runner.invoke(main, ["validate", "--config", cfg, "--data", data])
    assert r.exit_code == 0 and "60 treated" in r.output and "config ok" in r.output


def test_cap_violation_exit_code(runner, tmp_path):
    toml = "schema_version = 1\nrotation_cap = 5\nhierarchy = [[1, 2, 3]]\n" + \
        "".join(f'[[endpoints]]\nid = "e{i}"\n' for i in range(3))
    r = runner.invoke(main, ["rotations", "--config", write(tmp_path, "c.toml", toml)])
    assert r.exit_code == 2 and "cap" in r.output


def test_parse_error_exit_code(runner, tmp_path):
    cfg = write(tmp_path, "c.toml", TWO_TTE)
    data = write(tmp_path, "d.csv", "id,arm,a_time,a_event,b_time,b_event\n1,x,1,1,1,1\n")
    r = runner.invoke(main, ["analyze", "--config", cfg, "--data", data])
    assert r.exit_code == 2 and "row 2, column 'arm'" in r.output


def test_analyze_text_and_json_agree(runner, copula_files, tmp_path):
    cfg, data, ds = copula_files
    out = tmp_path / "rep.json"
    r = runner.invoke(main, ["analyze", "--config", cfg, "--data", data, "--out", str(out),
                             "--bootstrap", "200", "--seed", "1"])
    assert r.exit_code == 0, r.output
    rep = json.loads(out.read_text())
    for m in ("RWR", "RNB", "RWO"):
        e = rep["estimates"][m]
        line = next(ln for ln in r.output.splitlines() if ln.startswith(m + " "))
        nums = line.split()[1:5]
        assert nums == [f"{e[k]:.4f}" for k in ("estimate", "ci_lower", "ci_upper", "p_value")]
    assert len(rep["decomposition"]) == 2 and len(rep["rotations"]) == 6
    counts = count_dataset(ds, RotationSet.single((0, 1, 2, 3)))
    wr_row = rep["rotation_table"]["overall_wr"][0]
    assert wr_row == pytest.approx(rwr_estimate(counts))
    # decomposition is consistent with the reported counts
    p = len(rep["rotations"])
    wins = sum(d["wins"] for d in rep["decomposition"])
    assert wins == sum(rep["counts"]["wins"])
    pct = sum(d["wins_pct"] for d in rep["decomposition"])
    assert pct == pytest.approx(100 * wins / (p * rep["n_treated"] * rep["n_control"]))
    assert rep["bootstrap"]["replicates"] == 200


def test_analyze_is_byte_identical(runner, copula_files, tmp_path):
    cfg, data, _ = copula_files
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}.json"
        r = runner.invoke(main, ["analyze", "--config", cfg, "--data", data, "--out", str(out),
                                 "--bootstrap", "100", "--seed", "9"])
        outs.append((r.output, out.read_bytes()))
    assert outs[0] == outs[1]


def test_singleton_config_matches_standard_wr(runner, copula_files, tmp_path):
    _, data, ds = copula_files
    cfg = write(tmp_path, "s.toml", COPULA_TOML.replace(
        'hierarchy = [["death"], ["nonfatal1", "nonfatal2", "nonfatal3"]]',
        'hierarchy = [["death"], ["nonfatal1"], ["nonfatal2"], ["nonfatal3"]]'))
    out = tmp_path / "r.json"
    assert runner.invoke(main, ["analyze", "--config", cfg, "--data", data,
                                "--out", str(out)]).exit_code == 0
    rep = json.loads(out.read_text())
    std = count_dataset(ds, RotationSet.single((0, 1, 2, 3)))
    assert rep["estimates"]["RWR"]["estimate"] == rwr_estimate(std)


def test_all_tie_dataset_is_flagged(runner, tmp_path):
    cfg = write(tmp_path, "c.toml", TWO_TTE)
    rows = "".join(f"{i},{'t' if i % 2 else 'c'},5,0,5,0\n" for i in range(8))
    data = write(tmp_path, "d.csv", "id,arm,a_time,a_event,b_time,b_event\n" + rows)
    out = tmp_path / "r.json"
    r = runner.invoke(main, ["analyze", "--config", cfg, "--data", data, "--out", str(out)])
    assert r.exit_code == 0
    rep = json.loads(out.read_text())
    assert rep["estimates"]["RWR"]["degenerate"] and rep["warnings"]
    assert rep["estimates"]["RNB"]["degenerate"]
    assert "degenerate" in r.output


def test_undersized_strata_need_flag(runner, tmp_path):
    toml = TWO_TTE + "[stratification]\nenabled = true\n"
    cfg = write(tmp_path, "c.toml", toml)
    rng = np.random.default_rng(0)
    rows = []
    for i in range(40):
        rows.append(f"{i},{'t' if i % 2 else 'c'},s{(i // 2) % 4},{rng.integers(1, 50)},"
                    f"{rng.integers(0, 2)},{rng.integers(1, 50)},{rng.integers(0, 2)}")
    rows.append("99,t,lonely,3,1,4,0")
    data = write(tmp_path, "d.csv", "id,arm,stratum,a_time,a_event,b_time,b_event\n"
                 + "\n".join(rows) + "\n")
    r = runner.invoke(main, ["analyze", "--config", cfg, "--data", data])
    assert r.exit_code == 1 and "'lonely'" in r.output and "--exclude-undersized" in r.output
    out = tmp_path / "r.json"
    r = runner.invoke(main, ["analyze", "--config", cfg, "--data", data, "--exclude-undersized",
                             "--out", str(out)])
    assert r.exit_code == 0
    rep = json.loads(out.read_text())
    assert rep["stratification"]["excluded"][0]["label"] == "lonely"
    assert len(rep["stratification"]["strata"]) == 4
    assert rep["n_treated"] == 20 and rep["estimates"]["RWR"]["stratified"]


def test_sprint_shaped_report(runner, tmp_path):
    """Five endpoints in three blocks, about a hundred strata."""
    sc = CopulaScenario(n_per_arm=600, alpha_nonfatal=(0.2, 0.2, 0.2, 0.1),
                        lambda_nonfatal=(0.002, 0.0015, 0.001, 0.001))
    ds = simulate_arms(sc, make_rng(12, "sprint"))
    ds.strata[:] = np.array([f"site{k % 100:03d}" for k in range(len(ds))], dtype=object)
    data = write_dataset(ds, tmp_path / "sprint.csv")
    ids = [s.id for s in sc.endpoints]
    toml = ("schema_version = 1\n"
            f'hierarchy = [["{ids[0]}"], ["{ids[1]}", "{ids[2]}", "{ids[3]}"], ["{ids[4]}"]]\n'
            + "".join(f'[[endpoints]]\nid = "{i}"\n' for i in ids)
            + "[stratification]\nenabled = true\n")
    cfg = write(tmp_path, "sprint.toml", toml)
    out = tmp_path / "r.json"
    r = runner.invoke(main, ["analyze", "--config", cfg, "--data", str(data), "--out", str(out)])
    assert r.exit_code == 0, r.output
    rep = json.loads(out.read_text())
    assert len(rep["decomposition"]) == 3
    assert len(rep["rotations"]) == 6
    assert all(len(v) == 6 for v in rep["rotation_table"]["endpoint_wr"].values())
    assert len(rep["stratification"]["strata"]) == 100
    header = next(ln for ln in r.output.splitlines() if ln.startswith("Block"))
    assert re.findall(r"Wins \(%\)|Ties \(%\)|Losses \(%\)|Block-level WR", header) == \
        ["Wins (%)", "Ties (%)", "Losses (%)", "Block-level WR"]
    assert "Overall WR" in r.output


def test_simulate_command(runner, tmp_path):
    cfg = write(tmp_path, "s.toml", SIM_TOML)
    out = tmp_path / "res"
    r = runner.invoke(main, ["simulate", "--config", cfg, "--out", str(out)])
    assert r.exit_code == 0, r.output
    assert (out / "results.csv").exists() and (out / "coverage_RWR.csv").exists()
    man = json.loads((out / "manifest.json").read_text())
    assert man["seed"] == 2 and len(man["cells"]) == 4


def test_simulate_export_dataset(runner, tmp_path):
    cfg = write(tmp_path, "s.toml", SIM_TOML)
    path = tmp_path / "one.csv"
    r = runner.invoke(main, ["simulate", "--config", cfg, "--out", str(tmp_path / "o"),
                             "--export-dataset", str(path)])
    assert r.exit_code == 0
    ds = read_dataset(path, CopulaScenario().endpoints)
    assert len(ds) == 50


def test_simulate_without_section(runner, tmp_path):
    r = runner.invoke(main, ["simulate", "--config", write(tmp_path, "c.toml", COPULA_TOML),
                             "--out", str(tmp_path / "o")])
    assert r.exit_code == 2 and "no [simulation]" in r.output

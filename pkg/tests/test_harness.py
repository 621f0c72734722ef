import json
import os
from pathlib import Path

import numpy as np
import pytest

from anderson_torus import __version__
from anderson_torus.harness import ExperimentConfig, load_config, realization_seed, run_experiment, validate_config
from anderson_torus.harness.cli import main
from anderson_torus.harness.config import splitmix64
from anderson_torus.harness.io import SPECTRUM_COLUMNS, TRAJECTORY_COLUMNS, read_columns, read_csv, write_csv
from anderson_torus.harness.oracles import run_oracles
from anderson_torus.harness.plots import emit_plots

DATA_SUFFIXES = (".csv", ".json")


def _data_files(run_dir: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(run_dir.iterdir())
            if p.suffix in DATA_SUFFIXES and p.name != "run.json"}


def _write_config(tmp_path, **kw) -> Path:
    path = tmp_path / f"{kw['experiment']}.json"
    path.write_text(json.dumps(kw))
    return path


# -- seed policy -------------------------------------------------------------------

def test_splitmix_reference_values():
    # first outputs of the reference SplitMix64 generator started from state 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


def test_realization_seeds_do_not_depend_on_the_count():
    small = ExperimentConfig("eigen", seeds={"base": 12345, "count": 3}).seed_list()
    big = ExperimentConfig("eigen", seeds={"base": 12345, "count": 10}).seed_list()
    assert big[:3] == small
    assert len(set(big)) == 10
    assert realization_seed(12345, 4) == 12345 ^ splitmix64(4)
    assert all(0 <= s < 2**64 for s in big)


# -- configuration ---------------------------------------------------------------------

def test_config_roundtrip_and_defaults():
    cfg = ExperimentConfig("weyl", N=16)
    assert cfg.eps_value == pytest.approx(2.0 / 16)
    back = ExperimentConfig.from_dict(json.loads(cfg.to_json()))
    assert back == cfg


@pytest.mark.parametrize("bad, where", [
    ({"experiment": "nope"}, "experiment"),
    ({"experiment": "eigen", "N": 15}, "N"),
    ({"experiment": "eigen", "colour": 1}, "<root>"),
    ({"experiment": "eigen", "seeds": {"base": -1, "count": 1}}, "seeds/base"),
    ({"experiment": "eigen", "eps": 0}, "eps"),
    ({"experiment": "strichartz-wave", "scales": [2, 2, 3]}, "scales"),
    ({"N": 16}, "<root>"),
])
def test_invalid_configs_are_rejected(bad, where):
    with pytest.raises(ValueError, match=where):
        validate_config(bad)


def test_load_config_errors(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ValueError, match="not valid JSON"):
        load_config(p)
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "missing.json")


# -- io --------------------------------------------------------------------------------

def test_csv_roundtrip_is_exact(tmp_path):
    vals = [0.1, 1 / 3, 1e-300, np.float64(2.0) ** 0.5, np.inf]
    path = write_csv(tmp_path / "x.csv", ["a", "b"], [[v, i] for i, v in enumerate(vals)])
    cols = read_columns(path)
    assert list(cols["a"]) == [float(v) for v in vals]
    header, rows = read_csv(path)
    assert header == ["a", "b"] and len(rows) == len(vals)


# -- runs --------------------------------------------------------------------------------

def test_eigen_run_outputs(tmp_path):
    cfg = ExperimentConfig("eigen", N=8, K=10, seeds={"base": 3, "count": 2})
    res = run_experiment(cfg, out_dir=tmp_path / "run")
    assert res.ok
    cols = read_columns(res.out_dir / "spectrum.csv")
    header, rows = read_csv(res.out_dir / "spectrum.csv")
    assert header == SPECTRUM_COLUMNS and len(rows) == 20
    assert set(cols["seed"]) == set(map(float, cfg.seed_list()))
    np.testing.assert_allclose(cols["l2norm"], 1.0, atol=1e-12)
    summary = json.loads((res.out_dir / "summary.json").read_text())
    assert summary["config"] == cfg.to_dict() and summary["version"] == __version__
    assert "timestamp" in json.loads((res.out_dir / "run.json").read_text())
    assert "timestamp" not in (res.out_dir / "summary.json").read_text()


def test_empty_seed_count_gives_header_only_csv(tmp_path):
    res = run_experiment(ExperimentConfig("eigen", N=8, seeds={"base": 0, "count": 0}), out_dir=tmp_path / "e")
    assert res.ok
    header, rows = read_csv(res.out_dir / "spectrum.csv")
    assert header == SPECTRUM_COLUMNS and rows == []
    res = run_experiment(ExperimentConfig("nls", N=8, seeds={"base": 0, "count": 0}, T=0.01, dt=0.01),
                         out_dir=tmp_path / "n")
    files = list(res.out_dir.glob("trajectory_nls*.csv"))
    assert files and all(read_csv(f) == (TRAJECTORY_COLUMNS, []) for f in files)


def test_repeat_runs_are_byte_identical(tmp_path):
    cfg = ExperimentConfig("weyl", N=16, seeds={"base": 99, "count": 3}, params={"lambda_max": 10.0})
    a = run_experiment(cfg, out_dir=tmp_path / "a", threads=1)
    b = run_experiment(cfg, out_dir=tmp_path / "b", threads=2)
    assert _data_files(a.out_dir) == _data_files(b.out_dir)
    assert len(_data_files(a.out_dir)) >= 3


def test_failures_are_recorded_and_the_run_continues(tmp_path):
    # a huge amplitude breaks the re-projection tolerance of the NLS solver
    cfg = ExperimentConfig("nls", N=8, T=0.02, dt=0.01, seeds={"base": 0, "count": 2},
                           params={"amplitude": 200.0})
    res = run_experiment(cfg, out_dir=tmp_path / "f")
    assert not res.ok and len(res.failures) == 2
    assert "TailEnergyError" in res.failures[0]["error"]
    summary = json.loads((res.out_dir / "summary.json").read_text())
    assert len(summary["failures"]) == 2


def test_unwritable_output_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="not writable"):
        run_experiment(ExperimentConfig("eigen", N=8), out_dir=blocker / "sub")


def test_weyl_run_has_provenance(tmp_path):
    cfg = ExperimentConfig("weyl", N=16, seeds={"base": 5, "count": 1}, params={"lambda_max": 10.0})
    res = run_experiment(cfg, out_dir=tmp_path / "w")
    header, _ = read_csv(res.out_dir / "weyl_slopes.csv")
    assert {"seed", "N", "eps", "s", "version"} <= set(header)


# -- plots -------------------------------------------------------------------------------

def test_plot_scripts(tmp_path):
    res = run_experiment(ExperimentConfig("renorm", N=8, seeds={"base": 0, "count": 1},
                                          params={"lambda_eps_exponents": [1, 2, 3]}), out_dir=tmp_path / "r")
    scripts = emit_plots(res.out_dir)
    names = {Path(p).name for p in scripts}
    assert "renorm_constants.gp" in names
    text = (res.out_dir / "renorm_constants.gp").read_text()
    assert repr(res.summary["results"]["slope"])[:8] in text
    again = {Path(p).name: Path(p).read_text() for p in emit_plots(res.out_dir)}
    assert again["renorm_constants.gp"] == text


def test_plot_scripts_flag_empty_data(tmp_path):
    res = run_experiment(ExperimentConfig("eigen", N=8, seeds={"base": 0, "count": 0}), out_dir=tmp_path / "e")
    emit_plots(res.out_dir)
    assert "no data rows" in (res.out_dir / "spectrum.gp").read_text()


def test_plot_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        emit_plots(tmp_path / "missing")
    (tmp_path / "empty").mkdir()
    with pytest.raises(FileNotFoundError):
        emit_plots(tmp_path / "empty")


# -- oracles and CLI -----------------------------------------------------------------------

@pytest.mark.parametrize("suite", ["dense", "convolution", "lattice", "dft", "ode"])
def test_oracle_suites_pass(suite):
    checks = run_oracles(suite)
    assert checks and all(c.passed for c in checks), [c for c in checks if not c.passed]


def test_cli_validate_run_and_plots(tmp_path, capsys):
    cfg = _write_config(tmp_path, experiment="eigen", N=8, K=5, seeds={"base": 1, "count": 2})
    assert main(["validate", str(cfg)]) == 0
    assert "valid eigen config" in capsys.readouterr().out
    out = tmp_path / "cli-run"
    assert main(["run", str(cfg), "--out", str(out), "--seed-override", "77"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["seeds"]["base"] == 77
    assert set(read_columns(out / "spectrum.csv")["seed"]) == {float(realization_seed(77, i)) for i in range(2)}
    assert main(["emit-plots", str(out)]) == 0
    assert (out / "spectrum.gp").exists()


def test_cli_errors(tmp_path, capsys):
    bad = _write_config(tmp_path, experiment="eigen", N=7)
    assert main(["validate", str(bad)]) == 2
    assert "invalid config at N" in capsys.readouterr().err
    assert main(["emit-plots", str(tmp_path / "nowhere")]) == 2
    with pytest.raises(SystemExit):
        main(["run", str(bad), "--threads", "0"])


def test_cli_oracle(capsys):
    assert main(["oracle", "lattice"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") >= 6 and "FAIL" not in out


def test_cli_run_reports_failures(tmp_path):
    cfg = _write_config(tmp_path, experiment="nls", N=8, T=0.02, dt=0.01, seeds={"base": 0, "count": 1},
                        params={"amplitude": 200.0})
    assert main(["run", str(cfg), "--out", str(tmp_path / "x")]) == 1


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_read_only_dir(tmp_path):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(0o500)
    try:
        with pytest.raises(OSError):
            run_experiment(ExperimentConfig("eigen", N=8), out_dir=ro / "sub")
    finally:
        ro.chmod(0o700)

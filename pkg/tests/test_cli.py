import os
from pathlib import Path

import numpy as np
import pytest

from ii_adaptive.cli import main
from ii_adaptive.sim import read_csv

SEA_SCN = "scenarios/sea_paper.scenario"


@pytest.fixture
def short_scenario(tmp_path):
    text = Path(SEA_SCN).read_text().replace("horizon: 60.0", "horizon: 0.5")
    path = tmp_path / "short.scenario"
    path.write_text(text)
    return str(path)


class TestSimulate:
    def test_writes_csv_and_exits_zero(self, short_scenario, tmp_path, capsys):
        code = main(["simulate", short_scenario, "--out", str(tmp_path)])
        assert code == 0
        out = tmp_path / "sea_paper.csv"
        assert out.exists()
        traj = read_csv(out)
        assert traj.t.size > 0
        assert "wrote" in capsys.readouterr().out

    def test_env_var_output_dir(self, short_scenario, tmp_path, monkeypatch):
        monkeypatch.setenv("II_ADAPTIVE_OUT", str(tmp_path / "envout"))
        code = main(["simulate", short_scenario])
        assert code == 0
        assert (tmp_path / "envout" / "sea_paper.csv").exists()

    def test_seed_override_accepted(self, short_scenario, tmp_path):
        code = main(["simulate", short_scenario, "--out", str(tmp_path),
                     "--seed", "7"])
        assert code == 0


class TestVerify:
    def test_pe_passes(self, capsys):
        code = main(["verify", "pe", SEA_SCN])
        assert code == 0
        out = capsys.readouterr().out
        assert "mu" in out and "persistently excited: yes" in out


class TestSweep:
    def test_sweep_runs_each_value(self, short_scenario, tmp_path, capsys):
        code = main(["sweep", short_scenario, "--out", str(tmp_path),
                     "--param", "controller.k_d", "--values", "0,1.0"])
        assert code == 0
        files = list(tmp_path.glob("*.csv"))
        assert len(files) == 2
        assert "controller.k_d" in capsys.readouterr().out


class TestErrors:
    def test_missing_scenario_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            main(["simulate", str(tmp_path / "nope.yaml")])

    def test_bad_scenario_key(self, tmp_path):
        bad = tmp_path / "bad.scenario"
        bad.write_text("name: x\nbogus_key: 1\n")
        from ii_adaptive.scenario import ScenarioError

        with pytest.raises(ScenarioError):
            main(["simulate", str(bad)])

import pytest

from overtrading import __version__
from overtrading.cli import main

from conftest import TINY


class TestCli:
    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0 and __version__ in capsys.readouterr().out

    def test_bad_set(self, capsys):
        assert main(["run", "--config", str(TINY / "pipeline.cfg"), "--set", "window"]) == 2
        assert "config" in capsys.readouterr().err

    def test_unknown_key(self, capsys):
        assert main(["run", "--config", str(TINY / "pipeline.cfg"), "--set", "windw=3"]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "none.cfg")]) == 2

    def test_unknown_command(self):
        with pytest.raises(SystemExit) as exc:
            main(["dance"])
        assert exc.value.code == 2

    def test_synth_then_run(self, tmp_path, capsys):
        data = tmp_path / "data"
        assert main(["synth", str(data), "--seed", "5", "--set", "synth.n_stocks=6",
                     "--set", "synth.n_days=40"]) == 0
        assert capsys.readouterr().out.strip() == str(data / "pipeline.cfg")
        out = tmp_path / "out"
        assert main(["run", "--config", str(data / "pipeline.cfg"), "--out-dir", str(out)]) == 0
        assert (out / "reports.tsv").read_text(encoding="utf-8").count("\n") == 79

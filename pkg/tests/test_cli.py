"""Command line behaviour, exit codes and configuration loading."""
import filecmp
import shutil

import pytest
import yaml

from rtfleet.cli import main
from rtfleet.config import ConfigError, config_from_mapping, dump_config, load_config


@pytest.fixture
def scenario(tiny_demo, tmp_path):
    """A private copy of the tiny demo with a short iteration budget."""
    d = tmp_path / "scn"
    shutil.copytree(tiny_demo, d)
    data = yaml.safe_load((d / "config.yaml").read_text())
    data.setdefault("run", {})["max_iterations"] = 3
    (d / "config.yaml").write_text(yaml.safe_dump(data))
    return d


def tree_equal(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not mismatch and not errors and all(tree_equal(a / s, b / s) for s in cmp.common_dirs)


class TestDemo:
    def test_two_by_two(self, tmp_path, capsys):
        assert main(["demo", "--grid-n", "2", "--persons", "20", "--out", str(tmp_path / "d")]) == 0
        assert len((tmp_path / "d/nodes.csv").read_text().splitlines()) == 1 + 4
        assert len((tmp_path / "d/links.csv").read_text().splitlines()) == 1 + 8

    def test_deterministic(self, tmp_path):
        for name in ("a", "b"):
            assert main(["demo", "--grid-n", "3", "--persons", "40", "--out", str(tmp_path / name)]) == 0
        assert tree_equal(tmp_path / "a", tmp_path / "b")

    def test_bad_grid(self, tmp_path, capsys):
        assert main(["demo", "--grid-n", "1", "--out", str(tmp_path)]) == 2
        assert "--grid-n" in capsys.readouterr().err


class TestSimulate:
    def test_twice_identical(self, scenario, tmp_path):
        cfg = str(scenario / "config.yaml")
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "r1")]) == 0
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "r2")]) == 0
        assert tree_equal(tmp_path / "r1", tmp_path / "r2")
        manifest = yaml.safe_load((tmp_path / "r1/manifest.json").read_text())
        assert {"configHash", "seed", "iterations", "converged", "versions"} <= set(manifest)

    def test_missing_links(self, scenario, capsys):
        (scenario / "links.csv").unlink()
        assert main(["simulate", "--config", str(scenario / "config.yaml")]) == 2
        assert "paths.links" in capsys.readouterr().err

    def test_missing_config(self, tmp_path):
        assert main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == 2

    def test_bad_threads(self, scenario):
        assert main(["simulate", "--config", str(scenario / "config.yaml"), "--threads", "0"]) == 2

    def test_malformed_input(self, scenario, capsys):
        (scenario / "links.csv").write_text("garbage\n1,2\n")
        assert main(["simulate", "--config", str(scenario / "config.yaml")]) == 2
        assert "links.csv" in capsys.readouterr().err

    def test_runtime_failure(self, scenario, capsys, monkeypatch):
        import rtfleet.runner

        def boom(*a, **k):
            raise MemoryError("out of memory")

        monkeypatch.setattr(rtfleet.runner, "run_scenario", boom)
        assert main(["simulate", "--config", str(scenario / "config.yaml")]) == 1
        assert "runtime failure" in capsys.readouterr().err


class TestSweep:
    def test_not_increasing(self, scenario):
        assert main(["sweep", "--config", str(scenario / "config.yaml"), "--fleet-sizes", "4,4"]) == 2
        assert main(["sweep", "--config", str(scenario / "config.yaml"), "--fleet-sizes", "4,x"]) == 2

    def test_single_cell(self, scenario, tmp_path):
        out = tmp_path / "sw"
        assert main(["sweep", "--config", str(scenario / "config.yaml"), "--fleet-sizes", "3",
                     "--taste", "off", "--out", str(out)]) == 0
        assert len((out / "sweep_summary.csv").read_text().splitlines()) == 2
        assert not (out / "comparison.csv").exists()

    def test_both(self, scenario, tmp_path):
        out = tmp_path / "sw"
        assert main(["sweep", "--config", str(scenario / "config.yaml"), "--fleet-sizes", "3,6",
                     "--out", str(out)]) == 0
        assert len((out / "sweep_summary.csv").read_text().splitlines()) == 5
        sizes = {line.split(",")[0] for line in (out / "comparison.csv").read_text().splitlines()[1:]}
        assert sizes == {"3", "6"}
        a = (out / "fleet_3_taste_on/plans_initial.csv").read_bytes()
        assert a == (out / "fleet_6_taste_off/plans_initial.csv").read_bytes()


class TestSynthesize:
    def test_writes_population(self, scenario, tmp_path):
        assert main(["synthesize", "--config", str(scenario / "config.yaml"), "--out", str(tmp_path / "p")]) == 0
        assert (tmp_path / "p/population_persons.csv").is_file()


class TestConfig:
    def test_defaults(self):
        cfg = config_from_mapping({})
        assert cfg.seed == 0 and cfg.replanning.max_plans >= 1

    @pytest.mark.parametrize("data, key", [
        ({"bogus": 1}, "bogus"),
        ({"mobsim": {"stuck_time_sec": "x"}}, "mobsim.stuck_time_sec"),
        ({"replanning": {"weights": {"select": 0.5}}}, "replanning.weights"),
        ({"seed": -1}, "seed"),
        ({"run": {"max_iterations": 0}}, "run.max_iterations"),
    ])
    def test_field_errors(self, data, key):
        with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
            config_from_mapping(data)

    def test_round_trip(self, scenario, tmp_path):
        cfg = load_config(scenario / "config.yaml")
        dump_config(cfg, scenario / "copy.yaml")
        again = load_config(scenario / "copy.yaml")
        assert again == cfg and again.hash() == cfg.hash()

    def test_fingerprint_ignores_fleet_and_taste(self):
        a = config_from_mapping({"fleet": {"size": 5}})
        b = config_from_mapping({"fleet": {"size": 50}, "taste_factors": {"enabled": False}})
        assert a.fingerprint() == b.fingerprint() and a.hash() != b.hash()

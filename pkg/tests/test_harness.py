"""Config validation, CLI behaviour, artifact schemas and reproducibility."""

import json
import os
import subprocess
import sys

import pytest

from dflab.harness import (ConfigError, config_hash, default_config,
                           load_config, run, validate_config)


def small_config(tmp_path, **task_overrides):
    cfg = {
        "seed": 11,
        "out_dir": str(tmp_path / "out"),
        "tasks": {
            "sample-df": {"N": 50},
            "verify-mecke": {"N": 2000},
            "w2": {"fixture": "w2_fixture.json"},
        },
    }
    cfg["tasks"].update(task_overrides)
    return load_config_dict(cfg)


def load_config_dict(cfg: dict) -> dict:
    import tempfile
    with tempfile.NamedTemporaryFile("w", suffix=".json",
                                     delete=False) as fh:
        json.dump(cfg, fh)
        path = fh.name
    try:
        return load_config(path)
    finally:
        os.unlink(path)


class TestSchema:
    def test_default_config_is_valid(self):
        validate_config(default_config())

    def test_unknown_keys_rejected(self):
        cfg = default_config()
        cfg["unknown_top_level"] = 1
        with pytest.raises(ConfigError, match="unknown_top_level"):
            validate_config(cfg)

    def test_nested_unknown_key_path_reported(self):
        cfg = default_config()
        cfg["manifold"]["bogus"] = True
        with pytest.raises(ConfigError, match=r"\$\.manifold"):
            validate_config(cfg)

    def test_empty_basket_rejected(self):
        cfg = default_config()
        cfg["baskets"]["vector_fields"] = []
        with pytest.raises(ConfigError, match="vector_fields"):
            validate_config(cfg)

    def test_bad_enum_rejected(self):
        cfg = default_config()
        cfg["truncation"]["tail_policy"] = "discard"
        with pytest.raises(ConfigError):
            validate_config(cfg)

    def test_unknown_subcommand(self):
        cfg = load_config_dict({"seed": 1, "out_dir": "x"})
        with pytest.raises(ConfigError):
            run("verify-everything", cfg, write=False)


class TestRunOutputs:
    def test_w2_run_writes_report_and_plan(self, tmp_path):
        cfg = small_config(tmp_path)
        rep = run("w2", cfg)
        assert rep.passed
        out = tmp_path / "out"
        data = json.loads((out / "w2.json").read_text())
        assert data["passed"] is True
        assert all({"name", "estimate", "stderr", "target", "tol",
                    "tol_kind", "status"} <= set(c)
                   for c in data["checks"])
        assert (out / "plan.csv").read_text().startswith("i,j,mass")
        assert (out / "resolved_config.json").exists()

    def test_sample_df_artifacts(self, tmp_path):
        cfg = small_config(tmp_path)
        run("sample-df", cfg)
        out = tmp_path / "out"
        header = (out / "samples.csv").read_text().splitlines()[0]
        assert header == "sample_id,atom_id,weight,coord_1,coord_2"
        measure = json.loads((out / "sample0.json").read_text())
        assert set(measure) == {"weights", "tail", "locations"}

    def test_exit_code_reflects_failures(self, tmp_path):
        # force a failure by corrupting the bundled expected value
        fixture = {
            "mu": {"weights": [1.0], "tail": 0.0, "locations": [[0.1, 0.1]]},
            "nu": {"weights": [1.0], "tail": 0.0, "locations": [[0.3, 0.1]]},
            "expected_cost": 0.999,
            "tolerance": 1e-9,
        }
        fpath = tmp_path / "bad_fixture.json"
        fpath.write_text(json.dumps(fixture))
        cfg = small_config(tmp_path, **{"w2": {"fixture": str(fpath)}})
        rep = run("w2", cfg)
        assert not rep.passed and rep.n_failed == 1

    def test_reports_are_deterministic(self, tmp_path):
        cfg = small_config(tmp_path)
        run("verify-mecke", cfg)
        first = (tmp_path / "out" / "verify-mecke.json").read_bytes()
        run("verify-mecke", cfg)
        assert (tmp_path / "out" / "verify-mecke.json").read_bytes() == first

    def test_seed_changes_estimates(self, tmp_path):
        cfg = small_config(tmp_path)
        rep1 = run("verify-mecke", cfg, write=False)
        cfg2 = dict(cfg, seed=12)
        rep2 = run("verify-mecke", cfg2, write=False)
        est1 = [c.estimate for c in rep1.checks]
        est2 = [c.estimate for c in rep2.checks]
        assert est1 != est2

    def test_config_hash_ignores_out_dir(self, tmp_path):
        cfg = small_config(tmp_path)
        other = dict(cfg, out_dir="elsewhere")
        assert config_hash(cfg) == config_hash(other)
        assert config_hash(dict(cfg, seed=99)) != config_hash(cfg)


class TestCli:
    def _run(self, *args, env_extra=None):
        env = dict(os.environ)
        env.update(env_extra or {})
        return subprocess.run(
            [sys.executable, "-m", "dflab.cli", *args],
            capture_output=True, text=True, env=env)

    def test_schema_violation_exits_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"seed": 3, "bogus_key": 1}))
        res = self._run("w2", "--config", str(bad))
        assert res.returncode == 2
        assert "bogus_key" in res.stderr

    def test_missing_config_exits_2(self):
        res = self._run("w2", "--config", "/nonexistent/config.json")
        assert res.returncode == 2

    def test_w2_subcommand_passes(self, tmp_path):
        res = self._run("w2", "--out", str(tmp_path / "o"), "--seed", "5")
        assert res.returncode == 0
        assert "0 failed" in res.stdout

    def test_env_seed_override(self, tmp_path):
        res = self._run("w2", "--out", str(tmp_path / "o"),
                        env_extra={"DFLAB_SEED": "123"})
        assert res.returncode == 0
        resolved = json.loads(
            (tmp_path / "o" / "resolved_config.json").read_text())
        assert resolved["seed"] == 123

import json
import shutil
from pathlib import Path

import pytest

from framesift.config import ConfigError, default_config, load_config, merge, validate_config
from framesift.media_io import read_manifest
from framesift.pipeline import STAGES, PipelineError, run_pipeline


def config_for(videos, gt, out, **sampling):
    return validate_config(merge(default_config(), {
        "paths": {"videos": str(videos), "gt": str(gt) if gt else None, "out": str(out)},
        "sampling": {"frames": 120, **sampling},
    }))


def tree(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


class TestConfig:
    def test_defaults_valid(self):
        assert validate_config(default_config())["sampling"]["split_ratio"] == 0.7

    @pytest.mark.parametrize("override, pointer", [
        ({"sampling": {"mode": "fast"}}, "/sampling/mode"),
        ({"background": {"keep_fraction": 1.5}}, "/background/keep_fraction"),
        ({"seed": -1}, "/seed"),
        ({"extra": 1}, "/"),
    ])
    def test_pointer_errors(self, override, pointer):
        with pytest.raises(ConfigError) as ei:
            validate_config(merge(default_config(), override))
        assert (ei.value.pointer or "/") == pointer

    def test_load_partial_and_summary(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"seed": 4, "sampling": {"frames": 9}}))
        cfg = load_config(p)
        assert cfg["seed"] == 4 and cfg["sampling"]["frames"] == 9 and cfg["sampling"]["mode"] == "balanced"
        p.write_text(json.dumps({"config": cfg, "stages": {}}))
        assert load_config(p) == cfg

    def test_bad_json(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text("{nope")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(p)


class TestPipeline:
    def test_toy_counts(self, toy_corpus, tmp_path):
        videos, gt = toy_corpus
        summary = run_pipeline(config_for(videos, gt, tmp_path / "run"))
        st = summary["stages"]
        assert summary["status"] == "complete" and list(st) == list(STAGES)
        assert st["sample"]["per_category"] == {"night": 40, "fog": 40, "day": 40}
        assert (st["dedup"]["kept"], st["negatives"]["negatives"]) == (24, 9)
        assert (st["split"]["train"], st["split"]["val"], st["augment"]["images"]) == (17, 7, 135)
        cats = {e.category for e in read_manifest(tmp_path / "run" / "manifest.json").entries}
        assert cats == {"night", "fog", "day"}

    def test_rerun_and_jobs_byte_identical(self, toy_corpus, tmp_path):
        videos, gt = toy_corpus
        run_pipeline(config_for(videos, gt, tmp_path / "a"))
        cfg = config_for(videos, gt, tmp_path / "b")
        cfg["jobs"] = 3
        run_pipeline(cfg)
        a, b = tree(tmp_path / "a"), tree(tmp_path / "b")
        assert a.keys() == b.keys()
        differing = [k for k in a if a[k] != b[k]]
        assert differing == ["run_summary.json"]  # records the output path and job count

    def test_summary_reproduces(self, toy_corpus, tmp_path):
        videos, gt = toy_corpus
        run_pipeline(config_for(videos, gt, tmp_path / "run"))
        first = tree(tmp_path / "run")
        shutil.rmtree(tmp_path / "run")
        run_pipeline(load_config(_copy_summary(first, tmp_path)))
        assert tree(tmp_path / "run") == first

    def test_missing_input_before_writes(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            run_pipeline(config_for(tmp_path / "nope", None, tmp_path / "out"))
        assert not (tmp_path / "out").exists()

    def test_failure_and_resume(self, toy_corpus, tmp_path):
        videos, gt = toy_corpus
        bad = tmp_path / "gt.csv"
        bad.write_text("1,1,0,0,5,5\n")
        cfg = config_for(videos, bad, tmp_path / "run")
        with pytest.raises(PipelineError) as ei:
            run_pipeline(cfg)
        assert ei.value.stage == "augment" and ei.value.exit_code == 16
        summary = json.loads((tmp_path / "run" / "run_summary.json").read_text())
        assert summary["status"] == "failed" and summary["resume_token"] == "augment"
        assert (tmp_path / "run" / "manifest.json").exists()
        shutil.copy(gt, bad)
        done = run_pipeline(cfg, resume_from="augment")
        assert done["status"] == "complete" and list(done["stages"]) == list(STAGES)
        assert done["stages"]["augment"]["images"] == 135

    def test_unknown_resume_stage(self, toy_corpus, tmp_path):
        with pytest.raises(ValueError):
            run_pipeline(config_for(*toy_corpus, tmp_path / "r"), resume_from="train")


def _copy_summary(files: dict, tmp_path: Path) -> Path:
    p = tmp_path / "summary_copy.json"
    p.write_bytes(files["run_summary.json"])
    return p

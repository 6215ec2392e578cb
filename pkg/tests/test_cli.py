import filecmp
from pathlib import Path

import numpy as np
import pytest

from scatterwave import cli, features
from scatterwave.config import ExperimentConfig, load_config, parse_config
from scatterwave.errors import ParameterError
from scatterwave.metrics import REPORT_COLUMNS, read_report_csv

TINY = """
[run]
seed = 3
[corpus]
synthetic = yes
classes = 3
per_class = 10
length = 1024
rate = 8000
[prep]
target_len = 1024
target_rate = 8000
min_class_count = 5
[mel]
n_fft = 256
hop = 64
n_mels = 16
[wst]
J = 4
Q = 2
[train]
epochs = 2
mlp_epochs = 3
batch_size = 8
blocks_per_stage = 1
"""


@pytest.fixture
def tiny_config(tmp_path):
    p = tmp_path / "tiny.ini"
    p.write_text(TINY)
    return p


def run(*argv):
    return cli.main([str(a) for a in argv])


def pipeline(config, workdir):
    for cmd in ("prepare", "featurize", "train", "eval"):
        assert run(cmd, "--config", config, "--workdir", workdir, *(["--quiet"] if cmd == "train" else [])) == 0


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig().validate()
        assert cfg.extractor("wst").J == 6 and cfg.extractor("wst").Q == 16
        assert cfg.whalenet().branch.epochs == 100 and cfg.whalenet().mlp.epochs == 500

    def test_unknown_key(self):
        with pytest.raises(ParameterError, match="unknown key"):
            parse_config("[wst]\nJ = 6\nwidth = 3\n")

    def test_unknown_section(self):
        with pytest.raises(ParameterError, match="unknown section"):
            parse_config("[optimizer]\nlr = 1\n")

    def test_bad_value(self):
        with pytest.raises(ParameterError):
            parse_config("[wst]\nJ = six\n")
        with pytest.raises(ParameterError):
            parse_config("[corpus]\nsynthetic = maybe\n")

    def test_override_wins(self, tiny_config):
        cfg = load_config(tiny_config, ["wst.Q=3", "train.lr=0.5"])
        assert cfg.get("wst", "Q") == 3 and cfg.get("train", "lr") == 0.5

    def test_validation_catches_inconsistency(self):
        with pytest.raises(ParameterError):
            load_config(None, ["wst.J=14"])
        with pytest.raises(ParameterError):
            load_config(None, ["merge.kind=vote"])

    def test_text_roundtrip(self, tiny_config):
        cfg = load_config(tiny_config)
        assert parse_config(cfg.to_text()).values == cfg.values


class TestCommands:
    def test_full_pipeline(self, tiny_config, tmp_path, capsys):
        work = tmp_path / "w"
        pipeline(tiny_config, work)
        assert (work / "manifest.tsv").exists()
        assert sorted(p.name for p in (work / "bundle").glob("*.swnn")) == \
               ["fusion12.swnn", "mel.swnn", "merge_mlp.swnn", "wst1.swnn", "wst2.swnn"]
        assert (work / "bundle" / "train_log_mel.csv").exists()
        report = read_report_csv(work / "report" / "report.csv")
        assert tuple(report) == REPORT_COLUMNS
        assert "Hard Merge" in (work / "report" / "report.txt").read_text()
        assert run("plot", "--config", tiny_config, "--workdir", work) == 0
        pgms = sorted(p.name for p in (work / "plots").iterdir())
        assert len(pgms) == 3 and all(n.endswith(".pgm") for n in pgms)

    def test_rerun_is_byte_identical(self, tiny_config, tmp_path):
        pipeline(tiny_config, tmp_path / "a")
        pipeline(tiny_config, tmp_path / "b")
        cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
        files = [p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file()]
        assert len(files) > 20
        for f in files:
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
        assert not cmp.left_only and not cmp.right_only

    def test_featurize_reference_frames(self, tmp_path):
        cfg = tmp_path / "c.ini"
        cfg.write_text("[corpus]\nclasses = 2\nper_class = 2\nlength = 8000\n[prep]\nmin_class_count = 2\n")
        work = tmp_path / "w"
        assert run("prepare", "--config", cfg, "--workdir", work) == 0
        assert run("featurize", "--config", cfg, "--workdir", work, "--extractor", "wst", "--J", 6, "--Q", 16) == 0
        img = features.load(next((work / "features").glob("*.wst1.swf")))
        assert img.shape == (96, 125)
        assert (work / "features" / "wst_paths.txt").read_text().count("\n") == 96 + 288

    def test_prepare_from_manifest(self, tmp_path):
        from scatterwave import dataprep as dp
        src = tmp_path / "src"
        src.mkdir()
        lines = []
        r = np.random.default_rng(0)
        for i in range(6):
            dp.write_wav(src / f"f{i}.wav", r.standard_normal(300) * 0.1, 8000.0)
            lines.append(f"f{i}.wav\t{'ab'[i % 2]}")
        dp.write_wav(src / "dup.wav", dp.read_wav(src / "f0.wav")[0], 8000.0)
        lines.append("dup.wav\ta")
        (src / "m.tsv").write_text("\n".join(lines) + "\n")
        work = tmp_path / "w"
        assert run("prepare", "--workdir", work, "--set", f"corpus.manifest={src / 'm.tsv'}",
                   "--set", "corpus.synthetic=no", "--set", "prep.min_class_count=2") == 0
        m = dp.read_manifest(work / "manifest.tsv")
        assert len(m) == 6 and {e.split for e in m} == {"train", "test"}

    def test_selftest(self, capsys):
        assert run("selftest") == 0
        assert "FAIL" not in capsys.readouterr().out


class TestExitCodes:
    def test_unknown_flag_lists_valid_flags(self, capsys):
        assert run("featurize", "--frobnicate") == 1
        err = capsys.readouterr().err
        assert "--extractor" in err and "--frobnicate" in err

    def test_missing_subcommand(self):
        assert run() == 1

    def test_bad_config_value(self, tmp_path):
        assert run("prepare", "--workdir", tmp_path, "--set", "wst.J=oops") == 1
        assert not any(tmp_path.iterdir())

    def test_data_error(self, tmp_path):
        assert run("train", "--workdir", tmp_path / "empty") == 2

    def test_missing_features(self, tiny_config, tmp_path):
        assert run("prepare", "--config", tiny_config, "--workdir", tmp_path / "w") == 0
        assert run("train", "--config", tiny_config, "--workdir", tmp_path / "w") == 2

    def test_numeric_error(self, tmp_path):
        from scatterwave import dataprep as dp
        src = tmp_path / "src"
        src.mkdir()
        rows = []
        for i in range(4):
            dp.write_wav(src / f"z{i}.wav", np.full(64, 0.0) if i == 0 else np.random.default_rng(i).standard_normal(64), 8000.0)
            rows.append(f"z{i}.wav\t{'ab'[i % 2]}")
        (src / "m.tsv").write_text("\n".join(rows) + "\n")
        work = tmp_path / "w"
        common = ["--workdir", work, "--set", f"corpus.manifest={src / 'm.tsv'}", "--set", "corpus.synthetic=no",
                  "--set", "prep.min_class_count=2", "--set", "prep.target_len=64", "--set", "prep.target_rate=8000",
                  "--set", "mel.n_fft=32", "--set", "mel.hop=16", "--set", "mel.n_mels=4",
                  "--set", "wst.J=2", "--set", "wst.Q=1"]
        assert run("prepare", *common) == 0
        assert run("featurize", *common) == 3

import gzip
import json

import pytest

from switchpred.cli import main
from switchpred.evaluation import read_scores
from switchpred.logs import read_sessions

from conftest import FIXTURE_LOG


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def twenty_sessions(path):
    lines = []
    for i in range(1, 21):
        lines += [f"{i}\t1\tM\t{i % 3}\t{'P' if i % 4 == 0 else 'N'}", f"{i}\t0\tQ\t0\t{i % 5}\t1,2,3"]
    path.write_text("\n".join(lines) + "\n")
    return path


class TestCommands:
    def test_split(self, tmp_path, capsys):
        log = twenty_sessions(tmp_path / "log.tsv")
        code, out, _ = run(capsys, "split", "--log", log, "--train-out", tmp_path / "t.tsv", "--valid-out", tmp_path / "v.tsv")
        assert code == 0 and json.loads(out) == {"train": 18, "validation": 2}
        assert [s.session_id for s in read_sessions(tmp_path / "v.tsv")] == [1, 11]

    def test_stats(self, fixture_log, capsys):
        code, out, _ = run(capsys, "stats", "--log", fixture_log)
        assert code == 0
        assert json.loads(out) == {"sessions": 3, "users": 2, "queries": 3, "urls": 32}

    def test_unseen_features_predict_half(self, tmp_path, fixture_log, capsys):
        unseen = tmp_path / "unseen.tsv"
        unseen.write_text("50\t1\tM\t500\tN\n50\t0\tQ\t0\t900\t901,902\n")
        assert run(capsys, "build-stats", "--log", fixture_log, "--out", tmp_path / "s.json")[0] == 0
        assert run(capsys, "train", "--log", fixture_log, "--stats", tmp_path / "s.json",
                   "--model-dir", tmp_path / "m", "--features", "1,3,7")[0] == 0
        assert run(capsys, "predict", "--model-dir", tmp_path / "m", "--log", unseen,
                   "--stats", tmp_path / "s.json", "--out", tmp_path / "p.tsv")[0] == 0
        with open(tmp_path / "p.tsv") as fh:
            assert read_scores(fh) == [(50, 0.5)]

    def test_config_file(self, tmp_path, fixture_log, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"task": "three_category", "model": {"beta": 2.0},
                                   "paths": {"log": str(fixture_log), "stats": str(tmp_path / "s.json")}}))
        assert run(capsys, "--config", cfg, "build-stats", "--out", tmp_path / "s.json")[0] == 0
        code, out, _ = run(capsys, "--config", cfg, "train", "--model-dir", tmp_path / "m")
        assert code == 0 and json.loads(out) == {"B": 3, "P": 3}
        manifest = json.loads((tmp_path / "m" / "manifest.json").read_text())
        assert manifest["model_config"]["beta"] == 2.0


class TestExitCodes:
    def test_usage(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["split"])
        assert info.value.code == 2

    def test_parse_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.tsv"
        bad.write_text("1\t1\tM\t1\tN\nnot a record\n")
        code, _, err = run(capsys, "stats", "--log", bad)
        assert code == 3 and "line 2" in err

    def test_permissive(self, tmp_path, capsys):
        bad = tmp_path / "bad.tsv"
        bad.write_text("1\t1\tM\t1\tN\nnot a record\n")
        code, out, err = run(capsys, "--permissive", "stats", "--log", bad)
        assert code == 0 and json.loads(out)["sessions"] == 1

    def test_missing_file(self, tmp_path, capsys):
        assert run(capsys, "stats", "--log", tmp_path / "nope.tsv")[0] == 4

    def test_bad_config(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"model": {"beta": -1}}')
        assert run(capsys, "--config", cfg, "train", "--log", "x", "--stats", "y", "--model-dir", "z")[0] == 4
        cfg.write_text('{"unknown": 1}')
        assert run(capsys, "--config", cfg, "stats", "--log", "x")[0] == 4

    def test_numeric_error(self, tmp_path, fixture_log, capsys):
        scores = tmp_path / "s.tsv"
        scores.write_text("2\t0.5\n")
        assert run(capsys, "evaluate", "--predictions", scores, "--log", fixture_log)[0] == 5


class TestGenSynthetic:
    def test_deterministic_and_parseable(self, tmp_path, capsys):
        for name in ("a", "b"):
            assert run(capsys, "gen-synthetic", "--out", tmp_path / f"{name}.tsv.gz",
                       "--n-sessions", 300, "--n-users", 40, "--seed", 9)[0] == 0
        a = (tmp_path / "a.tsv.gz").read_bytes()
        assert a == (tmp_path / "b.tsv.gz").read_bytes()
        code, out, err = run(capsys, "stats", "--log", tmp_path / "a.tsv.gz")
        assert code == 0 and json.loads(out)["sessions"] == 300 and err == ""

    def test_zero_sessions(self, tmp_path, capsys):
        assert run(capsys, "gen-synthetic", "--out", tmp_path / "e.tsv", "--n-sessions", 0)[0] == 0
        assert (tmp_path / "e.tsv").read_text() == ""

    def test_gzip_has_fixed_mtime(self, tmp_path, capsys):
        run(capsys, "gen-synthetic", "--out", tmp_path / "a.tsv.gz", "--n-sessions", 10)
        with gzip.open(tmp_path / "a.tsv.gz", "rt") as fh:
            assert fh.read().startswith("1\t1\tM")
        assert (tmp_path / "a.tsv.gz").read_bytes()[4:8] == b"\0\0\0\0"

import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from sedkit import ClassVocabulary, FrameGrid, ScoreMatrix
from sedkit import io as sio
from sedkit.augment import Spectrogram
from sedkit.cli import main
from sedkit.resample import EmbeddingSequence

FIXTURE = Path(__file__).parent / "fixtures" / "psds_demo"


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture
def workspace(tmp_path, rng):
    """Events + vocab + score/embedding/spectrogram files for CLI runs."""
    vocab = ClassVocabulary(("dog", "cat"))
    sio.write_vocabulary(tmp_path / "vocab.txt", vocab)
    (tmp_path / "gt.tsv").write_text(
        "filename\tonset\toffset\tevent_label\n"
        "clip1.wav\t0.5\t2.0\tdog\n"
        "clip1.wav\t3.0\t4.5\tcat\n"
        "clip2.wav\t1.0\t2.5\tdog\n")
    (tmp_path / "pred.tsv").write_text(
        "filename\tonset\toffset\tevent_label\n"
        "clip1.wav\t0.54\t2.0\tdog\n"
        "clip2.wav\t1.01\t2.5\tdog\n")
    grid = FrameGrid(0.04, 250)
    (tmp_path / "scores").mkdir()
    for cid in ("clip1", "clip2"):
        vals = (rng.integers(0, 11, (250, 2)) / 40.0)
        if cid == "clip1":
            vals[12:50, 0] = 0.95
            vals[75:112, 1] = 0.9
        else:
            vals[25:62, 0] = 0.92
        sio.write_score_tsv(tmp_path / "scores" / f"{cid}.tsv",
                            ScoreMatrix(grid, vocab, vals))
    (tmp_path / "emb").mkdir()
    for cid in ("clip1", "clip2"):
        sio.write_embedding(tmp_path / "emb" / f"{cid}.sedb",
                            EmbeddingSequence(cid, rng.normal(size=(496, 6))))
    (tmp_path / "spec").mkdir()
    for name in ("a", "b"):
        sio.write_spectrogram(tmp_path / "spec" / f"{name}.sedb",
                              Spectrogram(rng.normal(size=(32, 60))))
    (tmp_path / "logits1").mkdir()
    (tmp_path / "logits2").mkdir()
    for cid in ("clip1", "clip2"):
        sio.write_array(tmp_path / "logits1" / f"{cid}.sedb",
                        rng.normal(size=(250, 2)))
        sio.write_array(tmp_path / "logits2" / f"{cid}.sedb",
                        rng.normal(size=(250, 2)))
    (tmp_path / "a.txt").write_text("\n".join(str(x) for x in rng.normal(1, 0.2, 20)))
    (tmp_path / "b.txt").write_text("\n".join(str(x) for x in rng.normal(0, 0.2, 20)))
    return tmp_path


class TestPipeline:
    def test_rasterize_outputs_one_file_per_clip(self, workspace):
        out = workspace / "targets"
        assert run("rasterize", "--events", workspace / "gt.tsv",
                   "--vocab", workspace / "vocab.txt", "--resolution", "0.04",
                   "--clip-duration", "10", "--out", out) == 0
        assert sorted(p.name for p in out.glob("*.tsv")) == ["clip1.tsv", "clip2.tsv"]
        m = sio.read_score_tsv(out / "clip1.tsv")
        # dog event [0.5, 2.0) covers frames 12..49
        assert m.scores[12, 0] == 1.0 and m.scores[49, 0] == 1.0
        assert m.scores[11, 0] == 0.0 and m.scores[50, 0] == 0.0

    def test_weights_then_sample(self, workspace):
        assert run("weights", "--events", workspace / "gt.tsv",
                   "--vocab", workspace / "vocab.txt",
                   "--out", workspace / "weights.tsv") == 0
        w = sio.read_weights_tsv(workspace / "weights.tsv")
        assert abs(sum(w.weights) - 1.0) < 1e-12
        assert run("sample", "--weights", workspace / "weights.tsv",
                   "--n", "25", "--seed", "3", "--out", workspace / "s.txt") == 0
        lines = (workspace / "s.txt").read_text().splitlines()
        assert len(lines) == 25 and set(lines) <= {"clip1", "clip2"}

    def test_resample_then_probe_train(self, workspace):
        assert run("resample", "--input", workspace / "emb", "--frames", "250",
                   "--out", workspace / "emb250") == 0
        emb = sio.read_embedding(workspace / "emb250" / "clip1.sedb")
        assert emb.num_frames == 250
        assert run("rasterize", "--events", workspace / "gt.tsv",
                   "--vocab", workspace / "vocab.txt",
                   "--clip-duration", "10", "--out", workspace / "targets",
                   "--format", "binary") == 0
        assert run("probe-train", "--embeddings", workspace / "emb250",
                   "--targets", workspace / "targets", "--steps", "30",
                   "--batch-size", "2", "--peak-lr", "10", "--warmup-steps", "5",
                   "--seed", "1", "--out", workspace / "head.sedb",
                   "--report", workspace / "probe.json") == 0
        head, _ = sio.read_array(workspace / "head.sedb")
        assert head.shape == (2, 7)  # weight columns plus trailing bias column
        report = json.loads((workspace / "probe.json").read_text())
        assert report["steps"] == 30 and report["final_loss"] > 0

    def test_distill_targets_manifest(self, workspace):
        out = workspace / "soft"
        assert run("distill-targets", "--inputs", workspace / "logits1",
                   workspace / "logits2", "--out", out) == 0
        rows = (out / "manifest.tsv").read_text().splitlines()
        assert rows[0] == "clip_id\tn_members"
        assert rows[1:] == ["clip1\t2", "clip2\t2"]
        soft, _ = sio.read_array(out / "clip1.sedb")
        assert (soft > 0).all() and (soft < 1).all()

    def test_postprocess_then_eval(self, workspace):
        assert run("postprocess", "--scores", workspace / "scores",
                   "--median-filter", "0.48", "--out", workspace / "filtered") == 0
        assert run("eval-psds", "--scores", workspace / "filtered",
                   "--gt", workspace / "gt.tsv", "--dtc", "0.7", "--gtc", "0.7",
                   "--emax", "100", "--alpha-st", "0",
                   "--report", workspace / "psds.json") == 0
        report = json.loads((workspace / "psds.json").read_text())
        assert 0.0 <= report["psds"] <= 1.0
        assert set(report["curves"]) == {"dog", "cat"}

    def test_eval_onset_f_report(self, workspace, capsys):
        assert run("eval-onset-f", "--pred", workspace / "pred.tsv",
                   "--gt", workspace / "gt.tsv", "--tolerance", "0.05") == 0
        report = json.loads(capsys.readouterr().out)
        assert report["tp"] == 2 and report["fn"] == 1 and report["fp"] == 0

    def test_aso_report(self, workspace, capsys):
        assert run("aso", "--a", workspace / "a.txt", "--b", workspace / "b.txt",
                   "--alpha", "0.05", "--comparisons", "5",
                   "--threshold", "0.2", "--seed", "0") == 0
        report = json.loads(capsys.readouterr().out)
        assert report["epsilon_min"] == 0.0 and report["significant"] is True

    def test_augment_ops(self, workspace):
        for op, extra in (("mixup", ["--in-b", workspace / "spec" / "b.sedb",
                                     "--lam", "0.5"]),
                          ("fms", ["--in-b", workspace / "spec" / "b.sedb"]),
                          ("filter", []),
                          ("warp", [])):
            out = workspace / f"aug_{op}.sedb"
            assert run("augment", "--op", op, "--in-a", workspace / "spec" / "a.sedb",
                       "--out", out, "--seed", "5", *extra) == 0
            values, layout = sio.read_array(out)
            assert layout == sio.LAYOUT_FREQ_MAJOR and values.shape == (32, 60)

    def test_augment_triple_mixup(self, workspace, rng):
        for name in ("ha", "hb"):
            sio.write_array(workspace / f"{name}.sedb",
                            rng.integers(0, 2, (60, 2)).astype(float))
        assert run("augment", "--op", "mixup",
                   "--in-a", workspace / "spec" / "a.sedb",
                   "--in-b", workspace / "spec" / "b.sedb",
                   "--hard-a", workspace / "ha.sedb",
                   "--hard-b", workspace / "hb.sedb",
                   "--lam", "0.25", "--seed", "0",
                   "--out", workspace / "mx.sedb",
                   "--out-hard", workspace / "mh.sedb") == 0
        a = sio.read_array(workspace / "ha.sedb")[0]
        b = sio.read_array(workspace / "hb.sedb")[0]
        mixed = sio.read_array(workspace / "mh.sedb")[0]
        expected = (0.25 * a + 0.75 * b).astype(np.float32).astype(np.float64)
        assert (mixed == expected).all()


class TestEvalPsdsFlags:
    def test_class_subset_projection(self, workspace, tmp_path):
        subset = tmp_path / "subset.txt"
        subset.write_text("dog\n")
        report_path = tmp_path / "r.json"
        assert run("eval-psds", "--scores", workspace / "scores",
                   "--gt", workspace / "gt.tsv", "--classes", subset,
                   "--report", report_path) == 0
        report = json.loads(report_path.read_text())
        assert set(report["curves"]) == {"dog"}

    def test_median_filter_flag_changes_scores(self, tmp_path):
        vocab = ClassVocabulary(("dog",))
        sio.write_vocabulary(tmp_path / "vocab.txt", vocab)
        (tmp_path / "gt.tsv").write_text(
            "filename\tonset\toffset\tevent_label\nspiky.wav\t0.2\t1.2\tdog\n")
        vals = np.full((250, 1), 0.05)
        vals[5:30] = 0.9
        vals[60:120:20] = 0.95  # isolated mid-clip spikes the filter removes
        (tmp_path / "scores").mkdir()
        sio.write_score_tsv(tmp_path / "scores" / "spiky.tsv",
                            ScoreMatrix(FrameGrid(0.04, 250), vocab, vals))
        plain = tmp_path / "plain.json"
        smoothed = tmp_path / "smoothed.json"
        # one 10 s clip -> a single FP already costs 360/h, so raise the cap
        run("eval-psds", "--scores", tmp_path / "scores",
            "--gt", tmp_path / "gt.tsv", "--emax", "2000", "--report", plain)
        run("eval-psds", "--scores", tmp_path / "scores",
            "--gt", tmp_path / "gt.tsv", "--emax", "2000",
            "--median-filter", "0.48", "--report", smoothed)
        a = json.loads(plain.read_text())
        b = json.loads(smoothed.read_text())
        assert a["parameters"]["median_filter_seconds"] is None
        assert b["parameters"]["median_filter_seconds"] == 0.48
        assert b["psds"] > a["psds"]

    def test_threads_flag_does_not_change_result(self, workspace, tmp_path):
        reports = []
        for threads, name in ((1, "t1.json"), (3, "t3.json")):
            run("eval-psds", "--scores", workspace / "scores",
                "--gt", workspace / "gt.tsv", "--threads", str(threads),
                "--report", tmp_path / name)
            reports.append((tmp_path / name).read_text())
        assert reports[0] == reports[1]


class TestBundledFixture:
    def test_eval_psds_matches_pinned_reference(self, tmp_path):
        expected = json.loads((FIXTURE / "expected.json").read_text())
        report_path = tmp_path / "report.json"
        assert run("eval-psds", "--scores", FIXTURE / "scores",
                   "--gt", FIXTURE / "gt.tsv", "--dtc", "0.7", "--gtc", "0.7",
                   "--emax", "100", "--alpha-st", "0",
                   "--report", report_path) == 0
        report = json.loads(report_path.read_text())
        assert report["psds"] == expected["psds"]


class TestErrorsAndEdgeCases:
    def test_unknown_class_names_the_class(self, workspace, capsys):
        (workspace / "bad.tsv").write_text(
            "filename\tonset\toffset\tevent_label\nc.wav\t0\t1\tzebra\n")
        code = run("eval-psds", "--scores", workspace / "scores",
                   "--gt", workspace / "bad.tsv")
        assert code == 1
        assert "zebra" in capsys.readouterr().err

    def test_missing_file_is_io_error(self, workspace):
        assert run("weights", "--events", workspace / "nope.tsv",
                   "--vocab", workspace / "vocab.txt",
                   "--out", workspace / "w.tsv") == 2

    def test_malformed_tsv_is_validation_error(self, workspace, capsys):
        (workspace / "broken.tsv").write_text(
            "filename\tonset\toffset\tevent_label\nc.wav\tx\t1\tdog\n")
        assert run("weights", "--events", workspace / "broken.tsv",
                   "--vocab", workspace / "vocab.txt",
                   "--out", workspace / "w.tsv") == 1
        assert "line 2" in capsys.readouterr().err

    def test_empty_events_warns_not_crashes(self, workspace, capsys):
        (workspace / "empty.tsv").write_text("filename\tonset\toffset\tevent_label\n")
        assert run("rasterize", "--events", workspace / "empty.tsv",
                   "--vocab", workspace / "vocab.txt",
                   "--out", workspace / "t2") == 0
        assert "warning" in capsys.readouterr().err
        assert run("weights", "--events", workspace / "empty.tsv",
                   "--vocab", workspace / "vocab.txt",
                   "--out", workspace / "w2.tsv") == 0
        assert (workspace / "w2.tsv").read_text() == "filename\tweight\n"

    def test_zero_samples(self, workspace):
        run("weights", "--events", workspace / "gt.tsv",
            "--vocab", workspace / "vocab.txt", "--out", workspace / "w.tsv")
        assert run("sample", "--weights", workspace / "w.tsv", "--n", "0",
                   "--seed", "0", "--out", workspace / "none.txt") == 0
        assert (workspace / "none.txt").read_text() == ""

    def test_manifest_written_next_to_outputs(self, workspace):
        run("weights", "--events", workspace / "gt.tsv",
            "--vocab", workspace / "vocab.txt", "--out", workspace / "w.tsv")
        manifest = json.loads((workspace / "w.tsv.manifest.json").read_text())
        assert manifest["command"] == "weights"
        assert str(workspace / "gt.tsv") in manifest["inputs"]


class TestDeterminism:
    def test_sample_byte_identical(self, workspace):
        run("weights", "--events", workspace / "gt.tsv",
            "--vocab", workspace / "vocab.txt", "--out", workspace / "w.tsv")
        for name in ("s1.txt", "s2.txt"):
            run("sample", "--weights", workspace / "w.tsv", "--n", "100",
                "--seed", "11", "--out", workspace / name)
        assert (workspace / "s1.txt").read_bytes() == (workspace / "s2.txt").read_bytes()

    def test_augment_byte_identical(self, workspace):
        for name in ("f1.sedb", "f2.sedb"):
            run("augment", "--op", "filter", "--in-a", workspace / "spec" / "a.sedb",
                "--out", workspace / name, "--seed", "9")
        assert (workspace / "f1.sedb").read_bytes() == (workspace / "f2.sedb").read_bytes()


def test_module_entrypoint_runs():
    out = subprocess.run([sys.executable, "-m", "sedkit", "--version"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.strip() == "0.1.0"

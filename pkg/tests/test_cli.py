import json

import numpy as np
import pytest

from binauralkit.audio import AudioBuffer, BinauralBuffer, read_wav, write_wav
from binauralkit.cli import main

FS = 16000


@pytest.fixture
def dataset(tmp_path):
    """A small on-disk dataset: two usable mono clips (one with a CSV
    trajectory, one with a heatmap), a short clip and a manifest."""
    rng = np.random.default_rng(0)
    for name, seconds, seed in (("one", 1.0, 1), ("two", 1.0, 2), ("short", 0.1, 3)):
        rng = np.random.default_rng(seed)
        samples = 0.3 * rng.standard_normal(int(seconds * FS))
        write_wav(tmp_path / f"{name}.wav", AudioBuffer(samples, FS), "float32")
    (tmp_path / "one.csv").write_text("time_s,azimuth_deg,elevation_deg\n0.0,60.0,0.0\n")
    (tmp_path / "two.hmap").write_text("hmap 1 1 2 4\n1 0 0 0\n1 0 0 0\n")
    manifest = [
        {"id": "one", "audio": "one.wav", "trajectory": "one.csv"},
        {"id": "two", "audio": "two.wav", "heatmap": "two.hmap"},
        {"id": "short", "audio": "short.wav", "trajectory": "one.csv"},
    ]
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest))
    return tmp_path, path


class TestUsageErrors:
    def test_no_subcommand(self, capsys):
        assert main([]) == 2

    def test_unknown_subcommand(self):
        assert main(["frobnicate"]) == 2

    def test_unknown_flag(self):
        assert main(["validate", "--bogus"]) == 2

    def test_missing_required_flag(self):
        assert main(["features", "--out", "x.csv"]) == 2


class TestPreprocessCommand:
    def test_filters_and_reports(self, dataset, capsys):
        base, manifest = dataset
        out = base / "kept.json"
        report = base / "report.json"
        code = main([
            "preprocess", "--manifest", str(manifest), "--out", str(out),
            "--report", str(report), "--min-seconds", "0.5",
        ])
        assert code == 0
        kept = json.loads(out.read_text())
        assert [e["id"] for e in kept] == ["one", "two"]
        payload = json.loads(report.read_text())
        assert payload["kept"] == 2
        assert payload["rejected_short"] == 1
        assert "kept 2" in capsys.readouterr().out


class TestRenderCommand:
    def test_renders_manifest(self, dataset, capsys):
        base, manifest = dataset
        out_dir = base / "rendered"
        code = main(["render", "--manifest", str(manifest), "--out", str(out_dir)])
        assert code == 0
        for clip in ("one", "two", "short"):
            rendered = read_wav(out_dir / f"{clip}_binaural.wav")
            assert isinstance(rendered, BinauralBuffer)

    def test_strict_failure_exit_code(self, dataset, capsys):
        base, manifest = dataset
        bad = json.loads(manifest.read_text())
        bad.append({"id": "ghost", "audio": "ghost.wav", "trajectory": "one.csv"})
        manifest.write_text(json.dumps(bad))
        out_dir = base / "rendered"
        assert main(["render", "--manifest", str(manifest), "--out", str(out_dir)]) == 0
        code = main([
            "render", "--manifest", str(manifest), "--out", str(out_dir), "--strict",
        ])
        assert code == 1
        assert "ghost" in capsys.readouterr().err

    def test_thread_env_bytes_identical(self, dataset, monkeypatch):
        base, manifest = dataset
        blobs = {}
        for workers in ("1", "3"):
            monkeypatch.setenv("SV2A_THREADS", workers)
            out_dir = base / f"r{workers}"
            assert main(["render", "--manifest", str(manifest), "--out", str(out_dir)]) == 0
            blobs[workers] = b"".join(
                (out_dir / f"{clip}_binaural.wav").read_bytes()
                for clip in ("one", "two", "short")
            )
        assert blobs["1"] == blobs["3"]


class TestMetricsCommand:
    def test_directory_input(self, dataset, capsys):
        base, manifest = dataset
        out_dir = base / "rendered"
        main(["render", "--manifest", str(manifest), "--out", str(out_dir)])
        json_out = base / "metrics.json"
        csv_out = base / "agg.csv"
        code = main([
            "metrics", str(out_dir), "--json", str(json_out), "--csv", str(csv_out),
        ])
        assert code == 0
        payload = json.loads(json_out.read_text())
        assert set(payload["clips"]) == {"one_binaural", "two_binaural", "short_binaural"}
        lines = csv_out.read_text().strip().splitlines()
        assert lines[0] == "metric,mean,count"
        assert "iacc" in capsys.readouterr().out

    def test_strict_with_mono_file(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        x = 0.3 * rng.standard_normal(8000)
        write_wav(
            tmp_path / "st.wav",
            BinauralBuffer(AudioBuffer(x, FS), AudioBuffer(x.copy(), FS)),
            "float32",
        )
        write_wav(tmp_path / "mono.wav", AudioBuffer(x, FS), "float32")
        assert main(["metrics", str(tmp_path)]) == 0
        assert main(["metrics", str(tmp_path), "--strict"]) == 1
        assert "mono" in capsys.readouterr().err


class TestFeaturesCommand:
    def test_feature_csv(self, dataset, capsys):
        base, _ = dataset
        out = base / "features.csv"
        code = main(["features", "--hmap", str(base / "two.hmap"), "--out", str(out)])
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "frame,s_h,s_area,s_var,s_lr,s_shape"
        assert len(lines) == 2
        assert float(lines[1].split(",")[1]) == pytest.approx(0.25)


class TestFlowCommands:
    def test_train_then_sample(self, tmp_path, capsys):
        ckpt = tmp_path / "model.ckpt"
        trace = tmp_path / "trace.csv"
        code = main([
            "cfm-train", "--checkpoint", str(ckpt), "--trace", str(trace),
            "--steps", "200", "--batch-size", "32", "--hidden", "16",
            "--lr", "0.005", "--target", "2.0", "--samples", "128",
        ])
        assert code == 0
        assert ckpt.exists()
        assert trace.read_text().startswith("step,loss\n")

        out = tmp_path / "draws.csv"
        code = main([
            "cfm-sample", "--checkpoint", str(ckpt), "--draws", "200",
            "--steps", "16", "--out", str(out),
        ])
        assert code == 0
        rows = out.read_text().strip().splitlines()
        assert rows[0] == "draw,x0"
        values = [float(r.split(",")[1]) for r in rows[1:]]
        assert np.mean(values) == pytest.approx(2.0, abs=0.3)

    def test_train_determinism(self, tmp_path):
        blobs = []
        for name in ("a.ckpt", "b.ckpt"):
            path = tmp_path / name
            main([
                "cfm-train", "--checkpoint", str(path), "--steps", "50",
                "--batch-size", "16", "--hidden", "16", "--seed", "9",
            ])
            blobs.append(path.read_bytes())
        assert blobs[0] == blobs[1]

    def test_shared_weights_single_net_checkpoint(self, tmp_path):
        from binauralkit.flow import load_checkpoint

        path = tmp_path / "shared.ckpt"
        main([
            "cfm-train", "--checkpoint", str(path), "--steps", "20",
            "--batch-size", "8", "--hidden", "16", "--shared-weights",
        ])
        assert len(load_checkpoint(path)) == 1


class TestValidateCommand:
    def test_ok(self, dataset, capsys):
        _, manifest = dataset
        assert main(["validate", "--manifest", str(manifest)]) == 0
        assert "manifest ok" in capsys.readouterr().out

    def test_missing_file(self, dataset, capsys):
        base, manifest = dataset
        items = json.loads(manifest.read_text())
        items.append({"id": "ghost", "audio": "ghost.wav"})
        manifest.write_text(json.dumps(items))
        assert main(["validate", "--manifest", str(manifest)]) == 1
        assert "ghost.wav" in capsys.readouterr().err

import json

import numpy as np
import pytest
from PIL import Image

from bsplat.cli import build_parser, main, run_bench
from bsplat.io_formats import load_checkpoint


@pytest.fixture
def target_png(tmp_path, rng):
    ys, xs = np.mgrid[0:24, 0:24] / 23.0
    img = np.stack([xs, ys, 0.5 + 0.3 * xs], axis=-1)
    p = tmp_path / "target.png"
    Image.fromarray((img * 255).astype(np.uint8)).save(p)
    return p


def run_vectorize(tmp_path, target_png, *extra):
    out = tmp_path / "out"
    rc = main(["vectorize", "--input", str(target_png), "--out", str(out),
               "--curves", "3", "--iters", "4", "--seed", "1", *extra])
    return rc, out


class TestHelp:
    @pytest.mark.parametrize("cmd,flags", [
        ("vectorize", ["--input", "--mode", "--curves", "--iters", "--out",
                       "--seed", "--config", "--save-every", "--no-adapt",
                       "--opacity-count", "--threads", "--deterministic"]),
        ("render", ["--checkpoint", "--out", "--width", "--height",
                    "--background"]),
        ("bench", ["--curves", "--width", "--height", "--mode", "--reps"]),
        ("export-svg", ["--checkpoint", "--out"]),
    ])
    def test_subcommand_help_lists_flags(self, cmd, flags, capsys):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args([cmd, "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for flag in flags:
            assert flag in text

    def test_usage_error_exit_code(self, capsys):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["vectorize"])   # missing required args
        assert exc.value.code == 2


class TestVectorize:
    def test_missing_input_exit_2(self, tmp_path, capsys):
        rc = main(["vectorize", "--input", str(tmp_path / "nope.png"),
                   "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "input not found" in capsys.readouterr().err

    def test_outputs_written(self, tmp_path, target_png):
        rc, out = run_vectorize(tmp_path, target_png)
        assert rc == 0
        for name in ("final.png", "final.svg", "final.ckpt", "trace.csv"):
            assert (out / name).exists(), name
        header = (out / "trace.csv").read_text().splitlines()[0]
        assert header == "iter,l2,psnr,curve_count,pruned,added"

    def test_zero_iters_emits_init(self, tmp_path, target_png):
        out = tmp_path / "o0"
        rc = main(["vectorize", "--input", str(target_png), "--out", str(out),
                   "--curves", "2", "--iters", "0"])
        assert rc == 0
        assert (out / "final.png").exists()

    def test_seed_reproducible(self, tmp_path, target_png):
        _, out1 = run_vectorize(tmp_path / "a", target_png)
        _, out2 = run_vectorize(tmp_path / "b", target_png)
        assert (out1 / "final.png").read_bytes() == (out2 / "final.png").read_bytes()
        assert (out1 / "trace.csv").read_text() == (out2 / "trace.csv").read_text()

    def test_save_every_snapshots(self, tmp_path, target_png):
        rc, out = run_vectorize(tmp_path, target_png, "--save-every", "2")
        assert rc == 0
        assert (out / "iter_00002.png").exists()
        assert (out / "iter_00004.png").exists()

    def test_config_file_and_flag_precedence(self, tmp_path, target_png):
        cfgfile = tmp_path / "cfg.json"
        cfgfile.write_text(json.dumps({"n_curves": 7, "iters": 2}))
        out = tmp_path / "oc"
        rc = main(["vectorize", "--input", str(target_png), "--out", str(out),
                   "--config", str(cfgfile), "--curves", "2"])
        assert rc == 0
        ck = load_checkpoint(out / "final.ckpt")
        assert ck.config.n_curves == 2      # flag beats config file
        assert ck.config.iters == 2         # config file beats default

    def test_no_adapt_and_opacity_flags(self, tmp_path, target_png):
        rc, out = run_vectorize(tmp_path, target_png, "--no-adapt",
                                "--opacity-count", "1")
        assert rc == 0
        ck = load_checkpoint(out / "final.ckpt")
        assert ck.config.adapt_enabled is False
        assert ck.config.opacity_count == 1


class TestRender:
    def test_native_rerender_bitwise(self, tmp_path, target_png):
        _, out = run_vectorize(tmp_path, target_png)
        rc = main(["render", "--checkpoint", str(out / "final.ckpt"),
                   "--out", str(tmp_path / "re.png")])
        assert rc == 0
        assert (tmp_path / "re.png").read_bytes() == (out / "final.png").read_bytes()

    def test_upscaled_size(self, tmp_path, target_png):
        _, out = run_vectorize(tmp_path, target_png)
        rc = main(["render", "--checkpoint", str(out / "final.ckpt"),
                   "--out", str(tmp_path / "big.png"),
                   "--width", "48", "--height", "48"])
        assert rc == 0
        assert Image.open(tmp_path / "big.png").size == (48, 48)

    def test_background_override(self, tmp_path, target_png):
        _, out = run_vectorize(tmp_path, target_png)
        # zero out opacities so only the background shows
        ck = json.loads((out / "final.ckpt").read_text())
        for mode in ("strokes", "regions"):
            ops = ck["curves"][mode]["opacities"]
            ck["curves"][mode]["opacities"] = [[0.0] * 3 for _ in ops]
        (out / "clear.ckpt").write_text(json.dumps(ck))
        rc = main(["render", "--checkpoint", str(out / "clear.ckpt"),
                   "--out", str(tmp_path / "bg.png"), "--background", "000000"])
        assert rc == 0
        arr = np.asarray(Image.open(tmp_path / "bg.png"))
        assert np.all(arr == 0)

    def test_invalid_checkpoint_exit_3(self, tmp_path, capsys):
        bad = tmp_path / "bad.ckpt"
        bad.write_text("{... not json")
        rc = main(["render", "--checkpoint", str(bad),
                   "--out", str(tmp_path / "x.png")])
        assert rc == 3


class TestExportSvg:
    def test_export_from_checkpoint(self, tmp_path, target_png):
        _, out = run_vectorize(tmp_path, target_png)
        rc = main(["export-svg", "--checkpoint", str(out / "final.ckpt"),
                   "--out", str(tmp_path / "e.svg")])
        assert rc == 0
        assert (tmp_path / "e.svg").read_text().startswith("<?xml")

    def test_invalid_checkpoint_exit_3(self, tmp_path):
        rc = main(["export-svg", "--checkpoint", str(tmp_path / "no.ckpt"),
                   "--out", str(tmp_path / "e.svg")])
        assert rc == 3


class TestBench:
    def test_single_rep(self):
        r = run_bench(4, 32, 32, "open", reps=1)
        med, p10, p90 = r["forward_ms"]
        assert med == p10 == p90
        assert r["n_gaussians"] == 4 * 96

    def test_zero_curves_no_crash(self):
        r = run_bench(0, 32, 32, "open", reps=1)
        assert r["n_gaussians"] == 0
        assert r["total_ms"][0] >= 0.0

    def test_cli_output_format(self, capsys):
        rc = main(["bench", "--curves", "2", "--width", "32", "--height", "32",
                   "--reps", "2"])
        assert rc == 0
        text = capsys.readouterr().out
        assert "forward" in text and "backward" in text
        assert "csv: bench,open,2,32,32,2," in text

import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from tacmode.cli import main
from tacmode.core import load_png

SMALL = ["--width", "200", "--height", "160", "--spacing", "30"]


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def snapshot(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    assert main(["synth", "--out", str(out), "--seed", "3", "--shear-amp", "4", "--dome", "100,80,50,0.15", *SMALL]) == 0
    return out


@pytest.fixture(scope="module")
def sequence(tmp_path_factory):
    out = tmp_path_factory.mktemp("seq")
    argv = ["synth", "--out", str(out), "--seed", "1", "--frames", "8", "--slip-start", "3", "--slip-rate", "2", *SMALL]
    assert main(argv) == 0
    return out


def commands(b: Path, seq: Path, out: Path):
    return {
        "synth": ["synth", "--out", out, "--seed", "7", *SMALL],
        "synth-seq": ["synth", "--out", out, "--seed", "7", "--frames", "4", "--slip-start", "1", "--slip-rate", "1", *SMALL],
        "extract": ["extract", "--image", b / "with_markers.png", "--out", out, "--spacing", "30"],
        "offset-mask": ["offset-mask", "--mask", b / "mask.png", "--markers", b / "markers.csv", "--out", out],
        "inpaint-fmm": ["inpaint", "--bundle", b, "--out", out / "o.png"],
        "inpaint-harmonic": ["inpaint", "--bundle", b, "--method", "harmonic", "--out", out / "o.png"],
        "inpaint-tacdiff": ["inpaint", "--bundle", b, "--method", "tacdiff", "--steps", "3", "--seed", "5", "--out", out / "o.png"],
        "merge-demo": ["merge-demo", "--image", b / "with_markers.png", "--patch", "64", "--out", out],
        "make-pairs": ["make-pairs", "--image", b / "with_markers.png", "--count", "3", "--patch-size", "64", "--seed", "2", "--spacing", "30", "--out", out],
        "track": ["track", "--ref", seq / "markers" / "frame_0000.csv", "--cur", seq / "markers" / "frame_0005.csv", "--out", out / "f.csv"],
        "metrics": ["metrics", "--a", b / "markerless.png", "--b", b / "with_markers.png"],
        "slip": ["slip", "--frames", seq, "--epsilon", "1.5", "--spacing", "30"],
        "calibrate-slip": ["calibrate-slip", "--frames", seq / "markers"],
    }


@pytest.mark.parametrize(
    "name",
    ["synth", "synth-seq", "extract", "offset-mask", "inpaint-fmm", "inpaint-harmonic", "inpaint-tacdiff",
     "merge-demo", "make-pairs", "track", "metrics", "slip", "calibrate-slip"],
)
def test_subcommand_is_deterministic(name, bundle, sequence, tmp_path, capsys):
    results = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        out.mkdir()
        code, stdout, err = run(commands(bundle, sequence, out)[name], capsys)
        assert code == 0, err
        results.append((stdout.replace(str(out), "OUT"), snapshot(out)))
    assert results[0] == results[1]


def test_synth_bundle_contents(bundle):
    names = {p.name for p in bundle.iterdir()}
    assert {"markerless.png", "with_markers.png", "mask.png", "markers.csv", "field.csv", "manifest.json"} <= names
    assert load_png(bundle / "mask.png").dtype == bool


def test_env_seed_fallback(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("TACMODE_SEED", "7")
    run(["synth", "--out", tmp_path / "a", *SMALL], capsys)
    run(["synth", "--out", tmp_path / "b", "--seed", "7", *SMALL], capsys)
    assert snapshot(tmp_path / "a") == snapshot(tmp_path / "b")


def test_slip_output_format(sequence, capsys):
    code, out, _ = run(["slip", "--frames", sequence / "markers", "--epsilon", "1.5"], capsys)
    lines = out.splitlines()
    assert code == 0 and lines[0] == "frame,max_disp,marker_index"
    frames = [int(l.split(",")[0]) for l in lines[1:]]
    assert frames == list(range(4, 8))


def test_metrics_key_values(bundle, capsys):
    code, out, _ = run(["metrics", "--a", bundle / "markerless.png", "--b", bundle / "markerless.png"], capsys)
    kv = dict(l.split("=") for l in out.split())
    assert kv == {"mse": "0.000000", "psnr": "inf", "ssim": "1.000000"}


def test_inpaint_reaches_quality(bundle, tmp_path, capsys):
    run(["inpaint", "--bundle", bundle, "--out", tmp_path / "o.png"], capsys)
    code, out, _ = run(["metrics", "--a", tmp_path / "o.png", "--b", bundle / "markerless.png"], capsys)
    kv = dict(l.split("=") for l in out.split())
    assert float(kv["psnr"]) > 40 and float(kv["ssim"]) > 0.97


def test_errors_are_one_line(tmp_path, capsys):
    code, _, err = run(["extract", "--image", tmp_path / "missing.png", "--out", tmp_path], capsys)
    assert code == 1
    assert err.strip().startswith("error: extract: FileNotFoundError:")
    assert len(err.strip().splitlines()) == 1


def test_unknown_subcommand(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["frobnicate"])
    assert ei.value.code == 2


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "tacmode.cli", "synth", "--out", str(tmp_path), "--seed", "1", *SMALL],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "manifest.json").is_file()


def test_inpaint_with_external_echo(bundle, tmp_path, capsys):
    cmd = f"{sys.executable} -m tacmode.tact echo"
    code, _, err = run(
        ["inpaint", "--bundle", bundle, "--method", "tacdiff", "--steps", "2", "--patch-size", "64",
         "--denoiser-cmd", cmd, "--out", tmp_path / "o.png"],
        capsys,
    )
    assert code == 0, err
    m = load_png(bundle / "mask.png")
    np.testing.assert_array_equal(load_png(tmp_path / "o.png")[~m], load_png(bundle / "with_markers.png")[~m])


def test_slip_first_event_at_analytic_frame(tmp_path, capsys):
    seq = tmp_path / "seq"
    run(["synth", "--out", seq, "--seed", "2", "--frames", "12", "--slip-start", "5", "--slip-rate", "1", "--jitter", "0", *SMALL], capsys)
    code, out, _ = run(["slip", "--frames", seq, "--epsilon", "2", "--spacing", "30"], capsys)
    assert code == 0
    assert out.splitlines()[1].split(",")[0] == "8"

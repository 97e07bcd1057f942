import json
import shutil

import numpy as np
import pytest

from hybridvc import codecs, container
from hybridvc.checkpoint import Checkpoint, save_checkpoint
from hybridvc.cli import main
from hybridvc.restoration import RestorationNetwork, desk_spec
from hybridvc.video import VideoSequence


def tiny_spec():
    return desk_spec(channels=8, n_enc_blocks=1, n_dec_blocks=1, n_ref_blocks=1,
                     n_offset_layers=2, n_refine_blocks=1)


def write_clip(path, t=4, h=32, w=32, seed=0, static=False):
    rng = np.random.default_rng(seed)
    base = rng.random((h + 8, w + 8, 3)).astype(np.float32)
    frames = [base[0:h, 0:w] if static else base[i:i + h, i:i + w] for i in range(t)]
    video = VideoSequence(np.stack(frames))
    np.savez_compressed(path, frames=video.pixels)
    return video


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    if code != 0:
        print(f"[cli stderr] {out.err}")  # resurfaces in pytest failure output
    payload = json.loads(out.out) if out.out.strip() else None
    return code, payload


@pytest.fixture()
def checkpoint_path(tmp_path):
    net = RestorationNetwork.build(tiny_spec(), seed=3)
    path = str(tmp_path / "tiny.ckpt")
    save_checkpoint(path, Checkpoint(net.state_arrays(), net.spec))
    return path


def test_encode_static_clip_first_policy(tmp_path, capsys):
    clip = str(tmp_path / "clip.npz")
    out = str(tmp_path / "out.hvc")
    write_clip(clip, static=True)
    code, report = run(capsys, "encode", "-i", clip, "-o", out,
                       "--codec", "mock_lossy", "--quality", "60")
    assert code == 0
    assert report["ref_indices"] == [0]
    assert report["total_bpp"] == pytest.approx(
        report["lossy_bpp"] + report["ref_bpp"] + report["framing_bpp"])
    assert "config_sha256" in report["provenance"]
    cont = container.read_container(out)
    assert cont.frame_count == 4


def test_encode_scene_cut_policy_adds_reference(tmp_path, capsys):
    clip = str(tmp_path / "clip.npz")
    dark = np.full((10, 32, 32, 3), 0.05, dtype=np.float32)
    bright = np.full((8, 32, 32, 3), 0.95, dtype=np.float32)
    np.savez_compressed(clip, frames=np.concatenate([dark, bright]))
    code, report = run(capsys, "encode", "-i", clip, "-o", str(tmp_path / "o.hvc"),
                       "--ref-policy", "scene-cut", "--min-scene-len", "5")
    assert code == 0
    assert report["ref_indices"] == [0, 10]


def test_decode_raw_bit_exact_with_adapter(tmp_path, capsys):
    clip = str(tmp_path / "clip.npz")
    hvc = str(tmp_path / "c.hvc")
    outv = str(tmp_path / "dec.npz")
    video = write_clip(clip)
    code, _ = run(capsys, "encode", "-i", clip, "-o", hvc, "--quality", "55")
    assert code == 0
    code, report = run(capsys, "decode", "-i", hvc, "-o", outv, "--mode", "raw")
    assert code == 0
    cont = container.read_container(hvc)
    direct = codecs.decode_video(cont.lossy_bitstream, codecs.CodecConfig("mock_lossy", 55))
    decoded = np.load(outv)["frames"]
    assert np.array_equal(decoded, direct.pixels.astype(np.float32))


def test_decode_step1_and_step2_with_psnr_log(tmp_path, capsys, checkpoint_path):
    clip = str(tmp_path / "clip.npz")
    hvc = str(tmp_path / "c.hvc")
    write_clip(clip)
    run(capsys, "encode", "-i", clip, "-o", hvc, "--quality", "40")
    log = str(tmp_path / "psnr.csv")
    code, report = run(capsys, "decode", "-i", hvc, "-o", str(tmp_path / "s2.npz"),
                       "--mode", "step2", "--checkpoint", checkpoint_path,
                       "--ground-truth", clip, "--psnr-log", log)
    assert code == 0
    assert "mean_psnr" in report
    assert report["provenance"]["checkpoint_sha256"]
    lines = open(log).read().splitlines()
    assert lines[0].startswith("# provenance:")
    assert lines[1] == "frame,psnr"
    assert len(lines) == 2 + 4


def test_decode_zeroed_confidence_step2_equals_step1(tmp_path, capsys):
    rng = np.random.default_rng(7)
    net = RestorationNetwork.build(tiny_spec(), seed=5)
    for name in net.params:
        if name.startswith("step2.") or "dec.out" in name:
            net.params[name].data[:] = rng.normal(
                0, 0.05, net.params[name].data.shape).astype(np.float32)
    net.zero_confidence_head()
    ckpt = str(tmp_path / "zeroconf.ckpt")
    save_checkpoint(ckpt, Checkpoint(net.state_arrays(), net.spec))

    clip = str(tmp_path / "clip.npz")
    hvc = str(tmp_path / "c.hvc")
    write_clip(clip)
    run(capsys, "encode", "-i", clip, "-o", hvc)
    s1, s2 = str(tmp_path / "s1.npz"), str(tmp_path / "s2.npz")
    assert run(capsys, "decode", "-i", hvc, "-o", s1, "--mode", "step1",
               "--checkpoint", ckpt)[0] == 0
    assert run(capsys, "decode", "-i", hvc, "-o", s2, "--mode", "step2",
               "--checkpoint", ckpt)[0] == 0
    assert np.array_equal(np.load(s1)["frames"], np.load(s2)["frames"])


def test_decode_workers_match_sequential(tmp_path, capsys, checkpoint_path):
    clip = str(tmp_path / "clip.npz")
    hvc = str(tmp_path / "c.hvc")
    write_clip(clip)
    run(capsys, "encode", "-i", clip, "-o", hvc)
    a, b = str(tmp_path / "a.npz"), str(tmp_path / "b.npz")
    run(capsys, "decode", "-i", hvc, "-o", a, "--mode", "step1",
        "--checkpoint", checkpoint_path, "--workers", "1")
    run(capsys, "decode", "-i", hvc, "-o", b, "--mode", "step1",
        "--checkpoint", checkpoint_path, "--workers", "3")
    assert np.array_equal(np.load(a)["frames"], np.load(b)["frames"])


def test_exit_codes(tmp_path, capsys):
    clip = str(tmp_path / "clip.npz")
    write_clip(clip)
    # validation failure: bad quality
    assert main(["encode", "-i", clip, "-o", str(tmp_path / "x.hvc"),
                 "--quality", "0"]) == 3
    capsys.readouterr()
    # format failure: not a container
    bogus = str(tmp_path / "bogus.hvc")
    open(bogus, "wb").write(b"XXXX not a container")
    assert main(["decode", "-i", bogus, "-o", str(tmp_path / "y.npz")]) == 4
    capsys.readouterr()
    # codec failure: missing external executable
    assert main(["encode", "-i", clip, "-o", str(tmp_path / "z.hvc"),
                 "--codec", "external_video", "--quality", "30",
                 "--encode-cmd", "no-such-encoder-xyz {input} {output} {qp} {preset}"]) == 2
    capsys.readouterr()
    # step2 without checkpoint
    hvc = str(tmp_path / "ok.hvc")
    main(["encode", "-i", clip, "-o", hvc])
    capsys.readouterr()
    assert main(["decode", "-i", hvc, "-o", str(tmp_path / "w.npz"),
                 "--mode", "step2"]) == 3


def test_detect_fixture_prints_cut(tmp_path, capsys):
    clip = str(tmp_path / "clip.npz")
    frames = np.concatenate([np.zeros((8, 32, 32, 3)), np.ones((8, 32, 32, 3))])
    np.savez_compressed(clip, frames=frames.astype(np.float32))
    code, report = run(capsys, "detect", "-i", clip, "--min-scene-len", "4")
    assert code == 0
    assert report["cut_indices"] == [8]


def test_eval_emits_four_point_curve_and_bdbr(tmp_path, capsys):
    clip = str(tmp_path / "clip.npz")
    write_clip(clip, t=3, h=40, w=40, seed=5)
    curve = str(tmp_path / "curve.csv")
    code, report = run(capsys, "eval", "-i", clip, "-o", curve,
                       "--qualities", "70,80,90,100")
    assert code == 0
    assert len(report["points"]) == 4
    lines = [l for l in open(curve).read().splitlines() if not l.startswith("#")]
    assert lines[0] == "label,bpp,psnr_rgb,psnr_y,ms_ssim"
    assert len(lines) == 5
    bpps = [float(l.split(",")[1]) for l in lines[1:]]
    assert bpps == sorted(bpps)
    # BDBR of the curve against itself is ~0
    code, report2 = run(capsys, "eval", "-i", clip, "-o", str(tmp_path / "c2.csv"),
                        "--qualities", "70,80,90,100", "--anchor-csv", curve)
    assert code == 0
    # the anchor round-trips through a 6-decimal CSV, so exact zero is out
    assert abs(report2["bdbr_vs_anchor_percent"]) < 1e-3


def test_train_desk_preset_smoke(tmp_path, capsys):
    ckpt = str(tmp_path / "desk.ckpt")
    log = str(tmp_path / "train.csv")
    code, report = run(capsys, "train", "--preset", "desk", "-o", ckpt,
                       "--iters-step1", "4", "--iters-step2", "4",
                       "--log-csv", log, "--seed", "1")
    assert code == 0
    assert report["step1_iterations"] == 4
    assert report["step2_iterations"] == 4
    assert report["checkpoint_sha256"]
    assert open(log).read().count("step2") >= 4


def test_train_config_file_precedence(tmp_path, capsys):
    cfgfile = str(tmp_path / "train.json")
    json.dump({"train": {"max_iters_step1": 3, "max_iters_step2": 2, "lr": 0.01},
               "network": {"channels": 8, "n_enc_blocks": 1, "n_dec_blocks": 1,
                            "n_ref_blocks": 1, "n_offset_layers": 2,
                            "n_refine_blocks": 1}},
              open(cfgfile, "w"))
    ckpt = str(tmp_path / "m.ckpt")
    # CLI flag overrides the config file's step1 iters
    code, report = run(capsys, "train", "--config", cfgfile, "-o", ckpt,
                       "--iters-step1", "5")
    assert code == 0
    assert report["step1_iterations"] == 5
    assert report["step2_iterations"] == 2
    assert report["parameters"] < 20_000


def test_eval_rejects_bdbr_with_too_few_points(tmp_path, capsys):
    clip = str(tmp_path / "clip.npz")
    write_clip(clip, t=2)
    code, _ = run(capsys, "eval", "-i", clip, "-o", str(tmp_path / "c.csv"),
                  "--qualities", "80,100", "--anchor-csv", str(tmp_path / "c.csv"))
    assert code == 3

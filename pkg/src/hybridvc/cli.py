"""Command-line pipeline: encode, decode, train, eval, detect.

Machine-readable JSON goes to stdout, human logs to stderr. Every command is
reproducible under --seed and stamps its outputs with a provenance header
(hash of the effective configuration plus the checkpoint hash when one is
used). Exit codes: 0 ok, 2 external codec failure, 3 validation failure,
4 format error.

Video files: ``.npz``/``.npy`` hold a (T, H, W, 3) array (uint8 or float in
[0, 1]); ``.yuv`` is raw 8-bit planar 4:2:0 and needs --width/--height.
"""

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import codecs, container, metrics, scenedetect, synthetic, training
from .checkpoint import checkpoint_file_digest, load_checkpoint, save_checkpoint
from .errors import (
    CodecProcessError,
    DomainError,
    FormatError,
    HybridVCError,
    ScaleError,
    StateError,
    TrainingError,
    ValidationError,
)
from .neural import tune_allocator
from .restoration import (
    NetworkSpec,
    ReferenceFeatureCache,
    RestorationNetwork,
    desk_spec,
    restore_frame,
)
from .video import VideoSequence, yuv420_to_video, video_to_yuv420

EXIT_OK = 0
EXIT_CODEC = 2
EXIT_VALIDATION = 3
EXIT_FORMAT = 4


def _log(msg):
    print(msg, file=sys.stderr)


def _emit(payload):
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _provenance(args, checkpoint_path=None):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    prov = {
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "seed": getattr(args, "seed", None),
    }
    if checkpoint_path:
        prov["checkpoint_sha256"] = checkpoint_file_digest(checkpoint_path)
    return prov


def load_video(path, width=None, height=None, fps=30.0) -> VideoSequence:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".yuv":
        if not width or not height:
            raise ValidationError("raw .yuv input needs --width and --height")
        with open(path, "rb") as fh:
            return yuv420_to_video(fh.read(), width, height, fps=fps)
    if ext == ".npz":
        arr = np.load(path)["frames"]
    elif ext == ".npy":
        arr = np.load(path)
    else:
        raise ValidationError(f"unsupported video extension {ext!r} (use .npz/.npy/.yuv)")
    if arr.ndim == 3:
        arr = arr[None]
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float32) / 255.0
    return VideoSequence(np.clip(arr.astype(np.float32), 0.0, 1.0), fps=fps).validate()


def save_video(path, video: VideoSequence):
    ext = os.path.splitext(path)[1].lower()
    if ext == ".npz":
        np.savez_compressed(path, frames=video.pixels.astype(np.float32))
    elif ext == ".npy":
        np.save(path, video.pixels.astype(np.float32))
    elif ext == ".yuv":
        with open(path, "wb") as fh:
            fh.write(video_to_yuv420(video))
    else:
        raise ValidationError(f"unsupported video extension {ext!r} (use .npz/.npy/.yuv)")


def _video_codec_config(args) -> codecs.CodecConfig:
    return codecs.CodecConfig(
        codec_id=args.codec, quality=args.quality,
        command_template=getattr(args, "encode_cmd", "") or "",
        decode_template=getattr(args, "decode_cmd", "") or "",
        preset=getattr(args, "preset", "medium"),
    ).validate()


def _ref_codec_config(args) -> codecs.CodecConfig:
    return codecs.CodecConfig(
        codec_id=args.ref_codec, quality=100,
        command_template=getattr(args, "ref_encode_cmd", "") or "",
        decode_template=getattr(args, "ref_decode_cmd", "") or "",
    ).validate()


# -- encode -------------------------------------------------------------------

def cmd_encode(args):
    video = load_video(args.input, args.width, args.height, args.fps)
    vcfg = _video_codec_config(args)
    rcfg = _ref_codec_config(args)

    if args.ref_policy == "scene-cut":
        cuts = scenedetect.detect_cuts(video, threshold=args.scene_threshold,
                                       min_scene_len=args.min_scene_len)
        ref_indices = scenedetect.select_references(video.frame_count, cuts,
                                                    scenedetect.POLICY_SCENE_CUT)
    else:
        ref_indices = [0]

    _log(f"encoding {video.frame_count} frames {video.width}x{video.height} "
         f"with {vcfg.codec_id} q={vcfg.quality}; references at {ref_indices}")
    bitstream, lossy_bits = codecs.encode_video(video, vcfg)
    references = [
        container.ReferenceEntry(i, codecs.encode_reference(video.frame(i), rcfg),
                                 rcfg.numeric_id)
        for i in ref_indices
    ]
    meta = container.StreamMeta(video.width, video.height, video.frame_count,
                                vcfg.numeric_id)
    blob = container.write_container(args.output, bitstream, references, meta)

    ref_bits = 8 * sum(len(r.payload) for r in references)
    framing_bits = 8 * len(blob) - 8 * len(bitstream) - ref_bits
    denom = (video.width, video.height, video.frame_count)
    report = {
        "lossy_bits": lossy_bits,
        "ref_bits": ref_bits,
        "framing_bits": framing_bits,
        "lossy_bpp": metrics.bpp(lossy_bits, *denom),
        "ref_bpp": metrics.bpp(ref_bits, *denom),
        "framing_bpp": metrics.bpp(framing_bits, *denom),
        "total_bpp": metrics.bpp(lossy_bits + ref_bits + framing_bits, *denom),
        "ref_indices": ref_indices,
        "container_bytes": len(blob),
        "output": args.output,
        "provenance": _provenance(args),
    }
    _emit(report)
    return EXIT_OK


# -- decode -------------------------------------------------------------------

def _decode_container(path, args):
    cont = container.read_container(path)
    codec_name = codecs.CODEC_NAMES.get(cont.lossy_codec_id)
    if codec_name is None:
        raise FormatError(f"unknown lossy codec id {cont.lossy_codec_id}")
    vcfg = codecs.CodecConfig(codec_id=codec_name, quality=args.quality,
                              command_template=getattr(args, "encode_cmd", "") or "",
                              decode_template=getattr(args, "decode_cmd", "") or "",
                              preset=getattr(args, "preset", "medium"))
    if codec_name == "external_video":
        from .codecs import external
        video = external.decode_video(cont.lossy_bitstream, vcfg,
                                      width=cont.width, height=cont.height, fps=args.fps)
    else:
        video = codecs.decode_video(cont.lossy_bitstream, vcfg)
    return cont, video


def _restore_video(video, cont, net, mode, workers):
    cache = ReferenceFeatureCache(net)
    for ref in cont.references:
        codec_name = codecs.CODEC_NAMES.get(ref.codec_id)
        rcfg = codecs.CodecConfig(codec_id=codec_name)
        frame = codecs.decode_reference(ref.payload, rcfg)
        cache.add(ref.frame_index, frame)

    def one(t):
        return restore_frame(video.frame(t), cache, net, mode=mode, frame_index=t).pixels

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            restored = list(pool.map(one, range(video.frame_count)))
    else:
        restored = [one(t) for t in range(video.frame_count)]
    out = VideoSequence(np.stack(restored), color_space=video.color_space,
                        bit_depth=video.bit_depth, fps=video.fps)
    return out, cache


def cmd_decode(args):
    tune_allocator()
    cont, video = _decode_container(args.input, args)
    ckpt_path = None
    if args.mode == "raw":
        out = video
    else:
        if not args.checkpoint:
            raise ValidationError(f"mode {args.mode} requires --checkpoint")
        ckpt_path = args.checkpoint
        ckpt = load_checkpoint(ckpt_path)
        net = RestorationNetwork.from_arrays(ckpt.spec, ckpt.weights)
        _log(f"restoring {video.frame_count} frames in mode {args.mode} "
             f"({net.param_count()} parameters)")
        out, _ = _restore_video(video, cont, net, args.mode, args.workers)
    save_video(args.output, out)

    report = {
        "mode": args.mode,
        "frames": out.frame_count,
        "width": out.width,
        "height": out.height,
        "output": args.output,
        "provenance": _provenance(args, ckpt_path),
    }
    if args.ground_truth:
        gt = load_video(args.ground_truth, args.width, args.height, args.fps)
        if gt.pixels.shape != out.pixels.shape:
            raise ValidationError("ground truth dimensions do not match decoded video")
        per_frame = [metrics.psnr(out.pixels[t], gt.pixels[t])
                     for t in range(out.frame_count)]
        report["mean_psnr"] = float(np.mean(per_frame))
        if args.psnr_log:
            with open(args.psnr_log, "w", newline="") as fh:
                fh.write(f"# provenance: {json.dumps(report['provenance'], sort_keys=True)}\n")
                w = csv.writer(fh)
                w.writerow(["frame", "psnr"])
                for t, v in enumerate(per_frame):
                    w.writerow([t, f"{v:.4f}"])
    _emit(report)
    return EXIT_OK


# -- train --------------------------------------------------------------------

def _read_config_file(path):
    if path is None:
        return {}
    with open(path, "rb") as fh:
        if path.endswith(".toml"):
            import tomllib

            return tomllib.load(fh)
        return json.load(fh)


def cmd_train(args):
    tune_allocator()
    filecfg = _read_config_file(args.config)
    traincfg = dict(filecfg.get("train", {}))
    netcfg = dict(filecfg.get("network", {}))
    datacfg = dict(filecfg.get("data", {}))

    # CLI flags override file values, which override preset defaults.
    for key, flag in (("lr", "lr"), ("batch_size", "batch_size"),
                      ("patch_size", "patch_size"), ("seed", "seed"),
                      ("max_iters_step1", "iters_step1"),
                      ("max_iters_step2", "iters_step2"), ("loss", "loss")):
        value = getattr(args, flag, None)
        if value is not None:
            traincfg[key] = value
    if args.log_csv:
        traincfg["log_csv"] = args.log_csv

    preset = datacfg.get("preset", args.preset)
    quality = datacfg.get("quality", args.quality)
    if preset == "desk":
        cfg = training.desk_train_config(**traincfg)
        spec = desk_spec(**netcfg)
        clips = synthetic.desk_corpus(seed=cfg.seed)
        val_clips = synthetic.desk_heldout(seed=cfg.seed + 1)
    else:
        cfg = training.TrainConfig(**traincfg).validate()
        spec = NetworkSpec(**netcfg).validate()
        paths = datacfg.get("videos", args.videos or [])
        if not paths:
            raise ValidationError("no training videos given (use --preset desk or data.videos)")
        clips = [load_video(p) for p in paths]
        val_clips = clips[-1:]
        clips = clips[:-1] if len(clips) > 1 else clips

    ccfg = codecs.CodecConfig("mock_lossy", quality=quality)
    dataset = training.build_pairs(clips, ccfg)
    val_dataset = training.build_pairs(val_clips, ccfg)
    _log(f"training on {dataset.n_pairs} pairs ({len(dataset.clips)} clips), "
         f"spec channels={spec.channels}")

    ck1 = training.train_step1(dataset, cfg, spec, val_dataset=val_dataset)
    ck2 = training.train_step2(dataset, ck1, cfg, val_dataset=val_dataset)
    digest = save_checkpoint(args.output, ck2)

    net = RestorationNetwork.from_arrays(ck2.spec, ck2.weights)
    report = {
        "checkpoint": args.output,
        "checkpoint_sha256": digest,
        "parameters": net.param_count(),
        "step1_iterations": len(ck1.loss_history),
        "step2_iterations": len(ck2.loss_history),
        "final_loss_step1": ck1.loss_history[-1],
        "final_loss_step2": ck2.loss_history[-1],
        "val_psnr_step1": training.evaluate_dataset_psnr(net, val_dataset, "step1"),
        "val_psnr_step2": training.evaluate_dataset_psnr(net, val_dataset, "step2"),
        "provenance": _provenance(args),
    }
    _emit(report)
    return EXIT_OK


# -- eval ---------------------------------------------------------------------

def _read_curve_csv(path, metric="psnr_rgb"):
    pairs = []
    with open(path) as fh:
        rows = [r for r in fh if not r.startswith("#")]
    reader = csv.DictReader(rows)
    for row in reader:
        value = row[metric]
        if value:
            pairs.append((float(row["bpp"]), float(value)))
    return metrics.RDCurve.from_pairs(pairs, metric_kind=metric, label=path)


def cmd_eval(args):
    tune_allocator()
    video = load_video(args.input, args.width, args.height, args.fps)
    qualities = [int(q) for q in args.qualities.split(",")]
    rcfg = _ref_codec_config(args)

    net = None
    ckpt_path = None
    if args.mode != "raw":
        if not args.checkpoint:
            raise ValidationError(f"mode {args.mode} requires --checkpoint")
        ckpt_path = args.checkpoint
        ckpt = load_checkpoint(ckpt_path)
        net = RestorationNetwork.from_arrays(ckpt.spec, ckpt.weights)

    rows = []
    for q in qualities:
        vcfg = codecs.CodecConfig(args.codec, quality=q,
                                  command_template=args.encode_cmd or "",
                                  decode_template=args.decode_cmd or "",
                                  preset=args.preset)
        bitstream, lossy_bits = codecs.encode_video(video, vcfg)
        decoded = codecs.decode_video(bitstream, vcfg) if args.codec == "mock_lossy" else None
        if decoded is None:
            from .codecs import external
            decoded = external.decode_video(bitstream, vcfg, width=video.width,
                                            height=video.height, fps=video.fps)
        total_bits = lossy_bits
        if args.mode == "raw":
            out = decoded
        else:
            ref_entries = [container.ReferenceEntry(
                0, codecs.encode_reference(video.frame(0), rcfg), rcfg.numeric_id)]
            meta = container.StreamMeta(video.width, video.height, video.frame_count,
                                        vcfg.numeric_id)
            blob = container.mux(bitstream, ref_entries, meta)
            total_bits = lossy_bits + 8 * (len(blob) - len(bitstream))
            cont = container.HybridContainer(meta.version, meta.lossy_codec_id,
                                             meta.frame_count, meta.width, meta.height,
                                             bitstream, ref_entries)
            out, _ = _restore_video(decoded, cont, net, args.mode, args.workers)
        rate = metrics.bpp(total_bits, video.width, video.height, video.frame_count)
        row = {
            "label": f"{args.codec}-q{q}-{args.mode}",
            "bpp": rate,
            "psnr_rgb": metrics.psnr(out, video),
            "psnr_y": metrics.psnr(out, video, mode="y"),
        }
        try:
            row["ms_ssim"] = metrics.ms_ssim(out, video)
        except ScaleError:
            row["ms_ssim"] = float("nan")
        rows.append(row)
        _log(f"q={q}: {rate:.4f} bpp, {row['psnr_rgb']:.2f} dB")

    prov = _provenance(args, ckpt_path)
    with open(args.output, "w", newline="") as fh:
        fh.write(f"# provenance: {json.dumps(prov, sort_keys=True)}\n")
        w = csv.DictWriter(fh, fieldnames=["label", "bpp", "psnr_rgb", "psnr_y", "ms_ssim"])
        w.writeheader()
        for row in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v)
                        for k, v in row.items()})

    summary = {"points": rows, "output": args.output, "provenance": prov}
    curve = metrics.RDCurve.from_pairs([(r["bpp"], r["psnr_rgb"]) for r in rows],
                                       label="eval") if len(rows) >= 4 else None
    if args.anchor_csv:
        if curve is None:
            raise ValidationError("BDBR needs >= 4 evaluated points")
        anchor = _read_curve_csv(args.anchor_csv)
        summary["bdbr_vs_anchor_percent"] = metrics.bdbr(anchor, curve)
    if args.plot:
        _plot_curves(args.plot, rows)
        summary["plot"] = args.plot
    _emit(summary)
    return EXIT_OK


def _plot_curves(path, rows):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot([r["bpp"] for r in rows], [r["psnr_rgb"] for r in rows], "o-")
    ax.set_xlabel("bpp")
    ax.set_ylabel("PSNR (dB)")
    ax.grid(True, alpha=0.4)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# -- detect -------------------------------------------------------------------

def cmd_detect(args):
    video = load_video(args.input, args.width, args.height, args.fps)
    cuts = scenedetect.detect_cuts(video, threshold=args.scene_threshold,
                                   min_scene_len=args.min_scene_len)
    _emit({
        "cut_indices": cuts.cut_indices,
        "threshold": cuts.threshold,
        "frame_count": cuts.frame_count,
        "provenance": _provenance(args),
    })
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _add_io_args(p):
    p.add_argument("--width", type=int, help="width for raw .yuv input")
    p.add_argument("--height", type=int, help="height for raw .yuv input")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)


def _add_codec_args(p):
    p.add_argument("--codec", default="mock_lossy",
                   choices=["mock_lossy", "external_video"])
    p.add_argument("--quality", "--qp", type=int, default=50, dest="quality")
    p.add_argument("--preset", default="medium")
    p.add_argument("--encode-cmd", default="", help="external encoder template")
    p.add_argument("--decode-cmd", default="", help="external decoder template")
    p.add_argument("--ref-codec", default="mock_lossless",
                   choices=["mock_lossless", "external_lossless"])
    p.add_argument("--ref-encode-cmd", default="")
    p.add_argument("--ref-decode-cmd", default="")


def build_parser():
    ap = argparse.ArgumentParser(prog="hybridvc", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="compress a video into a .hvc container")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--output", "-o", required=True)
    _add_io_args(p)
    _add_codec_args(p)
    p.add_argument("--ref-policy", choices=["first", "scene-cut"], default="first")
    p.add_argument("--scene-threshold", type=float, default=scenedetect.DEFAULT_THRESHOLD)
    p.add_argument("--min-scene-len", type=int, default=scenedetect.DEFAULT_MIN_SCENE_LEN)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a .hvc container, optionally restoring")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--output", "-o", required=True)
    _add_io_args(p)
    p.add_argument("--mode", choices=["raw", "step1", "step2"], default="raw")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--quality", type=int, default=50, help="hint for external decoders")
    p.add_argument("--preset", default="medium")
    p.add_argument("--encode-cmd", default="")
    p.add_argument("--decode-cmd", default="")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--ground-truth", default=None)
    p.add_argument("--psnr-log", default=None)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("train", help="train the two-step restoration network")
    p.add_argument("--preset", choices=["desk"], default="desk")
    p.add_argument("--config", default=None, help="TOML or JSON config file")
    p.add_argument("--output", "-o", default="model.ckpt")
    p.add_argument("--videos", nargs="*", default=None)
    p.add_argument("--quality", type=int, default=30)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, dest="batch_size", default=None)
    p.add_argument("--patch-size", type=int, dest="patch_size", default=None)
    p.add_argument("--iters-step1", type=int, dest="iters_step1", default=None)
    p.add_argument("--iters-step2", type=int, dest="iters_step2", default=None)
    p.add_argument("--loss", choices=["l2", "ms_ssim"], default=None)
    p.add_argument("--log-csv", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="sweep qualities and emit an RD curve")
    p.add_argument("--input", "-i", required=True)
    p.add_argument("--output", "-o", required=True)
    _add_io_args(p)
    _add_codec_args(p)
    p.add_argument("--qualities", default="80,88,94,100",
                   help="comma-separated quality points")
    p.add_argument("--mode", choices=["raw", "step1", "step2"], default="raw")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--anchor-csv", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--plot", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("detect", help="detect scene cuts")
    p.add_argument("--input", "-i", required=True)
    _add_io_args(p)
    p.add_argument("--scene-threshold", type=float, default=scenedetect.DEFAULT_THRESHOLD)
    p.add_argument("--min-scene-len", type=int, default=scenedetect.DEFAULT_MIN_SCENE_LEN)
    p.set_defaults(func=cmd_detect)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CodecProcessError as exc:
        _log(f"codec error: {exc}" + (f"\n{exc.stderr}" if exc.stderr else ""))
        return EXIT_CODEC
    except (ValidationError, StateError, TrainingError, DomainError, ScaleError) as exc:
        _log(f"validation error: {exc}")
        return EXIT_VALIDATION
    except FormatError as exc:
        _log(f"format error: {exc}")
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())

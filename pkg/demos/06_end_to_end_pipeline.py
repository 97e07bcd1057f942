"""Full pipeline on one clip: encode to a container, decode, and compare the
raw, step-1, and step-2 reconstructions frame by frame.

Needs a trained checkpoint (run demos/05_train_desk_model.py first, or point
at any .ckpt):

    python demos/06_end_to_end_pipeline.py [checkpoint]
"""

import sys

import numpy as np

import hybridvc as hv
from hybridvc import codecs, container, synthetic
from hybridvc.checkpoint import load_checkpoint
from hybridvc.metrics import bpp, psnr

ckpt_path = sys.argv[1] if len(sys.argv) > 1 else "desk_model.ckpt"
ckpt = load_checkpoint(ckpt_path)
net = hv.RestorationNetwork.from_arrays(ckpt.spec, ckpt.weights)

rng = np.random.default_rng(11)
video = synthetic.natural_panning_clip(rng, "camera", n_frames=8, height=64, width=64)

vcfg = codecs.CodecConfig("mock_lossy", quality=30)
rcfg = codecs.CodecConfig("mock_lossless")
bitstream, lossy_bits = codecs.encode_video(video, vcfg)
refs = [container.ReferenceEntry(0, codecs.encode_reference(video.frame(0), rcfg), 3)]
meta = container.StreamMeta(video.width, video.height, video.frame_count, 1)
blob = container.mux(bitstream, refs, meta)

denom = (video.width, video.height, video.frame_count)
print(f"container {len(blob)} bytes; lossy {bpp(lossy_bits, *denom):.3f} bpp "
      f"+ reference {bpp(8 * len(refs[0].payload), *denom):.3f} bpp")

lossy, out_refs, out_meta = container.demux(blob)
decoded = codecs.decode_video(lossy, vcfg)
cache = hv.ReferenceFeatureCache(net)
for r in out_refs:
    cache.add(r.frame_index, codecs.decode_reference(r.payload, rcfg))

print(f"\n{'frame':>6} {'raw':>7} {'step1':>7} {'step2':>7}")
raws, s1s, s2s = [], [], []
for t in range(decoded.frame_count):
    truth = video.frame(t).pixels
    raw = psnr(decoded.frame(t).pixels, truth)
    s1 = psnr(hv.restore_frame(decoded.frame(t), None, net, "step1").pixels, truth)
    s2 = psnr(hv.restore_frame(decoded.frame(t), cache, net, "step2", frame_index=t).pixels, truth)
    raws.append(raw), s1s.append(s1), s2s.append(s2)
    print(f"{t:>6} {raw:>7.2f} {s1:>7.2f} {s2:>7.2f}")
print(f"{'mean':>6} {np.mean(raws):>7.2f} {np.mean(s1s):>7.2f} {np.mean(s2s):>7.2f}")
print(f"\nreference encoder ran {cache.encoder_passes} time(s) for "
      f"{decoded.frame_count} restored frames")

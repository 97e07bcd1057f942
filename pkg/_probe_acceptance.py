"""Scratch probe for the desk-scale end-to-end experiment (not part of the package)."""
import json
import numpy as np
import hybridvc as hv
from hybridvc.training import desk_train_config, build_pairs, train_step1, train_step2
from hybridvc import synthetic, codecs
from hybridvc.metrics import psnr
from hybridvc.neural import Tensor, no_grad

cc = codecs.CodecConfig("mock_lossy", quality=30)
ds = build_pairs(synthetic.desk_corpus(seed=0, n_synthetic=16, n_natural=10), cc)
hds = build_pairs(synthetic.desk_heldout(seed=7), cc)

cfg = desk_train_config(max_iters_step1=1400, max_iters_step2=700, val_interval=10**9)
ck1 = train_step1(ds, cfg, hv.desk_spec())
ck2 = train_step2(ds, ck1, cfg)
net = hv.RestorationNetwork.from_arrays(ck2.spec, ck2.weights)

def eval_modes(dsx):
    rows = dict(comp=[], s1=[], s2rel=[], s2irr=[])
    with no_grad():
        for ci, clip in enumerate(dsx.clips):
            rel = clip.original.pixels[0].transpose(2, 0, 1)[None].astype(np.float32)
            other = dsx.clips[(ci + 1) % len(dsx.clips)]
            irr = other.original.pixels[-1].transpose(2, 0, 1)[None].astype(np.float32)
            f_rel = net.encode_reference_features(Tensor(rel))
            f_irr = net.encode_reference_features(Tensor(irr))
            for t in range(clip.original.frame_count):
                c = clip.compressed.pixels[t].transpose(2, 0, 1)[None].astype(np.float32)
                x = clip.original.pixels[t]
                rows["comp"].append(psnr(clip.compressed.pixels[t], x))
                o1 = net.forward_step1(Tensor(c))
                rows["s1"].append(psnr(np.clip(o1.data[0].transpose(1, 2, 0), 0, 1), x))
                o2 = net.forward_step2(Tensor(c), f_rel)
                rows["s2rel"].append(psnr(np.clip(o2.data[0].transpose(1, 2, 0), 0, 1), x))
                o3 = net.forward_step2(Tensor(c), f_irr)
                rows["s2irr"].append(psnr(np.clip(o3.data[0].transpose(1, 2, 0), 0, 1), x))
    return {k: float(np.mean(v)) for k, v in rows.items()}

res = eval_modes(hds)
res["gain_s1"] = res["s1"] - res["comp"]
res["gain_s2_vs_s1"] = res["s2rel"] - res["s1"]
res["irr_penalty"] = res["s2irr"] - res["s1"]
print(json.dumps(res, indent=2))

# confidence map on edges vs smooth regions (relevant reference)
clip = hds.clips[0]
rel = clip.original.pixels[0].transpose(2, 0, 1)[None].astype(np.float32)
with no_grad():
    f_r = net.encode_reference_features(Tensor(rel))
    c = Tensor(clip.compressed.pixels[3].transpose(2, 0, 1)[None].astype(np.float32))
    f_g = net.extract_general_features(c)
    o, m = net.predict_offsets(f_g, f_r)
    src = f_r if net.spec.deform_source == "f_r" else f_g
    fd, conf = net.align_and_gate(src, o, m)
gray = clip.original.pixels[3].mean(axis=2)
gy, gx = np.gradient(gray)
mag = np.hypot(gy, gx)
edges = mag > np.quantile(mag, 0.9)
smooth = mag < np.quantile(mag, 0.5)
cmap = conf.data[0, 0]
print("mean C edges:", float(cmap[edges].mean()), "smooth:", float(cmap[smooth].mean()))
np.savez("/tmp/probe_ckpt.npz", **ck2.weights)

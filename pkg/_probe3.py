import json
import numpy as np
import hybridvc as hv
from hybridvc.training import desk_train_config, build_pairs, train_step1, train_step2
from hybridvc import synthetic, codecs
from hybridvc.metrics import psnr
from hybridvc.neural import Tensor, no_grad
from hybridvc.checkpoint import Checkpoint, save_checkpoint

cc = codecs.CodecConfig("mock_lossy", quality=30)
ds = build_pairs(synthetic.desk_corpus(seed=0, n_synthetic=16, n_natural=10), cc)
hds = build_pairs(synthetic.desk_heldout(seed=7), cc)

import os
cfg = desk_train_config(max_iters_step1=int(os.environ.get("P_S1", 1400)),
                        max_iters_step2=int(os.environ.get("P_S2", 1500)),
                        irrelevant_ref_fraction=float(os.environ.get("P_IRR", 0.25)),
                        val_interval=10**9)
print("cfg:", cfg.max_iters_step1, cfg.max_iters_step2, cfg.irrelevant_ref_fraction)
ck1 = train_step1(ds, cfg, hv.desk_spec())
ck2 = train_step2(ds, ck1, cfg)
save_checkpoint(os.environ.get("P_CKPT", "/tmp/probe3.ckpt"), ck2)
net = hv.RestorationNetwork.from_arrays(ck2.spec, ck2.weights)

rows = dict(comp=[], s1=[], s2rel=[], s2irr=[])
c_edge, c_smooth, c_rel, c_irr = [], [], [], []
with no_grad():
    for ci, clip in enumerate(hds.clips):
        rel = clip.original.pixels[0].transpose(2,0,1)[None].astype(np.float32)
        other = hds.clips[(ci+1) % len(hds.clips)]
        irr = other.original.pixels[-1].transpose(2,0,1)[None].astype(np.float32)
        f_rel = net.encode_reference_features(Tensor(rel))
        f_irr = net.encode_reference_features(Tensor(irr))
        for t in range(clip.original.frame_count):
            c = Tensor(clip.compressed.pixels[t].transpose(2,0,1)[None].astype(np.float32))
            x = clip.original.pixels[t]
            rows["comp"].append(psnr(clip.compressed.pixels[t], x))
            o1 = net.forward_step1(c)
            rows["s1"].append(psnr(np.clip(o1.data[0].transpose(1,2,0),0,1), x))
            o2 = net.forward_step2(c, f_rel)
            rows["s2rel"].append(psnr(np.clip(o2.data[0].transpose(1,2,0),0,1), x))
            o3 = net.forward_step2(c, f_irr)
            rows["s2irr"].append(psnr(np.clip(o3.data[0].transpose(1,2,0),0,1), x))
            # confidence stats
            f_g = net.extract_general_features(c)
            for f_r, acc_epoch in ((f_rel, "rel"), (f_irr, "irr")):
                o, m = net.predict_offsets(f_g, f_r)
                src = f_r if net.spec.deform_source == "f_r" else f_g
                _, conf = net.align_and_gate(src, o, m)
                cm = conf.data[0,0]
                if acc_epoch == "rel":
                    gray = x.mean(axis=2)
                    gy, gx = np.gradient(gray)
                    mag = np.hypot(gy, gx)
                    edges = mag > np.quantile(mag, 0.9)
                    smooth = mag <= np.quantile(mag, 0.5)
                    c_edge.append(float(cm[edges].mean()))
                    c_smooth.append(float(cm[smooth].mean()))
                    c_rel.append(float(cm.mean()))
                else:
                    c_irr.append(float(cm.mean()))

res = {k: float(np.mean(v)) for k, v in rows.items()}
res["gain_s1"] = res["s1"] - res["comp"]
res["gain_s2_vs_s1"] = res["s2rel"] - res["s1"]
res["irr_penalty"] = res["s2irr"] - res["s1"]
res["C_edge"] = float(np.mean(c_edge)); res["C_smooth"] = float(np.mean(c_smooth))
res["C_mean_relevant"] = float(np.mean(c_rel)); res["C_mean_irrelevant"] = float(np.mean(c_irr))
res["C_edge_gt_smooth_framewise"] = float(np.mean([e > s for e, s in zip(c_edge, c_smooth)]))
print(json.dumps(res, indent=2))

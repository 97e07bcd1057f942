"""Train the 16-channel desk preset on mock-compressed clips and watch both
enhancement steps improve held-out PSNR.

Pass iteration counts as arguments for a quicker or longer run:

    python demos/05_train_desk_model.py [step1_iters] [step2_iters]
"""

import sys

import numpy as np

import hybridvc as hv
from hybridvc import codecs, synthetic
from hybridvc.checkpoint import save_checkpoint
from hybridvc.metrics import psnr
from hybridvc.training import (
    build_pairs,
    desk_train_config,
    evaluate_dataset_psnr,
    train_step1,
    train_step2,
)

iters1 = int(sys.argv[1]) if len(sys.argv) > 1 else 400
iters2 = int(sys.argv[2]) if len(sys.argv) > 2 else 300

codec = codecs.CodecConfig("mock_lossy", quality=30)
train_ds = build_pairs(synthetic.desk_corpus(seed=0), codec)
held_ds = build_pairs(synthetic.desk_heldout(seed=7), codec)
baseline = np.mean([psnr(c.compressed, c.original) for c in held_ds.clips])
print(f"{train_ds.n_pairs} training pairs; held-out compressed PSNR {baseline:.2f} dB")

cfg = desk_train_config(max_iters_step1=iters1, max_iters_step2=iters2,
                        val_interval=10 ** 9)
ck1 = train_step1(train_ds, cfg, hv.desk_spec())
net1 = hv.RestorationNetwork.from_arrays(ck1.spec, ck1.weights)
s1 = evaluate_dataset_psnr(net1, held_ds, mode="step1", max_frames=10 ** 9)
print(f"after step 1 ({iters1} iters): {s1:.2f} dB ({s1 - baseline:+.2f})")

ck2 = train_step2(train_ds, ck1, cfg)
net2 = hv.RestorationNetwork.from_arrays(ck2.spec, ck2.weights)
s2 = evaluate_dataset_psnr(net2, held_ds, mode="step2", max_frames=10 ** 9)
print(f"after step 2 ({iters2} iters): {s2:.2f} dB ({s2 - s1:+.2f} over step 1)")
print(f"step-1 weights frozen during step 2: "
      f"{ck2.step1_frozen_hash == ck2.step1_digest()}")

save_checkpoint("desk_model.ckpt", ck2)
print("saved desk_model.ckpt; try demos/06_end_to_end_pipeline.py next")

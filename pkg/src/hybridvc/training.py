"""Training pipeline: pair construction, the two-phase protocol, and the
end-to-end ablation.

Phase 1 minimizes the L2 loss of the general-enhancement path. Phase 2
freezes every ``step1.`` tensor (verified by digest) and trains only the
reference branch on the same objective. The optimizer is AdamW with
decoupled weight decay; runs are deterministic under a fixed seed.
"""

import csv
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import codecs
from .checkpoint import Checkpoint, digest_tensors, load_checkpoint, save_checkpoint
from .errors import TrainingError, ValidationError
from .neural import (
    backward,
    tune_allocator,
    clamp_min,
    conv2d,
    mean_all,
    mean_pool2,
    mse_loss,
    mul,
    no_grad,
    pow_const,
    sub,
    Tensor,
)
from .restoration import NetworkSpec, RestorationNetwork, desk_spec
from .scenedetect import POLICY_FIRST_ONLY, POLICY_SCENE_CUT, detect_cuts, select_references
from .video import VideoSequence

__all__ = [
    "TrainConfig", "desk_train_config", "ClipPair", "PairDataset", "build_pairs",
    "AdamW", "train_step1", "train_step2", "train_end_to_end",
    "evaluate_dataset_psnr", "save_checkpoint", "load_checkpoint",
]


@dataclass
class TrainConfig:
    """Optimization settings; defaults follow the full-scale recipe, the desk
    preset overrides what matters at toy size."""

    patch_size: int = 256
    batch_size: int = 4
    lr: float = 1e-4
    betas: tuple = (0.9, 0.999)
    weight_decay: float = 1e-2
    epochs_step1: int = 5
    epochs_step2: int = 5
    augmentations: tuple = ("rot90", "hflip", "vflip")
    loss: str = "l2"  # "l2" or "ms_ssim" (fine-tune variant)
    seed: int = 0
    max_iters_step1: int | None = None
    max_iters_step2: int | None = None
    val_interval: int = 200
    log_csv: str | None = None
    # Fraction of step-2 samples whose reference is swapped for a crop of a
    # different clip. The confidence gate only learns to suppress mismatched
    # reference content if it ever sees some; at desk scale the tiny corpus
    # provides too little natural misalignment for that to happen on its own.
    irrelevant_ref_fraction: float = 0.0

    def validate(self):
        if self.patch_size < 8:
            raise ValidationError("patch_size must be >= 8")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.loss not in ("l2", "ms_ssim"):
            raise ValidationError(f"unknown loss {self.loss!r}")
        if not 0.0 <= self.irrelevant_ref_fraction < 1.0:
            raise ValidationError("irrelevant_ref_fraction must be in [0, 1)")
        for a in self.augmentations:
            if a not in ("rot90", "hflip", "vflip"):
                raise ValidationError(f"unknown augmentation {a!r}")
        return self

    def to_dict(self):
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["augmentations"] = list(self.augmentations)
        return d


def desk_train_config(**overrides) -> TrainConfig:
    base = dict(patch_size=64, lr=1e-3, epochs_step1=4, epochs_step2=4, val_interval=100,
                irrelevant_ref_fraction=0.25)
    base.update(overrides)
    return TrainConfig(**base).validate()


# -- dataset ------------------------------------------------------------------

@dataclass
class ClipPair:
    """One clip's aligned original/compressed frames plus reference indices."""

    original: VideoSequence
    compressed: VideoSequence
    reference_indices: list = field(default_factory=lambda: [0])

    def reference_for(self, t: int) -> int:
        applicable = [i for i in self.reference_indices if i <= t]
        return max(applicable) if applicable else 0


@dataclass
class PairDataset:
    clips: list

    @property
    def n_pairs(self):
        return sum(c.original.frame_count for c in self.clips)

    def iter_pairs(self):
        for clip in self.clips:
            for t in range(clip.original.frame_count):
                yield clip, t


def build_pairs(videos, codec_cfg: codecs.CodecConfig, ref_policy=POLICY_FIRST_ONLY,
                scene_threshold=27.0, min_scene_len=15) -> PairDataset:
    """Compress every clip and pair each frame with its source.

    References are the uncompressed first frame of the clip plus, under the
    ``scene_cut`` policy, the first frame after each detected cut.
    """
    clips = []
    for vid in videos:
        if vid.frame_count < 2:
            warnings.warn(f"skipping clip with {vid.frame_count} frame(s)")
            continue
        bitstream, _ = codecs.encode_video(vid, codec_cfg)
        compressed = codecs.decode_video(bitstream, codec_cfg)
        if ref_policy == POLICY_SCENE_CUT:
            cuts = detect_cuts(vid, threshold=scene_threshold, min_scene_len=min_scene_len)
            refs = select_references(vid.frame_count, cuts, POLICY_SCENE_CUT)
        else:
            refs = [0]
        clips.append(ClipPair(vid, compressed, refs))
    return PairDataset(clips)


def _augment(arrs, rng, augmentations):
    """Apply one shared dihedral transform to each (C,H,W) array in ``arrs``."""
    k = int(rng.integers(0, 4)) if "rot90" in augmentations else 0
    fh = bool(rng.integers(0, 2)) if "hflip" in augmentations else False
    fv = bool(rng.integers(0, 2)) if "vflip" in augmentations else False
    out = []
    for a in arrs:
        if k:
            a = np.rot90(a, k, axes=(1, 2))
        if fh:
            a = a[:, :, ::-1]
        if fv:
            a = a[:, ::-1, :]
        out.append(np.ascontiguousarray(a))
    return out


def sample_batch(dataset: PairDataset, cfg: TrainConfig, rng, dtype=np.float32,
                 with_irrelevant=False):
    """Random co-located patches: returns (compressed, original, reference)
    arrays of shape (B, 3, p, p).

    With ``with_irrelevant`` a configured fraction of samples swaps the
    reference for a same-size crop of another clip (see TrainConfig)."""
    p = cfg.patch_size
    comp = np.empty((cfg.batch_size, 3, p, p), dtype=dtype)
    orig = np.empty_like(comp)
    ref = np.empty_like(comp)
    for b in range(cfg.batch_size):
        ci = int(rng.integers(len(dataset.clips)))
        clip = dataset.clips[ci]
        t = int(rng.integers(clip.original.frame_count))
        h, w = clip.original.height, clip.original.width
        if h < p or w < p:
            raise ValidationError(f"patch size {p} exceeds clip size {h}x{w}")
        y0 = int(rng.integers(h - p + 1))
        x0 = int(rng.integers(w - p + 1))
        r = clip.reference_for(t)
        ref_pixels = clip.original.pixels[r]
        if (with_irrelevant and len(dataset.clips) > 1
                and rng.random() < cfg.irrelevant_ref_fraction):
            other = dataset.clips[int((ci + 1 + rng.integers(len(dataset.clips) - 1))
                                      % len(dataset.clips))]
            ref_pixels = other.original.pixels[int(rng.integers(other.original.frame_count))]
        triplet = [
            clip.compressed.pixels[t, y0:y0 + p, x0:x0 + p].transpose(2, 0, 1),
            clip.original.pixels[t, y0:y0 + p, x0:x0 + p].transpose(2, 0, 1),
            ref_pixels[y0:y0 + p, x0:x0 + p].transpose(2, 0, 1),
        ]
        triplet = _augment(triplet, rng, cfg.augmentations)
        comp[b], orig[b], ref[b] = (a.astype(dtype) for a in triplet)
    return comp, orig, ref


# -- optimizer ----------------------------------------------------------------

class AdamW:
    """Adam with decoupled weight decay over a named parameter dict."""

    def __init__(self, params: dict, lr=1e-4, betas=(0.9, 0.999), weight_decay=1e-2,
                 eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.weight_decay = weight_decay
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for n, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[n]
            v = self.v[n]
            m += (1.0 - self.b1) * (g - m)
            v += (1.0 - self.b2) * (g * g - v)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.data -= self.lr * update + self.lr * self.weight_decay * p.data

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


# -- losses -------------------------------------------------------------------

_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)
_SSIM_C1 = 0.01 ** 2
_SSIM_C2 = 0.03 ** 2


def _gauss_kernel(dtype):
    g = np.exp(-((np.arange(11) - 5.0) ** 2) / (2.0 * 1.5 ** 2))
    g /= g.sum()
    k2 = np.outer(g, g)
    w = np.zeros((3, 3, 11, 11), dtype=dtype)
    for c in range(3):
        w[c, c] = k2
    return w


def ms_ssim_loss(pred, target, dtype=np.float32):
    """Differentiable multi-scale structural-similarity objective.

    Uses as many dyadic scales as the patch allows (the 11-tap window caps
    the pyramid) with the standard scale weights renormalized; returns
    ``1 - msssim``.
    """
    w = Tensor(_gauss_kernel(dtype))
    zb = Tensor(np.zeros(3, dtype=dtype))
    x = pred
    y = target if isinstance(target, Tensor) else Tensor(np.asarray(target, dtype=dtype))
    side = min(x.data.shape[2], x.data.shape[3])
    levels = min(len(_SSIM_WEIGHTS), max(1, int(math.log2(side / 11)) + 1))
    weights = np.array(_SSIM_WEIGHTS[:levels])
    weights /= weights.sum()

    total = None
    for lv in range(levels):
        mu_x = conv2d(x, w, zb)
        mu_y = conv2d(y, w, zb)
        xx = conv2d(mul(x, x), w, zb)
        yy = conv2d(mul(y, y), w, zb)
        xy = conv2d(mul(x, y), w, zb)
        sx = sub(xx, mul(mu_x, mu_x))
        sy = sub(yy, mul(mu_y, mu_y))
        sxy = sub(xy, mul(mu_x, mu_y))
        cs_num = mul(sxy, Tensor(np.asarray(2.0, dtype=dtype))) + Tensor(np.asarray(_SSIM_C2, dtype=dtype))
        cs_den = sx + sy + Tensor(np.asarray(_SSIM_C2, dtype=dtype))
        cs = mean_all(
            mul(cs_num, pow_const(clamp_min(cs_den, 1e-6), -1.0)))
        if lv == levels - 1:
            l_num = mul(mul(mu_x, mu_y), Tensor(np.asarray(2.0, dtype=dtype))) + Tensor(np.asarray(_SSIM_C1, dtype=dtype))
            l_den = mul(mu_x, mu_x) + mul(mu_y, mu_y) + Tensor(np.asarray(_SSIM_C1, dtype=dtype))
            lum = mean_all(mul(l_num, pow_const(clamp_min(l_den, 1e-6), -1.0)))
            term = pow_const(clamp_min(mul(lum, cs), 1e-6), float(weights[lv]))
        else:
            term = pow_const(clamp_min(cs, 1e-6), float(weights[lv]))
        total = term if total is None else mul(total, term)
        if lv != levels - 1:
            x = mean_pool2(x)
            y = mean_pool2(y)
    return sub(Tensor(np.asarray(1.0, dtype=dtype)), total)


def _loss_fn(cfg):
    if cfg.loss == "l2":
        return mse_loss
    return ms_ssim_loss


# -- validation ---------------------------------------------------------------

def evaluate_dataset_psnr(net: RestorationNetwork, dataset: PairDataset, mode="step1",
                          max_frames=16):
    """Mean per-frame PSNR of restored output over (up to) ``max_frames``."""
    from .metrics import psnr

    total, count = 0.0, 0
    dtype = next(iter(net.params.values())).data.dtype
    with no_grad():
        ref_feats = {}
        for ci, clip in enumerate(dataset.clips):
            for t in range(clip.original.frame_count):
                if count >= max_frames:
                    return total / max(count, 1)
                c = clip.compressed.pixels[t].transpose(2, 0, 1)[None].astype(dtype)
                if mode == "step1":
                    out = net.forward_step1(Tensor(c))
                else:
                    r = clip.reference_for(t)
                    key = (ci, r)
                    if key not in ref_feats:
                        refarr = clip.original.pixels[r].transpose(2, 0, 1)[None].astype(dtype)
                        ref_feats[key] = net.encode_reference_features(Tensor(refarr))
                    out = net.forward_step2(Tensor(c), ref_feats[key])
                rec = np.clip(out.data[0].transpose(1, 2, 0), 0.0, 1.0)
                total += psnr(rec, clip.original.pixels[t])
                count += 1
    return total / max(count, 1)


# -- training loops -----------------------------------------------------------

class _MetricsLog:
    def __init__(self, path, phase):
        self.rows = []
        self.path = path
        self.phase = phase

    def add(self, iteration, loss, val_psnr=None):
        self.rows.append((iteration, loss, val_psnr))

    def write(self):
        if self.path is None:
            return
        with open(self.path, "a", newline="") as fh:
            w = csv.writer(fh)
            if fh.tell() == 0:
                w.writerow(["phase", "iteration", "loss", "val_psnr"])
            for it, loss, vp in self.rows:
                w.writerow([self.phase, it, f"{loss:.8f}", "" if vp is None else f"{vp:.4f}"])


def _iteration_budget(cfg, dataset, epochs, override):
    if override is not None:
        return override
    per_epoch = max(1, math.ceil(dataset.n_pairs / cfg.batch_size))
    return epochs * per_epoch


def _run_phase(net, dataset, cfg, phase, param_names, forward, val_dataset=None,
               val_mode="step1", max_iters=None, with_irrelevant=False):
    """Shared mini-batch loop; returns the loss history."""
    tune_allocator()
    rng = np.random.default_rng(cfg.seed + (1 if phase == "step2" else 0))
    params = {n: net.params[n] for n in param_names}
    opt = AdamW(params, lr=cfg.lr, betas=cfg.betas, weight_decay=cfg.weight_decay)
    log = _MetricsLog(cfg.log_csv, phase)
    loss_fn = _loss_fn(cfg)
    history = []
    last_good = None

    for it in range(1, max_iters + 1):
        comp, orig, ref = sample_batch(dataset, cfg, rng, with_irrelevant=with_irrelevant)
        opt.zero_grad()
        loss = loss_fn(forward(comp, ref), orig)
        value = float(loss.data)
        if not np.isfinite(value):
            log.write()
            raise TrainingError(f"non-finite loss at iteration {it}", last_checkpoint=last_good)
        backward(loss)
        opt.step()
        history.append(value)
        val = None
        if val_dataset is not None and (it % cfg.val_interval == 0 or it == max_iters):
            val = evaluate_dataset_psnr(net, val_dataset, mode=val_mode)
        log.add(it, value, val)
        if it % 50 == 0 or it == max_iters:
            last_good = Checkpoint({n: t.data.copy() for n, t in net.params.items()},
                                   net.spec, cfg.to_dict())
    log.write()
    return history


def train_step1(dataset: PairDataset, cfg: TrainConfig, spec: NetworkSpec | None = None,
                val_dataset=None) -> Checkpoint:
    """Phase 1: fit the general-enhancement path with the configured loss."""
    cfg.validate()
    if not dataset.clips:
        raise ValidationError("empty training dataset")
    spec = (spec or desk_spec()).validate()
    net = RestorationNetwork.build(spec, seed=cfg.seed)
    iters = _iteration_budget(cfg, dataset, cfg.epochs_step1, cfg.max_iters_step1)

    def forward(comp, _ref):
        return net.forward_step1(Tensor(comp))

    history = _run_phase(net, dataset, cfg, "step1", net.step1_names(), forward,
                         val_dataset=val_dataset, val_mode="step1", max_iters=iters)
    ckpt = Checkpoint(net.state_arrays(), spec, cfg.to_dict())
    ckpt.loss_history = history
    return ckpt


def train_step2(dataset: PairDataset, checkpoint_step1: Checkpoint, cfg: TrainConfig,
                val_dataset=None) -> Checkpoint:
    """Phase 2: freeze every step-1 tensor and train the reference branch."""
    cfg.validate()
    if not dataset.clips:
        raise ValidationError("empty training dataset")
    net = RestorationNetwork.from_arrays(checkpoint_step1.spec, checkpoint_step1.weights)
    frozen_hash = digest_tensors({n: net.params[n].data for n in net.step1_names()})
    for n in net.step1_names():
        net.params[n].requires_grad = False
    iters = _iteration_budget(cfg, dataset, cfg.epochs_step2, cfg.max_iters_step2)

    def forward(comp, ref):
        f_r = net.encode_reference_features(Tensor(ref))
        return net.forward_step2(Tensor(comp), f_r)

    history = _run_phase(net, dataset, cfg, "step2", net.step2_names(), forward,
                         val_dataset=val_dataset, val_mode="step2", max_iters=iters,
                         with_irrelevant=True)

    after = digest_tensors({n: net.params[n].data for n in net.step1_names()})
    if after != frozen_hash:
        raise TrainingError("step-1 tensors changed during step-2 training")
    ckpt = Checkpoint(net.state_arrays(), checkpoint_step1.spec, cfg.to_dict(),
                      step1_frozen_hash=frozen_hash)
    ckpt.loss_history = history
    return ckpt


def train_end_to_end(dataset: PairDataset, cfg: TrainConfig,
                     spec: NetworkSpec | None = None, val_dataset=None) -> Checkpoint:
    """Ablation: no freezing, one phase minimizing the sum of both losses."""
    cfg.validate()
    if not dataset.clips:
        raise ValidationError("empty training dataset")
    spec = (spec or desk_spec()).validate()
    net = RestorationNetwork.build(spec, seed=cfg.seed)
    iters = _iteration_budget(cfg, dataset, cfg.epochs_step1 + cfg.epochs_step2,
                              cfg.max_iters_step2 or cfg.max_iters_step1)
    loss_fn = _loss_fn(cfg)

    tune_allocator()
    rng = np.random.default_rng(cfg.seed)
    opt = AdamW(net.params, lr=cfg.lr, betas=cfg.betas, weight_decay=cfg.weight_decay)
    log = _MetricsLog(cfg.log_csv, "end_to_end")
    history = []
    last_good = None
    for it in range(1, iters + 1):
        comp, orig, ref = sample_batch(dataset, cfg, rng, with_irrelevant=True)
        opt.zero_grad()
        c = Tensor(comp)
        f_g = net.extract_general_features(c)
        out_general = net.decode_features(f_g, c)
        f_r = net.encode_reference_features(Tensor(ref))
        out_ref = net.forward_step2(c, f_r)
        loss = loss_fn(out_general, orig) + loss_fn(out_ref, orig)
        value = float(loss.data)
        if not np.isfinite(value):
            log.write()
            raise TrainingError(f"non-finite loss at iteration {it}", last_checkpoint=last_good)
        backward(loss)
        opt.step()
        history.append(value)
        val = None
        if val_dataset is not None and (it % cfg.val_interval == 0 or it == iters):
            val = evaluate_dataset_psnr(net, val_dataset, mode="step2")
        log.add(it, value, val)
        if it % 50 == 0 or it == iters:
            last_good = Checkpoint({n: t.data.copy() for n, t in net.params.items()},
                                   net.spec, cfg.to_dict())
    log.write()
    ckpt = Checkpoint(net.state_arrays(), spec, cfg.to_dict())
    ckpt.loss_history = history
    return ckpt

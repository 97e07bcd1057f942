"""Two-step restoration network.

Step 1 (general enhancement) encodes a compressed frame into features and
decodes them to a residual correction, learning what the conventional codec
typically discards. Step 2 (reference-based enhancement) encodes a lossless
reference frame, predicts per-tap offsets and modulation for a single
deformable convolution that aligns reference content to the current frame,
refines the aligned features, and injects them through a per-pixel
confidence gate:

    f_out = f_g + C * f_refine

The confidence map is one extra output channel of the deformable layer
itself, passed through a sigmoid. Both paths share the step-1 decoder, so
forcing C to zero makes step 2 reproduce step 1 exactly.

All layers are 3x3, stride 1, resolution preserving. Weight names use
"step1." / "step2." prefixes; that partition is what the training freeze
rule and the checkpoint format rely on.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import StateError, ValidationError
from .neural import (
    Tensor,
    concat_channels,
    conv2d,
    deform_conv2d,
    leaky_relu,
    mul,
    no_grad,
    sigmoid,
    slice_channels,
)
from .video import Frame

KERNEL_TAPS = 9  # 3x3
LEAK = 0.1

DEFORM_SOURCE_REFERENCE = "f_r"
DEFORM_SOURCE_GENERAL = "f_g"


@dataclass(frozen=True)
class NetworkSpec:
    """Layer counts for both steps; the full-scale default lands near 3.7M
    parameters, the desk preset near 60K."""

    channels: int = 64
    n_enc_blocks: int = 12
    n_dec_blocks: int = 12
    n_ref_blocks: int = 12
    n_offset_layers: int = 5
    n_refine_blocks: int = 10
    kernel: int = 3
    deform_source: str = DEFORM_SOURCE_REFERENCE

    def validate(self):
        counts = (self.channels, self.n_enc_blocks, self.n_dec_blocks,
                  self.n_ref_blocks, self.n_offset_layers, self.n_refine_blocks)
        if any(v < 1 for v in counts):
            raise ValidationError("all layer counts must be >= 1")
        if self.kernel != 3:
            raise ValidationError("only 3x3 kernels are supported")
        if self.n_offset_layers < 2:
            raise ValidationError("offset predictor needs at least 2 layers")
        if self.deform_source not in (DEFORM_SOURCE_REFERENCE, DEFORM_SOURCE_GENERAL):
            raise ValidationError(f"unknown deform source {self.deform_source!r}")
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d).validate()


def desk_spec(**overrides) -> NetworkSpec:
    """16-channel preset used by tests and the desk-scale training recipe."""
    base = dict(channels=16, n_enc_blocks=2, n_dec_blocks=2, n_ref_blocks=2,
                n_offset_layers=5, n_refine_blocks=3)
    base.update(overrides)
    return NetworkSpec(**base).validate()


def _conv_params(cin, cout, k=3):
    return cin * cout * k * k + cout


def parameter_count(spec: NetworkSpec) -> int:
    """Closed-form parameter count for a spec (verified against the arrays)."""
    ch = spec.channels
    block = 2 * _conv_params(ch, ch)
    enc = _conv_params(3, ch) + spec.n_enc_blocks * block
    dec = spec.n_dec_blocks * block + _conv_params(ch, 3)
    ref = _conv_params(3, ch) + spec.n_ref_blocks * block
    offset = (_conv_params(2 * ch, ch)
              + (spec.n_offset_layers - 2) * _conv_params(ch, ch)
              + _conv_params(ch, 3 * KERNEL_TAPS))
    align = _conv_params(ch, ch + 1)
    refine = spec.n_refine_blocks * block
    return enc + dec + ref + offset + align + refine


class RestorationNetwork:
    """Weight container plus the forward graphs for both enhancement steps."""

    def __init__(self, spec: NetworkSpec, params: dict):
        self.spec = spec.validate()
        self.params = params

    # -- construction --------------------------------------------------------

    @classmethod
    def build(cls, spec: NetworkSpec, seed=0, dtype=np.float32):
        """Fresh network. Conv weights use fan-in (He) scaling for the leaky
        nonlinearity; the second conv of each residual block starts small.
        Three layers start at exactly zero so training leaves the identity
        regime gradually: the offset/mask head (plain-convolution sampling),
        the decoder output (step 1 initially reproduces its input), and the
        deformable layer (step 2 initially reproduces step 1)."""
        spec.validate()
        rng = np.random.default_rng(seed)
        params = {}

        def conv(name, cin, cout, scale=1.0, zero=False):
            if zero:
                w = np.zeros((cout, cin, 3, 3), dtype=dtype)
            else:
                std = scale * np.sqrt(2.0 / (1.0 + LEAK ** 2) / (cin * 9))
                w = rng.normal(0.0, std, size=(cout, cin, 3, 3)).astype(dtype)
            params[f"{name}.w"] = Tensor(w, requires_grad=True)
            params[f"{name}.b"] = Tensor(np.zeros(cout, dtype=dtype), requires_grad=True)

        def blocks(prefix, count, ch):
            for i in range(count):
                conv(f"{prefix}.res{i}.c1", ch, ch)
                conv(f"{prefix}.res{i}.c2", ch, ch, scale=0.1)

        ch = spec.channels
        conv("step1.enc.in", 3, ch)
        blocks("step1.enc", spec.n_enc_blocks, ch)
        blocks("step1.dec", spec.n_dec_blocks, ch)
        conv("step1.dec.out", ch, 3, zero=True)

        conv("step2.refenc.in", 3, ch)
        blocks("step2.refenc", spec.n_ref_blocks, ch)
        conv("step2.offset.l0", 2 * ch, ch)
        for i in range(1, spec.n_offset_layers - 1):
            conv(f"step2.offset.l{i}", ch, ch)
        conv("step2.offset.out", ch, 3 * KERNEL_TAPS, zero=True)
        conv("step2.align", ch, ch + 1, zero=True)
        blocks("step2.refine", spec.n_refine_blocks, ch)

        net = cls(spec, params)
        assert net.param_count() == parameter_count(spec)
        return net

    def param_count(self):
        return sum(t.data.size for t in self.params.values())

    def step1_names(self):
        return sorted(n for n in self.params if n.startswith("step1."))

    def step2_names(self):
        return sorted(n for n in self.params if n.startswith("step2."))

    def state_arrays(self):
        return {name: t.data for name, t in sorted(self.params.items())}

    @classmethod
    def from_arrays(cls, spec: NetworkSpec, arrays: dict):
        expected = set(cls.build(spec, seed=0).params)
        got = set(arrays)
        if expected != got:
            missing = sorted(expected - got)[:3]
            extra = sorted(got - expected)[:3]
            raise ValidationError(
                f"weights do not match spec (missing={missing}, unexpected={extra})")
        params = {n: Tensor(np.array(a), requires_grad=True) for n, a in arrays.items()}
        return cls(spec, params)

    # -- forward pieces ------------------------------------------------------

    def _p(self, name):
        return self.params[name]

    def _run_blocks(self, prefix, count, x):
        for i in range(count):
            t = leaky_relu(conv2d(x, self._p(f"{prefix}.res{i}.c1.w"),
                                  self._p(f"{prefix}.res{i}.c1.b")), LEAK)
            t = conv2d(t, self._p(f"{prefix}.res{i}.c2.w"), self._p(f"{prefix}.res{i}.c2.b"))
            x = x + t
        return x

    def extract_general_features(self, c):
        """Compressed frame tensor (N,3,H,W) -> f_g (N,ch,H,W)."""
        c = self._check_input(c)
        f = leaky_relu(conv2d(c, self._p("step1.enc.in.w"), self._p("step1.enc.in.b")), LEAK)
        return self._run_blocks("step1.enc", self.spec.n_enc_blocks, f)

    def encode_reference_features(self, ref):
        ref = self._check_input(ref)
        f = leaky_relu(conv2d(ref, self._p("step2.refenc.in.w"), self._p("step2.refenc.in.b")), LEAK)
        return self._run_blocks("step2.refenc", self.spec.n_ref_blocks, f)

    def predict_offsets(self, f_g, f_r):
        """Offset field (N,18,H,W) and sigmoid modulation mask (N,9,H,W)."""
        if f_g.data.shape != f_r.data.shape:
            raise ValidationError(
                f"feature shapes differ: {f_g.data.shape} vs {f_r.data.shape}")
        z = concat_channels(f_g, f_r)
        n_layers = self.spec.n_offset_layers
        for i in range(n_layers - 1):
            z = leaky_relu(conv2d(z, self._p(f"step2.offset.l{i}.w"),
                                  self._p(f"step2.offset.l{i}.b")), LEAK)
        z = conv2d(z, self._p("step2.offset.out.w"), self._p("step2.offset.out.b"))
        o = slice_channels(z, 0, 2 * KERNEL_TAPS)
        m = sigmoid(slice_channels(z, 2 * KERNEL_TAPS, 3 * KERNEL_TAPS))
        return o, m

    def align_and_gate(self, source, o, m):
        """Deformable alignment; returns (f_deform, confidence map C)."""
        full = deform_conv2d(source, o, m, self._p("step2.align.w"), self._p("step2.align.b"))
        ch = self.spec.channels
        f_deform = slice_channels(full, 0, ch)
        conf = sigmoid(slice_channels(full, ch, ch + 1))
        return f_deform, conf

    def refine(self, f_deform):
        return self._run_blocks("step2.refine", self.spec.n_refine_blocks, f_deform)

    def decode_features(self, f, c):
        """Shared decoder: features + global skip from the compressed frame."""
        d = self._run_blocks("step1.dec", self.spec.n_dec_blocks, f)
        residual = conv2d(d, self._p("step1.dec.out.w"), self._p("step1.dec.out.b"))
        return c + residual

    def forward_step1(self, c):
        c = self._check_input(c)
        return self.decode_features(self.extract_general_features(c), c)

    def forward_step2(self, c, f_r):
        c = self._check_input(c)
        f_g = self.extract_general_features(c)
        o, m = self.predict_offsets(f_g, f_r)
        source = f_r if self.spec.deform_source == DEFORM_SOURCE_REFERENCE else f_g
        f_deform, conf = self.align_and_gate(source, o, m)
        f_refine = self.refine(f_deform)
        f_out = fuse(f_g, conf, f_refine)
        return self.decode_features(f_out, c)

    @staticmethod
    def _check_input(c):
        c = c if isinstance(c, Tensor) else Tensor(np.asarray(c))
        if c.data.ndim != 4 or c.data.shape[1] != 3:
            raise ValidationError(f"expected (N,3,H,W) input, got {c.data.shape}")
        if not np.isfinite(c.data).all():
            raise ValidationError("input contains non-finite values")
        return c

    def zero_confidence_head(self):
        """Force the confidence gate shut: with the head's weights at zero and
        a large negative bias the sigmoid underflows to exactly 0, so step 2
        degrades to step 1 bit-for-bit."""
        ch = self.spec.channels
        w = self._p("step2.align.w").data
        b = self._p("step2.align.b").data
        w[ch:] = 0.0
        b[ch:] = -1e4


def fuse(f_g, confidence, f_refine):
    """Confidence-gated feature fusion: f_g + C * f_refine (C broadcasts
    over channels)."""
    fg_shape = f_g.data.shape
    if f_refine.data.shape != fg_shape:
        raise ValidationError(
            f"feature shapes differ: {fg_shape} vs {f_refine.data.shape}")
    cs = confidence.data.shape
    if cs[0] != fg_shape[0] or cs[1] != 1 or cs[2:] != fg_shape[2:]:
        raise ValidationError(f"confidence must be (N,1,H,W), got {cs}")
    return f_g + mul(confidence, f_refine)


def general_enhance(c_t: Frame, net: RestorationNetwork) -> Frame:
    """Step-1 enhancement of one frame; output clamped to [0, 1]."""
    x = _frame_to_tensor(c_t, net)
    with no_grad():
        out = net.forward_step1(x)
    return _tensor_to_frame(out, c_t)


class ReferenceFeatureCache:
    """Caches reference features so each reference is encoded exactly once."""

    def __init__(self, net: RestorationNetwork):
        self.net = net
        self._features = {}
        self.encoder_passes = 0

    def add(self, frame_index: int, reference: Frame):
        if frame_index not in self._features:
            x = _frame_to_tensor(reference, self.net)
            with no_grad():
                self._features[frame_index] = self.net.encode_reference_features(x)
            self.encoder_passes += 1

    def indices(self):
        return sorted(self._features)

    def features_for(self, t: int):
        """Latest cached reference at or before frame t."""
        applicable = [i for i in self._features if i <= t]
        if not applicable:
            raise StateError(f"no cached reference at or before frame {t}")
        return self._features[max(applicable)]


def restore_frame(c_t: Frame, ref_cache, net: RestorationNetwork, mode="step2",
                  frame_index=0) -> Frame:
    """Restore one compressed frame independently of its neighbors.

    ``mode`` selects the step-1 path (no reference needed) or the full
    step-2 path, which requires ``ref_cache`` to hold features for some
    reference at or before ``frame_index``.
    """
    if mode == "step1":
        return general_enhance(c_t, net)
    if mode != "step2":
        raise ValidationError(f"unknown restoration mode {mode!r}")
    if ref_cache is None:
        raise StateError("step2 restoration requires a reference feature cache")
    f_r = ref_cache.features_for(frame_index)
    x = _frame_to_tensor(c_t, net)
    with no_grad():
        out = net.forward_step2(x, f_r)
    return _tensor_to_frame(out, c_t)


def _frame_to_tensor(frame: Frame, net: RestorationNetwork) -> Tensor:
    dtype = next(iter(net.params.values())).data.dtype
    return Tensor(np.ascontiguousarray(
        frame.pixels.transpose(2, 0, 1)[None]).astype(dtype, copy=False))


def _tensor_to_frame(out: Tensor, like: Frame) -> Frame:
    pix = np.clip(out.data[0].transpose(1, 2, 0), 0.0, 1.0)
    return Frame(pix, color_space=like.color_space, bit_depth=like.bit_depth)

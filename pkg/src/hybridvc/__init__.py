"""Hybrid video compression with a reference-guided restoration decoder.

The encoder pairs a conventional lossy video codec with losslessly coded
reference frames; the decoder enhances the lossy reconstruction in two
learned steps, the second aligned to the reference through a single
modulated deformable convolution gated by a confidence map.
"""

from . import codecs, container, metrics, neural, scenedetect, synthetic, training
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .container import HybridContainer, ReferenceEntry, StreamMeta, demux, mux
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
from .restoration import (
    NetworkSpec,
    ReferenceFeatureCache,
    RestorationNetwork,
    desk_spec,
    fuse,
    general_enhance,
    parameter_count,
    restore_frame,
)
from .video import Frame, VideoSequence

__version__ = "0.1.0"

"""Dense image tensors, Keys/bilinear resampling, PNM I/O, procedural corpus.

Tensors are numpy arrays shaped [n, c, h, w]. Images are tensors with n=1 and
c in {1, 3}, values in [0, 1]; every public operation returns finite values
and re-clamps image outputs to [0, 1].
"""

from .resample import (
    keys_weight,
    resize_matrix,
    resize_tensor,
    bicubic_resize,
    bilinear_resize,
    psnr,
)
from .pnm import PnmError, load_image, save_image
from .corpus import (
    CorpusEntry,
    CorpusManifest,
    generate_corpus,
    load_manifest,
    write_manifest,
    render_image,
)

__all__ = [
    "keys_weight",
    "resize_matrix",
    "resize_tensor",
    "bicubic_resize",
    "bilinear_resize",
    "psnr",
    "PnmError",
    "load_image",
    "save_image",
    "CorpusEntry",
    "CorpusManifest",
    "generate_corpus",
    "load_manifest",
    "write_manifest",
    "render_image",
]

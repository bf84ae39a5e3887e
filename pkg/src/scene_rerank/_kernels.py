"""Backend selection for the numeric kernels.

Default is the numba backend; set SCENE_RERANK_NO_NUMBA=1 to force the
pure-numpy path (also used automatically when numba is unavailable).
Both backends implement the same math; see benchmarks/bench_kernels.py
for a side-by-side timing.
"""

from __future__ import annotations

import logging
import os

from . import _kernels_np

logger = logging.getLogger(__name__)

EPS_NORM = _kernels_np.EPS_NORM

_FLAG = os.environ.get("SCENE_RERANK_NO_NUMBA", "").strip().lower()
_DISABLED = _FLAG in {"1", "true", "yes"}

if not _DISABLED:
    try:
        from . import _kernels_nb as _impl

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - depends on install
        logger.warning("numba unavailable, falling back to numpy kernels")
        _impl = _kernels_np
        BACKEND = "numpy"
else:
    _impl = _kernels_np
    BACKEND = "numpy"

image_vectors = _impl.image_vectors
cosine_to_scenes = _impl.cosine_to_scenes
hinge_forward = _impl.hinge_forward
hinge_backward = _impl.hinge_backward
sgd_step = _impl.sgd_step

"""Lossless multiscale point cloud attribute codec with a learned Laplace entropy model."""
import numba as _numba

# prefer OpenMP: probing an outdated TBB first only produces a warning
_numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .codec import decode, encode  # noqa: E402
from .color import rgb_to_ycocg_r, ycocg_r_to_rgb  # noqa: E402
from .errors import (ConfigError, CorruptStreamError, MpacError, ModelMismatchError,  # noqa: E402
                     ParseError, RangeError)
from .evaluate import EvalReport, evaluate  # noqa: E402
from .mode import CodecMode  # noqa: E402
from .plyio import PlyCloud, read_ply, voxelize, write_ply  # noqa: E402
from .pyramid import build_pyramid  # noqa: E402
from .sapa import AnalyticFallback, SapaModel  # noqa: E402
from .sparse import SparseTensor  # noqa: E402
from .synth import synth_cloud  # noqa: E402

__all__ = ["encode", "decode", "rgb_to_ycocg_r", "ycocg_r_to_rgb", "MpacError", "ConfigError",
           "CorruptStreamError", "ModelMismatchError", "ParseError", "RangeError", "EvalReport",
           "evaluate", "CodecMode", "PlyCloud", "read_ply", "write_ply", "voxelize", "build_pyramid",
           "AnalyticFallback", "SapaModel", "SparseTensor", "synth_cloud"]
__version__ = "0.1.0"

"""Coding schedule and network inputs shared by encoder, decoder and trainer.

A scale is coded as a sequence of steps.  Each step names a stage (``cs``
for one-shot cross-scale coding, ``g0`` .. ``g7`` for the octant groups), the
channels it codes and the already-decoded channels it may look at.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grouping import GROUP_ORDER
from .mode import CodecMode

RAW, YCOCG = 0, 1
# the network's mu output is an offset measured in (channel scale / MU_DIV) units
MU_DIV = 64.0

# variant context -> (coded channels, reference channels)
CONTEXTS = {
    "joint1": ((0,), ()),
    "joint3": ((0, 1, 2), ()),
    "y": ((0,), ()),
    "co|y": ((1,), (0,)),
    "cg|y": ((2,), (0,)),
    "cg|y,co": ((2,), (0, 1)),
}


@dataclass(frozen=True)
class Step:
    stage: str
    ctx: str
    octant: int = -1  # -1: every still-unknown POV

    @property
    def variant(self) -> str:
        return f"{self.stage}:{self.ctx}"

    @property
    def coded(self) -> tuple:
        return CONTEXTS[self.ctx][0]

    @property
    def refs(self) -> tuple:
        return CONTEXTS[self.ctx][1]

    @property
    def group(self) -> int:
        return 0 if self.stage == "cs" else int(self.stage[1:]) + 1


def variant_io(key: str) -> tuple:
    """Input and output widths of the network serving variant ``key``."""
    coded, refs = CONTEXTS[key.split(":", 1)[1]]
    return 2 * len(coded) + len(refs), 2 * len(coded)


def color_phases(mode: CodecMode, channels: int) -> list:
    if not mode.cross_color:
        return [f"joint{channels}"]
    if mode.sequential_chroma:
        return ["y", "co|y", "cg|y,co"]
    return ["y", "co|y", "cg|y"]


def plan_steps(mode: CodecMode, channels: int) -> list:
    if channels not in (1, 3):
        raise ValueError(f"unsupported channel count {channels}")
    phases = color_phases(mode, channels)
    if not mode.cross_group:
        return [Step("cs", p) for p in phases]
    return [Step(f"g{g}", p, o) for g, o in enumerate(GROUP_ORDER) for p in phases]


def variants_for(mode: CodecMode, channels: int) -> list:
    return sorted({s.variant for s in plan_steps(mode, channels)})


def channel_norm(channel: int, colorspace: int) -> tuple:
    """(center, scale) mapping attribute units to network units."""
    if colorspace == YCOCG and channel > 0:
        return 0.0, 256.0
    return 128.0, 128.0


def step_rows(state, step: Step) -> np.ndarray:
    return state.unknown_rows(step.coded[0], None if step.octant < 0 else step.octant)


def step_inputs(state, step: Step, colorspace: int) -> tuple:
    """Network features, the best-known values of the coded channels, and the mu output units."""
    bk = state.best_known()
    cols = []
    for c in step.coded:
        center, scale = channel_norm(c, colorspace)
        cols.append((bk[:, c] - center) / scale)
        cols.append(state.known[:, c].astype(np.float64))
    for c in step.refs:
        center, scale = channel_norm(c, colorspace)
        cols.append((bk[:, c] - center) / scale)
    feats = np.ascontiguousarray(np.stack(cols, axis=1))
    base = np.ascontiguousarray(bk[:, list(step.coded)])
    scales = np.array([channel_norm(c, colorspace)[1] / MU_DIV for c in step.coded])
    return feats, base, scales

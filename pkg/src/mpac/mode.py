"""Codec mode flags (which prediction stages are enabled)."""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError


@dataclass(frozen=True)
class CodecMode:
    """Cross-scale prediction is always on; groups and colors are optional.

    ``sequential_chroma`` makes Cg condition on Y and Co instead of Y alone.
    """

    cross_group: bool = True
    cross_color: bool = False
    sequential_chroma: bool = False

    @classmethod
    def parse(cls, text: str) -> "CodecMode":
        parts = [p for p in text.lower().replace(" ", "").split("+") if p]
        if not parts or parts[0] != "cs" or len(set(parts)) != len(parts):
            raise ConfigError(f"invalid mode {text!r}; expected cs, cs+cg or cs+cg+cc")
        extra = set(parts[1:])
        if not extra <= {"cg", "cc", "seq"}:
            raise ConfigError(f"invalid mode {text!r}")
        if "seq" in extra and "cc" not in extra:
            raise ConfigError("seq requires cc")
        return cls("cg" in extra, "cc" in extra, "seq" in extra)

    @property
    def name(self) -> str:
        s = "cs"
        if self.cross_group:
            s += "+cg"
        if self.cross_color:
            s += "+cc"
            if self.sequential_chroma:
                s += "+seq"
        return s

    @property
    def flags(self) -> int:
        return int(self.cross_group) | int(self.cross_color) << 1 | int(self.sequential_chroma) << 2

    @classmethod
    def from_flags(cls, flags: int) -> "CodecMode":
        if flags & ~0b111:
            raise ConfigError(f"unknown mode flags {flags:#x}")
        return cls(bool(flags & 1), bool(flags & 2), bool(flags & 4))

    def check_channels(self, channels: int) -> None:
        if self.cross_color and channels != 3:
            raise ConfigError("cross-color prediction needs 3-channel attributes")

    def effective(self, channels: int) -> "CodecMode":
        """Single-channel inputs silently drop cross-color."""
        if channels == 1 and self.cross_color:
            return CodecMode(self.cross_group, False, False)
        return self


CS = CodecMode(False, False)
CS_CG = CodecMode(True, False)
CS_CG_CC = CodecMode(True, True)
ALL_MODES = (CS, CS_CG, CS_CG_CC)

"""Run-length mask codec (COCO conventions).

Runs traverse the mask in column-major order and alternate background /
foreground starting with background. Both the uncompressed list-of-counts
form and the compressed ASCII "counts string" (5 bits per character, delta
coded) are supported.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import IntegrityError


@dataclass
class RleMask:
    counts: list[int]
    height: int
    width: int

    def validate(self) -> None:
        if any(c < 0 for c in self.counts):
            raise IntegrityError("RLE counts must be non-negative")
        total = sum(self.counts)
        if total != self.height * self.width:
            raise IntegrityError(
                f"RLE counts sum to {total}, expected {self.height * self.width} "
                f"for a {self.height}x{self.width} mask"
            )


def decode_rle(r: RleMask) -> np.ndarray:
    """Expand an RLE into a bool (H, W) raster."""
    r.validate()
    flat = np.zeros(r.height * r.width, dtype=bool)
    pos = 0
    value = False
    for run in r.counts:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return flat.reshape((r.width, r.height)).T


def encode_rle(mask: np.ndarray) -> RleMask:
    """Run-length encode a bool (H, W) raster."""
    h, w = mask.shape
    flat = np.asarray(mask, dtype=bool).T.reshape(-1)
    if flat.size == 0:
        return RleMask(counts=[0], height=h, width=w)
    # Indices where the run value changes, plus both ends.
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    boundaries = np.concatenate(([0], changes, [flat.size]))
    counts = np.diff(boundaries).tolist()
    if flat[0]:
        counts = [0] + counts
    return RleMask(counts=counts, height=h, width=w)


def counts_to_string(counts: list[int]) -> str:
    """Compress counts to the ASCII wire form (chars 48..111).

    Each count (delta-coded against the count two positions back) is emitted
    in 5-bit groups, low bits first, with bit 0x20 as the continuation flag;
    negative deltas rely on sign extension of the final group.
    """
    out: list[str] = []
    for i, count in enumerate(counts):
        x = count - (counts[i - 2] if i > 2 else 0)
        more = True
        while more:
            group = x & 0x1F
            x >>= 5
            more = (x != -1) if (group & 0x10) else (x != 0)
            if more:
                group |= 0x20
            out.append(chr(group + 48))
    return "".join(out)


def string_to_counts(s: str) -> list[int]:
    """Inverse of :func:`counts_to_string`."""
    counts: list[int] = []
    pos = 0
    while pos < len(s):
        x = 0
        k = 0
        more = True
        while more:
            if pos >= len(s):
                raise IntegrityError("truncated RLE counts string")
            c = ord(s[pos]) - 48
            if c < 0 or c > 63:
                raise IntegrityError(f"invalid RLE counts character {s[pos]!r}")
            x |= (c & 0x1F) << (5 * k)
            more = bool(c & 0x20)
            pos += 1
            k += 1
            if not more and (c & 0x10):
                x |= -1 << (5 * k)
        if len(counts) > 2:
            x += counts[-2]
        counts.append(x)
    return counts


def rle_from_string(s: str, height: int, width: int) -> RleMask:
    return RleMask(counts=string_to_counts(s), height=height, width=width)

"""Latent-to-segment decoders, latent quantization and the level text format.

A segment is an ``(H, W)`` array of ``uint8`` indices into :data:`ALPHABET`.
A level is a sequence of equally sized segments, stored as an ``(L, H, W)``
array when it has to be handled as one object.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

ALPHABET = "-X#oE|"
EMPTY, GROUND, BLOCK, COIN, ENEMY, PIPE = range(len(ALPHABET))
SEGMENT_H = 14
SEGMENT_W = 16

BOUNDARY_MARK = ">"
BOUNDARY_FILL = "."

_CHAR_TO_INDEX = {c: i for i, c in enumerate(ALPHABET)}


class LevelFormatError(ValueError):
    pass


def check_latent(z, d: int) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (d,):
        raise ValueError(f"expected latent of shape ({d},), got {z.shape}")
    return z


def quantize(z, levels: int) -> np.ndarray:
    """Snap each component to the nearest of ``levels`` evenly spaced points in [-1, 1]."""
    if levels < 2:
        raise ValueError("levels must be >= 2")
    z = np.clip(np.asarray(z, dtype=float), -1.0, 1.0)
    idx = np.rint((z + 1.0) * 0.5 * (levels - 1))
    return -1.0 + 2.0 * idx / (levels - 1)


def grid_points(levels: int) -> np.ndarray:
    return quantize(np.linspace(-1.0, 1.0, levels), levels)


def terrain_prior(H: int = SEGMENT_H, W: int = SEGMENT_W) -> np.ndarray:
    """Row-dependent logit offsets: open sky above, blocks and coins mid-air, ground below."""
    prior = np.full((H, W, len(ALPHABET)), -2.0)
    prior[:, :, EMPTY] = 3.0
    mid = slice(H // 3, H - 3)
    prior[mid, :, BLOCK] = -1.0
    prior[mid, :, COIN] = -0.5
    prior[H - 3, :, ENEMY] = 0.0
    prior[H - 3, :, PIPE] = 0.5
    prior[H - 2:, :, GROUND] = 3.0
    prior[H - 2:, :, EMPTY] = 2.5
    prior[H - 2:, :, PIPE] = -1.0
    return prior


def column_smoothed_weights(d: int, H: int, W: int, seed: int, width: float = 2.0) -> np.ndarray:
    """Gaussian weights correlated along the column axis, shape ``(H, W, |alphabet|, d)``.

    Neighbouring columns share structure so gaps and platforms come in runs. The two
    ground rows share weights so the floor is two tiles thick.
    """
    rng = np.random.default_rng(seed)
    half = 4
    raw = rng.standard_normal((H, W + 2 * half, len(ALPHABET), d))
    x = np.arange(-half, half + 1)
    kernel = np.exp(-0.5 * (x / width) ** 2)
    kernel /= np.sqrt(np.sum(kernel ** 2))
    weights = sum(k * raw[:, i:i + W] for i, k in enumerate(kernel))
    weights[H - 2] = weights[H - 1]
    return weights


class LinearDecoder:
    """Seeded affine map from latent space to per-cell tile logits, decoded by argmax.

    ``np.argmax`` returns the first maximum, so ties go to the lowest alphabet index.
    """

    kind = "linear"

    def __init__(self, d: int, H: int = SEGMENT_H, W: int = SEGMENT_W, weights_seed: int = 0,
                 weight_scale: float = 1.0):
        self.d, self.H, self.W = d, H, W
        self.weights_seed = weights_seed
        self.weights = weight_scale * column_smoothed_weights(d, H, W, weights_seed)
        self.bias = terrain_prior(H, W)

    def logits(self, z) -> np.ndarray:
        z = check_latent(z, self.d)
        return self.weights @ z + self.bias

    def __call__(self, z) -> np.ndarray:
        return np.argmax(self.logits(z), axis=-1).astype(np.uint8)

    def decode_many(self, zs) -> np.ndarray:
        zs = np.asarray(zs, dtype=float)
        if zs.ndim != 2 or zs.shape[1] != self.d:
            raise ValueError(f"expected latents of shape (k, {self.d}), got {zs.shape}")
        logits = np.einsum("hwad,kd->khwa", self.weights, zs) + self.bias
        return np.argmax(logits, axis=-1).astype(np.uint8)

    def safe_radius(self, z) -> float:
        """Radius around ``z`` inside which every cell keeps its argmax tile.

        For the winning tile ``t`` and any rival ``u`` the logit gap shrinks by at
        most ``||w_t - w_u|| * ||dz||``, so the smallest gap/norm ratio bounds it.
        """
        logits = self.logits(z)
        best = np.argmax(logits, axis=-1)
        w_best = np.take_along_axis(self.weights, best[..., None, None], axis=2)
        gap = np.take_along_axis(logits, best[..., None], axis=-1) - logits
        norm = np.linalg.norm(w_best - self.weights, axis=-1)
        rival = np.ones_like(gap, dtype=bool)
        np.put_along_axis(rival, best[..., None], False, axis=-1)
        return float(np.min(gap[rival] / norm[rival]))


class BankDecoder:
    """Returns the prototype segment whose anchor latent is nearest to ``z``."""

    kind = "bank"

    def __init__(self, anchors, prototypes):
        anchors = np.asarray(anchors, dtype=float)
        prototypes = np.asarray(prototypes, dtype=np.uint8)
        if anchors.ndim != 2 or len(anchors) == 0:
            raise ValueError("bank decoder needs a non-empty (M, d) anchor table")
        if len(anchors) < 2:
            raise ValueError("bank decoder needs at least two anchors")
        if prototypes.shape[0] != anchors.shape[0] or prototypes.ndim != 3:
            raise ValueError("need one (H, W) prototype per anchor")
        if len({a.tobytes() for a in anchors}) != len(anchors):
            raise ValueError("bank anchors must be pairwise distinct")
        self.anchors = anchors
        self.prototypes = prototypes
        self.d = anchors.shape[1]
        self.H, self.W = prototypes.shape[1:]

    def nearest(self, z) -> int:
        z = check_latent(z, self.d)
        return int(np.argmin(np.linalg.norm(self.anchors - z, axis=1)))

    def __call__(self, z) -> np.ndarray:
        return self.prototypes[self.nearest(z)].copy()

    def decode_many(self, zs) -> np.ndarray:
        return np.stack([self(z) for z in np.asarray(zs, dtype=float)])


def random_bank(m: int, d: int, H: int = SEGMENT_H, W: int = SEGMENT_W, seed: int = 0,
                levels: int | None = None) -> BankDecoder:
    """Bank with ``m`` random prototypes; anchors are snapped to a grid when ``levels`` is given."""
    rng = np.random.default_rng(seed)
    if levels is not None and levels ** d < m:
        raise ValueError("grid too small for the requested number of distinct anchors")
    anchors: list[np.ndarray] = []
    seen: set[bytes] = set()
    while len(anchors) < m:
        a = rng.uniform(-1.0, 1.0, d)
        if levels is not None:
            a = quantize(a, levels)
        if a.tobytes() not in seen:
            seen.add(a.tobytes())
            anchors.append(a)
    prototypes = rng.integers(0, len(ALPHABET), size=(m, H, W), dtype=np.uint8)
    return BankDecoder(np.array(anchors), prototypes)


@dataclass
class DecoderSpec:
    kind: str = "linear"
    d: int = 8
    H: int = SEGMENT_H
    W: int = SEGMENT_W
    weights_seed: int = 0
    bank_path: str | None = None

    def build(self, base_dir: Path | None = None):
        if self.kind == "linear":
            return LinearDecoder(self.d, self.H, self.W, self.weights_seed)
        if self.kind == "bank":
            if not self.bank_path:
                raise ValueError("bank decoder needs bank_path")
            path = Path(self.bank_path)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            dec = load_bank(path)
            if dec.d != self.d or (dec.H, dec.W) != (self.H, self.W):
                raise ValueError("bank file dimensions disagree with decoder block")
            return dec
        raise ValueError(f"unknown decoder kind {self.kind!r}")


# ---- level text ----

def level_to_text(level: Sequence[np.ndarray]) -> str:
    """Segments side by side: one boundary-marker row, then ``H`` tile rows."""
    level = np.asarray(level)
    if level.ndim != 3 or len(level) == 0:
        raise LevelFormatError("a level is a non-empty (L, H, W) stack of segments")
    if level.size and level.max() >= len(ALPHABET):
        raise LevelFormatError("tile index outside the alphabet")
    L, H, W = level.shape
    marker = (BOUNDARY_MARK + BOUNDARY_FILL * (W - 1)) * L
    chars = np.array(list(ALPHABET))
    wide = level.transpose(1, 0, 2).reshape(H, L * W)
    rows = ["".join(chars[row]) for row in wide]
    return "\n".join([marker, *rows]) + "\n"


def text_to_level(text: str) -> np.ndarray:
    lines = [line for line in text.splitlines() if line.strip()]
    if len(lines) < 2:
        raise LevelFormatError("need a marker row and at least one tile row")
    marker, rows = lines[0], lines[1:]
    width = len(marker)
    if any(len(r) != width for r in rows):
        raise LevelFormatError("ragged rows")
    if set(marker) - {BOUNDARY_MARK, BOUNDARY_FILL} or not marker.startswith(BOUNDARY_MARK):
        raise LevelFormatError("malformed boundary marker row")
    starts = [i for i, c in enumerate(marker) if c == BOUNDARY_MARK]
    seg_w = width // len(starts)
    if starts != list(range(0, width, seg_w)) or seg_w * len(starts) != width:
        raise LevelFormatError("segments must share one width")
    try:
        grid = np.array([[_CHAR_TO_INDEX[c] for c in r] for r in rows], dtype=np.uint8)
    except KeyError as exc:
        raise LevelFormatError(f"unknown tile character {exc.args[0]!r}") from None
    H = grid.shape[0]
    return grid.reshape(H, len(starts), seg_w).transpose(1, 0, 2).copy()


def save_bank(decoder: BankDecoder, path: Path) -> None:
    m, d = decoder.anchors.shape
    lines = [f"bank {m} {d} {decoder.H} {decoder.W}"]
    lines += [" ".join(f"{x:.17g}" for x in a) for a in decoder.anchors]
    Path(path).write_text("\n".join(lines) + "\n" + level_to_text(decoder.prototypes))


def load_bank(path: Path) -> BankDecoder:
    lines = Path(path).read_text().splitlines()
    head = lines[0].split()
    if len(head) != 5 or head[0] != "bank":
        raise LevelFormatError("bank file must start with 'bank M d H W'")
    m, d, H, W = map(int, head[1:])
    anchors = np.array([[float(x) for x in line.split()] for line in lines[1:1 + m]])
    if anchors.shape != (m, d):
        raise LevelFormatError("anchor table does not match header")
    prototypes = text_to_level("\n".join(lines[1 + m:]))
    if prototypes.shape != (m, H, W):
        raise LevelFormatError("prototype block does not match header")
    return BankDecoder(anchors, prototypes)

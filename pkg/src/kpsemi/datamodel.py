"""Core value types shared across the package.

Coordinate convention: continuous (x, y) in input-pixel units, origin at the
center of the top-left pixel, x along columns and y along rows.  Heatmaps live
on a grid downscaled by a fixed factor of 4 (256x256 inputs pair with 64x64
heatmaps), and heatmap cell (u, v) corresponds to input position (4u, 4v).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

# Input-to-heatmap downscale factor.  Fixed; the rest of the package assumes it.
HEATMAP_STRIDE = 4

HeatmapKind = Literal["ground_truth", "predicted"]


@dataclass(frozen=True)
class DatasetMeta:
    """Static description of a keypoint dataset."""

    keypoint_names: tuple[str, ...]
    input_size: tuple[int, int]  # (H_in, W_in)
    heatmap_size: tuple[int, int]  # (H_hm, W_hm)

    def __post_init__(self) -> None:
        if len(self.keypoint_names) < 2:
            raise ValueError("need at least 2 keypoints")
        if len(set(self.keypoint_names)) != len(self.keypoint_names):
            raise ValueError("duplicate keypoint names")
        h_in, w_in = self.input_size
        h_hm, w_hm = self.heatmap_size
        if h_in != HEATMAP_STRIDE * h_hm or w_in != HEATMAP_STRIDE * w_hm:
            raise ValueError(
                f"input size {self.input_size} must be {HEATMAP_STRIDE}x the "
                f"heatmap size {self.heatmap_size}"
            )

    @property
    def num_keypoints(self) -> int:
        return len(self.keypoint_names)


@dataclass(frozen=True, eq=False)
class ImageSample:
    """One image with optional keypoint annotations.

    ``keypoints`` is a (K, 3) array of (x, y, v) rows with v in {0, 1}; it is
    None for unlabeled samples.  ``bbox`` and ``head_bbox`` are (x, y, w, h)
    in input pixels.  Construction is permissive; use :func:`validate_sample`
    to check a sample against a :class:`DatasetMeta`.
    """

    id: str
    pixels: np.ndarray  # (H_in, W_in, 3) in [0, 1]
    bbox: tuple[float, float, float, float]
    labeled: bool
    keypoints: Optional[np.ndarray] = None
    head_bbox: Optional[tuple[float, float, float, float]] = None


@dataclass(frozen=True, eq=False)
class HeatmapStack:
    """K per-keypoint score maps at heatmap resolution.

    ``warnings`` carries render-time flags (e.g. a visible keypoint whose
    Gaussian fell entirely off the grid); it is empty for predicted stacks.
    """

    values: np.ndarray  # (K, H_hm, W_hm)
    kind: HeatmapKind
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class LossWeights:
    """Weights for the supervised, SC, TE and TI loss terms."""

    lambda1: float = 1e3
    lambda2: float = 0.5
    lambda3: float = 1e2
    lambda4: float = 1e2

    def __post_init__(self) -> None:
        for name in ("lambda1", "lambda2", "lambda3", "lambda4"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.lambda1, self.lambda2, self.lambda3, self.lambda4)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[str, ...] = ()


def validate_sample(sample: ImageSample, meta: DatasetMeta) -> ValidationReport:
    """Check one sample against the dataset metadata.

    Pure and deterministic; never raises.  Every problem is reported as a
    human-readable violation string.
    """
    problems: list[str] = []
    h_in, w_in = meta.input_size

    px = np.asarray(sample.pixels)
    if px.ndim != 3 or px.shape != (h_in, w_in, 3):
        problems.append(
            f"pixel shape {px.shape} does not match input size {(h_in, w_in, 3)}"
        )
    elif px.size and (float(px.min()) < 0.0 or float(px.max()) > 1.0):
        problems.append("pixel values outside [0, 1]")

    _, _, bw, bh = sample.bbox
    if not (bw > 0 and bh > 0):
        problems.append(f"degenerate bbox (w={bw}, h={bh})")
    if sample.head_bbox is not None:
        _, _, hw, hh = sample.head_bbox
        if hw < 0 or hh < 0:
            problems.append("negative head_bbox size")

    if sample.labeled and sample.keypoints is None:
        problems.append("labeled sample has no keypoints")
    if sample.keypoints is not None:
        kps = np.asarray(sample.keypoints, dtype=float)
        if kps.ndim != 2 or kps.shape[1] != 3:
            problems.append(f"keypoints shape {kps.shape} is not (K, 3)")
        elif kps.shape[0] != meta.num_keypoints:
            problems.append(
                f"keypoint count {kps.shape[0]} does not match K={meta.num_keypoints}"
            )
        else:
            if not np.isin(kps[:, 2], (0.0, 1.0)).all():
                problems.append("visibility flags must be 0 or 1")
            vis = kps[:, 2] == 1.0
            x, y = kps[:, 0], kps[:, 1]
            bad = vis & ~((x >= 0) & (x < w_in) & (y >= 0) & (y < h_in))
            for i in np.flatnonzero(bad):
                problems.append(
                    f"visible keypoint {i} at ({x[i]:.1f}, {y[i]:.1f}) outside image"
                )

    return ValidationReport(ok=not problems, violations=tuple(problems))

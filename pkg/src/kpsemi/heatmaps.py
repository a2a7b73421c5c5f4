"""Ground-truth Gaussian heatmap rendering and argmax peak decoding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import HEATMAP_STRIDE, DatasetMeta, HeatmapStack


@dataclass(frozen=True)
class RenderConfig:
    """Gaussian target parameters, in heatmap pixels.

    Values beyond ``truncate_radius * sigma`` cells from the center are set
    to zero, the usual compact-support construction for MSE heatmap targets.
    """

    sigma: float = 2.0
    truncate_radius: float = 3.0

    def __post_init__(self) -> None:
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.truncate_radius < 1:
            raise ValueError("truncate_radius must be >= 1")


def render_heatmaps(
    keypoints: np.ndarray,
    meta: DatasetMeta,
    cfg: RenderConfig = RenderConfig(),
) -> HeatmapStack:
    """Render unit-peak Gaussian targets for (K, 3) keypoints (x, y, v).

    Each visible channel holds exp(-((u - x/4)^2 + (v - y/4)^2) / (2 sigma^2))
    on the heatmap grid, so an on-grid keypoint peaks at exactly 1.0 at its
    cell.  Invisible keypoints give all-zero channels.  A visible keypoint
    whose truncated Gaussian misses the grid entirely yields an all-zero
    channel plus a warning flag on the returned stack.
    """
    kps = np.asarray(keypoints, dtype=np.float64)
    if kps.shape != (meta.num_keypoints, 3):
        raise ValueError(f"expected ({meta.num_keypoints}, 3) keypoints, got {kps.shape}")

    h_hm, w_hm = meta.heatmap_size
    cols = np.arange(w_hm, dtype=np.float64)
    rows = np.arange(h_hm, dtype=np.float64)
    radius = cfg.truncate_radius * cfg.sigma

    values = np.zeros((meta.num_keypoints, h_hm, w_hm), dtype=np.float32)
    flags: list[str] = []
    for i, (x, y, v) in enumerate(kps):
        if v != 1.0:
            continue
        cx = x / HEATMAP_STRIDE
        cy = y / HEATMAP_STRIDE
        if cx < -radius or cx > w_hm - 1 + radius or cy < -radius or cy > h_hm - 1 + radius:
            flags.append(f"keypoint {i} renders entirely outside the heatmap grid")
            continue
        d2 = (cols[None, :] - cx) ** 2 + (rows[:, None] - cy) ** 2
        chan = np.exp(-d2 / (2.0 * cfg.sigma**2))
        chan[d2 > radius**2] = 0.0
        values[i] = chan.astype(np.float32)

    return HeatmapStack(values=values, kind="ground_truth", warnings=tuple(flags))


def decode_peaks(stack: HeatmapStack, meta: DatasetMeta) -> np.ndarray:
    """Decode each channel's argmax to (x, y, score) in input pixels.

    Ties break to the row-major first occurrence; an all-zero channel decodes
    to (0, 0) with score 0.  No sub-pixel refinement.
    """
    values = np.asarray(stack.values)
    k, h_hm, w_hm = values.shape
    if (h_hm, w_hm) != tuple(meta.heatmap_size) or k != meta.num_keypoints:
        raise ValueError(
            f"stack shape {values.shape} does not match meta "
            f"(K={meta.num_keypoints}, heatmap {meta.heatmap_size})"
        )

    flat = values.reshape(k, -1)
    idx = flat.argmax(axis=1)
    rows, cols = np.divmod(idx, w_hm)
    out = np.empty((k, 3), dtype=np.float64)
    out[:, 0] = cols * HEATMAP_STRIDE
    out[:, 1] = rows * HEATMAP_STRIDE
    out[:, 2] = flat[np.arange(k), idx]
    return out

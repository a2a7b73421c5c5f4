"""Random perspective transforms applied consistently to images, points and heatmaps.

A warp is parameterized by displacing the four image corners and taking the
homography that maps the displaced corners back onto the original corners, so
the displaced quadrilateral is stretched to fill the frame.  All resampling is
bilinear with zero fill outside the source, implemented once in torch
(:func:`warp_tensor`) so the same interpolation backs the data pipeline and
the differentiable loss paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .datamodel import HEATMAP_STRIDE, DatasetMeta, HeatmapStack

_DET_EPS = 1e-9
_MAX_RESAMPLE = 10


@dataclass(frozen=True, eq=False)
class WarpSpec:
    """An invertible perspective transform in input-pixel coordinates.

    ``H`` is 3x3 with H[2, 2] = 1 and acts on points as (x', y', w') = H (x, y, 1).
    ``params_s`` records the four sampled corner displacements (dx, dy), in
    TL, TR, BR, BL order, that generated H; derived specs (inverses) carry the
    originating sample's parameters unchanged.
    """

    H: np.ndarray  # (3, 3)
    params_s: np.ndarray  # (4, 2)
    seed: int


def _image_corners(meta: DatasetMeta) -> np.ndarray:
    h_in, w_in = meta.input_size
    return np.array(
        [[0.0, 0.0], [w_in - 1.0, 0.0], [w_in - 1.0, h_in - 1.0], [0.0, h_in - 1.0]]
    )


def _homography_from_points(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Direct linear transform for 4 point correspondences, H[2,2] = 1."""
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((sx, sy), (dx, dy)) in enumerate(zip(src, dst)):
        a[2 * i] = [sx, sy, 1, 0, 0, 0, -sx * dx, -sy * dx]
        a[2 * i + 1] = [0, 0, 0, sx, sy, 1, -sx * dy, -sy * dy]
        b[2 * i] = dx
        b[2 * i + 1] = dy
    h = np.linalg.solve(a, b)
    return np.append(h, 1.0).reshape(3, 3)


def _is_convex(quad: np.ndarray) -> bool:
    cross = []
    for i in range(4):
        p, q, r = quad[i], quad[(i + 1) % 4], quad[(i + 2) % 4]
        cross.append(np.cross(q - p, r - q))
    cross = np.asarray(cross)
    return bool((cross > 0).all() or (cross < 0).all())


def identity_warp(seed: int = 0) -> WarpSpec:
    return WarpSpec(H=np.eye(3), params_s=np.zeros((4, 2)), seed=seed)


def spec_from_displacements(
    displacements: np.ndarray, meta: DatasetMeta, seed: int = 0
) -> WarpSpec:
    """Build the spec whose H maps the displaced corners to the image corners."""
    disp = np.asarray(displacements, dtype=np.float64).reshape(4, 2)
    corners = _image_corners(meta)
    h = _homography_from_points(corners + disp, corners)
    h /= h[2, 2]
    return WarpSpec(H=h, params_s=disp, seed=seed)


def sample_warp(meta: DatasetMeta, gamma: float, rng_seed: int) -> WarpSpec:
    """Sample a random perspective warp, avoiding degenerate quadrilaterals.

    Each corner is displaced by independent uniform offsets bounded by gamma
    times the image side.  Non-convex quadrilaterals and near-singular
    homographies are resampled (at most 10 attempts) so extreme fold-over
    warping never reaches the training loop.
    """
    if not 0.0 < gamma < 0.5:
        raise ValueError(f"gamma must be in (0, 0.5), got {gamma}")
    h_in, w_in = meta.input_size
    rng = np.random.default_rng(rng_seed)
    corners = _image_corners(meta)
    bound = np.array([gamma * w_in, gamma * h_in])

    for _ in range(_MAX_RESAMPLE):
        disp = rng.uniform(-1.0, 1.0, size=(4, 2)) * bound
        quad = corners + disp
        if not _is_convex(quad):
            continue
        h = _homography_from_points(quad, corners)
        if abs(np.linalg.det(h)) <= _DET_EPS:
            continue
        h /= h[2, 2]
        return WarpSpec(H=h, params_s=disp, seed=rng_seed)
    raise RuntimeError(
        f"failed to sample a valid warp after {_MAX_RESAMPLE} attempts (seed {rng_seed})"
    )


def invert_warp(spec: WarpSpec) -> WarpSpec:
    """Invert the transform, renormalizing so the bottom-right entry is 1."""
    det = np.linalg.det(spec.H)
    if abs(det) <= _DET_EPS:
        raise ValueError("cannot invert a near-singular warp")
    h_inv = np.linalg.inv(spec.H)
    if abs(h_inv[2, 2]) <= _DET_EPS:
        raise ValueError("inverse warp is not normalizable")
    h_inv /= h_inv[2, 2]
    return WarpSpec(H=h_inv, params_s=spec.params_s.copy(), seed=spec.seed)


def warp_points(
    points: np.ndarray, spec: WarpSpec, meta: DatasetMeta
) -> tuple[np.ndarray, np.ndarray]:
    """Apply the homography to (N, 2) points.

    Returns (warped (N, 2), inside (N,) bool) where inside means the result
    lies in [0, W_in) x [0, H_in).  Points mapped near the plane at infinity
    (|w'| < 1e-9) come back as the sentinel (-1, -1) with inside False.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    h_in, w_in = meta.input_size
    homog = np.concatenate([pts, np.ones((len(pts), 1))], axis=1)
    mapped = homog @ spec.H.T
    w = mapped[:, 2]
    degenerate = np.abs(w) < 1e-9
    safe_w = np.where(degenerate, 1.0, w)
    out = mapped[:, :2] / safe_w[:, None]
    out[degenerate] = -1.0
    inside = (
        ~degenerate
        & (out[:, 0] >= 0)
        & (out[:, 0] < w_in)
        & (out[:, 1] >= 0)
        & (out[:, 1] < h_in)
    )
    return out, inside


def heatmap_matrix(spec_or_h: WarpSpec | np.ndarray) -> np.ndarray:
    """Rescale an input-resolution homography to heatmap coordinates.

    Conjugation by the fixed 4x scale: H_hm = S^-1 H S with S = diag(4, 4, 1).
    """
    h = spec_or_h.H if isinstance(spec_or_h, WarpSpec) else np.asarray(spec_or_h)
    s = np.diag([float(HEATMAP_STRIDE), float(HEATMAP_STRIDE), 1.0])
    s_inv = np.diag([1.0 / HEATMAP_STRIDE, 1.0 / HEATMAP_STRIDE, 1.0])
    return s_inv @ h @ s


def source_grid(
    mats: torch.Tensor, height: int, width: int
) -> tuple[torch.Tensor, torch.Tensor]:
    """Source-pixel lookup coordinates for warping with per-sample matrices.

    For output(p) = input(H^-1 p), ``mats`` holds H per sample (B, 3, 3).
    Returns (grid (B, H, W, 2) normalized for grid_sample with
    align_corners=True, inside (B, H, W) mask of lookups whose bilinear
    support lies fully inside the source).
    """
    b = mats.shape[0]
    dtype = mats.dtype
    device = mats.device
    inv = torch.linalg.inv(mats)

    ys, xs = torch.meshgrid(
        torch.arange(height, dtype=dtype, device=device),
        torch.arange(width, dtype=dtype, device=device),
        indexing="ij",
    )
    ones = torch.ones_like(xs)
    pts = torch.stack([xs, ys, ones], dim=-1).reshape(1, -1, 3)  # (1, HW, 3)
    mapped = pts @ inv.transpose(1, 2)  # (B, HW, 3)
    w = mapped[..., 2]
    w = torch.where(w.abs() < 1e-9, torch.full_like(w, 1e-9), w)
    sx = mapped[..., 0] / w
    sy = mapped[..., 1] / w

    inside = (sx >= 0) & (sx <= width - 1) & (sy >= 0) & (sy <= height - 1)
    gx = 2.0 * sx / max(width - 1, 1) - 1.0
    gy = 2.0 * sy / max(height - 1, 1) - 1.0
    grid = torch.stack([gx, gy], dim=-1).reshape(b, height, width, 2)
    return grid, inside.reshape(b, height, width)


def warp_tensor(images: torch.Tensor, mats: torch.Tensor) -> torch.Tensor:
    """Bilinear warp of (B, C, H, W) tensors by per-sample homographies.

    ``mats`` are (B, 3, 3) in the tensor's own pixel coordinates.  Zero fill
    outside the source; differentiable with respect to ``images``.
    """
    grid, _ = source_grid(mats, images.shape[2], images.shape[3])
    return F.grid_sample(
        images, grid, mode="bilinear", padding_mode="zeros", align_corners=True
    )


def _warp_array(arr: np.ndarray, h: np.ndarray) -> np.ndarray:
    t = torch.from_numpy(np.ascontiguousarray(arr, dtype=np.float64)).unsqueeze(0)
    m = torch.from_numpy(np.asarray(h, dtype=np.float64)).unsqueeze(0)
    return warp_tensor(t, m).squeeze(0).numpy()


def warp_image(pixels: np.ndarray, spec: WarpSpec) -> np.ndarray:
    """Warp an (H, W, C) or (H, W) image; same shape and dtype out."""
    px = np.asarray(pixels)
    squeeze = px.ndim == 2
    if squeeze:
        px = px[:, :, None]
    out = _warp_array(px.transpose(2, 0, 1), spec.H).transpose(1, 2, 0)
    if squeeze:
        out = out[:, :, 0]
    return out.astype(pixels.dtype, copy=False)


def warp_heatmaps(stack: HeatmapStack, spec: WarpSpec, meta: DatasetMeta) -> HeatmapStack:
    """Warp a heatmap stack with the input-resolution spec rescaled to its grid."""
    values = np.asarray(stack.values)
    if values.shape[1:] != tuple(meta.heatmap_size):
        raise ValueError(f"stack spatial shape {values.shape[1:]} != {meta.heatmap_size}")
    out = _warp_array(values, heatmap_matrix(spec))
    return HeatmapStack(values=out.astype(values.dtype, copy=False), kind=stack.kind)

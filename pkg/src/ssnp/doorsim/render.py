"""Top-down schematic renders of a door at a given opening angle.

The camera distance acts as pure zoom: world coordinates are scaled by
0.30 / distance and mapped onto a fixed [-1.5, 1.5]^2 window. Foreground
(wall, door, handle blob) is 1.0 on a 0.0 background; segments are drawn
with supercover traversal so every touched pixel lights up at one-pixel
thickness.
"""

from __future__ import annotations

import math

import numpy as np

from .kinematics import DoorKinematics

CAM_DIST_RANGE = (0.20, 0.40)
ZOOM_NUMERATOR = 0.30
WINDOW_HALF = 1.5


def _raster_segment(img: np.ndarray, x0: float, y0: float, x1: float, y1: float) -> None:
    """Mark every grid cell the segment passes through (supercover).

    Coordinates are continuous pixel coordinates; cell (r, c) spans
    [r, r+1) x [c, c+1). Exact corner crossings mark both side cells.
    """
    h, w = img.shape

    def mark(cx: int, cy: int) -> None:
        if 0 <= cy < h and 0 <= cx < w:
            img[cy, cx] = 1.0

    ix, iy = math.floor(x0), math.floor(y0)
    jx, jy = math.floor(x1), math.floor(y1)
    dx, dy = x1 - x0, y1 - y0
    step_x = 1 if dx > 0 else -1
    step_y = 1 if dy > 0 else -1
    # Parametric distance to the next vertical/horizontal grid line.
    if dx != 0.0:
        nx = (ix + 1 - x0) / dx if dx > 0 else (ix - x0) / dx
        tdx = abs(1.0 / dx)
    else:
        nx, tdx = math.inf, math.inf
    if dy != 0.0:
        ny = (iy + 1 - y0) / dy if dy > 0 else (iy - y0) / dy
        tdy = abs(1.0 / dy)
    else:
        ny, tdy = math.inf, math.inf

    mark(ix, iy)
    guard = 2 * (h + w) + 8
    while (ix != jx or iy != jy) and guard > 0:
        guard -= 1
        if nx < ny:
            if nx > 1.0:
                break
            ix += step_x
            nx += tdx
        elif ny < nx:
            if ny > 1.0:
                break
            iy += step_y
            ny += tdy
        else:
            if nx > 1.0:
                break
            # Exact corner: mark both adjacent cells, then cross diagonally.
            mark(ix + step_x, iy)
            mark(ix, iy + step_y)
            ix += step_x
            iy += step_y
            nx += tdx
            ny += tdy
        mark(ix, iy)


def render(door: DoorKinematics, opening_angle: float, cam_distance: float, size: int = 32) -> np.ndarray:
    """Render one size x size grayscale frame.

    `opening_angle` is the unsigned door angle in [0, pi]; the drawn door
    direction is open_sign * opening_angle measured from the wall.
    """
    if not 0.0 <= opening_angle <= math.pi:
        raise ValueError(f"opening angle {opening_angle} outside [0, pi]")
    if not CAM_DIST_RANGE[0] <= cam_distance <= CAM_DIST_RANGE[1]:
        raise ValueError(f"camera distance {cam_distance} outside {CAM_DIST_RANGE}")
    zoom = ZOOM_NUMERATOR / cam_distance
    img = np.zeros((size, size))

    def px(wx: float, wy: float) -> tuple[float, float]:
        u = (zoom * wx + WINDOW_HALF) / (2.0 * WINDOW_HALF) * size
        v = (WINDOW_HALF - zoom * wy) / (2.0 * WINDOW_HALF) * size
        return u, v

    hx, hy = door.hinge_pos
    extent = WINDOW_HALF / zoom
    # Wall along the x-axis through the hinge, with a doorway gap where the
    # closed door sits.
    for x0, x1 in ((-extent, hx), (hx + door.width, extent)):
        if x1 > x0:
            (u0, v0), (u1, v1) = px(x0, hy), px(x1, hy)
            _raster_segment(img, u0, v0, u1, v1)
    ang = door.open_sign * opening_angle
    ca, sa = math.cos(ang), math.sin(ang)
    (u0, v0) = px(hx, hy)
    (u1, v1) = px(hx + door.width * ca, hy + door.width * sa)
    _raster_segment(img, u0, v0, u1, v1)
    # Handle: 2x2 blob centered on the handle point (symmetric under
    # mirroring about the wall line).
    hu, hv = px(hx + door.handle_radius * ca, hy + door.handle_radius * sa)
    r0, c0 = math.floor(hv + 0.5) - 1, math.floor(hu + 0.5) - 1
    for r in (r0, r0 + 1):
        for c in (c0, c0 + 1):
            if 0 <= r < size and 0 <= c < size:
                img[r, c] = 1.0
    return img

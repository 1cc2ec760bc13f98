"""Synthetic ground-truth slices: Shepp-Logan and a labelled toy chest."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import HU_MAX, HU_MIN, InvariantError, LabelMap, RngStream, Volume

# value, horizontal semi-axis, vertical semi-axis, x0, y0, rotation (deg)
# Original (unmodified) Shepp-Logan gray values.
SHEPP_LOGAN_ELLIPSES = np.array(
    [
        [2.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0],
        [-0.98, 0.6624, 0.8740, 0.00, -0.0184, 0.0],
        [-0.02, 0.1100, 0.3100, 0.22, 0.0000, -18.0],
        [-0.02, 0.1600, 0.4100, -0.22, 0.0000, 18.0],
        [0.01, 0.2100, 0.2500, 0.00, 0.3500, 0.0],
        [0.01, 0.0460, 0.0460, 0.00, 0.1000, 0.0],
        [0.01, 0.0460, 0.0460, 0.00, -0.1000, 0.0],
        [0.01, 0.0460, 0.0230, -0.08, -0.6050, 0.0],
        [0.01, 0.0230, 0.0230, 0.00, -0.6060, 0.0],
        [0.01, 0.0230, 0.0460, 0.06, -0.6050, 0.0],
    ]
)
SHEPP_LOGAN_HU_OFFSET = -1000.0
SHEPP_LOGAN_HU_SCALE = 1500.0  # gray 0 -> -1000 HU, skull gray 2 -> +2000 HU

BACKGROUND, BODY, LUNG, VESSEL, AIRWAY = 0, 1, 2, 3, 4
DEFAULT_TISSUE_HU = {"background": -1000.0, "body": 40.0, "lung": -850.0, "vessel": 50.0, "airway": -1000.0}


def pixel_grid(n: int):
    """Pixel-centre coordinates normalised so the field of view spans [-1, 1].

    Rows run top to bottom, so y decreases with row index.
    """
    c = (np.arange(n) - (n - 1) / 2.0) / (n / 2.0)
    return np.meshgrid(c, -c)


def ellipse_mask(x, y, a, b, x0, y0, phi_deg):
    phi = np.deg2rad(phi_deg)
    dx, dy = x - x0, y - y0
    u = dx * np.cos(phi) + dy * np.sin(phi)
    v = -dx * np.sin(phi) + dy * np.cos(phi)
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def shepp_logan_gray(n: int, ellipses=SHEPP_LOGAN_ELLIPSES) -> np.ndarray:
    x, y = pixel_grid(n)
    img = np.zeros((n, n))
    for val, a, b, x0, y0, phi in ellipses:
        img[ellipse_mask(x, y, a, b, x0, y0, phi)] += val
    return img


def shepp_logan(n: int, fov_mm: float = 256.0) -> Volume:
    """Shepp-Logan slice in HU (background -1000, skull +2000)."""
    if n < 16:
        raise InvariantError(f"phantom size must be >= 16, got {n}")
    hu = SHEPP_LOGAN_HU_OFFSET + SHEPP_LOGAN_HU_SCALE * shepp_logan_gray(n)
    ps = fov_mm / n
    return Volume.from_hu(hu, (ps, ps, ps))


@dataclass(frozen=True)
class PhantomSpec:
    kind: str = "lung"
    n: int = 256
    seed: int = 0
    n_vessels: int = 12
    airway_depth: int = 4
    fov_mm: float = 256.0
    hu: dict = field(default_factory=lambda: dict(DEFAULT_TISSUE_HU))

    def __post_init__(self):
        if self.kind not in ("shepp_logan", "lung"):
            raise InvariantError(f"unknown phantom kind {self.kind!r}")
        if self.n < 16:
            raise InvariantError(f"phantom size must be >= 16, got {self.n}")
        if not 0 <= self.airway_depth <= 6:
            raise InvariantError("airway_depth must be in [0, 6]")
        if self.n_vessels < 0:
            raise InvariantError("n_vessels must be >= 0")
        merged = dict(DEFAULT_TISSUE_HU)
        merged.update(self.hu)
        for name, v in merged.items():
            if not HU_MIN <= v <= HU_MAX:
                raise InvariantError(f"{name} HU {v} outside [{HU_MIN}, {HU_MAX}]")
        object.__setattr__(self, "hu", merged)


# chest layout in normalised coordinates
_BODY = (0.90, 0.70, 0.0, 0.0)
_LUNGS = ((0.27, 0.50, -0.40, 0.05), (0.27, 0.50, 0.40, 0.05))
_TRACHEA = ((0.0, 0.45), (0.0, 0.12))
_TRACHEA_WIDTH = 0.05


def _in_ellipse(p, ell, margin=0.0):
    a, b, x0, y0 = ell
    a, b = a - margin, b - margin
    if a <= 0 or b <= 0:
        return False
    return ((p[0] - x0) / a) ** 2 + ((p[1] - y0) / b) ** 2 <= 1.0


def _seg_dist(px, py, s):
    """Distance from points (px, py) to segment s = ((x0, y0), (x1, y1))."""
    (x0, y0), (x1, y1) = s
    dx, dy = x1 - x0, y1 - y0
    L2 = dx * dx + dy * dy
    t = np.clip(((px - x0) * dx + (py - y0) * dy) / L2, 0.0, 1.0) if L2 > 0 else 0.0
    return np.hypot(px - (x0 + t * dx), py - (y0 + t * dy))


def _seg_seg_dist(s1, s2, samples=24):
    t = np.linspace(0.0, 1.0, samples)
    (a0, b0), (a1, b1) = s1
    (c0, d0), (c1, d1) = s2
    d12 = _seg_dist(a0 + t * (a1 - a0), b0 + t * (b1 - b0), s2).min()
    d21 = _seg_dist(c0 + t * (c1 - c0), d0 + t * (d1 - d0), s1).min()
    return min(d12, d21)


def _airway_segments(depth, n, gen):
    """Binary airway tree as (segment, half_width, parent_index) tuples.

    Width halves per generation but never drops below 0.75 px half-width,
    so every branch stays 8-connected when rasterised.
    """
    if depth == 0:
        return []
    px = 2.0 / n
    min_half = 0.75 * px
    segs = [(_TRACHEA, max(_TRACHEA_WIDTH / 2, min_half), -1)]
    carina = _TRACHEA[1]
    frontier = []
    for lung in _LUNGS:
        end = (lung[2] + np.sign(lung[2]) * -0.10, lung[3] - 0.10)
        half = max(_TRACHEA_WIDTH / 4, min_half)
        segs.append(((carina, end), half, 0))
        frontier.append((len(segs) - 1, lung, 0.18, np.arctan2(end[1] - carina[1], end[0] - carina[0])))
    for _ in range(depth - 1):
        nxt = []
        for parent, lung, length, heading in frontier:
            (_, start), phalf, _ = segs[parent]
            half = max(phalf / 2, min_half)
            for side in (-1.0, 1.0):
                ang = heading + side * np.deg2rad(gen.uniform(25.0, 45.0))
                L = length * gen.uniform(0.65, 0.85)
                end = (start[0] + L * np.cos(ang), start[1] + L * np.sin(ang))
                if not _in_ellipse(end, lung, margin=half + 3 * px):
                    continue
                seg = (start, end)
                clear = all(
                    _seg_seg_dist(seg, s) > h + half + 2 * px
                    for i, (s, h, _) in enumerate(segs)
                    if i != parent and start not in s
                )
                if not clear:
                    continue
                segs.append((seg, half, parent))
                nxt.append((len(segs) - 1, lung, L, ang))
        frontier = nxt
    return segs


def _absorb_pockets(labels, region, keep):
    """Hand all but the ``keep`` largest components of ``region`` to the
    label that borders them most (pixels pinched off between branches)."""
    comp, k = ndimage.label(labels == region)
    if k <= keep:
        return
    sizes = np.bincount(comp.ravel())[1:]
    for idx in np.argsort(sizes)[::-1][keep:]:
        pocket = comp == idx + 1
        ring = ndimage.binary_dilation(pocket, structure=np.ones((3, 3))) & ~pocket
        labels[pocket] = np.bincount(labels[ring]).argmax()


def lung_phantom(spec: PhantomSpec) -> tuple[Volume, LabelMap]:
    """Toy axial chest slice with body, lungs, vessels and an airway tree.

    Label IDs: 0 background, 1 body, 2 lung, 3 vessel, 4 airway.
    """
    n = spec.n
    gen = RngStream(spec.seed).derive("lung_phantom").generator()
    x, y = pixel_grid(n)
    px = 2.0 / n

    labels = np.zeros((n, n), dtype=np.uint8)
    a, b, x0, y0 = _BODY
    labels[ellipse_mask(x, y, a, b, x0, y0, 0.0)] = BODY
    for a, b, x0, y0 in _LUNGS:
        labels[ellipse_mask(x, y, a, b, x0, y0, 0.0)] = LUNG

    segs = _airway_segments(spec.airway_depth, n, gen)

    disks = []
    for _ in range(spec.n_vessels):
        for _attempt in range(60):
            lung = _LUNGS[int(gen.integers(2))]
            r = max(gen.uniform(0.012, 0.03), 1.0 * px)
            c = (lung[2] + gen.uniform(-lung[0], lung[0]), lung[3] + gen.uniform(-lung[1], lung[1]))
            if not _in_ellipse(c, lung, margin=r + 3 * px):
                continue
            if any(_seg_dist(c[0], c[1], s) <= h + r + 2 * px for s, h, _ in segs):
                continue
            if any(np.hypot(c[0] - d[0], c[1] - d[1]) <= r + d[2] + 2 * px for d in disks):
                continue
            disks.append((c[0], c[1], r))
            break

    for cx, cy, r in disks:
        labels[np.hypot(x - cx, y - cy) <= r] = VESSEL
    for s, h, _ in segs:
        labels[_seg_dist(x, y, s) <= h] = AIRWAY

    _absorb_pockets(labels, BODY, keep=1)
    _absorb_pockets(labels, LUNG, keep=2)

    hu_by_label = np.array(
        [spec.hu["background"], spec.hu["body"], spec.hu["lung"], spec.hu["vessel"], spec.hu["airway"]]
    )
    hu = hu_by_label[labels]
    ps = spec.fov_mm / n
    spacing = (ps, ps, ps)
    return Volume.from_hu(hu, spacing), LabelMap(labels[None], spacing)


def make_phantom(spec: PhantomSpec):
    """Dispatch on ``spec.kind``; returns (Volume, LabelMap | None)."""
    if spec.kind == "shepp_logan":
        return shepp_logan(spec.n, spec.fov_mm), None
    return lung_phantom(spec)

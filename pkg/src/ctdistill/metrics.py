"""Image-quality and anatomical-fidelity measures.

Volumes are compared slice by slice where a metric is inherently 2-D (SSIM);
everything else pools all voxels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import HU_RANGE, LabelMap, RegionStats, Volume
from .phantom import AIRWAY, BODY, LUNG

PSNR_CAP = 99.0


class UndefinedResultError(ValueError):
    """The statistic is undefined for these inputs (e.g. zero variance)."""


def _arr(a) -> np.ndarray:
    if isinstance(a, (Volume, LabelMap)):
        a = a.data
    a = np.asarray(a)
    return a[None] if a.ndim == 2 else a


def _pair(a, b):
    a = _arr(a).astype(np.float64)
    b = _arr(b).astype(np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dims mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, data_range: float = HU_RANGE) -> float:
    a, b = _pair(a, b)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(10.0 * np.log10(data_range**2 / mse), PSNR_CAP))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2 * sigma**2))
    return g / g.sum()


def _valid_filter(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable correlation keeping only fully-overlapping positions."""
    k = g.size
    rows = sum(g[i] * img[i : img.shape[0] - k + 1 + i] for i in range(k))
    return sum(g[j] * rows[:, j : img.shape[1] - k + 1 + j] for j in range(k))


def ssim_map(a2: np.ndarray, b2: np.ndarray, window=11, sigma=1.5, k1=0.01, k2=0.03, data_range=HU_RANGE):
    if min(a2.shape) < window:
        raise ValueError(f"image {a2.shape} smaller than the {window}x{window} SSIM window")
    g = gaussian_window(window, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a = _valid_filter(a2, g)
    mu_b = _valid_filter(b2, g)
    var_a = _valid_filter(a2 * a2, g) - mu_a * mu_a
    var_b = _valid_filter(b2 * b2, g) - mu_b * mu_b
    cov = _valid_filter(a2 * b2, g) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, window=11, sigma=1.5, k1=0.01, k2=0.03, data_range=HU_RANGE) -> float:
    """Mean single-scale SSIM over valid window positions, averaged over slices."""
    a, b = _pair(a, b)
    vals = [ssim_map(sa, sb, window, sigma, k1, k2, data_range).mean() for sa, sb in zip(a, b)]
    return float(np.mean(vals))


def l_pp(a, b) -> float:
    """Mean absolute voxel difference (HU)."""
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def l_pp_sum(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.sum(np.abs(a - b)))


def region_stats(x, labels) -> list[RegionStats]:
    """Count, mean and std of HU for every non-empty region ID >= 1."""
    x = _arr(x).astype(np.float64)
    lab = _arr(labels)
    if x.shape != lab.shape:
        raise ValueError(f"dims mismatch: volume {x.shape} vs labels {lab.shape}")
    out = []
    for rid in np.unique(lab):
        if rid == 0:
            continue
        vals = x[lab == rid]
        out.append(RegionStats(int(rid), int(vals.size), float(vals.mean()), float(vals.std())))
    return out


def l_hu(a, b, labels) -> float:
    """Sum over labelled regions of |mean_c(a) - mean_c(b)|."""
    a, b = _pair(a, b)
    ma = {r.region_id: r.mean_hu for r in region_stats(a, labels)}
    mb = {r.region_id: r.mean_hu for r in region_stats(b, labels)}
    return float(sum(abs(ma[c] - mb[c]) for c in sorted(ma)))


def threshold_segment(x) -> np.ndarray:
    """Rule-based labels with the phantom's IDs (1 body, 2 lung, 4 airway).

    Lungs are the (at most two) largest HU < -400 components that do not
    touch the image border; airway is HU < -950 inside them; body is
    HU > -200 elsewhere.
    """
    x = _arr(x).astype(np.float64)
    out = np.zeros(x.shape, dtype=np.uint8)
    for z, img in enumerate(x):
        lab = out[z]
        lab[img > -200] = BODY
        comp, k = ndimage.label(img < -400)
        if k:
            border = np.unique(np.concatenate([comp[0], comp[-1], comp[:, 0], comp[:, -1]]))
            sizes = np.bincount(comp.ravel(), minlength=k + 1)
            sizes[border] = 0
            sizes[0] = 0
            keep = [i for i in np.argsort(sizes)[::-1][:2] if sizes[i] > 0]
            lung = np.isin(comp, keep)
            lab[lung] = LUNG
            lab[lung & (img < -950)] = AIRWAY
    return out


def dice(a_mask, b_mask) -> float:
    a_mask = np.asarray(a_mask, bool)
    b_mask = np.asarray(b_mask, bool)
    total = a_mask.sum() + b_mask.sum()
    if total == 0:
        return 1.0
    return float(2.0 * np.logical_and(a_mask, b_mask).sum() / total)


@dataclass
class SegAgreement:
    dice: dict = field(default_factory=dict)
    label_agreement: float = 1.0


def seg_agreement(a, b, segmenter=threshold_segment, region_ids=(BODY, LUNG, AIRWAY)) -> SegAgreement:
    """Dice per region and voxel label agreement between SEG(a) and SEG(b).

    ``segmenter`` is a callable on HU arrays, or a pair of precomputed
    label maps ``(labels_a, labels_b)``.
    """
    if isinstance(segmenter, tuple):
        la, lb = (_arr(s) for s in segmenter)
    else:
        la, lb = _arr(segmenter(_arr(a))), _arr(segmenter(_arr(b)))
    if la.shape != lb.shape or la.shape != _arr(a).shape:
        raise ValueError(f"segmentation dims mismatch: {la.shape} vs {lb.shape} vs {_arr(a).shape}")
    d = {int(r): dice(la == r, lb == r) for r in region_ids}
    return SegAgreement(d, float(np.mean(la == lb)))


def pearson_r(pairs) -> float:
    p = np.asarray(pairs, dtype=np.float64)
    if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] < 3:
        raise UndefinedResultError(f"pearson_r needs at least 3 (truth, enhanced) pairs, got shape {p.shape}")
    x = p[:, 0] - p[:, 0].mean()
    y = p[:, 1] - p[:, 1].mean()
    sxx, syy = np.dot(x, x), np.dot(y, y)
    if sxx == 0 or syy == 0:
        raise UndefinedResultError("pearson_r undefined: zero variance")
    return float(np.clip(np.dot(x, y) / np.sqrt(sxx * syy), -1.0, 1.0))


@dataclass
class CaseMetrics:
    ssim: float
    psnr: float
    l_pp: float
    l_pp_sum: float
    l_hu: float
    dice: dict
    label_agreement: float


def case_metrics(x_hat, x, labels=None, segmenter=threshold_segment) -> CaseMetrics:
    """Every per-case number of an evaluation row, ``x`` being ground truth."""
    lab = labels if labels is not None else segmenter(_arr(x))
    seg = seg_agreement(x_hat, x, segmenter)
    return CaseMetrics(
        ssim=ssim(x_hat, x),
        psnr=psnr(x_hat, x),
        l_pp=l_pp(x_hat, x),
        l_pp_sum=l_pp_sum(x_hat, x),
        l_hu=l_hu(x_hat, x, lab),
        dice=seg.dice,
        label_agreement=seg.label_agreement,
    )

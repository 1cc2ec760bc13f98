"""Enhancers mapping a degraded slice stack to an estimate of the clean one."""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core import Geometry, InvariantError, Sinogram, Volume, hu_to_mu, mu_to_hu
from .projector import backproject, radon_forward

ENHANCER_KINDS = ("identity", "nlm", "tv", "sirt", "external")


class EnhancerError(RuntimeError):
    pass


class DivergenceError(EnhancerError):
    pass


@dataclass(frozen=True)
class EnhancerSpec:
    kind: str = "identity"
    name: str | None = None
    patch_radius: int = 2
    search_radius: int = 5
    h: float = 40.0
    sigma: float = 0.0
    lam: float = 20.0
    tv_iters: int = 100
    sirt_iters: int = 50
    relaxation: float = 1.0
    command: str | None = None
    workdir: str | None = None
    timeout: float | None = None

    def __post_init__(self):
        if self.kind not in ENHANCER_KINDS:
            raise InvariantError(f"unknown enhancer {self.kind!r}")
        if self.patch_radius < 0 or self.search_radius < 0:
            raise InvariantError("NLM radii must be >= 0")
        if self.h < 0 or self.sigma < 0:
            raise InvariantError("NLM h and sigma must be >= 0")
        if self.lam <= 0:
            raise InvariantError(f"TV lambda must be > 0, got {self.lam}")
        if self.tv_iters < 0 or self.sirt_iters < 0:
            raise InvariantError("iteration counts must be >= 0")
        if not 0 < self.relaxation < 2:
            raise InvariantError(f"SIRT relaxation must be in (0, 2), got {self.relaxation}")
        if self.kind == "external" and not self.command:
            raise InvariantError("external enhancer needs a command")

    @property
    def label(self) -> str:
        return self.name or self.kind


# -- non-local means ---------------------------------------------------------


def nlm_slice(img: np.ndarray, patch_radius=2, search_radius=5, h=40.0, sigma=0.0) -> np.ndarray:
    """Pixelwise non-local means with mirror padding.

    Weight of a candidate is ``exp(-max(d2 - 2 sigma^2, 0) / h^2)`` with
    ``d2`` the mean squared difference of the two patches. ``h == 0``
    keeps the input.
    """
    img = np.asarray(img, dtype=np.float64)
    if h == 0:
        return img.copy()
    p, s = patch_radius, search_radius
    ny, nx = img.shape
    P = np.pad(img, p + s, mode="reflect" if min(ny, nx) > p + s else "symmetric")
    Q = P[s : s + ny + 2 * p, s : s + nx + 2 * p]
    size = 2 * p + 1
    num = np.zeros_like(img)
    den = np.zeros_like(img)
    h2 = h * h
    floor = 2.0 * sigma * sigma
    for dy in range(-s, s + 1):
        for dx in range(-s, s + 1):
            R = P[s + dy : s + dy + ny + 2 * p, s + dx : s + dx + nx + 2 * p]
            d2 = ndimage.uniform_filter((Q - R) ** 2, size=size, mode="constant")[p : p + ny, p : p + nx]
            w = np.exp(-np.maximum(d2 - floor, 0.0) / h2)
            num += w * R[p : p + ny, p : p + nx]
            den += w
    return num / den


def enhance_nlm(x: Volume, spec: EnhancerSpec) -> Volume:
    out = [nlm_slice(img, spec.patch_radius, spec.search_radius, spec.h, spec.sigma) for img in x.slices()]
    return x.replace(np.stack(out))


# -- total variation -----------------------------------------------------------


def _grad(u):
    gx = np.zeros_like(u)
    gy = np.zeros_like(u)
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    gy[:-1, :] = u[1:, :] - u[:-1, :]
    return gx, gy


def _div(px, py):
    """Negative adjoint of :func:`_grad`."""
    d = np.zeros_like(px)
    d[:, 0] = px[:, 0]
    d[:, 1:-1] = px[:, 1:-1] - px[:, :-2]
    d[:, -1] = -px[:, -2]
    d[0, :] += py[0, :]
    d[1:-1, :] += py[1:-1, :] - py[:-2, :]
    d[-1, :] += -py[-2, :]
    return d


def tv_norm(u) -> float:
    gx, gy = _grad(u)
    return float(np.sqrt(gx * gx + gy * gy).sum())


def tv_objective(u, f, lam) -> float:
    return 0.5 * float(((u - f) ** 2).sum()) + lam * tv_norm(u)


def tv_denoise(f: np.ndarray, lam: float, iters: int = 100, tau: float = 0.125):
    """Minimise 0.5 ||u - f||^2 + lam TV(u) by Chambolle's dual projection.

    Returns ``(u, objective_history)``; the history has ``iters + 1``
    entries, the first being the objective at ``u = f``.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.shape[0] < 2 or f.shape[1] < 2:
        return f.copy(), [0.0]
    px = np.zeros_like(f)
    py = np.zeros_like(f)
    u = f.copy()
    history = [tv_objective(u, f, lam)]
    for _ in range(iters):
        gx, gy = _grad(_div(px, py) - f / lam)
        norm = np.sqrt(gx * gx + gy * gy)
        px = (px + tau * gx) / (1.0 + tau * norm)
        py = (py + tau * gy) / (1.0 + tau * norm)
        u = f - lam * _div(px, py)
        history.append(tv_objective(u, f, lam))
    return u, history


def enhance_tv(x: Volume, spec: EnhancerSpec) -> Volume:
    return x.replace(np.stack([tv_denoise(img, spec.lam, spec.tv_iters)[0] for img in x.slices()]))


# -- SIRT ---------------------------------------------------------------------


def sirt(s: Sinogram, geom: Geometry, iters=50, relaxation=1.0, x0=None):
    """Simultaneous iterative reconstruction in attenuation units.

    ``x <- x + w C A^T R (p - A x)`` with R, C the inverse row and column
    sums of the projector. Returns ``(mu, residual_norms)``; residuals start
    at the initial guess. Raises :class:`DivergenceError` when the residual
    grows three iterations in a row.
    """
    n = geom.image_n
    ones = np.ones((n, n))
    row = radon_forward(ones, geom, s.angles).data
    col = backproject(Sinogram(np.ones_like(s.data), s.angles, s.bin_spacing), geom)
    R = np.divide(1.0, row, out=np.zeros_like(row), where=row > 0)
    C = np.divide(1.0, col, out=np.zeros_like(col), where=col > 0)
    x = np.zeros((n, n)) if x0 is None else np.array(x0, dtype=np.float64)
    resid = s.data - radon_forward(x, geom, s.angles).data
    history = [float(np.linalg.norm(resid))]
    growth = 0
    for _ in range(iters):
        x = x + relaxation * C * backproject(Sinogram(R * resid, s.angles, s.bin_spacing), geom)
        resid = s.data - radon_forward(x, geom, s.angles).data
        history.append(float(np.linalg.norm(resid)))
        growth = growth + 1 if history[-1] > history[-2] else 0
        if growth >= 3:
            raise DivergenceError(f"SIRT residual grew 3 iterations in a row with relaxation omega={relaxation}")
    return x, history


def enhance_sirt(s: Sinogram, spec: EnhancerSpec, geom: Geometry) -> Volume:
    mu, _ = sirt(s, geom, spec.sirt_iters, spec.relaxation)
    ps = geom.pixel_size
    return Volume.from_hu(mu_to_hu(mu, geom.mu_water), (ps, ps, ps))


def enhance_sirt_volume(x: Volume, spec: EnhancerSpec, geom: Geometry, sinos=None) -> Volume:
    """SIRT per slice from measured sinograms, or from re-projections of ``x``."""
    if sinos is None:
        sinos = [radon_forward(hu_to_mu(img, geom.mu_water), geom) for img in x.slices()]
    out = [mu_to_hu(sirt(s, geom, spec.sirt_iters, spec.relaxation)[0], geom.mu_water) for s in sinos]
    return x.replace(np.stack(out))


# -- external -------------------------------------------------------------------


def enhance_external(x: Volume, spec: EnhancerSpec, case_dir=None) -> Volume:
    """Run an external enhancer through CTK1 files.

    ``x`` is written to ``<case_dir>/in.ctk``; the command (``{in}`` and
    ``{out}`` placeholders) must write ``<case_dir>/out.ctk``.
    """
    from .fileio import read_volume, write_volume

    if case_dir is None:
        base = Path(spec.workdir) if spec.workdir else None
        if base:
            base.mkdir(parents=True, exist_ok=True)
        case_dir = tempfile.mkdtemp(prefix="case_", dir=base)
    case_dir = Path(case_dir)
    case_dir.mkdir(parents=True, exist_ok=True)
    src, dst = case_dir / "in.ctk", case_dir / "out.ctk"
    if dst.exists():
        dst.unlink()
    write_volume(x, src)
    argv = [a.replace("{in}", str(src)).replace("{out}", str(dst)) for a in shlex.split(spec.command)]
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=spec.timeout)
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise EnhancerError(f"external enhancer failed to run: {exc}") from exc
    if proc.returncode != 0:
        raise EnhancerError(f"external enhancer exited with status {proc.returncode}: {proc.stderr.strip()[:200]}")
    if not dst.exists():
        raise EnhancerError(f"external enhancer did not write {dst}")
    try:
        y = read_volume(dst)
    except ValueError as exc:
        raise EnhancerError(f"external enhancer output invalid: {exc}") from exc
    if not isinstance(y, Volume):
        raise EnhancerError("external enhancer returned a label map, expected a volume")
    if y.data.shape != x.data.shape:
        raise EnhancerError(f"dims mismatch: input {x.dims}, external output {y.dims}")
    return y


def enhance(x: Volume, spec: EnhancerSpec, geom: Geometry | None = None, sinos=None, case_dir=None) -> Volume:
    if spec.kind == "identity":
        return x
    if spec.kind == "nlm":
        return enhance_nlm(x, spec)
    if spec.kind == "tv":
        return enhance_tv(x, spec)
    if spec.kind == "sirt":
        return enhance_sirt_volume(x, spec, geom or Geometry.for_volume(x), sinos)
    return enhance_external(x, spec, case_dir)

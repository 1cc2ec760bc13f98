"""Apply each degradation to one lung phantom and score it against the clean slice."""

from ctdistill import DegradeSpec, FbpFilter, Geometry, PhantomSpec, degrade, lung_phantom
from ctdistill.metrics import psnr, ssim

vol, _ = lung_phantom(PhantomSpec(n=256, seed=2))
g = Geometry.for_volume(vol)

specs = [
    DegradeSpec("sparse_view", k=4),
    DegradeSpec("sparse_view", k=8),
    DegradeSpec("low_dose", alpha=2000),
    DegradeSpec("low_dose", alpha=200),
    DegradeSpec("low_dose", alpha=20),
    DegradeSpec("conventional"),
    DegradeSpec("mixed"),
]
for spec in specs:
    out = degrade(vol, spec, g, FbpFilter("ramlak"), 7)
    tag = {"sparse_view": f"k={spec.k}", "low_dose": f"alpha={spec.alpha:g}"}.get(spec.kind, "")
    print(f"{spec.kind:12s} {tag:12s} PSNR {psnr(out, vol):6.2f} dB  "
          f"SSIM {100 * ssim(out, vol):5.1f}")

"""Build both phantoms, project them and reconstruct with FBP.

Shows how reconstruction quality grows with the number of views.
"""

from ctdistill import FbpFilter, Geometry, PhantomSpec, fbp, lung_phantom, shepp_logan, sinogram_of
from ctdistill.metrics import psnr

for name, vol in (("shepp_logan", shepp_logan(256)), ("lung", lung_phantom(PhantomSpec(n=256, seed=1))[0])):
    print(name)
    for n_angles in (90, 180, 360, 720):
        g = Geometry.for_volume(vol, n_angles=n_angles)
        rec = fbp(sinogram_of(vol, g), FbpFilter("ramlak"), g)
        print(f"  {n_angles:4d} views  PSNR {psnr(rec, vol):6.2f} dB")

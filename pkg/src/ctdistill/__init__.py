"""CT degradation-to-enhancement benchmark toolkit."""

__version__ = "0.1.0"

from .core import Geometry, LabelMap, RngStream, Sinogram, Volume, hu_to_mu, mu_to_hu  # noqa: E402
from .degrade import DegradeSpec, degrade  # noqa: E402
from .enhance import EnhancerSpec, enhance  # noqa: E402
from .fileio import read_volume, write_volume  # noqa: E402
from .phantom import PhantomSpec, lung_phantom, shepp_logan  # noqa: E402
from .projector import FbpFilter, backproject, fbp, radon_forward, sinogram_of  # noqa: E402

__all__ = [
    "DegradeSpec", "EnhancerSpec", "FbpFilter", "Geometry", "LabelMap", "PhantomSpec", "RngStream", "Sinogram",
    "Volume", "backproject", "degrade", "enhance", "fbp", "hu_to_mu", "lung_phantom", "mu_to_hu", "radon_forward",
    "read_volume", "shepp_logan", "sinogram_of", "write_volume",
]

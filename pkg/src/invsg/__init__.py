"""invsg: inverse rendering with spherical-Gaussian lighting on analytic SDF scenes.

Pipeline stages (mirrored by the CLI):
  fit-env    fit an SG environment to an HDR probe
  render-ref path-traced reference images + masks
  bake-vis   train the continuous visibility field
  bake-ind   bake indirect incoming light into a per-point SG field
  render-sg  fast SG forward rendering
  invert     joint SVBRDF + environment recovery
  relight    render recovered assets under a new environment
  eval       image metrics against ground truth
"""

from .backend import USING_NUMBA, backend_name
from .sg import SphericalGaussian, SgMixture, sg_eval, sg_integral, sg_product, sg_inner_product, clamped_cosine_sg

__version__ = "0.1.0"

__all__ = [
    "USING_NUMBA",
    "backend_name",
    "SphericalGaussian",
    "SgMixture",
    "sg_eval",
    "sg_integral",
    "sg_product",
    "sg_inner_product",
    "clamped_cosine_sg",
    "__version__",
]

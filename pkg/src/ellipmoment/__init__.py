"""Joint moments of elliptical distributions and their numerical verification."""

__version__ = "0.1.0"

from .elliptical import EllipticalDistribution, associated_distributions, pdf, sample
from .generators import GeneratorFamily, normalizing_constants, parse_family
from .moments import (
    Budget,
    MomentEstimate,
    normal_power_moment,
    normal_product_moment,
    product_moment,
    stein_first_moment,
    x1sq_moment_thm1,
    x1sq_moment_thm2,
)
from .smooth import SmoothFunction

__all__ = [
    "Budget",
    "EllipticalDistribution",
    "GeneratorFamily",
    "MomentEstimate",
    "SmoothFunction",
    "associated_distributions",
    "normal_power_moment",
    "normal_product_moment",
    "normalizing_constants",
    "parse_family",
    "pdf",
    "product_moment",
    "sample",
    "stein_first_moment",
    "x1sq_moment_thm1",
    "x1sq_moment_thm2",
]

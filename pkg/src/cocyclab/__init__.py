"""Numerical laboratory for matrix cocycles over subshifts of finite type.

Lyapunov spectra along typical orbits and periodic orbits, Oseledets frames,
Lyapunov norms, periodic approximation of exponents, and applications
(uniform hyperbolicity, Sacker-Sell spectra, spectral-radius brackets,
Ulam discretizations of transfer operators).
"""

from .cocycle import CocycleGenerator, derive_seed, lambda_mu_estimate, product
from .symbolic import (BaseMeasure, PeriodicPoint, ShiftSpace, SymbolSequence, close_orbit,
                       enumerate_periodic, sample_orbit)
from .oseledets import (LyapunovSpectrum, OseledetsFrame, lyapunov_spectrum, periodic_exponents,
                        periodic_spectrum, singular_exponents)
from .lyapnorm import LyapunovNormParams, full_norm, k_delta, level_norm, tail_norm
from .periodic_approx import (benchmark_generator, reference_spectrum, run_main_experiment,
                              semicontinuity_check)
from .applications import (certify_uniform_hyperbolicity, conjugacy_invariance_check,
                           growth_vs_periodic_radius, sacker_sell_estimate)
from .transferop import (PiecewiseExpandingMap, build_ulam, exceptional_spectrum_ulam,
                         lasota_yorke_check, transfer_cocycle)

__version__ = "0.1.0"

__all__ = [
    "BaseMeasure", "CocycleGenerator", "LyapunovNormParams", "LyapunovSpectrum",
    "OseledetsFrame", "PeriodicPoint", "PiecewiseExpandingMap", "ShiftSpace", "SymbolSequence",
    "benchmark_generator", "build_ulam", "certify_uniform_hyperbolicity", "close_orbit",
    "conjugacy_invariance_check", "derive_seed", "enumerate_periodic",
    "exceptional_spectrum_ulam", "full_norm", "growth_vs_periodic_radius", "k_delta",
    "lambda_mu_estimate", "lasota_yorke_check", "level_norm", "lyapunov_spectrum",
    "periodic_exponents", "periodic_spectrum", "product", "reference_spectrum",
    "run_main_experiment", "sacker_sell_estimate", "sample_orbit", "semicontinuity_check",
    "singular_exponents", "tail_norm", "transfer_cocycle",
]

"""Berry-Esseen experiments for Hilbert-space valued stationary processes."""
from .berry_esseen import (DeltaEstimate, RateFit, delta_vs_gaussian, dkw_halfwidth,
                           empirical_delta, exact_delta_1d, rate_fit, sigma_n_exact,
                           theoretical_bound)
from .coeffs import (CoeffSeq, SlowRateSpec, check_summability, complement_operator,
                     dependence_bound, from_family, partial_operator, slow_rate_coeffs)
from .gaussian import (BallCDF, LimitSpec, assumption_eigencheck, block_covariance_m,
                       gaussian_ball_cdf, limit_covariance_linear, longrun_covariance,
                       sample_gaussian_norm)
from .innovations import InnovationDist, sample_innovation
from .linalg import (CovOperator, adjoint, apply, compose, eig_psd, hs_norm, inner,
                     operator_norm, singular_values, trace)
from .processes import (ArchSpec, LinearSpec, MDependentSpec, PathSample,
                        TwoDependentSpec, WindowGenerator, bnd_decompose, coupled_pair,
                        estimate_theta_p, simulate_arch, simulate_linear_path,
                        simulate_m_dependent, simulate_path, simulate_two_dependent)
from .rng import StreamId, stream
from .sampling import sample_partial_sums

__version__ = "0.1.0"

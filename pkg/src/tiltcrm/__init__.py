"""Normalized tilted completely random measures.

Prior and posterior sampling, predictive urn schemes and exact block-count
distributions for random probability measures obtained by normalizing a
completely random measure tilted by ``h(x) = exp(-gamma x) x**(-q)``.
"""

from .core_math import (DEFAULT_QUADRATURE, QuadratureConfig, integrate_log_density,
                        log_gamma, log_sum_exp, numeric_inverse_cdf_sampler)
from .exact import (SizeDistribution, StirlingTable, brute_force_size_distribution,
                    exact_size_distribution, stirling_table)
from .exceptions import DomainError, NumericError, TiltCRMError, UsageError, ValidationError
from .harness import (RunConfig, RunResult, Summary, run, run_a1, run_a2, run_a3, run_a4,
                      run_replicates, summarize, tv_distance, two_sample_chi2)
from .latent import (LatentU, log_density_u, log_density_u_tilde, sample_u, sample_u_generic,
                     sample_u_tilde, sample_u_tilde_gd, sample_u_tilde_ngg, sample_u_tilde_pd)
from .partition import (Partition, UrnWeights, add_item, conditional_urn_weights,
                        gibbs_full_conditional_weights, log_eppf_conditional,
                        log_eppf_marginal, log_joint_partition_u, remove_item,
                        unconditional_urn_weights)
from .process import (GeneralizedDirichlet, GeneralizedGamma, NamedPreset, TiltedSpec,
                      expand_preset, log_kappa, log_phi, log_psi0, log_tau, validate)

from .posterior import (JumpSample, PosteriorDescription, jump_law, log_jump_density,
                        posterior_description, sample_jumps)

__version__ = "0.1.0"

"""Stochastic imitation/replicator dynamics on products of simplices.

Population games with payoff shocks: model fields for every noise mechanism
(direct shocks, aggregate growth shocks, score noise, Stratonovich
perturbations, matrix-entry shocks, random mutations, cumulative-payoff
dynamics), a deterministic seeded Euler-Maruyama engine with compiled kernels,
and the analyses that turn ensembles into extinction/stability statements.
"""

__version__ = "0.1.0"

from .analysis import (cross_entropy_gap, detect_extinction,
                       hitting_probability_closed_form,
                       hitting_probability_mc, kl_divergence,
                       martingale_check, quadratic_decay_fit,
                       stability_probability, survival_probability,
                       wilson_interval)
from .backend import HAVE_COMPILED, active_name
from .engine import (EnsembleResult, IntegratorConfig, Trajectory, integrate,
                     integrate_pathwise_vs_closed_form,
                     integrate_second_order_integral_form, simulate_ensemble)
from .errors import (ConfigError, DomainError, KindError, NumericsError,
                     ShapeError, ShockrepError, UnsupportedError)
from .fields import (DynamicsField, aggregate_shocks_field,
                     bimatrix_shock_field, exponential_learning_field,
                     field_for, log_share_field, pure_noise_closed_form,
                     random_mutation_field, replicator_field,
                     second_order_field, stochastic_replicator_field,
                     stratonovich_field)
from .games import (Dominance, Equilibrium, GameSpec, MatrixEntryNoise,
                    MixedStrategy, MutationNoise, StrategyNoise,
                    adjust_bimatrix, adjust_imhof, adjust_mutation, adjust_srd,
                    average_payoff, check_dominance, classify_equilibrium,
                    constant_game, custom_game, halton_states, make_state,
                    margin_conditions, matrix_game, multilinear_game,
                    pure_profiles, validate_state, vertex_state)
from .rng import NoiseStream, coarsen_increments, path_normals
from .scenarios import (RunManifest, load_config, load_preset, parse_scenario,
                        preset_names, run_scenario)

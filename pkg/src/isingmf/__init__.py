"""Mean-field free energies of Ising models and binary Markov random fields.

Exact enumeration oracles, mean-field solvers, weak-regularity cut
decompositions, a grid-plus-max-entropy approximation with an explicit error
budget, a ferromagnetic blow-up sampler and closed-form structural bounds.
Hot loops are compiled with numba unless ``ISINGMF_DISABLE_NUMBA=1``.
"""
from ._accel import USE_NUMBA
from .errors import *  # noqa: F401,F403
from .models import (
    FreeEnergyReport,
    IsingModel,
    Mrf,
    ProductDistribution,
    all_states,
    binary_entropy,
    block_copies,
    curie_weiss,
    degree_norms,
    energy,
    exact_free_energy,
    exact_kl_to_boltzmann,
    frobenius_norm,
    generate,
    load_model,
    mf_objective,
    model_from_json,
    model_to_json,
    random_gaussian,
    random_mrf,
    save_model,
    uniform_graph,
    uniform_hypergraph,
    validate,
)
from .meanfield import (
    concave_solve,
    dobrushin_check,
    frank_wolfe_gap,
    gradient_ascent,
    mean_field_map,
    mf_gradient,
    mf_hessian_extremal_eigenvalue,
    mf_iterate,
    multistart_ascent,
)
from .regularity import (
    AtomPartition,
    CutArray,
    CutDecomposition,
    CutMatrix,
    cut_energy,
    fk_decompose,
    inf_to_one_norm_exact,
    materialize,
    refine_atoms,
    slice_array,
    tensor_decompose,
    tensor_inf_to_one_exact,
)
from .feapprox import (
    EntropyProgram,
    GridSpec,
    Infeasible,
    approx_free_energy,
    approx_free_energy_mrf,
    grid,
    lipschitz_gap_bound,
    solve_entropy_program,
    z_star_oracle,
)
from .ferro import BlowUp, blow_up, ferro_optimize, glauber_sample, glauber_transition_matrix
from .bounds import (
    SpectralProfile,
    epsilon_tradeoff_bound,
    low_threshold_rank_bound,
    mean_field_error_bound,
    mrf_error_bound,
    spectral_profile,
    threshold_rank,
)

__version__ = "0.1.0"

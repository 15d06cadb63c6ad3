//! Non-interactive simulation of joint distributions from correlated Gaussian
//! pairs.
//!
//! The crate covers Hermite expansions and the Ornstein–Uhlenbeck semigroup
//! ([`gaussian`]), projection and rounding onto the simplex ([`simplex`]), spectrum
//! matching by iterated projection ([`boost`]), Bernstein approximation
//! ([`bernstein`]), the end-to-end smoothing pipeline ([`pipeline`]), exact
//! two-outcome feasibility ([`feasibility`]) and Monte-Carlo correlation tables
//! ([`correlation`]).

pub mod bernstein;
pub mod boost;
pub mod correlation;
pub mod error;
pub mod feasibility;
pub mod gaussian;
pub mod json;
pub mod numeric;
pub mod pipeline;
pub mod rng;
pub mod simplex;

pub use bernstein::{
    bernstein_weights, bp_eval, bp_fit, bp_on_ball, smooth_poly, BernsteinApprox, Domain, ProjBernstein, SmoothPoly,
    SmoothPolyConfig, SmoothPolyInfo,
};
pub use boost::{boost_match, build_fsm, potential, run_boost, Basis, BoostMatch, BoostResult, Fsm};
pub use correlation::{
    estimate_table, estimate_tables, sign_agree_check, tail_check, tail_check_poly, tv_distance, JointTable,
};
pub use error::{NisimError, Result};
pub use feasibility::{
    binorm_orthant, corr_bounds, decide_k2, max_correlation, BinaryTarget, FiniteJoint, MaxCorrelation, Strategy,
    Verdict,
};
pub use gaussian::{
    expand, noise_apply_fn, Codomain, Design, FunctionSpec, GaussianPairSampler, HermiteExpansion, HermitePoly, Method,
    MultiIndex, VectorFunction,
};
pub use pipeline::{smooth, SmoothConfig, SmoothOutput, SmoothingReport};
pub use simplex::{
    balance_ppf, grid_round, part_round, ppf_eval, proj_simplex, round_to_simplex, GridMode, PpfMixture, PpfSpec,
};

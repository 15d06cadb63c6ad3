//! The probability simplex: projection, plurality functions and rounding.

pub mod ppf;
pub mod proj;
pub mod rounding;

pub use ppf::{balance_ppf, ppf_eval, PolyRef, PpfMixture, PpfSpec};
pub use proj::{argmax_vec, l1_dist_to_simplex, proj_simplex, proj_simplex_into};
pub use rounding::{grid_round, part_round, round_to_simplex, GridMode, RoundReport};

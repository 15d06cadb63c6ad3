//! Hermite analysis on Gaussian space.

pub mod expansion;
pub mod function;
pub mod hermite;
pub mod noise;
pub mod quadrature;
pub mod sampler;

pub use expansion::{expand, expand_on, HermiteExpansion, HermitePoly};
pub use function::{Codomain, Form, FunctionSpec, VectorFunction};
pub use hermite::{hermite_1d, hermite_table, MultiIndex};
pub use noise::noise_apply_fn;
pub use quadrature::{Design, Method};
pub use sampler::GaussianPairSampler;

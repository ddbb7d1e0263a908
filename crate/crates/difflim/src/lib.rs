//! Monte Carlo laboratory for the long-horizon behavior of one-dimensional
//! diffusions `d xi_T = a_T(xi_T) dt + dW_T` whose drift depends on the
//! parameter `T` in a nonregular way (oscillating at wavelength `1/sqrt(T)`,
//! concentrating like a delta sequence, or degenerating pointwise).
//!
//! The crate simulates the finite-parameter processes together with their
//! additive and mixed functionals
//! `beta1 = int g_T(xi) ds`, `beta2 = int g_T(xi) dW`,
//! `beta = int g_T(xi) dxi`, and `I_T = F_T(xi(t)) + beta2(t)`,
//! constructs the predicted limit diffusions, and measures the
//! distributional distance between finite-parameter laws and limit laws as
//! the parameter grows.
//!
//! Module map:
//! - [`scenarios`]: coefficient families, limit models, and the registry of
//!   ready-made scenarios with closed-form oracles.
//! - [`scale`]: scale-function tables `f_T' = exp(-2 int a_T)` and the
//!   sup/integral condition checkers driving the convergence claims.
//! - [`engine`]: Euler--Maruyama paths of the finite-parameter process with
//!   exact pathwise functional accumulation and parallel ensembles.
//! - [`limits`]: the limit diffusion, exact squared-Bessel sampling, and the
//!   limit functionals.
//! - [`stats`]: empirical laws, KS/Wasserstein distances, occupation times,
//!   and the ladder trend test.
//! - [`runner`]: experiment configs, orchestration, and report emission.

pub mod engine;
pub mod limits;
pub mod quad;
pub mod rng;
pub mod runner;
pub mod scale;
pub mod scenarios;
pub mod stats;

//! Transductive semi-supervised classification by layered Ising ground
//! states.
//!
//! A partially labeled point cloud becomes a coupling graph: pairwise
//! similarities (learned by Boltzmann maximum likelihood on the labeled
//! subset) are masked to each point's nearest neighbors and used as
//! ferromagnetic couplings. Labels are Gray-coded along the shortest
//! barycenter path; each code bit yields one independent Ising layer whose
//! labeled spins are clamped. Solving every layer (simulated annealing,
//! exact enumeration, or path-integral Monte Carlo) and majority-voting the
//! reads assigns a code, hence a label, to every unlabeled point.
//!
//! Modules follow the pipeline: [`dataset`] -> [`encoding`] ->
//! [`similarity`] -> [`learning`] -> [`annealer`] -> [`pipeline`], with
//! [`oracle`] housing the solver-vs-exact verification suite.

pub mod annealer;
pub mod dataset;
pub mod encoding;
pub mod error;
pub mod learning;
pub mod matrix;
pub mod oracle;
pub mod par;
pub mod pipeline;
pub mod similarity;

pub use error::{Error, Result};

//! Approximation of Markov operators on `C[0,1]` by averages of eigenvalue maps, with
//! exact preservation of boundary-ratio subspaces `{f : f(0) = α f(1)}`.

pub mod certify;
pub mod construct;
pub mod error;
pub mod interval;
pub mod io;
pub mod markov;
pub mod relations;
pub mod subspace;

pub use error::{Error, Result};

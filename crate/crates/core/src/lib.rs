pub mod bounds;
pub mod cli;
pub mod error;
pub mod graph;
pub mod harmonic;
pub mod laplacian;
pub mod markov;
pub mod numeric;
pub mod transmutation;

pub use error::{Error, Result};
pub use graph::{Ball, WeightedGraph};
pub use markov::{KernelForm, KernelMatrix, MarkovOperator};

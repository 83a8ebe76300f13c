//! Continuous spiking graph neural networks.
//!
//! This crate couples leaky integrate-and-fire spiking dynamics with
//! continuous graph ODEs for semi-supervised node classification. The two
//! processes run on separate time axes: at every outer integration step a
//! spiking population encodes the current hidden state over a latency
//! window, its train is summarized into a differentiable spike
//! representation, and the graph ODE advances one step driven by that
//! representation. Training differentiates the representation limit maps
//! instead of individual spikes, which keeps gradients exact, bounded, and
//! cheap to verify by finite differences.
//!
//! Module map:
//!
//! * [`numerics`] — dense matrices, counter-based RNG, matrix exponentials.
//! * [`graphio`] — citation-format loaders, adjacency normalization,
//!   homophily, synthetic graphs.
//! * [`snn`] — first/second-order neuron dynamics and spike representations.
//! * [`cgnn`] — the first-order analytic graph ODE and the oscillator
//!   scheme.
//! * [`model`] — the coupled models, order variants, operation accounting.
//! * [`training`] — losses, reverse sweep, finite differences, gradient
//!   bounds, Adam, the training loop.
//! * [`verify`] — the verification batteries run by `cosgnn verify`.
//!
//! The long-form guide lives in `book/`; its code listings compile and run
//! as doc-tests of this crate.

pub mod cgnn;
pub mod error;
pub mod graphio;
pub mod model;
pub mod numerics;
pub mod snn;
pub mod training;
pub mod verify;

pub use error::{Error, Result};

// Book chapters double as doc-tests so the guide can never drift from the
// API. Each chapter markdown is attached to an empty module; `cargo test
// --doc` executes every fenced Rust block.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/spiking-neurons.md")]
    mod spiking_neurons {}
    #[doc = include_str!("../../../book/src/representations.md")]
    mod representations {}
    #[doc = include_str!("../../../book/src/graph-dynamics.md")]
    mod graph_dynamics {}
    #[doc = include_str!("../../../book/src/coupled-model.md")]
    mod coupled_model {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
}

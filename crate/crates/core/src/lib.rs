//! Explicit ReLU network constructions for GAN distribution-estimation rates,
//! together with the metrics and experiments that check their claimed budgets
//! and error bounds numerically.

pub mod bits;
pub mod error;
pub mod genmap;
pub mod harness;
pub mod holder;
pub mod interp;
pub mod metrics;
pub mod netcore;
pub mod poly;

pub use error::BuildError;

//! Attention-weighted classification of multichannel signal segments.
//!
//! A shared per-channel network scores every channel, a softmax across
//! channels turns those scores into weights, and a second network reads
//! the weighted aggregate. The model is invariant to channel order and
//! accepts any channel count.

pub mod dataset;
pub mod detect;
pub mod error;
pub mod metrics;
pub mod model;
pub mod rank;
pub mod signal;
pub mod sim;
pub mod train;

pub use dataset::{Dataset, Sample};
pub use error::{Error, Result};
pub use model::{ChannelWeights, AggregateMap, Hyper, NdlParams};
pub use signal::Recording;

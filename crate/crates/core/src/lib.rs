//! Unsupervised, query-driven synapse detection for multi-channel
//! fluorescence volumes.
//!
//! A query names presynaptic and postsynaptic markers and the expected size
//! of their puncta. Each channel is turned into a 3D puncta probability
//! ([`pipeline`]); the channels are then combined by searching for
//! presynaptic evidence around every postsynaptic voxel ([`query`]). The
//! result is a per-voxel synapse probability that can be thresholded into
//! detections ([`postprocess`]) and scored against annotations ([`eval`]).
//!
//! ```
//! use synprob::model::{Dims, Label, PunctaSize, QuerySpec};
//! use synprob::query::{execute_query, QueryOptions};
//! use synprob::synth::{generate, Population, SynthSpec};
//!
//! let spec = SynthSpec::single_population(
//!     Dims::new(48, 48, 12),
//!     Population {
//!         label: Label::Excitatory,
//!         count: 2,
//!         pre_markers: vec!["synapsin".into()],
//!         post_markers: vec!["psd95".into()],
//!         amplitude: 80.0,
//!         cleft_offset_um: 0.2,
//!         z_span: 3,
//!     },
//!     7,
//! );
//! let data = generate(&spec)?;
//! let size = PunctaSize::new(0.2, 0.21)?;
//! let query = QuerySpec::new(
//!     "excitatory",
//!     vec![("synapsin".into(), size)],
//!     vec![("psd95".into(), size)],
//! )?;
//! let result = execute_query(&data.channels, &query, QueryOptions::default())?;
//! assert_eq!(result.synapse.dims, spec.dims);
//! # Ok::<(), synprob::Error>(())
//! ```

mod error;

pub mod eval;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod postprocess;
pub mod query;
pub mod synaptogram;
pub mod synth;

pub use error::{Error, Result};

/// Chapters of the guide in `book/`, compiled here so their code listings
/// run as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/foreground.md")]
    pub mod foreground {}
    #[doc = include_str!("../../../book/src/puncta.md")]
    pub mod puncta {}
    #[doc = include_str!("../../../book/src/adjacency.md")]
    pub mod adjacency {}
    #[doc = include_str!("../../../book/src/detections.md")]
    pub mod detections {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub mod evaluation {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    pub mod synthetic {}
    #[doc = include_str!("../../../book/src/formats.md")]
    pub mod formats {}
}

//! Heterogeneous graph learning with attribute-space fusion and random type
//! encodings.
//!
//! Node features of every type are aligned on a shared channel schema,
//! node and edge types are replaced by dense random vectors, and the three
//! are combined by a low-rank multimodal fusion before a homogeneous graph
//! attention network. An RGCN baseline, training loops, metrics and
//! analyses sit alongside. The guide in `book/` walks through each piece.

pub mod analysis;
pub mod attr;
pub mod autodiff;
pub mod encoding;
mod error;
pub mod fusion;
pub mod graph;
pub mod layers;
pub mod train;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/attribute-fusion.md")]
    mod attribute_fusion {}
    #[doc = include_str!("../../../book/src/type-encoding.md")]
    mod type_encoding {}
    #[doc = include_str!("../../../book/src/lowrank-fusion.md")]
    mod lowrank_fusion {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

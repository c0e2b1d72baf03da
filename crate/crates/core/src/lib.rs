//! Classical simulation of quantum deep sets and quantum deep sequences.
//!
//! Layers, bottom up: dense complex linear algebra ([`linalg`]), the Pauli
//! generator basis ([`pauli`]), a reverse-mode tape ([`autodiff`]), small
//! networks ([`nn`]), the two quantum models ([`qds`], [`qdseq`]), synthetic
//! data ([`datagen`]) and training ([`train`]).

pub mod autodiff;
pub mod datagen;
pub mod error;
pub mod linalg;
pub mod nn;
pub mod par;
pub mod params;
pub mod pauli;
pub mod qds;
pub mod qdseq;
pub mod train;

pub use error::{Error, Result};

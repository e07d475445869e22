//! Coevolutionary GAN training (generator and discriminator populations with
//! speciation, mutation-only variation and weight inheritance) together with
//! an evaluation toolkit that embeds discriminator features with PCA + t-SNE
//! and scores generators by a Jaccard-style overlap with the dataset map.

pub mod cli;
pub mod embed;
pub mod error;
pub mod evo;
pub mod fid;
pub mod gan;
pub mod io;
pub mod nn;
pub mod seeds;

pub use error::{Error, Result};

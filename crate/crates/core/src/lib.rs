//! Discourse features from RST trees and their use in a pointer-generator
//! summarizer and a petition-popularity regressor.

pub mod nn;
pub mod discourse;
pub mod evalkit;
pub mod features;
pub mod vocab;
pub mod summarizer;
pub mod regressor;
pub mod pipeline;

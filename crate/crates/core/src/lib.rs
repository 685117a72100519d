//! Desk-scale disentangled-affect VAE for emotion recognition in conversations.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: a dense f64 tensor engine with tape-based reverse-mode
//!   automatic differentiation. Every loss below is differentiated through it.
//! - [`nn`]: linear layers, token embeddings, a gated recurrent cell,
//!   seeded initialisation, AdamW with linear warm-up, and checkpoints.
//! - [`model`]: the VAE itself — four Gaussian latent heads (valence,
//!   arousal, dominance, content), reparameterised sampling, closed-form KL,
//!   sigmoid VAD predictors, an emotion classifier, and the multi-task loss.
//! - [`mi`]: variational CLUB upper-bound estimation and minimisation of the
//!   mutual information between the affect latents.
//! - [`data`]: corpus and lexicon I/O, context-window assembly, tokenisation,
//!   synthetic dialogue generation, and label-noise injection.
//! - [`metrics`]: weighted F1, micro-F1 excluding a label, Pearson
//!   correlation, and report types.
//! - [`train`]: the training loop (estimator step, then model step, per
//!   iteration), evaluation, sweeps, robustness runs, and latent export.

pub mod error;
pub mod nn;
pub mod rng;
pub mod tensor;

pub use error::{CoreError, Result};

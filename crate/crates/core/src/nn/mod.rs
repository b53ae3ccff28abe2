//! Minimal 64-bit numeric core: dense layers, an LSTM cell, mixers, exact
//! reverse-mode gradients, Adam, target-network blending and a finite-difference
//! gradient checker.
//!
//! All activations are row-major batches (`batch x features`). Backward passes
//! accumulate into each tensor's `grad`; call [`Params::zero_grad`] first.

pub mod adam;
pub mod gradcheck;
pub mod lstm;
pub mod mixer;
pub mod mlp;
pub mod tensor;

pub use adam::{adam_step, clip_grad_norm, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use lstm::{LstmActor, LstmActorCache, LstmCell, LstmState};
pub use mixer::{mixer_vdn, HyperMixer, Mixer, MixerCache, MixerKind};
pub use mlp::{Activation, Linear, Mlp, MlpCache, MlpSpec};
pub use tensor::{soft_update, ParamTensor, Params};

//! Secret key expansion from covert communication.
//!
//! Alice and Bob split `N = M·D` optical modes into `M` blocks of `D` modes.
//! A pre-shared key picks the block, the message picks the mode inside it
//! (pulse-position style), and thermal background photons hide the signal
//! from an eavesdropper. This crate provides:
//!
//! * [`analytic`]: closed-form detection-bias, error and capacity formulas,
//!   the key-expansion conditions and the block-size optimizer.
//! * [`fock`]: exact enumeration oracles over photon-number-diagonal states
//!   (trace distance reduces to total variation there).
//! * [`sim`]: photon-level Monte Carlo of single runs and campaigns.
//! * [`protocol`]: end-to-end sessions in information-theoretic and
//!   keystream (computational) modes, with key ledger and security budget.
//! * [`cli`]: the `covert-keyx` command-line surface.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod cli;
pub mod config;
pub mod error;
pub mod fock;
pub mod protocol;
pub mod sim;

pub use error::{Error, Result};

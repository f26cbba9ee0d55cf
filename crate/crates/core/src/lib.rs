//! Sound-element backdoor triggers and poisoned-dataset construction for
//! speech-command corpora.
//!
//! Two trigger families are implemented: a pitch trigger that boosts the
//! pitch of the host audio and hides a short high-pitched tone inside its
//! loudest segment, and a timbre trigger that converts the voice toward
//! selected reference timbres. On top of the triggers sit dataset
//! orchestration (subset sampling, label mapping, poisoned-corpus writing,
//! attack test sets) and metric evaluation (benign accuracy and attack
//! success rate) over externally produced prediction files.

pub mod audio;
mod error;
pub mod eval;
pub mod pbsm;
pub mod poison;
pub mod vsvc;

pub use error::{Error, FileFailure, Result};

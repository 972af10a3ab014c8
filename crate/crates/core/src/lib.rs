//! Mean aortic pressure forecasting.
//!
//! The crate covers the whole pipeline: raw 25 Hz recordings are averaged
//! into 0.1 Hz series ([`signal`]), cut into labelled 10-minute windows,
//! and fed to sequence models ([`models`]) built on a small reverse-mode
//! autodiff core ([`autograd`], [`optim`], [`linalg`]). The [`bench`]
//! module trains and scores them per trend category; [`synth`] generates
//! stand-in recordings.

pub mod autograd;
pub mod bench;
mod binio;
mod error;
pub mod gradcheck;
pub mod kv;
pub mod linalg;
pub mod models;
pub mod optim;
pub mod params;
pub mod signal;
pub mod synth;
pub mod tensor;

pub use autograd::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use params::ParamSet;
pub use signal::{TrendLabel, WindowPair};
pub use tensor::{InitScheme, Tensor};

/// Hex digest (first 8 bytes of SHA-256) used to fingerprint configs.
pub fn config_hash(text: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// Derives an independent sub-seed for a named purpose from a root seed.
pub fn derive_seed(root: u64, purpose: &str) -> u64 {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

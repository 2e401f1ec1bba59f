//! Multi-modality dynamic analytic adaptation.
//!
//! A feature-stream library for continual test-time adaptation without
//! gradients. Each modality branch (audio, video, fused) owns an
//! [`AnalyticClassifier`](classifier::AnalyticClassifier): a linear head whose
//! weights are the closed-form solution of a class-weighted ridge regression,
//! maintained recursively through a memory bank `{P, Q}` so that the weights
//! after any stream prefix equal the one-shot solve over everything seen.
//! A MAP-gap gate ([`fusion`]) decides per sample which classifiers may learn
//! from the most confident branch's soft pseudo-label.
//!
//! The crate also ships the synthetic multi-modal stream generator, metrics,
//! and the brute-force joint solver used to cross-check the recursive path.
//!
//! With the `parallel` feature (default) the dense kernels fan out over
//! rayon. Parallel paths split work only across independent output slices,
//! so every result is bit-identical to the sequential fallback.

pub mod adapter;
pub mod classifier;
pub mod error;
pub mod expansion;
pub mod feature_file;
pub mod fusion;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod seeds;
pub mod sim;
pub(crate) mod wire;

pub use error::{Error, Result};
pub use linalg::Matrix;

/// A modality branch. Every model carries one classifier per branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Branch {
    Audio,
    Video,
    Fused,
}

impl Branch {
    /// All branches in serialization order.
    pub const ALL: [Branch; 3] = [Branch::Audio, Branch::Video, Branch::Fused];

    /// Tie-break rank for leader election: fused > video > audio.
    pub fn priority(self) -> u8 {
        match self {
            Branch::Audio => 0,
            Branch::Video => 1,
            Branch::Fused => 2,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Branch::Audio => 0,
            Branch::Video => 1,
            Branch::Fused => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Branch> {
        match code {
            0 => Some(Branch::Audio),
            1 => Some(Branch::Video),
            2 => Some(Branch::Fused),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::Audio => "audio",
            Branch::Video => "video",
            Branch::Fused => "fused",
        }
    }
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One value per modality branch, with stable field names in serialized form.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PerBranch<T> {
    pub audio: T,
    pub video: T,
    pub fused: T,
}

impl<T> PerBranch<T> {
    pub fn new(audio: T, video: T, fused: T) -> PerBranch<T> {
        PerBranch { audio, video, fused }
    }

    pub fn get(&self, branch: Branch) -> &T {
        match branch {
            Branch::Audio => &self.audio,
            Branch::Video => &self.video,
            Branch::Fused => &self.fused,
        }
    }

    pub fn get_mut(&mut self, branch: Branch) -> &mut T {
        match branch {
            Branch::Audio => &mut self.audio,
            Branch::Video => &mut self.video,
            Branch::Fused => &mut self.fused,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PerBranch<U> {
        PerBranch {
            audio: f(&self.audio),
            video: f(&self.video),
            fused: f(&self.fused),
        }
    }

    /// Branches paired with their values, in serialization order.
    pub fn iter(&self) -> impl Iterator<Item = (Branch, &T)> {
        Branch::ALL.iter().map(move |&b| (b, self.get(b)))
    }
}

impl<T: Clone> PerBranch<T> {
    pub fn splat(v: T) -> PerBranch<T> {
        PerBranch {
            audio: v.clone(),
            video: v.clone(),
            fused: v,
        }
    }
}

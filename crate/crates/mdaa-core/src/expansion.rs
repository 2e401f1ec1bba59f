//! Frozen feature expansion.
//!
//! Raw per-modality vectors are pushed through a seeded random Gaussian
//! projection into the higher-dimensional space the analytic classifiers
//! operate in. The projection is generated once from its spec and never
//! mutated afterwards; adaptation touches classifier banks only.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::Branch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Identity,
    Relu,
}

impl Nonlinearity {
    pub fn code(self) -> u8 {
        match self {
            Nonlinearity::Identity => 0,
            Nonlinearity::Relu => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Nonlinearity> {
        match code {
            0 => Some(Nonlinearity::Identity),
            1 => Some(Nonlinearity::Relu),
            _ => None,
        }
    }
}

/// Everything needed to regenerate a projection bit-identically.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ExpansionSpec {
    pub input_dim: usize,
    pub expanded_dim: usize,
    pub seed: u64,
    pub nonlinearity: Nonlinearity,
    pub scale: f64,
}

/// A sample's representation in the expanded space.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpandedFeature {
    pub values: Vec<f64>,
    pub modality_tag: Branch,
}

/// The frozen projection. Immutable after [`build_expansion`].
#[derive(Debug, Clone)]
pub struct Expansion {
    spec: ExpansionSpec,
    projection: Matrix,
}

pub fn build_expansion(spec: ExpansionSpec) -> Result<Expansion> {
    if spec.input_dim == 0 || spec.expanded_dim == 0 {
        return Err(Error::InvalidSpec(format!(
            "zero dimension: input_dim={}, expanded_dim={}",
            spec.input_dim, spec.expanded_dim
        )));
    }
    if !(spec.scale > 0.0) || !spec.scale.is_finite() {
        return Err(Error::InvalidSpec(format!("scale {} not positive", spec.scale)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = StandardNormal;
    let projection = Matrix::from_fn(spec.input_dim, spec.expanded_dim, |_, _| {
        let z: f64 = normal.sample(&mut rng);
        z * spec.scale
    });
    Ok(Expansion { spec, projection })
}

impl Expansion {
    /// Test hook: install an explicit projection instead of a seeded one.
    pub fn with_projection(spec: ExpansionSpec, projection: Matrix) -> Expansion {
        assert_eq!(projection.shape(), (spec.input_dim, spec.expanded_dim));
        Expansion { spec, projection }
    }

    pub fn spec(&self) -> &ExpansionSpec {
        &self.spec
    }

    pub fn projection(&self) -> &Matrix {
        &self.projection
    }

    pub fn expanded_dim(&self) -> usize {
        self.spec.expanded_dim
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    /// Expand one raw vector.
    pub fn expand(&self, x: &[f64], tag: Branch) -> Result<ExpandedFeature> {
        let batch = self.expand_batch(&Matrix::from_rows(&[x]))?;
        Ok(ExpandedFeature {
            values: batch.into_vec(),
            modality_tag: tag,
        })
    }

    /// Expand a batch of raw row vectors into their expanded rows.
    pub fn expand_batch(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::dim(
                "expand",
                (x.rows(), self.spec.input_dim),
                x.shape(),
            ));
        }
        if let Some(idx) = x.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput {
                context: "expand",
                index: idx,
            });
        }
        let mut y = x.matmul(&self.projection)?;
        if self.spec.nonlinearity == Nonlinearity::Relu {
            for v in y.as_mut_slice() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        Ok(y)
    }
}

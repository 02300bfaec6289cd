//! Element-wise and spatial (per feature map) Bernoulli dropout.
//!
//! Masks carry inverted scaling: kept entries hold `1/p`, dropped entries
//! hold `0`, so the expected output of [`apply_dropout`] equals its input.
//! The same masks are used during training and during Monte-Carlo
//! inference.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{mask_seed, rng};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropoutKind {
    ElementWise,
    Spatial,
}

impl DropoutKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DropoutKind::ElementWise => "elementwise",
            DropoutKind::Spatial => "spatial",
        }
    }
}

impl std::str::FromStr for DropoutKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "elementwise" => Ok(Self::ElementWise),
            "spatial" => Ok(Self::Spatial),
            other => Err(Error::InvalidConfig(format!("unknown dropout kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for DropoutKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub(crate) fn check_keep_prob(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidKeepProb(p))
    }
}

/// Dropout attached to one layer of a network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DropoutSpec {
    pub kind: DropoutKind,
    pub keep_prob: f64,
    pub layer_index: usize,
}

impl DropoutSpec {
    pub fn new(kind: DropoutKind, keep_prob: f64, layer_index: usize) -> Result<Self> {
        check_keep_prob(keep_prob)?;
        Ok(Self {
            kind,
            keep_prob,
            layer_index,
        })
    }

    /// Samples the mask for an activation of `shape` in the given
    /// stochastic pass. Spatial dropout needs a leading feature-map axis.
    pub fn sample(&self, shape: &[usize], run_seed: u64, pass_index: u64) -> Result<DropoutMask> {
        let seed = mask_seed(run_seed, self.layer_index, pass_index);
        match self.kind {
            DropoutKind::ElementWise => sample_elementwise_mask(shape, self.keep_prob, seed),
            DropoutKind::Spatial => {
                if shape.len() < 3 {
                    return Err(Error::InvalidShape {
                        shape: shape.to_vec(),
                        reason: "spatial dropout needs a [maps, height, width] activation".into(),
                    });
                }
                sample_spatial_mask(shape[0], &shape[1..], self.keep_prob, seed)
            }
        }
    }
}

/// A realized dropout mask with inverted scaling folded in.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    pub values: Tensor,
    pub granularity: DropoutKind,
    pub seed: u64,
}

impl DropoutMask {
    pub fn kept(&self) -> usize {
        self.values.data().iter().filter(|&&v| v != 0.0).count()
    }
}

/// `count` independent Bernoulli(p) keep decisions drawn from `seed`.
///
/// Both mask samplers consume this stream, one draw per independent unit.
pub fn bernoulli_draws(count: usize, p: f64, seed: u64) -> Result<Vec<bool>> {
    check_keep_prob(p)?;
    if p == 1.0 {
        return Ok(vec![true; count]);
    }
    let mut rng = rng(seed);
    Ok((0..count).map(|_| rng.random::<f64>() < p).collect())
}

pub fn sample_elementwise_mask(shape: &[usize], p: f64, seed: u64) -> Result<DropoutMask> {
    let n: usize = shape.iter().product();
    let scale = 1.0 / p;
    let draws = bernoulli_draws(n, p, seed)?;
    let values = Tensor::new(
        shape.to_vec(),
        draws.into_iter().map(|k| if k { scale } else { 0.0 }).collect(),
    )?;
    Ok(DropoutMask {
        values,
        granularity: DropoutKind::ElementWise,
        seed,
    })
}

/// One keep decision per feature map: map `k` is all `1/p` or all `0`.
pub fn sample_spatial_mask(num_maps: usize, map_shape: &[usize], p: f64, seed: u64) -> Result<DropoutMask> {
    let mut shape = Vec::with_capacity(map_shape.len() + 1);
    shape.push(num_maps);
    shape.extend_from_slice(map_shape);
    if num_maps == 0 || map_shape.is_empty() {
        return Err(Error::InvalidShape {
            shape,
            reason: "spatial mask needs at least one map and a map shape".into(),
        });
    }
    let per_map: usize = map_shape.iter().product();
    let scale = 1.0 / p;
    let draws = bernoulli_draws(num_maps, p, seed)?;
    let data = draws
        .into_iter()
        .flat_map(|k| std::iter::repeat_n(if k { scale } else { 0.0 }, per_map))
        .collect();
    Ok(DropoutMask {
        values: Tensor::new(shape, data)?,
        granularity: DropoutKind::Spatial,
        seed,
    })
}

/// Elementwise product of `input` with the mask values.
pub fn apply_dropout(input: &Tensor, mask: &DropoutMask) -> Result<Tensor> {
    if input.shape() != mask.values.shape() {
        return Err(Error::ShapeMismatch {
            op: "apply_dropout",
            dim: "element count",
            expected: mask.values.len(),
            found: input.len(),
        });
    }
    let data = input
        .data()
        .iter()
        .zip(mask.values.data())
        .map(|(x, m)| x * m)
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

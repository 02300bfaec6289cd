//! Monte-Carlo dropout: `T` stochastic forward passes per input, the
//! predictive mean and (biased, 1/T) predictive variance, the mean
//! uncertainty error, and label-binned summaries.

use crate::error::{Error, Result};
use crate::net::{Mode, Network};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McConfig {
    /// Number of stochastic passes `T`.
    pub passes: usize,
    pub seed: u64,
    /// Floor applied to the variance in the uncertainty error.
    pub variance_floor: f64,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            passes: 20,
            seed: 0,
            variance_floor: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct McEstimate {
    pub input_id: u64,
    pub samples: Vec<f64>,
    pub mean: f64,
    pub variance: f64,
}

impl McEstimate {
    pub fn from_samples(input_id: u64, samples: Vec<f64>) -> Result<Self> {
        let mean = predictive_mean(&samples)?;
        let variance = predictive_variance(&samples)?;
        Ok(Self {
            input_id,
            samples,
            mean,
            variance,
        })
    }
}

/// `T` stochastic outputs for pass indices `0..T`, in pass order.
pub fn mc_sample(net: &Network, image: &Tensor, mc: &McConfig) -> Result<Vec<f64>> {
    if mc.passes < 1 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    (0..mc.passes as u64)
        .map(|pass| net.forward(image, Mode::Stochastic { seed: mc.seed, pass }))
        .collect()
}

/// Same samples as [`mc_sample`], with passes spread over `threads`
/// worker threads. Results are placed by pass index.
pub fn mc_sample_parallel(net: &Network, image: &Tensor, mc: &McConfig, threads: usize) -> Result<Vec<f64>> {
    if mc.passes < 1 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let threads = threads.clamp(1, mc.passes);
    let mut out = vec![0.0; mc.passes];
    std::thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                scope.spawn(move || -> Result<Vec<(usize, f64)>> {
                    (t..mc.passes)
                        .step_by(threads)
                        .map(|pass| {
                            let mode = Mode::Stochastic {
                                seed: mc.seed,
                                pass: pass as u64,
                            };
                            Ok((pass, net.forward(image, mode)?))
                        })
                        .collect()
                })
            })
            .collect();
        for h in handles {
            for (pass, v) in h.join().expect("sampling thread panicked")? {
                out[pass] = v;
            }
        }
        Ok(())
    })?;
    Ok(out)
}

/// Samples and summarizes one input.
pub fn mc_estimate(net: &Network, image: &Tensor, input_id: u64, mc: &McConfig) -> Result<McEstimate> {
    McEstimate::from_samples(input_id, mc_sample(net, image, mc)?)
}

/// `(1/T) * sum f(X, W_t)`.
pub fn predictive_mean(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    Ok(samples.iter().sum::<f64>() / samples.len() as f64)
}

/// `(1/T) * sum f(X, W_t)^2 - mean^2`, clamped at zero.
pub fn predictive_variance(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    // Rounding in the one-pass form leaves ~1e-16 for identical samples.
    if samples.iter().all(|x| *x == samples[0]) {
        return Ok(0.0);
    }
    let t = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / t;
    let second = samples.iter().map(|x| x * x).sum::<f64>() / t;
    Ok((second - mean * mean).max(0.0))
}

/// `(1/N) * sum |y_i - mean_i| / max(var_i, eps)`.
pub fn mean_uncertainty_error(truths: &[f64], means: &[f64], variances: &[f64], eps: f64) -> Result<f64> {
    if truths.len() != means.len() || truths.len() != variances.len() {
        return Err(Error::LengthMismatch(format!(
            "{} truths, {} means, {} variances",
            truths.len(),
            means.len(),
            variances.len()
        )));
    }
    if truths.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidConfig(format!("variance floor must be positive, got {eps}")));
    }
    let total: f64 = truths
        .iter()
        .zip(means)
        .zip(variances)
        .map(|((y, m), v)| (y - m).abs() / v.max(eps))
        .sum();
    Ok(total / truths.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_prediction: f64,
    pub mean_variance: f64,
}

/// Per-bin statistics over the ground-truth label axis.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedReport {
    pub edges: Vec<f64>,
    pub bins: Vec<Bin>,
}

impl BinnedReport {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// Index of the bin with the most records.
    pub fn densest(&self) -> Option<usize> {
        (0..self.bins.len()).max_by_key(|&i| (self.bins[i].count, std::cmp::Reverse(i)))
    }

    /// Index of the non-empty bin with the fewest records.
    pub fn sparsest(&self) -> Option<usize> {
        (0..self.bins.len())
            .filter(|&i| self.bins[i].count > 0)
            .min_by_key(|&i| (self.bins[i].count, i))
    }
}

/// Bins `(truth, estimate)` records by truth. Bin `i` covers
/// `[edges[i], edges[i+1])`; out-of-range truths go to the first or last
/// bin. Empty bins report zero mean prediction and variance.
pub fn binned_statistics(records: &[(f64, McEstimate)], edges: &[f64]) -> Result<BinnedReport> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::NonMonotoneEdges);
    }
    let nb = edges.len() - 1;
    let mut sums = vec![(0usize, 0.0, 0.0); nb];
    for (truth, est) in records {
        let i = edges[1..nb].partition_point(|&e| e <= *truth);
        let slot = &mut sums[i];
        slot.0 += 1;
        slot.1 += est.mean;
        slot.2 += est.variance;
    }
    let bins = sums
        .into_iter()
        .enumerate()
        .map(|(i, (count, m, v))| {
            let (mean_prediction, mean_variance) = if count == 0 {
                (0.0, 0.0)
            } else {
                (m / count as f64, v / count as f64)
            };
            Bin {
                lo: edges[i],
                hi: edges[i + 1],
                count,
                mean_prediction,
                mean_variance,
            }
        })
        .collect();
    Ok(BinnedReport {
        edges: edges.to_vec(),
        bins,
    })
}

/// `n` equal-width bins spanning `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

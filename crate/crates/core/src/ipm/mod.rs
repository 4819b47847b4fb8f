//! Integral probability metrics between discrete measures, and estimators of
//! the distance to a continuous pushforward law.

pub mod assignment;
pub mod dictionary;
pub mod exact1d;
pub mod kdtree;
pub mod measure;
pub mod oracle;
pub mod transport;

use serde::{Deserialize, Serialize};

pub use dictionary::{walpha_ipm, WalphaSpec};
pub use exact1d::{w1_exact_1d, Law1d};
pub use measure::DiscreteMeasure;
pub use oracle::brute_lp_oracle;

use crate::error::{Error, Result};
use crate::generators::{pushforward_sample, GeneratorSpec};
use crate::sampling::{euclidean, sample_latent, PointSet, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum IpmSpec {
    W1Exact1d,
    W1Assignment,
    W1TransportLp,
    WalphaDictionary(WalphaSpec),
    ProjectionFirstAxis,
    BruteLpOracle { h: f64 },
}

impl IpmSpec {
    /// Largest Lipschitz constant of a function in the class; bounds `d_F <= lipschitz * W1`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            IpmSpec::WalphaDictionary(w) => w.l_f,
            _ => 1.0,
        }
    }

    pub fn is_w1(&self) -> bool {
        matches!(self, IpmSpec::W1Exact1d | IpmSpec::W1Assignment | IpmSpec::W1TransportLp | IpmSpec::BruteLpOracle { .. })
    }

    pub fn distance(&self, p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
        match self {
            IpmSpec::W1Exact1d => w1_exact_1d(Law1d::Discrete(p), Law1d::Discrete(q)),
            IpmSpec::W1Assignment => {
                if p.len() != q.len() || !p.has_uniform_weights() || !q.has_uniform_weights() {
                    return Err(Error::InvalidSpec("w1-assignment needs equal-size uniform-weight sets".into()));
                }
                w1_assignment(p.support(), q.support())
            }
            IpmSpec::W1TransportLp => w1_transport(p, q),
            IpmSpec::WalphaDictionary(spec) => walpha_ipm(p, q, spec),
            IpmSpec::ProjectionFirstAxis => projection_ipm(p, q),
            IpmSpec::BruteLpOracle { h } => brute_lp_oracle(p, q, *h),
        }
    }
}

fn same_dim(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: q.dim() });
    }
    Ok(())
}

/// Mean Euclidean matching cost between equal-size sets.
pub fn w1_assignment(a: &PointSet, b: &PointSet) -> Result<f64> {
    Ok(assignment::solve(a, b)?.mean_cost())
}

/// Exact optimal transport through the transportation simplex.
pub fn w1_transport(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    same_dim(p, q)?;
    let (xs, ys) = (p.support(), q.support());
    let plan = transport::solve(p.weights(), q.weights(), &|i, j| euclidean(xs.row(i), ys.row(j)))?;
    Ok(plan.cost)
}

/// Exact W1 between weighted point sets. Equal-size uniform sets go to the
/// assignment solver; everything else goes to the transportation simplex.
pub fn w1_empirical(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    same_dim(p, q)?;
    if p.has_uniform_weights() && q.has_uniform_weights() && p.len() == q.len() {
        return w1_assignment(p.support(), q.support());
    }
    w1_transport(p, q)
}

/// `|E_P x_1 - E_Q x_1|`
pub fn projection_ipm(p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    same_dim(p, q)?;
    Ok((p.expect(|x| x[0]) - q.expect(|x| x[0])).abs())
}

/// Mean and Monte Carlo standard error of `W1(P, U_m)` over `reps` fresh uniform
/// samples of size `m`. Biased upward as an estimate of `W1(P, U_d)`; the bias vanishes as `m` grows.
pub fn w1_vs_uniform(p: &DiscreteMeasure, d: usize, m: usize, reps: usize, stream: &mut Stream) -> Result<(f64, f64)> {
    if p.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: p.dim() });
    }
    if m < p.len() {
        return Err(Error::InvalidSpec(format!("comparison size {m} is below the sample size {}", p.len())));
    }
    if reps == 0 {
        return Err(Error::InvalidSpec("w1_vs_uniform needs reps >= 1".into()));
    }
    let mut values = Vec::with_capacity(reps);
    for _ in 0..reps {
        let q = DiscreteMeasure::empirical(sample_latent(m, d, stream)?)?;
        values.push(w1_empirical(p, &q)?);
    }
    Ok(mean_and_se(&values))
}

/// Sample mean and standard error (zero for a single value).
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Estimate of `d_F(P_data, g # U_d)`. Exact when the metric is the projection
/// (exact generator mean) or when W1 is taken in one dimension against a uniform
/// interval law; otherwise a fresh sample of size `m` stands in for the pushforward.
pub fn distance_to_pushforward(
    data: &PointSet,
    g: &GeneratorSpec,
    metric: &IpmSpec,
    m: usize,
    stream: &mut Stream,
) -> Result<f64> {
    if data.dim() != g.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: g.ambient_dim(), got: data.dim() });
    }
    let p = DiscreteMeasure::empirical(data.clone())?;
    if let IpmSpec::ProjectionFirstAxis = metric {
        return Ok((p.expect(|x| x[0]) - g.first_coordinate_mean()).abs());
    }
    if metric.is_w1() && !matches!(metric, IpmSpec::BruteLpOracle { .. }) {
        if let Some((lo, hi)) = g.uniform_interval_law() {
            return w1_exact_1d(Law1d::Discrete(&p), Law1d::Uniform { lo, hi });
        }
    }
    let q = DiscreteMeasure::empirical(pushforward_sample(g, m, stream)?)?;
    match metric {
        IpmSpec::W1Exact1d | IpmSpec::W1Assignment => w1_empirical(&p, &q),
        other => other.distance(&p, &q),
    }
}

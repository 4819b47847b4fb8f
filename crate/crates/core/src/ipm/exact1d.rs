//! Exact one-dimensional Wasserstein-1 as the L1 distance between CDFs.

use super::measure::DiscreteMeasure;
use crate::error::{Error, Result};

/// A law on the real line: a discrete measure or the uniform law on `[lo, hi]`
/// (a point mass when `lo == hi`).
#[derive(Debug, Clone, Copy)]
pub enum Law1d<'a> {
    Discrete(&'a DiscreteMeasure),
    Uniform { lo: f64, hi: f64 },
}

impl Law1d<'_> {
    pub const UNIT: Law1d<'static> = Law1d::Uniform { lo: 0.0, hi: 1.0 };
}

enum Cdf {
    Steps { xs: Vec<f64>, cum: Vec<f64> },
    Ramp { lo: f64, hi: f64 },
}

impl Cdf {
    fn build(law: &Law1d) -> Result<Self> {
        match law {
            Law1d::Discrete(m) => {
                if m.dim() != 1 {
                    return Err(Error::DimensionMismatch { expected: 1, got: m.dim() });
                }
                let mut pairs: Vec<(f64, f64)> =
                    m.support().as_flat().iter().copied().zip(m.weights().iter().copied()).collect();
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut xs = Vec::with_capacity(pairs.len());
                let mut cum = Vec::with_capacity(pairs.len());
                let mut acc = 0.0;
                for (x, w) in pairs {
                    acc += w;
                    if xs.last() == Some(&x) {
                        *cum.last_mut().unwrap() = acc;
                    } else {
                        xs.push(x);
                        cum.push(acc);
                    }
                }
                Ok(Cdf::Steps { xs, cum })
            }
            Law1d::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::InvalidSpec(format!("uniform law on [{lo}, {hi}]")));
                }
                if lo == hi {
                    Ok(Cdf::Steps { xs: vec![*lo], cum: vec![1.0] })
                } else {
                    Ok(Cdf::Ramp { lo: *lo, hi: *hi })
                }
            }
        }
    }

    fn breakpoints(&self, out: &mut Vec<f64>) {
        match self {
            Cdf::Steps { xs, .. } => out.extend_from_slice(xs),
            Cdf::Ramp { lo, hi } => out.extend([*lo, *hi]),
        }
    }
}

/// Walks the breakpoints left to right. `cursor` tracks the number of step
/// locations at or left of the current segment start.
fn segment_values(cdf: &Cdf, cursor: &mut usize, a: f64, b: f64) -> (f64, f64) {
    match cdf {
        Cdf::Steps { xs, cum } => {
            while *cursor < xs.len() && xs[*cursor] <= a {
                *cursor += 1;
            }
            let v = if *cursor == 0 { 0.0 } else { cum[*cursor - 1] };
            (v, v)
        }
        Cdf::Ramp { lo, hi } => {
            let f = |x: f64| ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
            (f(a), f(b))
        }
    }
}

/// `int |F_P - F_Q|` over the real line, exact up to floating-point rounding.
pub fn w1_exact_1d(p: Law1d, q: Law1d) -> Result<f64> {
    let (fp, fq) = (Cdf::build(&p)?, Cdf::build(&q)?);
    let mut pts = Vec::new();
    fp.breakpoints(&mut pts);
    fq.breakpoints(&mut pts);
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    let (mut cp, mut cq) = (0usize, 0usize);
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (p0, p1) = segment_values(&fp, &mut cp, a, b);
        let (q0, q1) = segment_values(&fq, &mut cq, a, b);
        total += abs_linear_integral(p0 - q0, p1 - q1, b - a);
    }
    Ok(total)
}

/// `int_0^h |f0 + (f1 - f0) t / h| dt`
fn abs_linear_integral(f0: f64, f1: f64, h: f64) -> f64 {
    if f0 * f1 >= 0.0 {
        0.5 * h * (f0.abs() + f1.abs())
    } else {
        0.5 * h * (f0 * f0 + f1 * f1) / (f0.abs() + f1.abs())
    }
}

/// Sorted-coupling W1 between two equal-size 1-D samples.
pub fn sorted_coupling(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(values: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_values(values).unwrap()
    }

    #[test]
    fn center_point_against_uniform() {
        // int_0^1 |1{x >= 0.5} - x| dx = 1/8 + 1/8
        let p = m(&[0.5]);
        let w = w1_exact_1d(Law1d::Discrete(&p), Law1d::UNIT).unwrap();
        assert!((w - 0.25).abs() < 1e-15);
    }

    #[test]
    fn two_points_against_double_center() {
        let (p, q) = (m(&[0.0, 1.0]), m(&[0.5, 0.5]));
        let w = w1_exact_1d(Law1d::Discrete(&p), Law1d::Discrete(&q)).unwrap();
        assert!((w - 0.5).abs() < 1e-15);
        assert!((sorted_coupling(&[0.0, 1.0], &[0.5, 0.5]).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identical_laws_are_at_distance_zero() {
        let p = m(&[0.1, 0.7, 0.3]);
        assert_eq!(w1_exact_1d(Law1d::Discrete(&p), Law1d::Discrete(&p)).unwrap(), 0.0);
        assert_eq!(w1_exact_1d(Law1d::UNIT, Law1d::UNIT).unwrap(), 0.0);
    }

    #[test]
    fn quartile_grid_against_uniform() {
        // |F - x| integrates to 4 triangles of area 1/32
        let p = m(&[0.25, 0.75]);
        let w = w1_exact_1d(Law1d::Discrete(&p), Law1d::UNIT).unwrap();
        assert!((w - 0.125).abs() < 1e-15);
    }

    #[test]
    fn uniforms_on_shifted_intervals() {
        let w = w1_exact_1d(Law1d::Uniform { lo: 0.0, hi: 0.8 }, Law1d::Uniform { lo: 0.2, hi: 1.0 }).unwrap();
        assert!((w - 0.2).abs() < 1e-15);
        // point mass at 0.3 vs U[0,1]: int_0^0.3 x + int_0.3^1 (1 - x)
        let w = w1_exact_1d(Law1d::Uniform { lo: 0.3, hi: 0.3 }, Law1d::UNIT).unwrap();
        assert!((w - (0.045 + 0.245)).abs() < 1e-15);
    }

    #[test]
    fn support_outside_the_unit_interval() {
        let p = m(&[1.25]);
        let w = w1_exact_1d(Law1d::Discrete(&p), Law1d::UNIT).unwrap();
        assert!((w - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rejects_multidimensional_input() {
        let p = DiscreteMeasure::empirical(crate::sampling::PointSet::from_flat(2, vec![0.0, 1.0]).unwrap()).unwrap();
        assert!(matches!(w1_exact_1d(Law1d::Discrete(&p), Law1d::UNIT), Err(Error::DimensionMismatch { .. })));
    }
}

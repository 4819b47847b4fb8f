//! Grid-discretized Kantorovich dual, solved as an explicit linear program.
//! Test-only verification path: slow, small, and independent of the transport solvers.

use std::collections::BTreeMap;

use super::measure::DiscreteMeasure;
use crate::error::{Error, Result};

pub const MAX_DIM: usize = 2;
pub const MAX_SUPPORT: usize = 30;
const MASS_TOL: f64 = 1e-15;
const PIVOT_TOL: f64 = 1e-12;

/// `max sum_a m_a f(a)` over functions `f` on the snapped grid nodes with
/// `|f(a) - f(b)| <= |a - b|`. Only nodes carrying net mass enter the program:
/// a Lipschitz function on them extends to the whole grid without changing the value.
pub fn brute_lp_oracle(p: &DiscreteMeasure, q: &DiscreteMeasure, h: f64) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: q.dim() });
    }
    if p.dim() > MAX_DIM {
        return Err(Error::TooLarge(format!("LP oracle supports D <= {MAX_DIM}, got {}", p.dim())));
    }
    if p.len() > MAX_SUPPORT || q.len() > MAX_SUPPORT {
        return Err(Error::TooLarge(format!("LP oracle supports at most {MAX_SUPPORT} support points")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidSpec(format!("grid step {h}")));
    }
    let mut mass: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
    for (m, sign) in [(p, 1.0), (q, -1.0)] {
        for (x, w) in m.support().rows().zip(m.weights()) {
            let node: Vec<i64> = x.iter().map(|c| (c / h).round() as i64).collect();
            *mass.entry(node).or_insert(0.0) += sign * w;
        }
    }
    let nodes: Vec<(Vec<i64>, f64)> = mass.into_iter().filter(|(_, m)| m.abs() > MASS_TOL).collect();
    if nodes.is_empty() {
        return Ok(0.0);
    }
    let dist = |a: &[i64], b: &[i64]| -> f64 {
        h * a.iter().zip(b).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>().sqrt()
    };
    let k = nodes.len();
    let mut radius: f64 = 0.0;
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for a in 0..k {
        for b in 0..k {
            if a != b {
                let d = dist(&nodes[a].0, &nodes[b].0);
                radius = radius.max(d);
                rows.push((vec![(a, 1.0), (b, -1.0)], d));
            }
        }
    }
    // a maximizer can be shifted to have minimum 0, hence maximum at most the diameter
    for a in 0..k {
        rows.push((vec![(a, 1.0)], radius));
    }
    let objective: Vec<f64> = nodes.iter().map(|n| n.1).collect();
    let value = maximize(&objective, &rows)?;
    Ok(value.max(0.0))
}

/// Bland-rule simplex on `max c.x` subject to `A x <= b`, `x >= 0`, `b >= 0`,
/// kept as a Tucker tableau: `basic_r = rhs_r - sum_s a_rs nonbasic_s`.
fn maximize(c: &[f64], constraints: &[(Vec<(usize, f64)>, f64)]) -> Result<f64> {
    let nv = c.len();
    let nr = constraints.len();
    let width = nv + 1;
    // last row is the objective written as z = z0 - sum (-c_s) x_s
    let mut t = vec![0.0; (nr + 1) * width];
    for (r, (coeffs, rhs)) in constraints.iter().enumerate() {
        for &(s, a) in coeffs {
            t[r * width + s] += a;
        }
        t[r * width + nv] = *rhs;
    }
    for s in 0..nv {
        t[nr * width + s] = -c[s];
    }
    // variable ids: decision 0..nv, slacks nv..nv+nr
    let mut nonbasic: Vec<usize> = (0..nv).collect();
    let mut basic: Vec<usize> = (nv..nv + nr).collect();
    let cap = 100_000;
    for _ in 0..cap {
        let obj = &t[nr * width..nr * width + nv];
        let entering = (0..nv).filter(|&s| obj[s] < -PIVOT_TOL).min_by_key(|&s| nonbasic[s]);
        let Some(s) = entering else {
            return Ok(t[nr * width + nv]);
        };
        let mut leave: Option<(f64, usize)> = None;
        for r in 0..nr {
            let a = t[r * width + s];
            if a > PIVOT_TOL {
                let ratio = t[r * width + nv] / a;
                let better = match leave {
                    None => true,
                    Some((best, br)) => ratio < best || (ratio == best && basic[r] < basic[br]),
                };
                if better {
                    leave = Some((ratio, r));
                }
            }
        }
        let Some((_, r)) = leave else {
            return Err(Error::Solver("LP oracle is unbounded".into()));
        };
        let p = t[r * width + s];
        for j in 0..width {
            t[r * width + j] /= p;
        }
        t[r * width + s] = 1.0 / p;
        for i in 0..=nr {
            if i == r {
                continue;
            }
            let f = t[i * width + s];
            if f == 0.0 {
                continue;
            }
            for j in 0..width {
                if j != s {
                    t[i * width + j] -= f * t[r * width + j];
                }
            }
            t[i * width + s] = -f / p;
        }
        std::mem::swap(&mut nonbasic[s], &mut basic[r]);
    }
    Err(Error::Solver("LP oracle hit its pivot cap".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::PointSet;

    fn m1(values: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_values(values).unwrap()
    }

    #[test]
    fn tiny_lp() {
        // max x + y, x <= 1, y <= 2, x + y <= 2.5
        let rows = vec![(vec![(0, 1.0)], 1.0), (vec![(1, 1.0)], 2.0), (vec![(0, 1.0), (1, 1.0)], 2.5)];
        assert!((maximize(&[1.0, 1.0], &rows).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_pair() {
        let w = brute_lp_oracle(&m1(&[0.0, 1.0]), &m1(&[0.5, 0.5]), 0.05).unwrap();
        assert!((w - 0.5).abs() <= 0.05);
    }

    #[test]
    fn identical_measures() {
        let p = m1(&[0.1, 0.33, 0.9]);
        assert_eq!(brute_lp_oracle(&p, &p, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn crossed_square() {
        let a = DiscreteMeasure::empirical(PointSet::from_rows(2, &[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap()).unwrap();
        let b = DiscreteMeasure::empirical(PointSet::from_rows(2, &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()).unwrap();
        let w = brute_lp_oracle(&a, &b, 0.1).unwrap();
        assert!((w - 1.0).abs() <= 0.1);
    }

    #[test]
    fn caps() {
        let big = m1(&vec![0.5; MAX_SUPPORT + 1]);
        assert!(matches!(brute_lp_oracle(&big, &m1(&[0.5]), 0.1), Err(Error::TooLarge(_))));
        let cube = DiscreteMeasure::empirical(PointSet::from_flat(3, vec![0.0; 3]).unwrap()).unwrap();
        assert!(matches!(brute_lp_oracle(&cube, &cube, 0.1), Err(Error::TooLarge(_))));
    }
}

//! Trigonometric dictionary lower bound for the smoothness-class IPM.
//!
//! Atom `phi_k(x) = cos(pi <k, x>)` or `sin(pi <k, x>)` scaled by
//! `L_F / (pi |k|_1)^alpha`: every partial of order `<= alpha` is bounded by `L_F`,
//! and the atom is `L_F`-Lipschitz in the Euclidean norm. The optional projection
//! atom is `L_F x_1`. Points are clamped to the unit cube before evaluation, so
//! each atom is a member of the class restricted to the cube.

use serde::{Deserialize, Serialize};

use super::measure::DiscreteMeasure;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalphaSpec {
    pub alpha: u32,
    pub l_f: f64,
    pub freq_cap: u32,
    #[serde(default = "default_true")]
    pub include_projection: bool,
    #[serde(default = "default_max_atoms")]
    pub max_atoms: usize,
}

fn default_true() -> bool {
    true
}

fn default_max_atoms() -> usize {
    20_000
}

impl WalphaSpec {
    pub fn new(alpha: u32, l_f: f64, freq_cap: u32) -> Self {
        Self { alpha, l_f, freq_cap, include_projection: true, max_atoms: default_max_atoms() }
    }

    /// Number of distinct frequencies: half of the nonzero lattice points, since
    /// `k` and `-k` give the same atoms up to sign.
    pub fn frequency_count(&self, dim: usize) -> Option<usize> {
        let side = 2usize.checked_mul(self.freq_cap as usize)?.checked_add(1)?;
        let total = side.checked_pow(dim as u32)?;
        Some((total - 1) / 2)
    }
}

/// Frequencies with sup-norm at most `cap` whose first nonzero entry is positive.
pub fn frequencies(dim: usize, cap: u32) -> Vec<Vec<i64>> {
    let cap = cap as i64;
    let side = (2 * cap + 1) as usize;
    let total = side.pow(dim as u32);
    let mut out = Vec::with_capacity(total / 2);
    for code in 0..total {
        let mut rest = code;
        let k: Vec<i64> = (0..dim)
            .map(|_| {
                let digit = (rest % side) as i64 - cap;
                rest /= side;
                digit
            })
            .collect();
        if k.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0) {
            out.push(k);
        }
    }
    out
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

fn atom_scale(freq: &[i64], alpha: u32, l_f: f64) -> f64 {
    let l1: i64 = freq.iter().map(|c| c.abs()).sum();
    l_f / (std::f64::consts::PI * l1 as f64).powi(alpha as i32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtomKind {
    Cos,
    Sin,
}

/// A single scaled dictionary atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub freq: Vec<i64>,
    pub kind: AtomKind,
    pub scale: f64,
}

impl Atom {
    pub fn new(freq: Vec<i64>, kind: AtomKind, alpha: u32, l_f: f64) -> Result<Self> {
        if freq.is_empty() || freq.iter().all(|&c| c == 0) {
            return Err(Error::InvalidSpec("atom frequency must be nonzero".into()));
        }
        let scale = atom_scale(&freq, alpha, l_f);
        Ok(Self { freq, kind, scale })
    }

    pub fn dim(&self) -> usize {
        self.freq.len()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let t = std::f64::consts::PI * self.freq.iter().zip(x).map(|(&k, &xi)| k as f64 * clamp_unit(xi)).sum::<f64>();
        self.scale
            * match self.kind {
                AtomKind::Cos => t.cos(),
                AtomKind::Sin => t.sin(),
            }
    }
}

/// `max_atom |E_P atom - E_Q atom|`, a certified lower bound on the IPM over
/// the smoothness ball of radius `L_F`.
pub fn walpha_ipm(p: &DiscreteMeasure, q: &DiscreteMeasure, spec: &WalphaSpec) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: q.dim() });
    }
    if !(spec.l_f > 0.0 && spec.l_f.is_finite()) {
        return Err(Error::InvalidSpec(format!("L_F = {}", spec.l_f)));
    }
    let dim = p.dim();
    let count = spec.frequency_count(dim).unwrap_or(usize::MAX);
    if count > spec.max_atoms {
        return Err(Error::TooLarge(format!(
            "dictionary with cap {} in dimension {dim} has {count} frequencies (limit {})",
            spec.freq_cap, spec.max_atoms
        )));
    }
    let freqs = frequencies(dim, spec.freq_cap);
    let moments = |m: &DiscreteMeasure, k: &[i64]| -> (f64, f64) {
        let mut c = 0.0;
        let mut s = 0.0;
        for (x, w) in m.support().rows().zip(m.weights()) {
            let t = std::f64::consts::PI * k.iter().zip(x).map(|(&ki, &xi)| ki as f64 * clamp_unit(xi)).sum::<f64>();
            let (sin, cos) = t.sin_cos();
            c += w * cos;
            s += w * sin;
        }
        (c, s)
    };
    let mut best: f64 = 0.0;
    for k in &freqs {
        let scale = atom_scale(k, spec.alpha, spec.l_f);
        let (cp, sp) = moments(p, k);
        let (cq, sq) = moments(q, k);
        best = best.max(scale * (cp - cq).abs().max((sp - sq).abs()));
    }
    if spec.include_projection {
        let mp = p.expect(|x| clamp_unit(x[0]));
        let mq = q.expect(|x| clamp_unit(x[0]));
        best = best.max(spec.l_f * (mp - mq).abs());
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequency_enumeration() {
        assert_eq!(frequencies(1, 3), vec![vec![1], vec![2], vec![3]]);
        let f2 = frequencies(2, 1);
        assert_eq!(f2.len(), 4);
        assert!(f2.contains(&vec![1, -1]) && f2.contains(&vec![0, 1]));
        assert_eq!(WalphaSpec::new(1, 1.0, 2).frequency_count(3), Some(62));
        assert_eq!(frequencies(3, 2).len(), 62);
    }

    #[test]
    fn equal_measures_give_zero() {
        let p = DiscreteMeasure::from_values(&[0.2, 0.8]).unwrap();
        assert_eq!(walpha_ipm(&p, &p, &WalphaSpec::new(2, 1.0, 5)).unwrap(), 0.0);
    }

    #[test]
    fn dominated_by_w1_at_alpha_one() {
        let p = DiscreteMeasure::from_values(&[0.0, 1.0]).unwrap();
        let q = DiscreteMeasure::from_values(&[0.5, 0.5]).unwrap();
        let v = walpha_ipm(&p, &q, &WalphaSpec::new(1, 1.0, 20)).unwrap();
        assert!(v <= 0.5 && v > 0.0);
        // k = 1 cosine atom: |(cos 0 + cos pi)/2 - cos(pi/2)| / pi = 0
        // k = 1 sine atom: |0 - 1| / pi
        assert!((v - 1.0 / std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn atom_cap() {
        let p = DiscreteMeasure::empirical(crate::sampling::PointSet::from_flat(4, vec![0.5; 4]).unwrap()).unwrap();
        let mut spec = WalphaSpec::new(1, 1.0, 10);
        spec.max_atoms = 1000;
        assert!(matches!(walpha_ipm(&p, &p, &spec), Err(Error::TooLarge(_))));
    }
}

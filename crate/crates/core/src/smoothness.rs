//! Multivariate chain-rule combinatorics: multi-indices, the sets `R(gamma, a)`,
//! the composite-derivative formula, the constant `C(D, d, alpha)` bounding the
//! derivatives of `h o g`, and a finite-difference check of that bound.

use std::collections::HashMap;

use num::{BigInt, BigRational, One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::GeneratorSpec;
use crate::ipm::dictionary::Atom;
use crate::sampling::Stream;

/// Largest number of multi-indices a single enumeration may produce.
pub const ENUMERATION_CAP: usize = 1_000_000;
/// Factorials are exact in `u64` up to 20!.
pub const MAX_FACTORIAL_ORDER: u32 = 20;
pub const MIN_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<u32>);

impl MultiIndex {
    pub fn zero(d: usize) -> Self {
        MultiIndex(vec![0; d])
    }

    pub fn unit(d: usize, i: usize) -> Self {
        let mut e = vec![0; d];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// `k! = prod k_i!`
    pub fn factorial(&self) -> Result<u64> {
        if self.order() > MAX_FACTORIAL_ORDER {
            return Err(Error::TooLarge(format!("factorial of order {} exceeds {MAX_FACTORIAL_ORDER}", self.order())));
        }
        Ok(self.0.iter().map(|&e| factorial(e)).product())
    }

    /// Componentwise `self <= other`.
    pub fn le(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

fn factorial(n: u32) -> u64 {
    (1..=n as u64).product()
}

fn binomial(n: u64, k: u64) -> Option<u64> {
    let mut acc: u128 = 1;
    for i in 0..k.min(n - k) {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

/// All `k` in `N^d` with `|k| <= alpha`, lexicographically sorted.
pub fn enumerate_multiindices(d: usize, alpha: u32, include_zero: bool) -> Result<Vec<MultiIndex>> {
    if d == 0 {
        return Err(Error::InvalidDimension("multi-indices need d >= 1".into()));
    }
    let count = binomial(d as u64 + alpha as u64, d as u64);
    if count.is_none_or(|c| c > ENUMERATION_CAP as u64) {
        return Err(Error::TooLarge(format!("binom({}, {d}) multi-indices exceed the cap {ENUMERATION_CAP}", d as u64 + alpha as u64)));
    }
    let mut out = Vec::new();
    let mut cur = vec![0u32; d];
    fn rec(pos: usize, budget: u32, cur: &mut Vec<u32>, out: &mut Vec<MultiIndex>) {
        if pos == cur.len() {
            out.push(MultiIndex(cur.clone()));
            return;
        }
        for e in 0..=budget {
            cur[pos] = e;
            rec(pos + 1, budget - e, cur, out);
        }
        cur[pos] = 0;
    }
    rec(0, alpha, &mut cur, &mut out);
    if !include_zero {
        out.retain(|k| !k.is_zero());
    }
    Ok(out)
}

/// `{beta : 0 < beta <= gamma}` in lexicographic order.
pub fn sub_indices(gamma: &MultiIndex) -> Vec<MultiIndex> {
    let mut out = vec![MultiIndex(Vec::new())];
    for &g in &gamma.0 {
        let mut next = Vec::with_capacity(out.len() * (g as usize + 1));
        for prefix in &out {
            for e in 0..=g {
                let mut p = prefix.0.clone();
                p.push(e);
                next.push(MultiIndex(p));
            }
        }
        out = next;
    }
    out.retain(|b| !b.is_zero());
    out
}

/// `R(gamma, a)`: all `rho` in `N^r` with `sum_j rho_j beta(j) = gamma` and
/// `|rho| = a`, where `beta(1..r)` are the sub-indices of `gamma` in lexicographic order.
pub fn r_set(gamma: &MultiIndex, a: u32) -> Vec<Vec<u32>> {
    let betas = sub_indices(gamma);
    let mut out = Vec::new();
    let mut rho = vec![0u32; betas.len()];
    let mut rest = gamma.0.clone();
    fn rec(j: usize, left: u32, betas: &[MultiIndex], rest: &mut Vec<u32>, rho: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if j == betas.len() {
            if left == 0 && rest.iter().all(|&e| e == 0) {
                out.push(rho.clone());
            }
            return;
        }
        let beta = &betas[j].0;
        let mut count = 0;
        loop {
            rho[j] = count;
            rec(j + 1, left - count, betas, rest, rho, out);
            if count == left || !beta.iter().zip(rest.iter()).all(|(b, r)| b <= r) {
                break;
            }
            for (r, b) in rest.iter_mut().zip(beta) {
                *r -= b;
            }
            count += 1;
        }
        for (r, b) in rest.iter_mut().zip(beta) {
            *r += b * count;
        }
        rho[j] = 0;
    }
    rec(0, a, &betas, &mut rest, &mut rho, &mut out);
    out.sort();
    out
}

fn rational(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn inv_factorial(n: u32) -> BigRational {
    rational(factorial(n)).recip()
}

/// All ordered `D`-tuples of multi-indices summing to `k`.
fn splits(k: &MultiIndex, parts: usize) -> Vec<Vec<MultiIndex>> {
    if parts == 1 {
        return vec![vec![k.clone()]];
    }
    let mut out = Vec::new();
    let mut heads = sub_indices(k);
    heads.insert(0, MultiIndex::zero(k.dim()));
    for head in heads {
        let rest = MultiIndex(k.0.iter().zip(&head.0).map(|(a, b)| a - b).collect());
        for mut tail in splits(&rest, parts - 1) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

/// Which product of `1 / beta(j)!` enters the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstantForm {
    /// `prod_j (1 / beta(j)!)^rho_j`, as in the composite-derivative formula.
    Fraenkel,
    /// `prod_j 1 / beta(j)!` over every sub-index regardless of `rho`.
    Unpowered,
}

struct ConstantTable {
    form: ConstantForm,
    memo: HashMap<(MultiIndex, u32), BigRational>,
}

impl ConstantTable {
    /// `sum_{rho in R(gamma, a)} (1 / rho!) prod_j w_j(rho)`.
    fn weight(&mut self, gamma: &MultiIndex, a: u32) -> BigRational {
        if let Some(v) = self.memo.get(&(gamma.clone(), a)) {
            return v.clone();
        }
        let value = if gamma.is_zero() {
            if a == 0 { BigRational::one() } else { BigRational::zero() }
        } else {
            let betas = sub_indices(gamma);
            let unpowered: BigRational = betas.iter().map(|b| b.0.iter().map(|&e| inv_factorial(e)).product::<BigRational>()).product();
            let mut total = BigRational::zero();
            for rho in r_set(gamma, a) {
                let mut term: BigRational = rho.iter().map(|&r| inv_factorial(r)).product();
                match self.form {
                    ConstantForm::Fraenkel => {
                        for (b, &r) in betas.iter().zip(&rho) {
                            for &e in &b.0 {
                                for _ in 0..r {
                                    term *= inv_factorial(e);
                                }
                            }
                        }
                    }
                    ConstantForm::Unpowered => term *= unpowered.clone(),
                }
                total += term;
            }
            total
        };
        self.memo.insert((gamma.clone(), a), value.clone());
        value
    }

    /// `k! sum_{1 <= |a| <= |k|} sum_{gamma(1) + ... + gamma(D) = k} prod_m weight(gamma(m), a_m)`.
    fn c_k(&mut self, k: &MultiIndex, big_d: usize) -> Result<BigRational> {
        let mut total = BigRational::zero();
        if k.is_zero() {
            return Ok(total);
        }
        let parts = splits(k, big_d);
        for a in enumerate_multiindices(big_d, k.order(), false)? {
            for split in &parts {
                let mut prod = BigRational::one();
                for (gamma, &am) in split.iter().zip(&a.0) {
                    let w = self.weight(gamma, am);
                    if w.is_zero() {
                        prod = w;
                        break;
                    }
                    prod *= w;
                }
                total += prod;
            }
        }
        Ok(total * rational(k.factorial()?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionBound {
    #[serde(rename = "D")]
    pub ambient: usize,
    pub d: usize,
    pub alpha: u32,
    pub form: ConstantForm,
    /// exact value as `numerator/denominator`
    pub exact: String,
    pub value: f64,
    /// multi-index attaining the maximum (empty when the floor of 1 is active)
    pub argmax: Vec<u32>,
}

/// `C(D, d, alpha) = max(1, max_{|k| <= alpha} C_k)`, computed in exact rational arithmetic.
pub fn composition_constant(big_d: usize, d: usize, alpha: u32) -> Result<CompositionBound> {
    composition_constant_with(big_d, d, alpha, ConstantForm::Fraenkel)
}

pub fn composition_constant_with(big_d: usize, d: usize, alpha: u32, form: ConstantForm) -> Result<CompositionBound> {
    if big_d == 0 || d == 0 {
        return Err(Error::InvalidDimension(format!("D = {big_d}, d = {d}")));
    }
    if alpha > MAX_FACTORIAL_ORDER {
        return Err(Error::TooLarge(format!("alpha = {alpha} exceeds {MAX_FACTORIAL_ORDER}")));
    }
    let mut table = ConstantTable { form, memo: HashMap::new() };
    let mut best = BigRational::one();
    let mut argmax = Vec::new();
    for k in enumerate_multiindices(d, alpha, false)? {
        let c = table.c_k(&k, big_d)?;
        if c > best {
            best = c;
            argmax = k.0.clone();
        }
    }
    Ok(CompositionBound {
        ambient: big_d,
        d,
        alpha,
        form,
        exact: format!("{}/{}", best.numer(), best.denom()),
        value: best.to_f64().unwrap_or(f64::INFINITY),
        argmax,
    })
}

/// `D^k (h o g)(x)` by the composite-derivative formula
/// `k! sum_{1 <= |a| <= |k|} (D^a h)(g(x)) / a! * Q_{k,a}(g; x)`, with
/// `Q_{k,a} = sum_{gamma(1) + ... + gamma(D) = k} prod_m P_{gamma(m)}(a_m, g_m)` and
/// `P_gamma(a, v) = sum_{rho in R(gamma, a)} a! / rho! prod_j (D^{beta(j)} v / beta(j)!)^{rho_j}`.
///
/// `h_deriv(a)` supplies `(D^a h)(g(x))`; `g_deriv(m, beta)` supplies `D^beta g_m(x)`.
pub fn composite_derivative<H, G>(k: &MultiIndex, big_d: usize, h_deriv: H, g_deriv: G) -> Result<BigRational>
where
    H: Fn(&MultiIndex) -> BigRational,
    G: Fn(usize, &MultiIndex) -> BigRational,
{
    if k.is_zero() {
        return Err(Error::InvalidSpec("composite derivative needs |k| >= 1".into()));
    }
    let parts = splits(k, big_d);
    let mut total = BigRational::zero();
    for a in enumerate_multiindices(big_d, k.order(), false)? {
        let mut q = BigRational::zero();
        for split in &parts {
            let mut prod = BigRational::one();
            for (m, (gamma, &am)) in split.iter().zip(&a.0).enumerate() {
                prod *= p_gamma(gamma, am, |beta| g_deriv(m, beta));
                if prod.is_zero() {
                    break;
                }
            }
            q += prod;
        }
        if !q.is_zero() {
            total += h_deriv(&a) * q / rational(a.factorial()?);
        }
    }
    Ok(total * rational(k.factorial()?))
}

fn p_gamma<V: Fn(&MultiIndex) -> BigRational>(gamma: &MultiIndex, a: u32, v_deriv: V) -> BigRational {
    if gamma.is_zero() {
        return if a == 0 { BigRational::one() } else { BigRational::zero() };
    }
    let betas = sub_indices(gamma);
    let scaled: Vec<BigRational> = betas
        .iter()
        .map(|b| v_deriv(b) / rational(b.0.iter().map(|&e| factorial(e)).product()))
        .collect();
    let mut total = BigRational::zero();
    for rho in r_set(gamma, a) {
        let mut term = rational(factorial(a));
        for (s, &r) in scaled.iter().zip(&rho) {
            term /= rational(factorial(r));
            for _ in 0..r {
                term *= s.clone();
            }
        }
        total += term;
    }
    total
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompositionReport {
    pub constant: f64,
    pub lipschitz: f64,
    pub alpha: u32,
    /// largest finite-difference estimate of `|D^k (h o g)|` over probes and `1 <= |k| <= alpha`
    pub max_derivative: f64,
    pub worst_index: Vec<u32>,
    /// `max_derivative / (C L^alpha)`
    pub ratio: f64,
    pub probes: usize,
    pub step: f64,
}

/// Mixed central difference of `f` at `x` for multi-index `k` with step `h`.
fn central_difference<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], k: &[u32], h: f64) -> f64 {
    // tensor product of one-dimensional stencils sum_l (-1)^l C(m, l) f(x + (m/2 - l) h)
    let axes: Vec<(usize, u32)> = k.iter().enumerate().filter(|(_, &m)| m > 0).map(|(i, &m)| (i, m)).collect();
    let mut total = 0.0;
    let mut idx = vec![0u32; axes.len()];
    let mut point = x.to_vec();
    loop {
        let mut weight = 1.0;
        for (&(axis, m), &l) in axes.iter().zip(&idx) {
            let c = binomial(m as u64, l as u64).unwrap_or(0) as f64;
            weight *= if l % 2 == 0 { c } else { -c };
            point[axis] = x[axis] + (m as f64 / 2.0 - l as f64) * h;
        }
        total += weight * f(&point);
        let mut pos = 0;
        loop {
            if pos == axes.len() {
                let order: u32 = k.iter().sum();
                return total / h.powi(order as i32);
            }
            idx[pos] += 1;
            if idx[pos] <= axes[pos].1 {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Finite-difference estimates of every `D^k (h o g)` with `1 <= |k| <= alpha` at
/// `probes` random interior points, compared with `C(D, d, alpha) L^alpha`.
/// Each estimate uses steps `step` and `step / 2` combined by one Richardson step.
pub fn verify_composition_bound(
    g: &GeneratorSpec,
    h: &Atom,
    alpha: u32,
    probes: usize,
    step: f64,
    stream: &mut Stream,
) -> Result<CompositionReport> {
    if alpha == 0 || alpha > g.alpha() {
        return Err(Error::HypothesisViolation(format!(
            "order {alpha} must lie in 1..={} (the generator's declared smoothness)",
            g.alpha()
        )));
    }
    if h.dim() != g.ambient_dim() {
        return Err(Error::DimensionMismatch { expected: g.ambient_dim(), got: h.dim() });
    }
    if !(step.is_finite() && step / 2.0 >= MIN_STEP) {
        return Err(Error::StepUnderflow(step / 2.0));
    }
    if probes == 0 {
        return Err(Error::InvalidSpec("verification needs at least one probe".into()));
    }
    let d = g.latent_dim();
    let margin = alpha as f64 * step / 2.0;
    if 2.0 * margin >= 1.0 {
        return Err(Error::InvalidSpec(format!("step {step} leaves no interior at order {alpha}")));
    }
    let bound = composition_constant(g.ambient_dim(), d, alpha)?;
    let scale = bound.value * g.lipschitz().powi(alpha as i32);
    let composite = |u: &[f64]| {
        let mut out = vec![0.0; g.ambient_dim()];
        g.evaluate_into(u, &mut out);
        h.value(&out)
    };
    let indices = enumerate_multiindices(d, alpha, false)?;
    let mut worst = (0.0f64, Vec::new());
    let mut x = vec![0.0; d];
    for _ in 0..probes {
        for xi in x.iter_mut() {
            *xi = stream.uniform_in(margin, 1.0 - margin);
        }
        for k in &indices {
            let coarse = central_difference(&composite, &x, &k.0, step);
            let fine = central_difference(&composite, &x, &k.0, step / 2.0);
            let est = (4.0 * fine - coarse) / 3.0;
            if est.abs() > worst.0 {
                worst = (est.abs(), k.0.clone());
            }
        }
    }
    Ok(CompositionReport {
        constant: bound.value,
        lipschitz: g.lipschitz(),
        alpha,
        max_derivative: worst.0,
        worst_index: worst.1,
        ratio: worst.0 / scale,
        probes,
        step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mi(v: &[u32]) -> MultiIndex {
        MultiIndex(v.to_vec())
    }

    #[test]
    fn enumeration_examples() {
        assert_eq!(enumerate_multiindices(2, 2, true).unwrap().len(), 6);
        assert_eq!(enumerate_multiindices(1, 3, false).unwrap(), vec![mi(&[1]), mi(&[2]), mi(&[3])]);
        assert_eq!(enumerate_multiindices(3, 1, false).unwrap(), vec![mi(&[0, 0, 1]), mi(&[0, 1, 0]), mi(&[1, 0, 0])]);
        let all = enumerate_multiindices(3, 4, true).unwrap();
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert!(matches!(enumerate_multiindices(30, 30, true), Err(Error::TooLarge(_))));
    }

    #[test]
    fn r_set_examples() {
        assert_eq!(r_set(&mi(&[2]), 2), vec![vec![2, 0]]);
        assert_eq!(r_set(&mi(&[3]), 2), vec![vec![1, 1, 0]]);
        assert!(r_set(&mi(&[1, 2]), 0).is_empty());
        assert_eq!(r_set(&mi(&[0, 0]), 0), vec![Vec::<u32>::new()]);
    }

    #[test]
    fn factorial_guard() {
        assert_eq!(mi(&[3, 2]).factorial().unwrap(), 12);
        assert!(mi(&[21]).factorial().is_err());
    }

    #[test]
    fn constant_small_cases() {
        for big_d in 1..=4 {
            for d in 1..=3 {
                assert_eq!(composition_constant(big_d, d, 1).unwrap().exact, format!("{big_d}/1"));
                assert_eq!(composition_constant(big_d, d, 0).unwrap().value, 1.0);
            }
        }
        // |h'' g'^2 + h' g''| <= 2 L^2
        assert_eq!(composition_constant(1, 1, 2).unwrap().exact, "2/1");
        // |h''' g'^3 + 3 h'' g' g'' + h' g'''| <= 5 L^3
        assert_eq!(composition_constant(1, 1, 3).unwrap().exact, "5/1");
        assert_eq!(composition_constant_with(1, 1, 2, ConstantForm::Unpowered).unwrap().exact, "3/2");
    }

    #[test]
    fn splits_cover_all_tuples() {
        let s = splits(&mi(&[2, 1]), 2);
        // (3 choose sub-index) pairs: every beta <= k with its complement
        assert_eq!(s.len(), 6);
        for t in &s {
            assert_eq!(t[0].0[0] + t[1].0[0], 2);
            assert_eq!(t[0].0[1] + t[1].0[1], 1);
        }
    }

    mod symbolic {
        use super::*;

        pub type Poly = Vec<BigRational>;

        pub fn q(n: i64, d: i64) -> BigRational {
            BigRational::new(BigInt::from(n), BigInt::from(d))
        }

        pub fn mul(a: &Poly, b: &Poly) -> Poly {
            let mut out = vec![BigRational::zero(); a.len() + b.len() - 1];
            for (i, x) in a.iter().enumerate() {
                for (j, y) in b.iter().enumerate() {
                    out[i + j] += x * y;
                }
            }
            out
        }

        pub fn add(a: &mut Poly, b: &Poly) {
            if a.len() < b.len() {
                a.resize(b.len(), BigRational::zero());
            }
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }

        pub fn derive(a: &Poly, times: u32) -> Poly {
            let mut out = a.clone();
            for _ in 0..times {
                out = out.iter().enumerate().skip(1).map(|(i, c)| c * rational(i as u64)).collect();
                if out.is_empty() {
                    out.push(BigRational::zero());
                }
            }
            out
        }

        pub fn eval(a: &Poly, x: &BigRational) -> BigRational {
            a.iter().rev().fold(BigRational::zero(), |acc, c| acc * x + c)
        }

        /// `h(y) = sum c prod_m y_m^{e_m}` composed with univariate `g_m`.
        pub fn compose(h: &[(Vec<u32>, BigRational)], g: &[Poly]) -> Poly {
            let mut out = vec![BigRational::zero()];
            for (exps, c) in h {
                let mut term = vec![c.clone()];
                for (gm, &e) in g.iter().zip(exps) {
                    for _ in 0..e {
                        term = mul(&term, gm);
                    }
                }
                add(&mut out, &term);
            }
            out
        }

        /// `(D^a h)(y)` for the monomial sum `h`.
        pub fn h_partial(h: &[(Vec<u32>, BigRational)], a: &[u32], y: &[BigRational]) -> BigRational {
            let mut total = BigRational::zero();
            for (exps, c) in h {
                if exps.iter().zip(a).any(|(e, ai)| ai > e) {
                    continue;
                }
                let mut term = c.clone();
                for ((&e, &ai), ym) in exps.iter().zip(a).zip(y) {
                    for t in 0..ai {
                        term *= rational((e - t) as u64);
                    }
                    for _ in 0..(e - ai) {
                        term *= ym;
                    }
                }
                total += term;
            }
            total
        }
    }

    #[test]
    fn composite_formula_matches_symbolic_differentiation() {
        use symbolic::*;
        let gs: Vec<Poly> = vec![
            vec![q(1, 3), q(-2, 1), q(0, 1), q(5, 7), q(1, 2), q(-1, 5)],
            vec![q(0, 1), q(3, 4), q(-1, 1), q(2, 3), q(0, 1), q(1, 1)],
            vec![q(2, 1), q(1, 1), q(1, 9), q(-3, 2)],
        ];
        let hs: Vec<Vec<(Vec<u32>, BigRational)>> = vec![
            vec![(vec![4, 0, 0], q(1, 2)), (vec![2, 0, 0], q(-3, 1)), (vec![1, 0, 0], q(7, 5))],
            vec![(vec![2, 1, 0], q(1, 1)), (vec![0, 3, 0], q(-2, 3)), (vec![1, 1, 0], q(4, 1)), (vec![0, 0, 0], q(9, 1))],
            vec![(vec![1, 1, 1], q(3, 1)), (vec![2, 0, 2], q(-1, 4)), (vec![0, 0, 3], q(1, 6)), (vec![1, 0, 0], q(1, 1))],
        ];
        for big_d in 1..=3 {
            let h: Vec<(Vec<u32>, BigRational)> =
                hs[big_d - 1].iter().map(|(e, c)| (e[..big_d].to_vec(), c.clone())).collect();
            let g = &gs[..big_d];
            let direct = compose(&h, g);
            for x0 in [q(0, 1), q(2, 5), q(-3, 7)] {
                let y: Vec<BigRational> = g.iter().map(|gm| eval(gm, &x0)).collect();
                for order in 1..=4u32 {
                    let want = eval(&derive(&direct, order), &x0);
                    let got = composite_derivative(
                        &MultiIndex(vec![order]),
                        big_d,
                        |a| h_partial(&h, &a.0, &y),
                        |m, beta| eval(&derive(&g[m], beta.0[0]), &x0),
                    )
                    .unwrap();
                    assert_eq!(got, want, "D = {big_d}, order {order}");
                }
            }
        }
    }

    #[test]
    fn composite_formula_in_two_latent_dimensions() {
        // h(y1, y2) = y1^2 y2, g(u, v) = (u v, u + v^2)
        // h(g) = u^3 v^2 + u^2 v^4, checked at (1/2, 1/3) for every k with |k| <= 4
        let (u, v) = (BigRational::new(1.into(), 2.into()), BigRational::new(1.into(), 3.into()));
        let pow = |x: &BigRational, e: i32| -> BigRational {
            if e < 0 { BigRational::zero() } else { (0..e).fold(BigRational::one(), |acc, _| acc * x) }
        };
        let falling = |e: i32, t: u32| -> BigRational { (0..t as i32).map(|s| rational((e - s).max(0) as u64)).product() };
        let mono = |cu: i32, cv: i32, k: &[u32]| -> BigRational {
            falling(cu, k[0]) * falling(cv, k[1]) * pow(&u, cu - k[0] as i32) * pow(&v, cv - k[1] as i32)
        };
        let y = [&u * &v, &u + &v * &v];
        let h = |a: &MultiIndex| -> BigRational {
            // partials of y1^2 y2
            let (y1, y2) = (&y[0], &y[1]);
            match (a.0[0], a.0[1]) {
                (1, 0) => rational(2) * y1 * y2,
                (0, 1) => y1 * y1,
                (2, 0) => rational(2) * y2,
                (1, 1) => rational(2) * y1,
                (2, 1) => rational(2),
                _ => BigRational::zero(),
            }
        };
        let g = |m: usize, beta: &MultiIndex| -> BigRational {
            if m == 0 { mono(1, 1, &beta.0) } else { mono(1, 0, &beta.0) + mono(0, 2, &beta.0) }
        };
        for k in enumerate_multiindices(2, 4, false).unwrap() {
            let want = mono(3, 2, &k.0) + mono(2, 4, &k.0);
            assert_eq!(composite_derivative(&k, 2, h, g).unwrap(), want, "k = {:?}", k.0);
        }
    }

    #[test]
    fn r_set_matches_brute_force() {
        for d in 1..=3 {
            let top = if d == 3 { 3 } else { 4 };
            for gamma in enumerate_multiindices(d, top, false).unwrap() {
                let betas = sub_indices(&gamma);
                let total = gamma.order();
                for a in 0..=total + 1 {
                    let mut want = Vec::new();
                    let r = betas.len();
                    let mut rho = vec![0u32; r];
                    loop {
                        let sum: u32 = rho.iter().sum();
                        let mut acc = vec![0u32; d];
                        for (b, &c) in betas.iter().zip(&rho) {
                            for (x, e) in acc.iter_mut().zip(&b.0) {
                                *x += c * e;
                            }
                        }
                        if sum == a && acc == gamma.0 {
                            want.push(rho.clone());
                        }
                        let mut pos = 0;
                        while pos < r {
                            rho[pos] += 1;
                            if rho[pos] <= total {
                                break;
                            }
                            rho[pos] = 0;
                            pos += 1;
                        }
                        if pos == r {
                            break;
                        }
                    }
                    want.sort();
                    assert_eq!(r_set(&gamma, a), want, "gamma {:?} a {a}", gamma.0);
                }
            }
        }
    }

    #[test]
    fn finite_differences_respect_the_bound() {
        use crate::ipm::dictionary::AtomKind;
        use crate::sampling::{Purpose, SeedPolicy};
        let g = GeneratorSpec::coordinate_trig(2, 2, 2, 2.0).unwrap();
        let h = Atom::new(vec![1, -1], AtomKind::Sin, 2, 1.0).unwrap();
        let mut s = SeedPolicy::new(5).stream(0, Purpose::Probe);
        let report = verify_composition_bound(&g, &h, 2, 16, 1e-2, &mut s).unwrap();
        assert!(report.max_derivative > 0.0);
        assert!(report.ratio <= 1.05, "{report:?}");
        assert!(matches!(verify_composition_bound(&g, &h, 2, 4, 1e-4, &mut s), Err(Error::StepUnderflow(_))));
        assert!(matches!(verify_composition_bound(&g, &h, 3, 4, 1e-2, &mut s), Err(Error::HypothesisViolation(_))));
    }

    #[test]
    fn central_difference_is_accurate_on_a_smooth_function() {
        let f = |x: &[f64]| (x[0] * 2.0).sin() * (x[1]).exp();
        // d^3/dx^2 dy at (0.3, 0.4) = -4 sin(0.6) e^0.4
        let est = central_difference(&f, &[0.3, 0.4], &[2, 1], 1e-2);
        let exact = -4.0 * 0.6f64.sin() * 0.4f64.exp();
        assert!((est - exact).abs() < 1e-3 * exact.abs());
    }
}

//! Replicated Monte Carlo studies: convergence rates in `n`, linear growth in
//! `sigma` and `eps`, the scalar lower-bound constant, and the Huber
//! indistinguishability construction.
//!
//! Replications are independent tasks on derived streams; results are
//! collected in index order so every reduction is bit-reproducible regardless
//! of scheduling.

use std::fmt::Write as _;

use num::{BigInt, BigRational, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contamination::{synthesize, synthesize_huber, ContaminationLaw, DataSpec, HuberKind, NoiseModel, OutlierPolicy};
use crate::error::{Error, Result};
use crate::generators::{pushforward_sample, GeneratorSpec};
use crate::ipm::{distance_to_pushforward, mean_and_se, IpmSpec};
use crate::sampling::Stream;

pub const MIN_REPS: usize = 30;
pub const MIN_LOWER_BOUND_REPS: usize = 10_000;
/// `sqrt(ln(2 / 0.01) / 2)`, the asymptotic 1% critical value of the Kolmogorov statistic.
pub const KS_CRITICAL_1PCT: f64 = 1.6276;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_std_error: f64,
}

/// Ordinary least squares `y = a + b x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidSpec(format!("linear fit needs matching inputs of length >= 2 (got {} and {})", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidSpec("linear fit over a constant abscissa".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - rss / syy).clamp(0.0, 1.0) };
    let slope_std_error = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(LinearFit { slope, intercept, r_squared, slope_std_error })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub value: f64,
    pub mean: f64,
    pub std_error: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_std_error: f64,
    pub rows: Vec<GridRow>,
}

/// Log-log least squares of `mean` against `value`.
pub fn fit_power_law(rows: Vec<GridRow>) -> Result<RateFit> {
    if rows.len() < 4 {
        return Err(Error::InvalidSpec(format!("a rate fit needs at least 4 grid points, got {}", rows.len())));
    }
    if rows.iter().any(|r| !(r.value > 0.0 && r.mean > 0.0)) {
        return Err(Error::InvalidSpec("a rate fit needs positive grid values and means".into()));
    }
    let x: Vec<f64> = rows.iter().map(|r| r.value.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.mean.ln()).collect();
    let f = linear_fit(&x, &y)?;
    Ok(RateFit { slope: f.slope, intercept: f.intercept, r_squared: f.r_squared, slope_std_error: f.slope_std_error, rows })
}

/// Geometric grid `a, a k, a k^2, ... <= b`.
pub fn geometric_grid(a: usize, b: usize, k: usize) -> Result<Vec<usize>> {
    if a == 0 || k < 2 || b < a {
        return Err(Error::InvalidSpec(format!("geometric grid {a}:{b}:x{k}")));
    }
    let mut out = vec![a];
    while let Some(next) = out.last().unwrap().checked_mul(k).filter(|&v| v <= b) {
        out.push(next);
    }
    Ok(out)
}

fn rep_stream(stream: &Stream, point: usize, rep: usize) -> Stream {
    stream.child(((point as u64) << 32) | rep as u64)
}

/// How the distance to a continuous law is estimated when no closed form applies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    /// reference sample size is `reference_factor * n`
    pub reference_factor: usize,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self { reference_factor: 1 }
    }
}

/// `E d(P_n, g # U_d)` per `n`, with a log-log fit. One-dimensional W1 against
/// an interval law and the projection metric are computed exactly; otherwise a
/// fresh sample of size `reference_factor * n` stands in for the law.
pub fn rate_study(
    g: &GeneratorSpec,
    metric: &IpmSpec,
    n_grid: &[usize],
    reps: usize,
    config: RateConfig,
    stream: &Stream,
) -> Result<RateFit> {
    if reps < MIN_REPS {
        return Err(Error::InvalidSpec(format!("rate studies need reps >= {MIN_REPS}, got {reps}")));
    }
    if n_grid.len() < 4 || n_grid.windows(2).any(|w| w[1] <= w[0]) || n_grid[0] == 0 {
        return Err(Error::InvalidSpec("rate studies need an increasing grid of at least 4 positive sizes".into()));
    }
    if config.reference_factor == 0 {
        return Err(Error::InvalidSpec("reference factor must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for (point, &n) in n_grid.iter().enumerate() {
        let values: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let s = rep_stream(stream, point, rep);
                let data = pushforward_sample(g, n, &mut s.child(1))?;
                distance_to_pushforward(&data, g, metric, config.reference_factor * n, &mut s.child(2))
            })
            .collect::<Result<_>>()?;
        let (mean, std_error) = mean_and_se(&values);
        rows.push(GridRow { value: n as f64, mean, std_error, reps });
    }
    fit_power_law(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: String,
    pub rows: Vec<GridRow>,
    pub fit: LinearFit,
    /// For each grid pair `(s, 2 s)` with `s > 0`:
    /// `(s, |mean(2 s) - 2 mean(s)|, 2 combined std errors)`
    pub doubling: Vec<(f64, f64, f64)>,
}

impl SweepResult {
    pub fn csv(&self) -> String {
        rows_csv(&self.parameter, &self.rows)
    }
}

/// CSV with columns `param, value, mean, std_error, reps`.
pub fn rows_csv(parameter: &str, rows: &[GridRow]) -> String {
    let mut out = String::from("param,value,mean,std_error,reps\n");
    for r in rows {
        let _ = writeln!(out, "{parameter},{},{},{},{}", r.value, r.mean, r.std_error, r.reps);
    }
    out
}

fn sweep(
    parameter: &str,
    grid: &[f64],
    reps: usize,
    stream: &Stream,
    one: impl Fn(f64, &Stream) -> Result<f64> + Sync,
) -> Result<SweepResult> {
    if reps < MIN_REPS {
        return Err(Error::InvalidSpec(format!("sweeps need reps >= {MIN_REPS}, got {reps}")));
    }
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSpec(format!("{parameter} grid must be increasing with at least 2 points")));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for (point, &value) in grid.iter().enumerate() {
        let values: Vec<f64> =
            (0..reps).into_par_iter().map(|rep| one(value, &rep_stream(stream, point, rep))).collect::<Result<_>>()?;
        let (mean, std_error) = mean_and_se(&values);
        rows.push(GridRow { value, mean, std_error, reps });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let fit = linear_fit(&x, &y)?;
    // The population baseline d(P*, P*) is 0, so a linear term doubles the
    // mean itself once it dominates the sampling error.
    let mut doubling = Vec::new();
    for a in rows.iter().filter(|r| r.value > 0.0) {
        if let Some(b) = rows.iter().find(|r| (r.value - 2.0 * a.value).abs() < 1e-12) {
            let gap = (b.mean - 2.0 * a.mean).abs();
            let se = (b.std_error.powi(2) + 4.0 * a.std_error.powi(2)).sqrt();
            doubling.push((a.value, gap, 2.0 * se));
        }
    }
    Ok(SweepResult { parameter: parameter.to_string(), rows, fit, doubling })
}

/// Mean distance against `sigma` with `eps = 0`.
pub fn noise_sweep(
    g: &GeneratorSpec,
    metric: &IpmSpec,
    noise: NoiseModel,
    sigma_grid: &[f64],
    n: usize,
    reps: usize,
    stream: &Stream,
) -> Result<SweepResult> {
    if !sigma_grid.contains(&0.0) {
        return Err(Error::InvalidSpec("the sigma grid must include 0".into()));
    }
    sweep("sigma", sigma_grid, reps, stream, |sigma, s| {
        let spec = DataSpec::new(g.clone()).with_noise(sigma, noise);
        let data = synthesize(&spec, n, &s.child(1))?;
        distance_to_pushforward(&data.points, g, metric, n, &mut s.child(2))
    })
}

/// Mean distance against `eps` with `sigma = 0` and corner outliers.
pub fn contamination_sweep(
    g: &GeneratorSpec,
    metric: &IpmSpec,
    epsilon_grid: &[f64],
    n: usize,
    reps: usize,
    stream: &Stream,
) -> Result<SweepResult> {
    sweep("epsilon", epsilon_grid, reps, stream, |eps, s| {
        let spec = DataSpec::new(g.clone()).with_outliers(eps, OutlierPolicy::Corner);
        let data = synthesize(&spec, n, &s.child(1))?;
        distance_to_pushforward(&data.points, g, metric, n, &mut s.child(2))
    })
}

/// `E|mean(U_1..U_n) - 1/2|` in exact rational arithmetic, from the
/// Irwin-Hall law: `(2 / n) / (n+1)! * sum_{k <= n/2} (-1)^k C(n, k) (n/2 - k)^{n+1}`.
pub fn mean_deviation_exact(n: usize) -> Result<f64> {
    if n == 0 || n > 400 {
        return Err(Error::InvalidSpec(format!("exact mean deviation is computed for 1 <= n <= 400, got {n}")));
    }
    let half = BigRational::new(BigInt::from(n), BigInt::from(2));
    let mut sum = BigRational::zero();
    let mut binom = BigInt::from(1);
    for k in 0..=n / 2 {
        let base = &half - BigRational::from_integer(BigInt::from(k));
        let term = BigRational::from_integer(binom.clone()) * num::pow(base, n + 1);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
        binom = binom * BigInt::from(n - k) / BigInt::from(k + 1);
    }
    let fact: BigInt = (1..=n + 1).map(BigInt::from).product();
    let value = sum * BigRational::new(BigInt::from(2), BigInt::from(n) * fact);
    value.to_f64().ok_or_else(|| Error::Solver("mean deviation does not fit in f64".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundRow {
    pub n: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub reps: usize,
    /// `0.105 / sqrt(n)`
    pub threshold: f64,
    /// `estimate >= threshold`
    pub passes: bool,
    /// `0.5 estimate >= threshold`, the stronger form used in the lower-bound argument
    pub passes_halved: bool,
    /// `sqrt(2 / pi) / sqrt(12 n)`
    pub asymptotic: f64,
    pub exact: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub rows: Vec<LowerBoundRow>,
    pub all_pass: bool,
}

/// Monte Carlo estimate of `E|mean(U_1..U_n) - 1/2|` for each `n`.
pub fn lower_bound_check(n_grid: &[usize], reps: usize, stream: &Stream) -> Result<LowerBoundReport> {
    if reps < MIN_LOWER_BOUND_REPS {
        return Err(Error::InvalidSpec(format!("the lower-bound check needs reps >= {MIN_LOWER_BOUND_REPS}, got {reps}")));
    }
    const CHUNK: usize = 1000;
    let mut rows = Vec::with_capacity(n_grid.len());
    for (point, &n) in n_grid.iter().enumerate() {
        if n == 0 {
            return Err(Error::InvalidSpec("n must be positive".into()));
        }
        let chunks = reps.div_ceil(CHUNK);
        let sums: Vec<(f64, f64)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut s = rep_stream(stream, point, c);
                let count = CHUNK.min(reps - c * CHUNK);
                let (mut a, mut b) = (0.0, 0.0);
                for _ in 0..count {
                    let total: f64 = (0..n).map(|_| s.uniform()).sum();
                    let dev = (total / n as f64 - 0.5).abs();
                    a += dev;
                    b += dev * dev;
                }
                (a, b)
            })
            .collect();
        let (sum, sum_sq) = sums.iter().fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
        let r = reps as f64;
        let estimate = sum / r;
        let var = ((sum_sq - r * estimate * estimate) / (r - 1.0)).max(0.0);
        let threshold = 0.105 / (n as f64).sqrt();
        rows.push(LowerBoundRow {
            n,
            estimate,
            std_error: (var / r).sqrt(),
            reps,
            threshold,
            passes: estimate >= threshold,
            passes_halved: 0.5 * estimate >= threshold,
            asymptotic: (2.0 / std::f64::consts::PI).sqrt() / (12.0 * n as f64).sqrt(),
            exact: if n <= 400 { Some(mean_deviation_exact(n)?) } else { None },
        });
    }
    let all_pass = rows.iter().all(|r| r.passes);
    Ok(LowerBoundReport { rows, all_pass })
}

/// One-sample Kolmogorov statistic `sup |F_n - F|` of `xs` against `U[0,1]`.
pub fn ks_uniform(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = x.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - G_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut best: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    best
}

/// Asymptotic Kolmogorov tail `P(K > lambda) = 2 sum_{k >= 1} (-1)^{k-1} exp(-2 k^2 lambda^2)`.
pub fn kolmogorov_p_value(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut total = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        total += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * total).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    pub p_value: f64,
    pub rejects: bool,
}

fn ks_result(statistic: f64, effective_n: f64) -> KsResult {
    let critical = KS_CRITICAL_1PCT / effective_n.sqrt();
    KsResult { statistic, critical, p_value: kolmogorov_p_value(statistic * effective_n.sqrt()), rejects: statistic > critical }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HuberReport {
    pub epsilon: f64,
    pub n: usize,
    pub two_sample: KsResult,
    pub first_vs_uniform: KsResult,
    pub second_vs_uniform: KsResult,
    /// projection IPM between samples of the two clean pushforwards
    pub clean_gap: f64,
    pub clean_gap_std_error: f64,
    /// exact mean difference of the clean pushforwards
    pub analytic_gap: f64,
    pub passes: bool,
}

/// The two hypotheses `(1 - eps) g_1 # U + eps U[1-eps, 1]` and
/// `(1 - eps) g_2 # U + eps U[0, eps]` with `g_1(u) = (1 - eps) u_1`,
/// `g_2(u) = (1 - eps) u_1 + eps`: both mixtures equal `U[0,1]`, while the clean
/// pushforwards differ by `eps` in mean.
pub fn huber_indistinguishability_check(epsilon: f64, n: usize, stream: &Stream) -> Result<HuberReport> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidSpec(format!("epsilon = {epsilon} must lie in (0, 1)")));
    }
    if n < 2 {
        return Err(Error::InvalidSpec("the Huber check needs n >= 2".into()));
    }
    let g1 = GeneratorSpec::lowerbound_contam_1(epsilon, 1, 1)?;
    let g2 = GeneratorSpec::lowerbound_contam_2(epsilon, 1, 1)?;
    let q1 = ContaminationLaw::Interval { lo: 1.0 - epsilon, hi: 1.0, dim: 1 };
    let q2 = ContaminationLaw::Interval { lo: 0.0, hi: epsilon, dim: 1 };
    let a = synthesize_huber(HuberKind::Hc, &g1, &q1, epsilon, n, &stream.child(1))?.points.column(0);
    let b = synthesize_huber(HuberKind::Hc, &g2, &q2, epsilon, n, &stream.child(2))?.points.column(0);
    let nf = n as f64;
    let two_sample = ks_result(ks_two_sample(&a, &b), nf * nf / (2.0 * nf));
    let first_vs_uniform = ks_result(ks_uniform(&a), nf);
    let second_vs_uniform = ks_result(ks_uniform(&b), nf);
    let c1 = pushforward_sample(&g1, n, &mut stream.child(3))?.column(0);
    let c2 = pushforward_sample(&g2, n, &mut stream.child(4))?.column(0);
    let (m1, se1) = mean_and_se(&c1);
    let (m2, se2) = mean_and_se(&c2);
    let clean_gap = (m2 - m1).abs();
    let clean_gap_std_error = (se1 * se1 + se2 * se2).sqrt();
    let analytic_gap = (g2.first_coordinate_mean() - g1.first_coordinate_mean()).abs();
    let passes = !two_sample.rejects
        && !first_vs_uniform.rejects
        && !second_vs_uniform.rejects
        && clean_gap >= epsilon - 3.0 * clean_gap_std_error;
    Ok(HuberReport {
        epsilon,
        n,
        two_sample,
        first_vs_uniform,
        second_vs_uniform,
        clean_gap,
        clean_gap_std_error,
        analytic_gap,
        passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contamination::theorem3_instance;
    use crate::ipm::DiscreteMeasure;
    use crate::sampling::{Purpose, SeedPolicy};

    fn stream(rep: u64) -> Stream {
        SeedPolicy::new(31).stream(rep, Purpose::Reference)
    }

    #[test]
    fn exact_power_laws_are_recovered() {
        let rows: Vec<GridRow> = [128.0, 256.0, 512.0, 1024.0, 2048.0]
            .iter()
            .map(|&n: &f64| GridRow { value: n, mean: 3.0 * n.powf(-0.5), std_error: 0.0, reps: 50 })
            .collect();
        let fit = fit_power_law(rows).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let short = vec![GridRow { value: 1.0, mean: 1.0, std_error: 0.0, reps: 1 }; 3];
        assert!(fit_power_law(short).is_err());
    }

    #[test]
    fn linear_fit_matches_hand_computation() {
        // y = 1 + 2x plus residuals (+1, -1, -1, +1): slope 2, rss 4, sxx 5
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [2.0, 2.0, 4.0, 8.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.slope_std_error - (4.0f64 / 2.0 / 5.0).sqrt()).abs() < 1e-12);
        assert!((f.r_squared - (1.0 - 4.0 / 24.0)).abs() < 1e-12);
    }

    #[test]
    fn grids() {
        assert_eq!(geometric_grid(128, 8192, 2).unwrap(), vec![128, 256, 512, 1024, 2048, 4096, 8192]);
        assert_eq!(geometric_grid(1, 10_000, 10).unwrap(), vec![1, 10, 100, 1000, 10_000]);
        assert!(geometric_grid(0, 10, 2).is_err());
    }

    #[test]
    fn exact_mean_deviation() {
        assert_eq!(mean_deviation_exact(1).unwrap(), 0.25);
        // n = 2: mean of two uniforms has a triangular law on [0,1], E|T - 1/2| = 1/6
        assert!((mean_deviation_exact(2).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        let n = 400;
        let asym = (2.0 / std::f64::consts::PI).sqrt() / (12.0 * n as f64).sqrt();
        assert!((mean_deviation_exact(n).unwrap() / asym - 1.0).abs() < 1e-2);
    }

    #[test]
    fn lower_bound_small_grid() {
        let report = lower_bound_check(&[1, 10, 100], 10_000, &stream(0)).unwrap();
        assert!(report.all_pass);
        for row in &report.rows {
            let exact = row.exact.unwrap();
            assert!((row.estimate - exact).abs() < 4.0 * row.std_error, "{row:?}");
            assert!(row.passes_halved);
        }
        assert!(lower_bound_check(&[1], 100, &stream(0)).is_err());
    }

    #[test]
    fn ks_statistics() {
        assert!((ks_uniform(&[0.5]) - 0.5).abs() < 1e-15);
        assert!((ks_uniform(&[0.25, 0.75]) - 0.25).abs() < 1e-15);
        assert_eq!(ks_two_sample(&[0.1, 0.2], &[0.1, 0.2]), 0.0);
        assert_eq!(ks_two_sample(&[0.1, 0.2], &[0.3, 0.4]), 1.0);
        assert!((ks_two_sample(&[0.1, 0.3], &[0.2, 0.4]) - 0.5).abs() < 1e-15);
        // the critical value solves P(K > c) = 0.01
        assert!((kolmogorov_p_value(KS_CRITICAL_1PCT) - 0.01).abs() < 1e-4);
    }

    #[test]
    fn huber_small_sample() {
        let report = huber_indistinguishability_check(0.25, 5000, &stream(1)).unwrap();
        assert!((report.analytic_gap - 0.25).abs() < 1e-15);
        assert!(report.passes, "{report:?}");
        assert!(huber_indistinguishability_check(0.0, 10, &stream(1)).is_err());
    }

    #[test]
    fn sweeps_are_linear_for_the_corner_construction() {
        let g = GeneratorSpec::quarter_shift(1).unwrap();
        let noise = noise_sweep(&g, &IpmSpec::ProjectionFirstAxis, NoiseModel::Uniform1d, &[0.0, 0.1, 0.2, 0.4], 500, 30, &stream(2)).unwrap();
        assert!((noise.fit.slope - 0.5).abs() < 0.05, "{:?}", noise.fit);
        assert_eq!(noise.doubling.len(), 2);
        assert!(noise.doubling.iter().all(|&(_, gap, tol)| gap <= tol), "{:?}", noise.doubling);
        let contam = contamination_sweep(&g, &IpmSpec::ProjectionFirstAxis, &[0.0, 0.05, 0.1, 0.2], 500, 30, &stream(3)).unwrap();
        assert!((contam.fit.slope - 0.5).abs() < 0.05, "{:?}", contam.fit);
        let again = contamination_sweep(&g, &IpmSpec::ProjectionFirstAxis, &[0.0, 0.05, 0.1, 0.2], 500, 30, &stream(3)).unwrap();
        assert_eq!(again, contam);
        assert!(contam.csv().starts_with("param,value,mean,std_error,reps\nepsilon,0,"));
    }

    #[test]
    fn one_dimensional_rate() {
        let g = GeneratorSpec::identity(1).unwrap();
        let fit = rate_study(&g, &IpmSpec::W1Exact1d, &[64, 256, 1024, 4096], 30, RateConfig::default(), &stream(4)).unwrap();
        assert!((fit.slope + 0.5).abs() < 0.08, "{fit:?}");
        assert!(rate_study(&g, &IpmSpec::W1Exact1d, &[64, 256, 1024], 30, RateConfig::default(), &stream(4)).is_err());
    }

    #[test]
    fn noisy_contaminated_projection_decomposes() {
        // E d(P_n, P*) <= sigma E|V| + 2 eps + E d(clean P_n, P*) for the projection class
        let (sigma, eps) = (0.2, 0.1);
        let g = GeneratorSpec::quarter_shift(1).unwrap();
        let (mut noisy, mut clean) = (Vec::new(), Vec::new());
        for rep in 0..200 {
            let data = theorem3_instance(sigma, eps, 400, 1, &stream(100 + rep)).unwrap();
            let p = DiscreteMeasure::empirical(data.points.clone()).unwrap();
            noisy.push((p.expect(|x| x[0]) - 0.5).abs());
            let c = DiscreteMeasure::empirical(data.clean_counterpart(&g).unwrap()).unwrap();
            clean.push((c.expect(|x| x[0]) - 0.5).abs());
        }
        let (a, sa) = mean_and_se(&noisy);
        let (b, sb) = mean_and_se(&clean);
        assert!(a <= sigma + 2.0 * eps + b + 3.0 * (sa * sa + sb * sb).sqrt());
    }
}

//! Synthetic data under the contamination model: noisy inliers `g(U_i) + xi_i`,
//! a floor(eps n) share of adversarial outliers, and the Huber variants used by
//! the minimax lower bound.
//!
//! Inliers occupy the first `n - floor(eps n)` rows and outliers the rest.
//! Latents are drawn for every row (outlier rows included) so the clean
//! counterpart `g(U_i)` of a whole dataset is always available.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::generators::GeneratorSpec;
use crate::sampling::{euclidean, sample_latent, sample_sphere_direction, PointSet, Stream};

const LATENT_TAG: u64 = 1;
const NOISE_TAG: u64 = 2;
const OUTLIER_TAG: u64 = 3;
const MIX_TAG: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    /// `sigma` times a uniform direction: `|xi| = sigma` surely.
    #[default]
    SphereFixed,
    /// Isotropic Gaussian scaled so that `E|xi| = sigma`.
    GaussianScaled,
    /// `sigma V e_1` with `V ~ U[0,1]`: a one-sided shift of the first coordinate, `E|xi| = sigma / 2`.
    #[serde(rename = "uniform-1d")]
    Uniform1d,
}

impl NoiseModel {
    /// `E|xi|` for noise level `sigma` in dimension `dim`.
    pub fn expected_norm(self, sigma: f64, _dim: usize) -> f64 {
        match self {
            NoiseModel::SphereFixed | NoiseModel::GaussianScaled => sigma,
            NoiseModel::Uniform1d => 0.5 * sigma,
        }
    }

    fn draw(self, sigma: f64, dim: usize, stream: &mut Stream, out: &mut [f64]) -> Result<()> {
        match self {
            NoiseModel::SphereFixed => {
                let dir = sample_sphere_direction(dim, stream)?;
                for (o, v) in out.iter_mut().zip(dir) {
                    *o = sigma * v;
                }
            }
            NoiseModel::GaussianScaled => {
                let scale = sigma / chi_mean(dim);
                for o in out.iter_mut() {
                    *o = scale * stream.normal();
                }
            }
            NoiseModel::Uniform1d => {
                out.fill(0.0);
                out[0] = sigma * stream.uniform();
            }
        }
        Ok(())
    }
}

/// `E|Z|` for `Z ~ N(0, I_dim)`: `sqrt(2) Gamma((dim+1)/2) / Gamma(dim/2)`.
pub fn chi_mean(dim: usize) -> f64 {
    let k = dim as f64;
    std::f64::consts::SQRT_2 * (ln_gamma((k + 1.0) / 2.0) - ln_gamma(k / 2.0)).exp()
}

/// A contaminating law `Q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContaminationLaw {
    Pushforward { generator: GeneratorSpec },
    /// Uniform on `[lo, hi]` in the first coordinate, zero elsewhere.
    Interval { lo: f64, hi: f64, dim: usize },
}

impl ContaminationLaw {
    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            ContaminationLaw::Pushforward { generator } if generator.ambient_dim() != dim => {
                Err(Error::DimensionMismatch { expected: dim, got: generator.ambient_dim() })
            }
            ContaminationLaw::Interval { lo, hi, dim: qd } => {
                if *qd != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: *qd });
                }
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::InvalidSpec(format!("interval law on [{lo}, {hi}]")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn draw(&self, stream: &mut Stream, out: &mut [f64]) -> Result<()> {
        match self {
            ContaminationLaw::Pushforward { generator } => {
                let u: Vec<f64> = (0..generator.latent_dim()).map(|_| stream.uniform()).collect();
                generator.evaluate_into(&u, out);
            }
            ContaminationLaw::Interval { lo, hi, .. } => {
                out.fill(0.0);
                out[0] = stream.uniform_in(*lo, *hi);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OutlierPolicy {
    /// Every outlier sits at `(1, ..., 1)`.
    Corner,
    /// Outliers drawn independently from `Q`.
    HuberMixture { law: ContaminationLaw },
    /// Outliers cycle through the given points.
    CustomPoints { points: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default)]
    pub noise_model: NoiseModel,
    #[serde(default = "default_policy")]
    pub outlier_policy: OutlierPolicy,
}

fn default_policy() -> OutlierPolicy {
    OutlierPolicy::Corner
}

impl DataSpec {
    pub fn new(generator: GeneratorSpec) -> Self {
        Self { generator, sigma: 0.0, epsilon: 0.0, noise_model: NoiseModel::SphereFixed, outlier_policy: OutlierPolicy::Corner }
    }

    pub fn with_noise(mut self, sigma: f64, model: NoiseModel) -> Self {
        self.sigma = sigma;
        self.noise_model = model;
        self
    }

    pub fn with_outliers(mut self, epsilon: f64, policy: OutlierPolicy) -> Self {
        self.epsilon = epsilon;
        self.outlier_policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::InvalidSpec(format!("sigma = {} must be finite and >= 0", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::InvalidSpec(format!("epsilon = {} must lie in [0, 1]", self.epsilon)));
        }
        let dim = self.generator.ambient_dim();
        match &self.outlier_policy {
            OutlierPolicy::Corner => Ok(()),
            OutlierPolicy::HuberMixture { law } => law.validate(dim),
            OutlierPolicy::CustomPoints { points } => {
                if points.is_empty() {
                    return Err(Error::InvalidSpec("custom outlier policy without points".into()));
                }
                for p in points {
                    if p.len() != dim {
                        return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
                    }
                    if p.iter().any(|c| !c.is_finite()) {
                        return Err(Error::InvalidSpec("non-finite outlier coordinate".into()));
                    }
                }
                Ok(())
            }
        }
    }
}

/// `floor(eps n)`, robust to `eps n` landing a hair below an integer.
pub fn outlier_count(epsilon: f64, n: usize) -> usize {
    let raw = epsilon * n as f64;
    let rounded = raw.round();
    let k = if (raw - rounded).abs() <= 1e-9 * raw.max(1.0) { rounded } else { raw.floor() };
    (k as usize).min(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub points: PointSet,
    pub inlier_mask: Vec<bool>,
    /// one latent per row, outlier rows included
    pub latents: PointSet,
    /// `|xi_i|` per row (zero for outliers)
    pub noise_norms: Vec<f64>,
    pub sigma: f64,
    pub epsilon: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }

    pub fn inliers(&self) -> PointSet {
        let mut out = PointSet::new(self.dim());
        for (p, &keep) in self.points.rows().zip(&self.inlier_mask) {
            if keep {
                out.push(p);
            }
        }
        out
    }

    /// `g(U_i)` for every row: the same latents without noise or outliers.
    pub fn clean_counterpart(&self, g: &GeneratorSpec) -> Result<PointSet> {
        g.pushforward(&self.latents)
    }

    /// CSV with a `#` header line carrying `n, D, sigma, epsilon, seed`, then
    /// columns `x_1..x_D, inlier`.
    pub fn write_csv<W: Write>(&self, mut w: W, seed: Option<u64>) -> std::io::Result<()> {
        let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        writeln!(w, "# n={},D={},sigma={},epsilon={},seed={}", self.len(), self.dim(), self.sigma, self.epsilon, seed)?;
        let mut line = String::new();
        for j in 1..=self.dim() {
            let _ = write!(line, "x_{j},");
        }
        line.push_str("inlier");
        writeln!(w, "{line}")?;
        for (p, &inlier) in self.points.rows().zip(&self.inlier_mask) {
            line.clear();
            for c in p {
                let _ = write!(line, "{c},");
            }
            line.push_str(if inlier { "1" } else { "0" });
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Reads points and inlier flags written by [`Dataset::write_csv`], or any
    /// CSV whose columns are coordinates with an optional trailing `inlier`
    /// column. Latents are not stored in CSV and come back empty.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Dataset> {
        let mut header: Option<Vec<String>> = None;
        let (mut sigma, mut epsilon) = (0.0, 0.0);
        let mut coords = Vec::new();
        let mut mask = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::InvalidSpec(format!("reading CSV: {e}")))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split(',') {
                    if let Some((k, v)) = kv.trim().split_once('=') {
                        match k {
                            "sigma" => sigma = v.parse().unwrap_or(0.0),
                            "epsilon" => epsilon = v.parse().unwrap_or(0.0),
                            _ => {}
                        }
                    }
                }
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let Some(cols) = &header else {
                header = Some(fields.iter().map(|s| s.to_string()).collect());
                continue;
            };
            if fields.len() != cols.len() {
                return Err(Error::InvalidSpec(format!("CSV line {}: {} fields, expected {}", lineno + 1, fields.len(), cols.len())));
            }
            let has_flag = cols.last().is_some_and(|c| c == "inlier");
            let ncoord = if has_flag { cols.len() - 1 } else { cols.len() };
            for f in &fields[..ncoord] {
                coords.push(f.parse::<f64>().map_err(|_| Error::InvalidSpec(format!("CSV line {}: bad number {f:?}", lineno + 1)))?);
            }
            mask.push(!has_flag || fields[ncoord] == "1" || fields[ncoord] == "true");
        }
        let cols = header.ok_or_else(|| Error::InvalidSpec("empty CSV".into()))?;
        let dim = if cols.last().is_some_and(|c| c == "inlier") { cols.len() - 1 } else { cols.len() };
        let points = PointSet::from_flat(dim, coords)?;
        let n = points.len();
        Ok(Dataset { points, inlier_mask: mask, latents: PointSet::new(dim), noise_norms: vec![0.0; n], sigma, epsilon })
    }
}

/// Optional hooks for stress tests beyond the built-in adversaries.
#[derive(Default)]
pub struct Hooks<'a> {
    /// Joint noise sampler: `(latent, clean image, stream) -> xi`; may depend on the latent.
    pub noise: Option<&'a dyn Fn(&[f64], &[f64], &mut Stream) -> Vec<f64>>,
    /// Adversary: `(realized inliers, outlier count, stream) -> outliers`.
    pub adversary: Option<&'a dyn Fn(&PointSet, usize, &mut Stream) -> Result<PointSet>>,
}

/// Draws a dataset from `spec`. Outliers are placed after every inlier is realized.
pub fn synthesize(spec: &DataSpec, n: usize, stream: &Stream) -> Result<Dataset> {
    synthesize_with(spec, n, stream, &Hooks::default())
}

pub fn synthesize_with(spec: &DataSpec, n: usize, stream: &Stream, hooks: &Hooks) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidSpec("dataset size must be at least 1".into()));
    }
    spec.validate()?;
    let g = &spec.generator;
    let dim = g.ambient_dim();
    let outliers = outlier_count(spec.epsilon, n);
    let inliers = n - outliers;
    let latents = sample_latent(n, g.latent_dim(), &mut stream.child(LATENT_TAG))?;
    let mut noise_stream = stream.child(NOISE_TAG);
    let mut points = PointSet::with_capacity(dim, n);
    let mut norms = vec![0.0; n];
    let mut clean = vec![0.0; dim];
    let mut xi = vec![0.0; dim];
    for i in 0..inliers {
        g.evaluate_into(latents.row(i), &mut clean);
        match hooks.noise {
            Some(f) => {
                let v = f(latents.row(i), &clean, &mut noise_stream);
                if v.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
                }
                xi.copy_from_slice(&v);
            }
            None if spec.sigma > 0.0 => spec.noise_model.draw(spec.sigma, dim, &mut noise_stream, &mut xi)?,
            None => xi.fill(0.0),
        }
        norms[i] = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (c, e) in clean.iter_mut().zip(&xi) {
            *c += e;
        }
        points.push(&clean);
    }
    let mut out_stream = stream.child(OUTLIER_TAG);
    if outliers > 0 {
        let placed = match hooks.adversary {
            Some(adv) => {
                let realized = points.clone();
                let pts = adv(&realized, outliers, &mut out_stream)?;
                if pts.len() != outliers || pts.dim() != dim {
                    return Err(Error::InvalidSpec(format!("adversary returned {} points of dimension {}", pts.len(), pts.dim())));
                }
                pts
            }
            None => place_outliers(&spec.outlier_policy, dim, outliers, &mut out_stream)?,
        };
        points = points.concat(&placed)?;
    }
    let mut mask = vec![true; inliers];
    mask.resize(n, false);
    Ok(Dataset { points, inlier_mask: mask, latents, noise_norms: norms, sigma: spec.sigma, epsilon: spec.epsilon })
}

fn place_outliers(policy: &OutlierPolicy, dim: usize, count: usize, stream: &mut Stream) -> Result<PointSet> {
    let mut out = PointSet::with_capacity(dim, count);
    let mut buf = vec![0.0; dim];
    for k in 0..count {
        match policy {
            OutlierPolicy::Corner => buf.fill(1.0),
            OutlierPolicy::HuberMixture { law } => law.draw(stream, &mut buf)?,
            OutlierPolicy::CustomPoints { points } => buf.copy_from_slice(&points[k % points.len()]),
        }
        out.push(&buf);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HuberKind {
    /// Each row independently from `Q` with probability `eps`.
    Hc,
    /// Exactly `floor(eps n)` rows from `Q`.
    Hdc,
}

/// Huber-model sample. Under HC the inlier count is random and may fall below
/// `(1 - eps) n`; the mask records which rows came from `g # U_d`.
pub fn synthesize_huber(
    kind: HuberKind,
    g: &GeneratorSpec,
    q: &ContaminationLaw,
    epsilon: f64,
    n: usize,
    stream: &Stream,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidSpec("dataset size must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidSpec(format!("epsilon = {epsilon} must lie in [0, 1]")));
    }
    let dim = g.ambient_dim();
    q.validate(dim)?;
    let latents = sample_latent(n, g.latent_dim(), &mut stream.child(LATENT_TAG))?;
    let mut from_q = vec![false; n];
    match kind {
        HuberKind::Hdc => {
            let k = outlier_count(epsilon, n);
            from_q[n - k..].fill(true);
        }
        HuberKind::Hc => {
            let mut mix = stream.child(MIX_TAG);
            for f in from_q.iter_mut() {
                *f = mix.bernoulli(epsilon);
            }
        }
    }
    let mut qs = stream.child(OUTLIER_TAG);
    let mut points = PointSet::with_capacity(dim, n);
    let mut buf = vec![0.0; dim];
    for (i, &fq) in from_q.iter().enumerate() {
        if fq {
            q.draw(&mut qs, &mut buf)?;
        } else {
            g.evaluate_into(latents.row(i), &mut buf);
        }
        points.push(&buf);
    }
    Ok(Dataset {
        points,
        inlier_mask: from_q.iter().map(|&f| !f).collect(),
        latents,
        noise_norms: vec![0.0; n],
        sigma: 0.0,
        epsilon,
    })
}

/// The corner construction: `g(x) = (2x + 1) / 4` on `[0,1]^dim`, inliers
/// shifted by `sigma V` (`V ~ U[0,1]`) in the first coordinate, and
/// `floor(eps n)` points at `(1, ..., 1)`.
pub fn theorem3_instance(sigma: f64, epsilon: f64, n: usize, dim: usize, stream: &Stream) -> Result<Dataset> {
    if sigma > 0.5 {
        return Err(Error::HypothesisViolation(format!("the corner construction needs sigma <= 1/2, got {sigma}")));
    }
    let spec = DataSpec::new(GeneratorSpec::quarter_shift(dim)?)
        .with_noise(sigma, NoiseModel::Uniform1d)
        .with_outliers(epsilon, OutlierPolicy::Corner);
    synthesize(&spec, n, stream)
}

/// Mean of `|X_i - g(U_i)|` over inliers.
pub fn mean_inlier_displacement(data: &Dataset, g: &GeneratorSpec) -> Result<f64> {
    let clean = data.clean_counterpart(g)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, &inlier) in data.inlier_mask.iter().enumerate() {
        if inlier {
            total += euclidean(data.points.row(i), clean.row(i));
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{Purpose, SeedPolicy};

    fn stream(rep: u64) -> Stream {
        SeedPolicy::new(11).stream(rep, Purpose::Latent)
    }

    #[test]
    fn noiseless_identity_returns_latents() {
        let spec = DataSpec::new(GeneratorSpec::identity(1).unwrap());
        let data = synthesize(&spec, 4, &stream(0)).unwrap();
        assert_eq!(data.points, data.latents);
        assert!(data.inlier_mask.iter().all(|&b| b));
    }

    #[test]
    fn sphere_noise_has_exact_norm() {
        let g = GeneratorSpec::quarter_shift(2).unwrap();
        let spec = DataSpec::new(g.clone()).with_noise(0.3, NoiseModel::SphereFixed);
        let data = synthesize(&spec, 10_000, &stream(1)).unwrap();
        let mean = mean_inlier_displacement(&data, &g).unwrap();
        assert!((mean - 0.3).abs() < 0.005);
        assert!(data.noise_norms.iter().all(|v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn gaussian_noise_norm_matches_chi_mean() {
        // chi means: sqrt(2/pi), sqrt(pi/2), 2 sqrt(2/pi)
        assert!((chi_mean(1) - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!((chi_mean(2) - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-12);
        assert!((chi_mean(3) - 2.0 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        let g = GeneratorSpec::quarter_shift(3).unwrap();
        let spec = DataSpec::new(g.clone()).with_noise(0.2, NoiseModel::GaussianScaled);
        let data = synthesize(&spec, 20_000, &stream(2)).unwrap();
        let mean = mean_inlier_displacement(&data, &g).unwrap();
        // sd of |xi| is 0.2 sqrt(3 - chi_mean(3)^2) / chi_mean(3) ~ 0.085, so the MC error is ~6e-4
        assert!((mean - 0.2).abs() < 0.003, "{mean}");
    }

    #[test]
    fn corner_outliers_are_counted_exactly() {
        let spec = DataSpec::new(GeneratorSpec::quarter_shift(3).unwrap()).with_outliers(0.1, OutlierPolicy::Corner);
        let data = synthesize(&spec, 100, &stream(3)).unwrap();
        let corners = data.points.rows().filter(|p| p.iter().all(|&c| c == 1.0)).count();
        assert_eq!(corners, 10);
        assert_eq!(data.inlier_count(), 90);
    }

    #[test]
    fn outlier_count_floors() {
        assert_eq!(outlier_count(0.1, 100), 10);
        assert_eq!(outlier_count(0.3, 10), 3);
        assert_eq!(outlier_count(0.29, 10), 2);
        assert_eq!(outlier_count(1.0, 7), 7);
        assert_eq!(outlier_count(0.0, 7), 0);
    }

    #[test]
    fn theorem3_ranges() {
        let data = theorem3_instance(0.0, 0.0, 10, 2, &stream(4)).unwrap();
        assert!(data.points.as_flat().iter().all(|&c| (0.25..=0.75).contains(&c)));
        let data = theorem3_instance(0.5, 0.0, 500, 1, &stream(5)).unwrap();
        assert!(data.points.as_flat().iter().all(|&c| (0.25..=1.25).contains(&c)));
        let data = theorem3_instance(0.2, 1.0, 20, 2, &stream(6)).unwrap();
        assert!(data.points.as_flat().iter().all(|&c| c == 1.0));
        assert!(matches!(theorem3_instance(0.6, 0.0, 10, 1, &stream(7)), Err(Error::HypothesisViolation(_))));
    }

    #[test]
    fn huber_zero_contamination_is_the_pushforward() {
        let g = GeneratorSpec::identity(1).unwrap();
        let q = ContaminationLaw::Interval { lo: 0.0, hi: 0.1, dim: 1 };
        let data = synthesize_huber(HuberKind::Hdc, &g, &q, 0.0, 50, &stream(8)).unwrap();
        assert_eq!(data.points, data.latents);
        let hdc = synthesize_huber(HuberKind::Hdc, &g, &q, 0.2, 50, &stream(8)).unwrap();
        assert_eq!(hdc.inlier_count(), 40);
        let hc = synthesize_huber(HuberKind::Hc, &g, &q, 0.2, 2000, &stream(9)).unwrap();
        let rate = 1.0 - hc.inlier_count() as f64 / 2000.0;
        assert!((rate - 0.2).abs() < 4.0 * (0.16f64 / 2000.0).sqrt());
        let bad = ContaminationLaw::Interval { lo: 1.0, hi: 0.0, dim: 1 };
        assert!(synthesize_huber(HuberKind::Hc, &g, &bad, 0.2, 10, &stream(9)).is_err());
    }

    #[test]
    fn adversary_sees_realized_inliers() {
        let spec = DataSpec::new(GeneratorSpec::identity(1).unwrap()).with_outliers(0.25, OutlierPolicy::Corner);
        let mirror = |inl: &PointSet, k: usize, _: &mut Stream| -> Result<PointSet> {
            let m = inl.column(0).iter().sum::<f64>() / inl.len() as f64;
            PointSet::from_flat(1, vec![1.0 - m; k])
        };
        let hooks = Hooks { noise: None, adversary: Some(&mirror) };
        let data = synthesize_with(&spec, 8, &stream(10), &hooks).unwrap();
        let m = data.points.column(0)[..6].iter().sum::<f64>() / 6.0;
        assert!(data.points.column(0)[6..].iter().all(|&v| v == 1.0 - m));
    }

    #[test]
    fn csv_round_trip() {
        let spec = DataSpec::new(GeneratorSpec::quarter_shift(2).unwrap())
            .with_noise(0.1, NoiseModel::SphereFixed)
            .with_outliers(0.2, OutlierPolicy::Corner);
        let data = synthesize(&spec, 10, &stream(12)).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf, Some(12)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# n=10,D=2,sigma=0.1,epsilon=0.2,seed=12\nx_1,x_2,inlier\n"));
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.points, data.points);
        assert_eq!(back.inlier_mask, data.inlier_mask);
        assert_eq!(back.epsilon, 0.2);
    }

    #[test]
    fn invalid_specs() {
        let g = GeneratorSpec::identity(2).unwrap();
        assert!(synthesize(&DataSpec::new(g.clone()).with_noise(-1.0, NoiseModel::SphereFixed), 5, &stream(0)).is_err());
        assert!(synthesize(&DataSpec::new(g.clone()).with_outliers(1.5, OutlierPolicy::Corner), 5, &stream(0)).is_err());
        assert!(synthesize(&DataSpec::new(g.clone()), 0, &stream(0)).is_err());
        let custom = OutlierPolicy::CustomPoints { points: vec![vec![0.0]] };
        assert!(synthesize(&DataSpec::new(g).with_outliers(0.5, custom), 4, &stream(0)).is_err());
    }
}

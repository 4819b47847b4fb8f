//! Generator maps `g: [0,1]^d -> [0,1]^D` and their pushforwards.
//!
//! The built-in families are the ones the rate, noise and contamination
//! studies need: affine maps, a smooth trigonometric family with analytic
//! derivative control, constants, the two-point constructions used by the
//! minimax lower bounds, and a tabulated (multilinear) family for
//! nonparametric fits. None of them come from a reference experiment; they
//! are chosen so every derivative bound is known in closed form.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{euclidean, sample_latent, PointSet, Stream};

/// One output coordinate of the trigonometric family:
/// `center + amplitude * cos(pi <freq, u>) / (pi |freq|_1)^alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigTerm {
    pub center: f64,
    pub amplitude: f64,
    pub freq: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `g(u) = A u + b`, `A` stored row-major as `D x d`.
    Affine { matrix: Vec<f64>, offset: Vec<f64> },
    CoordinateTrig { terms: Vec<TrigTerm> },
    Constant { value: Vec<f64> },
    /// `((1 - eps) u_1, 0, ..., 0)`
    LowerBoundContam1 { epsilon: f64 },
    /// `((1 - eps) u_1 + eps, 0, ..., 0)`
    LowerBoundContam2 { epsilon: f64 },
    /// Identically zero.
    LowerBoundNoise1,
    /// `(sigma, 0, ..., 0)`
    LowerBoundNoise2 { sigma: f64 },
    /// Values on a regular grid with `resolution` nodes per axis, interpolated
    /// multilinearly. Values are stored coordinate-major: `D` blocks of
    /// `resolution^d` nodes, last latent axis fastest.
    Tabulated { resolution: usize, values: Vec<f64> },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Affine { .. } => "affine",
            Family::CoordinateTrig { .. } => "coordinate-trig",
            Family::Constant { .. } => "constant",
            Family::LowerBoundContam1 { .. } => "lowerbound-contam-1",
            Family::LowerBoundContam2 { .. } => "lowerbound-contam-2",
            Family::LowerBoundNoise1 => "lowerbound-noise-1",
            Family::LowerBoundNoise2 { .. } => "lowerbound-noise-2",
            Family::Tabulated { .. } => "tabulated",
        }
    }
}

/// A validated generator together with its declared smoothness `(alpha, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    family: Family,
    d: usize,
    ambient: usize,
    alpha: u32,
    lipschitz: f64,
}

const RANGE_SLACK: f64 = 1e-12;

impl GeneratorSpec {
    /// Builds a generator, declaring the tightest smoothness constant this
    /// family admits (never below 1).
    pub fn new(family: Family, d: usize, ambient: usize, alpha: u32) -> Result<Self> {
        let bound = family_derivative_bound(&family, d, ambient, alpha)?;
        Self::with_declared(family, d, ambient, alpha, bound)
    }

    /// Builds a generator with an explicit declared `L`, which must dominate
    /// the family's analytic derivative bound.
    pub fn with_declared(family: Family, d: usize, ambient: usize, alpha: u32, lipschitz: f64) -> Result<Self> {
        if d == 0 || ambient == 0 {
            return Err(Error::InvalidDimension(format!("generator needs d >= 1 and D >= 1 (got d={d}, D={ambient})")));
        }
        if alpha == 0 {
            return Err(Error::InvalidSpec("declared smoothness order must be at least 1".into()));
        }
        if !(lipschitz.is_finite() && lipschitz >= 1.0) {
            return Err(Error::InvalidSpec(format!("declared L must be >= 1, got {lipschitz}")));
        }
        let bound = family_derivative_bound(&family, d, ambient, alpha)?;
        if bound > lipschitz * (1.0 + 1e-12) {
            return Err(Error::InvalidSpec(format!(
                "declared L = {lipschitz} is below the {} family's derivative bound {bound}",
                family.name()
            )));
        }
        check_range(&family, d, ambient, alpha)?;
        Ok(Self { family, d, ambient, alpha, lipschitz })
    }

    pub fn identity(d: usize) -> Result<Self> {
        let mut matrix = vec![0.0; d * d];
        for i in 0..d {
            matrix[i * d + i] = 1.0;
        }
        Self::new(Family::Affine { matrix, offset: vec![0.0; d] }, d, d, 1)
    }

    pub fn affine(matrix: Vec<f64>, offset: Vec<f64>, d: usize, ambient: usize) -> Result<Self> {
        Self::new(Family::Affine { matrix, offset }, d, ambient, 1)
    }

    /// `g(u) = (2u + 1) / 4` coordinatewise on `[0,1]^dim`.
    pub fn quarter_shift(dim: usize) -> Result<Self> {
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            matrix[i * dim + i] = 0.5;
        }
        Self::new(Family::Affine { matrix, offset: vec![0.25; dim] }, dim, dim, 1)
    }

    pub fn constant(value: Vec<f64>, d: usize) -> Result<Self> {
        let ambient = value.len();
        Self::new(Family::Constant { value }, d, ambient, 1)
    }

    pub fn lowerbound_contam_1(epsilon: f64, d: usize, ambient: usize) -> Result<Self> {
        Self::new(Family::LowerBoundContam1 { epsilon }, d, ambient, 1)
    }

    pub fn lowerbound_contam_2(epsilon: f64, d: usize, ambient: usize) -> Result<Self> {
        Self::new(Family::LowerBoundContam2 { epsilon }, d, ambient, 1)
    }

    pub fn lowerbound_noise_1(d: usize, ambient: usize) -> Result<Self> {
        Self::new(Family::LowerBoundNoise1, d, ambient, 1)
    }

    pub fn lowerbound_noise_2(sigma: f64, d: usize, ambient: usize) -> Result<Self> {
        Self::new(Family::LowerBoundNoise2 { sigma }, d, ambient, 1)
    }

    /// Trigonometric generator with declared `(alpha, L)`. Coordinate `j`
    /// oscillates along latent axis `j mod d` with the smallest integer
    /// frequency `s` such that the amplitude `L / (pi s)^alpha` fits in
    /// `[0,1]`; coordinates beyond the first `d` get a cross term along the
    /// next axis so that no two coordinates coincide.
    pub fn coordinate_trig(d: usize, ambient: usize, alpha: u32, lipschitz: f64) -> Result<Self> {
        if alpha == 0 {
            return Err(Error::InvalidSpec("declared smoothness order must be at least 1".into()));
        }
        let mut s = 1i64;
        while lipschitz / (PI * s as f64).powi(alpha as i32) > 0.5 {
            s += 1;
        }
        let terms = (0..ambient)
            .map(|j| {
                let mut freq = vec![0i64; d];
                if d == 1 {
                    freq[0] = s + j as i64;
                } else {
                    freq[j % d] = s;
                    freq[(j + 1) % d] += (j / d) as i64;
                }
                TrigTerm { center: 0.5, amplitude: lipschitz, freq }
            })
            .collect();
        Self::with_declared(Family::CoordinateTrig { terms }, d, ambient, alpha, lipschitz)
    }

    /// Tabulates `f` on a grid of `resolution` nodes per latent axis.
    pub fn tabulated<F>(d: usize, ambient: usize, resolution: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        if resolution < 2 {
            return Err(Error::InvalidSpec("tabulated generator needs at least 2 nodes per axis".into()));
        }
        let nodes = resolution.checked_pow(d as u32).ok_or_else(|| Error::TooLarge("tabulated grid".into()))?;
        let mut values = vec![0.0; nodes * ambient];
        let mut u = vec![0.0; d];
        for node in 0..nodes {
            let mut rest = node;
            for axis in (0..d).rev() {
                u[axis] = (rest % resolution) as f64 / (resolution - 1) as f64;
                rest /= resolution;
            }
            let out = f(&u);
            if out.len() != ambient {
                return Err(Error::DimensionMismatch { expected: ambient, got: out.len() });
            }
            for (j, v) in out.into_iter().enumerate() {
                values[j * nodes + node] = v;
            }
        }
        Self::new(Family::Tabulated { resolution, values }, d, ambient, 1)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn latent_dim(&self) -> usize {
        self.d
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn evaluate(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: u.len() });
        }
        if let Some(bad) = u.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(Error::OutOfDomain(format!("latent coordinate {bad}")));
        }
        let mut out = vec![0.0; self.ambient];
        self.evaluate_into(u, &mut out);
        Ok(out)
    }

    /// Unchecked evaluation; `u` must lie in `[0,1]^d`. Also used by the
    /// finite-difference probes, which may step slightly outside the cube.
    pub fn evaluate_into(&self, u: &[f64], out: &mut [f64]) {
        match &self.family {
            Family::Affine { matrix, offset } => {
                for (j, o) in out.iter_mut().enumerate() {
                    let row = &matrix[j * self.d..(j + 1) * self.d];
                    *o = offset[j] + row.iter().zip(u).map(|(a, x)| a * x).sum::<f64>();
                }
            }
            Family::CoordinateTrig { terms } => {
                for (o, t) in out.iter_mut().zip(terms) {
                    let dot: f64 = t.freq.iter().zip(u).map(|(&k, x)| k as f64 * x).sum();
                    *o = t.center + t.amplitude * (PI * dot).cos() / trig_scale(&t.freq, self.alpha);
                }
            }
            Family::Constant { value } => out.copy_from_slice(value),
            Family::LowerBoundContam1 { epsilon } => {
                out.fill(0.0);
                out[0] = (1.0 - epsilon) * u[0];
            }
            Family::LowerBoundContam2 { epsilon } => {
                out.fill(0.0);
                out[0] = (1.0 - epsilon) * u[0] + epsilon;
            }
            Family::LowerBoundNoise1 => out.fill(0.0),
            Family::LowerBoundNoise2 { sigma } => {
                out.fill(0.0);
                out[0] = *sigma;
            }
            Family::Tabulated { resolution, values } => {
                multilinear(*resolution, values, self.d, u, out);
            }
        }
    }

    /// Applies the generator to every latent point.
    pub fn pushforward(&self, latents: &PointSet) -> Result<PointSet> {
        if latents.dim() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: latents.dim() });
        }
        let mut out = PointSet::with_capacity(self.ambient, latents.len());
        let mut buf = vec![0.0; self.ambient];
        for u in latents.rows() {
            if let Some(bad) = u.iter().find(|c| !(0.0..=1.0).contains(*c)) {
                return Err(Error::OutOfDomain(format!("latent coordinate {bad}")));
            }
            self.evaluate_into(u, &mut buf);
            out.push(&buf);
        }
        Ok(out)
    }

    /// Exact mean of the first output coordinate under `g # U_d`.
    pub fn first_coordinate_mean(&self) -> f64 {
        match &self.family {
            Family::Affine { matrix, offset } => offset[0] + 0.5 * matrix[..self.d].iter().sum::<f64>(),
            Family::CoordinateTrig { terms } => {
                let t = &terms[0];
                t.center + t.amplitude * mean_cos_pi_dot(&t.freq) / trig_scale(&t.freq, self.alpha)
            }
            Family::Constant { value } => value[0],
            Family::LowerBoundContam1 { epsilon } => 0.5 * (1.0 - epsilon),
            Family::LowerBoundContam2 { epsilon } => 0.5 * (1.0 - epsilon) + epsilon,
            Family::LowerBoundNoise1 => 0.0,
            Family::LowerBoundNoise2 { sigma } => *sigma,
            Family::Tabulated { resolution, values } => {
                let nodes = resolution.pow(self.d as u32);
                let mut total = 0.0;
                for node in 0..nodes {
                    let mut w = 1.0;
                    let mut rest = node;
                    for _ in 0..self.d {
                        let idx = rest % resolution;
                        rest /= resolution;
                        let edge = idx == 0 || idx == resolution - 1;
                        w *= if edge { 0.5 } else { 1.0 } / (*resolution - 1) as f64;
                    }
                    total += w * values[node];
                }
                total
            }
        }
    }

    /// For one-dimensional outputs whose law is uniform on an interval (or a
    /// point mass), returns that interval.
    pub fn uniform_interval_law(&self) -> Option<(f64, f64)> {
        if self.ambient != 1 {
            return None;
        }
        match &self.family {
            Family::Affine { matrix, offset } => {
                let active: Vec<f64> = matrix.iter().copied().filter(|a| *a != 0.0).collect();
                match active.as_slice() {
                    [] => Some((offset[0], offset[0])),
                    [a] => {
                        let (x, y) = (offset[0], offset[0] + a);
                        Some((x.min(y), x.max(y)))
                    }
                    _ => None,
                }
            }
            Family::Constant { value } => Some((value[0], value[0])),
            Family::LowerBoundContam1 { epsilon } => Some((0.0, 1.0 - epsilon)),
            Family::LowerBoundContam2 { epsilon } => Some((*epsilon, 1.0)),
            Family::LowerBoundNoise1 => Some((0.0, 0.0)),
            Family::LowerBoundNoise2 { sigma } => Some((*sigma, *sigma)),
            _ => None,
        }
    }
}

/// `g # U_d` sampled `n` times: the latent draw followed by pointwise evaluation.
pub fn pushforward_sample(g: &GeneratorSpec, n: usize, stream: &mut Stream) -> Result<PointSet> {
    let latents = sample_latent(n, g.latent_dim(), stream)?;
    g.pushforward(&latents)
}

/// Empirical lower bound on the Lipschitz constant: the largest difference
/// quotient over random probe pairs and over local pairs at distance at most
/// 0.01 around every probe.
pub fn estimate_lipschitz(g: &GeneratorSpec, probes: usize, stream: &mut Stream) -> Result<f64> {
    if probes < 2 {
        return Err(Error::InvalidSpec("Lipschitz estimation needs at least 2 probes".into()));
    }
    let d = g.latent_dim();
    let pts = sample_latent(probes, d, stream)?;
    let images = g.pushforward(&pts)?;
    let mut best = 0.0f64;
    let mut ratio = |u: &[f64], v: &[f64], gu: &[f64], gv: &[f64]| {
        let du = euclidean(u, v);
        if du > 1e-12 {
            best = best.max(euclidean(gu, gv) / du);
        }
    };
    for i in 0..probes - 1 {
        ratio(pts.row(i), pts.row(i + 1), images.row(i), images.row(i + 1));
    }
    let mut partner = vec![0.0; d];
    let mut image = vec![0.0; g.ambient_dim()];
    for i in 0..probes {
        let u = pts.row(i);
        let dir = crate::sampling::sample_sphere_direction(d, stream)?;
        let radius = 0.01 * stream.uniform();
        for k in 0..d {
            partner[k] = (u[k] + radius * dir[k]).clamp(0.0, 1.0);
        }
        g.evaluate_into(&partner, &mut image);
        ratio(u, &partner, images.row(i), &image);
    }
    Ok(best)
}

fn trig_scale(freq: &[i64], alpha: u32) -> f64 {
    let l1: i64 = freq.iter().map(|k| k.abs()).sum();
    (PI * l1 as f64).powi(alpha as i32)
}

/// `E cos(pi <k, U>)` for `U ~ U_d`, from the product of per-axis
/// characteristic values `(e^{i pi k} - 1) / (i pi k)`.
fn mean_cos_pi_dot(freq: &[i64]) -> f64 {
    let (mut re, mut im) = (1.0f64, 0.0f64);
    for &k in freq {
        if k == 0 {
            continue;
        }
        let t = PI * k as f64;
        // (e^{it} - 1) / (it) = (sin t)/t + i (1 - cos t)/t
        let (a, b) = (t.sin() / t, (1.0 - t.cos()) / t);
        let (nr, ni) = (re * a - im * b, re * b + im * a);
        re = nr;
        im = ni;
    }
    re
}

fn multilinear(resolution: usize, values: &[f64], d: usize, u: &[f64], out: &mut [f64]) {
    let nodes = resolution.pow(d as u32);
    let cells = (resolution - 1) as f64;
    let mut base = vec![0usize; d];
    let mut frac = vec![0.0; d];
    for k in 0..d {
        let x = (u[k].clamp(0.0, 1.0)) * cells;
        let i = (x.floor() as usize).min(resolution - 2);
        base[k] = i;
        frac[k] = x - i as f64;
    }
    for (j, o) in out.iter_mut().enumerate() {
        let block = &values[j * nodes..(j + 1) * nodes];
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0usize;
            for k in 0..d {
                let bit = (corner >> k) & 1;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                idx = idx * resolution + base[k] + bit;
            }
            acc += w * block[idx];
        }
        *o = acc;
    }
}

/// Largest sup-norm of any partial derivative of order `1..=alpha` (and of
/// the map itself) over the cube, in closed form per family.
fn family_derivative_bound(family: &Family, d: usize, ambient: usize, alpha: u32) -> Result<f64> {
    let expect = |what: &str, got: usize, want: usize| {
        if got == want {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("{what}: expected {want} values, got {got}")))
        }
    };
    let bound = match family {
        Family::Affine { matrix, offset } => {
            expect("affine matrix", matrix.len(), d * ambient)?;
            expect("affine offset", offset.len(), ambient)?;
            matrix.iter().fold(0.0f64, |m, a| m.max(a.abs()))
        }
        Family::CoordinateTrig { terms } => {
            expect("coordinate-trig terms", terms.len(), ambient)?;
            let mut b = 0.0f64;
            for t in terms {
                expect("coordinate-trig frequency", t.freq.len(), d)?;
                if t.freq.iter().all(|&k| k == 0) {
                    return Err(Error::InvalidSpec("coordinate-trig frequency must be nonzero".into()));
                }
                b = b.max(t.amplitude.abs());
            }
            b
        }
        Family::Constant { value } => {
            expect("constant value", value.len(), ambient)?;
            0.0
        }
        Family::LowerBoundContam1 { epsilon } | Family::LowerBoundContam2 { epsilon } => {
            if !(0.0..=1.0).contains(epsilon) {
                return Err(Error::InvalidSpec(format!("contamination rate {epsilon} outside [0,1]")));
            }
            1.0 - epsilon
        }
        Family::LowerBoundNoise1 => 0.0,
        Family::LowerBoundNoise2 { sigma } => {
            if !(0.0..=1.0).contains(sigma) {
                return Err(Error::InvalidSpec(format!("noise level {sigma} outside [0,1]")));
            }
            0.0
        }
        Family::Tabulated { resolution, values } => {
            if alpha != 1 {
                return Err(Error::InvalidSpec("tabulated generators are only Lipschitz (alpha = 1)".into()));
            }
            if *resolution < 2 {
                return Err(Error::InvalidSpec("tabulated generator needs at least 2 nodes per axis".into()));
            }
            let nodes = resolution.pow(d as u32);
            expect("tabulated values", values.len(), nodes * ambient)?;
            let cells = (*resolution - 1) as f64;
            let mut b = 0.0f64;
            for block in values.chunks(nodes) {
                let mut stride = 1usize;
                for _ in 0..d {
                    for node in 0..nodes {
                        if (node / stride) % resolution + 1 < *resolution {
                            b = b.max((block[node + stride] - block[node]).abs() * cells);
                        }
                    }
                    stride *= resolution;
                }
            }
            b
        }
    };
    if !bound.is_finite() {
        return Err(Error::InvalidSpec("non-finite generator parameter".into()));
    }
    // The order-0 term is at most 1 because the range is [0,1]^D.
    Ok(bound.max(1.0))
}

fn check_range(family: &Family, d: usize, ambient: usize, alpha: u32) -> Result<()> {
    let mut ranges = Vec::with_capacity(ambient);
    match family {
        Family::Affine { matrix, offset } => {
            for j in 0..ambient {
                let row = &matrix[j * d..(j + 1) * d];
                let lo = offset[j] + row.iter().map(|a| a.min(0.0)).sum::<f64>();
                let hi = offset[j] + row.iter().map(|a| a.max(0.0)).sum::<f64>();
                ranges.push((lo, hi));
            }
        }
        Family::CoordinateTrig { terms } => {
            for t in terms {
                let amp = t.amplitude.abs() / trig_scale(&t.freq, alpha);
                ranges.push((t.center - amp, t.center + amp));
            }
        }
        Family::Constant { value } => ranges.extend(value.iter().map(|&v| (v, v))),
        Family::LowerBoundContam1 { .. } | Family::LowerBoundContam2 { .. } | Family::LowerBoundNoise1 => {}
        Family::LowerBoundNoise2 { .. } => {}
        Family::Tabulated { values, .. } => {
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            ranges.push((lo, hi));
        }
    }
    for (j, (lo, hi)) in ranges.into_iter().enumerate() {
        if lo < -RANGE_SLACK || hi > 1.0 + RANGE_SLACK {
            return Err(Error::InvalidSpec(format!("coordinate {j} ranges over [{lo}, {hi}], outside [0,1]")));
        }
    }
    Ok(())
}

/// Structured-text form of a generator: family name, flat parameter array,
/// dimensions and declared smoothness.
///
/// Parameter layouts:
/// - `affine`: the `D x d` matrix row-major, then the `D` offsets
/// - `coordinate-trig`: per output coordinate `center, amplitude, k_1..k_d`
/// - `constant`: the `D` values
/// - `lowerbound-contam-1`, `lowerbound-contam-2`: `[epsilon]`
/// - `lowerbound-noise-1`: `[]`
/// - `lowerbound-noise-2`: `[sigma]`
/// - `tabulated`: `resolution`, then the node values (see [`Family::Tabulated`])
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorDoc {
    pub family: String,
    #[serde(default)]
    pub params: Vec<f64>,
    pub d: usize,
    #[serde(rename = "D")]
    pub ambient: usize,
    #[serde(default = "default_alpha")]
    pub alpha: u32,
    #[serde(rename = "L", default)]
    pub lipschitz: Option<f64>,
}

fn default_alpha() -> u32 {
    1
}

impl From<&GeneratorSpec> for GeneratorDoc {
    fn from(g: &GeneratorSpec) -> Self {
        let params = match &g.family {
            Family::Affine { matrix, offset } => matrix.iter().chain(offset).copied().collect(),
            Family::CoordinateTrig { terms } => terms
                .iter()
                .flat_map(|t| [t.center, t.amplitude].into_iter().chain(t.freq.iter().map(|&k| k as f64)))
                .collect(),
            Family::Constant { value } => value.clone(),
            Family::LowerBoundContam1 { epsilon } | Family::LowerBoundContam2 { epsilon } => vec![*epsilon],
            Family::LowerBoundNoise1 => vec![],
            Family::LowerBoundNoise2 { sigma } => vec![*sigma],
            Family::Tabulated { resolution, values } => {
                std::iter::once(*resolution as f64).chain(values.iter().copied()).collect()
            }
        };
        GeneratorDoc {
            family: g.family.name().to_string(),
            params,
            d: g.d,
            ambient: g.ambient,
            alpha: g.alpha,
            lipschitz: Some(g.lipschitz),
        }
    }
}

impl TryFrom<&GeneratorDoc> for GeneratorSpec {
    type Error = Error;

    fn try_from(doc: &GeneratorDoc) -> Result<Self> {
        let (d, ambient, p) = (doc.d, doc.ambient, &doc.params);
        let scalar = |name: &str| -> Result<f64> {
            match p.as_slice() {
                [x] => Ok(*x),
                _ => Err(Error::InvalidSpec(format!("{name} takes exactly one parameter, got {}", p.len()))),
            }
        };
        let family = match doc.family.as_str() {
            "affine" => {
                if p.len() != ambient * d + ambient {
                    return Err(Error::InvalidSpec(format!(
                        "affine needs {} parameters, got {}",
                        ambient * d + ambient,
                        p.len()
                    )));
                }
                Family::Affine { matrix: p[..ambient * d].to_vec(), offset: p[ambient * d..].to_vec() }
            }
            "coordinate-trig" => {
                if p.len() != ambient * (2 + d) {
                    return Err(Error::InvalidSpec(format!(
                        "coordinate-trig needs {} parameters, got {}",
                        ambient * (2 + d),
                        p.len()
                    )));
                }
                let mut terms = Vec::with_capacity(ambient);
                for chunk in p.chunks(2 + d) {
                    let mut freq = Vec::with_capacity(d);
                    for &k in &chunk[2..] {
                        if k.fract() != 0.0 {
                            return Err(Error::InvalidSpec(format!("trig frequency {k} is not an integer")));
                        }
                        freq.push(k as i64);
                    }
                    terms.push(TrigTerm { center: chunk[0], amplitude: chunk[1], freq });
                }
                Family::CoordinateTrig { terms }
            }
            "constant" => Family::Constant { value: p.clone() },
            "lowerbound-contam-1" => Family::LowerBoundContam1 { epsilon: scalar("lowerbound-contam-1")? },
            "lowerbound-contam-2" => Family::LowerBoundContam2 { epsilon: scalar("lowerbound-contam-2")? },
            "lowerbound-noise-1" => Family::LowerBoundNoise1,
            "lowerbound-noise-2" => Family::LowerBoundNoise2 { sigma: scalar("lowerbound-noise-2")? },
            "tabulated" => {
                let (first, rest) = p
                    .split_first()
                    .ok_or_else(|| Error::InvalidSpec("tabulated needs a resolution parameter".into()))?;
                if first.fract() != 0.0 || *first < 2.0 {
                    return Err(Error::InvalidSpec(format!("tabulated resolution {first} is not an integer >= 2")));
                }
                Family::Tabulated { resolution: *first as usize, values: rest.to_vec() }
            }
            other => return Err(Error::InvalidSpec(format!("unknown generator family '{other}'"))),
        };
        match doc.lipschitz {
            Some(l) => GeneratorSpec::with_declared(family, d, ambient, doc.alpha, l),
            None => GeneratorSpec::new(family, d, ambient, doc.alpha),
        }
    }
}

impl Serialize for GeneratorSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GeneratorDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for GeneratorSpec {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let doc = GeneratorDoc::deserialize(de)?;
        GeneratorSpec::try_from(&doc).map_err(serde::de::Error::custom)
    }
}

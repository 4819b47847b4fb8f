//! Empirical risk minimization over parametric generator templates, and an
//! audit of the oracle inequality
//! `R(g_hat) <= inf_G R(g) + 2 d(P_n, P*)`.
//!
//! The objective `theta -> d(g_theta # U_m, P_n)` is evaluated on one fixed
//! latent sample `U_m` shared by every `theta` (common random numbers), which
//! makes it a deterministic function that a derivative-free simplex search can
//! minimize.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contamination::{synthesize, DataSpec};
use crate::error::{Error, Result};
use crate::generators::GeneratorSpec;
use crate::ipm::{distance_to_pushforward, w1_empirical, w1_exact_1d, DiscreteMeasure, IpmSpec, Law1d};
use crate::sampling::{sample_latent, PointSet, Stream};

const CRN_TAG: u64 = 0x43524e;
const RESTART_TAG: u64 = 0x5253;
const FRESH_TAG: u64 = 0x4652;
/// Objective tolerance the audit grants the optimizer.
pub const SOLVER_TOL: f64 = 1e-9;

/// A generator template with parameters in the unit box. Every point of the box
/// instantiates a valid generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParamFamily {
    /// `g(u) = c`, `theta = c`.
    Constant { d: usize, dim: usize },
    /// `g_j(u) = lo_j + t_j (1 - lo_j) u_{j mod d}`, `theta = (lo_1, t_1, ..., lo_D, t_D)`.
    /// Slopes are nonnegative; a reflected map has the same pushforward law.
    AxisAffine { d: usize, dim: usize },
}

impl ParamFamily {
    pub fn latent_dim(&self) -> usize {
        match self {
            ParamFamily::Constant { d, .. } | ParamFamily::AxisAffine { d, .. } => *d,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            ParamFamily::Constant { dim, .. } | ParamFamily::AxisAffine { dim, .. } => *dim,
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            ParamFamily::Constant { dim, .. } => *dim,
            ParamFamily::AxisAffine { dim, .. } => 2 * dim,
        }
    }

    pub fn instantiate(&self, theta: &[f64]) -> Result<GeneratorSpec> {
        if theta.len() != self.param_count() {
            return Err(Error::DimensionMismatch { expected: self.param_count(), got: theta.len() });
        }
        if let Some(bad) = theta.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::OutOfDomain(format!("parameter {bad} outside [0, 1]")));
        }
        match self {
            ParamFamily::Constant { d, .. } => GeneratorSpec::constant(theta.to_vec(), *d),
            ParamFamily::AxisAffine { d, dim } => {
                let mut matrix = vec![0.0; dim * d];
                let mut offset = vec![0.0; *dim];
                for (j, (slope, intercept)) in self.affine_coefficients(theta).into_iter().enumerate() {
                    matrix[j * d + j % d] = slope;
                    offset[j] = intercept;
                }
                GeneratorSpec::affine(matrix, offset, *d, *dim)
            }
        }
    }

    /// Per output coordinate `(slope, intercept)`; slope is zero for constants.
    pub fn affine_coefficients(&self, theta: &[f64]) -> Vec<(f64, f64)> {
        match self {
            ParamFamily::Constant { .. } => theta.iter().map(|&c| (0.0, c)).collect(),
            ParamFamily::AxisAffine { .. } => theta.chunks(2).map(|p| (p[1] * (1.0 - p[0]), p[0])).collect(),
        }
    }

    /// Parameters reproducing the given per-coordinate `(slope, intercept)`,
    /// when the map lies in the family.
    pub fn theta_for(&self, coefficients: &[(f64, f64)]) -> Option<Vec<f64>> {
        match self {
            ParamFamily::Constant { .. } => coefficients.iter().map(|&(s, c)| (s == 0.0).then_some(c)).collect(),
            ParamFamily::AxisAffine { .. } => {
                let mut theta = Vec::new();
                for &(s, c) in coefficients {
                    let t = if c < 1.0 { s / (1.0 - c) } else if s == 0.0 { 0.0 } else { return None };
                    if !(0.0..=1.0).contains(&c) || !(0.0..=1.0).contains(&t) {
                        return None;
                    }
                    theta.extend([c, t]);
                }
                Some(theta)
            }
        }
    }

    /// Regular grid with `resolution` points per parameter, last parameter fastest.
    pub fn grid(&self, resolution: usize) -> Result<Vec<Vec<f64>>> {
        if resolution < 2 {
            return Err(Error::InvalidSpec("parameter grid needs at least 2 points per axis".into()));
        }
        let k = self.param_count();
        let total = resolution.checked_pow(k as u32).filter(|&t| t <= 1_000_000);
        let total = total.ok_or_else(|| Error::TooLarge(format!("{resolution}^{k} grid points")))?;
        Ok((0..total)
            .map(|code| {
                let mut rest = code;
                let mut theta = vec![0.0; k];
                for slot in theta.iter_mut().rev() {
                    *slot = (rest % resolution) as f64 / (resolution - 1) as f64;
                    rest /= resolution;
                }
                theta
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErmProblem {
    pub family: ParamFamily,
    pub metric: IpmSpec,
    /// pushforward sample size
    pub m: usize,
    /// objective evaluations per restart
    pub budget: usize,
    pub restarts: usize,
}

impl ErmProblem {
    pub fn new(family: ParamFamily, metric: IpmSpec, m: usize) -> Self {
        Self { family, metric, m, budget: 400, restarts: 8 }
    }
}

/// The common latent sample `U_m` of a fit.
pub fn common_latents(problem: &ErmProblem, stream: &Stream) -> Result<PointSet> {
    sample_latent(problem.m, problem.family.latent_dim(), &mut stream.child(CRN_TAG))
}

/// `d(P, Q)` between discrete measures, exact in one dimension for W1.
pub fn measure_distance(metric: &IpmSpec, p: &DiscreteMeasure, q: &DiscreteMeasure) -> Result<f64> {
    match metric {
        IpmSpec::W1Exact1d | IpmSpec::W1Assignment | IpmSpec::W1TransportLp if p.dim() == 1 => {
            w1_exact_1d(Law1d::Discrete(p), Law1d::Discrete(q))
        }
        IpmSpec::W1Exact1d | IpmSpec::W1Assignment => w1_empirical(p, q),
        other => other.distance(p, q),
    }
}

/// The objective as a reusable closure state: data measure plus common latents.
pub struct Objective<'a> {
    problem: &'a ErmProblem,
    data: DiscreteMeasure,
    latents: PointSet,
}

impl<'a> Objective<'a> {
    pub fn new(problem: &'a ErmProblem, data: &PointSet, latents: PointSet) -> Result<Self> {
        if data.dim() != problem.family.ambient_dim() {
            return Err(Error::DimensionMismatch { expected: problem.family.ambient_dim(), got: data.dim() });
        }
        if latents.dim() != problem.family.latent_dim() {
            return Err(Error::DimensionMismatch { expected: problem.family.latent_dim(), got: latents.dim() });
        }
        Ok(Self { problem, data: DiscreteMeasure::empirical(data.clone())?, latents })
    }

    pub fn value(&self, theta: &[f64]) -> Result<f64> {
        let g = self.problem.family.instantiate(theta)?;
        let q = DiscreteMeasure::empirical(g.pushforward(&self.latents)?)?;
        measure_distance(&self.problem.metric, &q, &self.data)
    }

    pub fn latents(&self) -> &PointSet {
        &self.latents
    }
}

/// `d(g_theta # U_m, P_n)` with `U_m` drawn from `stream` as in [`fit`].
pub fn empirical_objective(theta: &[f64], problem: &ErmProblem, data: &PointSet, stream: &Stream) -> Result<f64> {
    Objective::new(problem, data, common_latents(problem, stream)?)?.value(theta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErmSolution {
    pub theta: Vec<f64>,
    pub objective: f64,
    pub evaluations: usize,
    pub restart: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
    /// objective at each restart's starting vertex
    pub initial_values: Vec<f64>,
}

struct SearchRun {
    best: (f64, Vec<f64>),
    evaluations: usize,
    converged: bool,
    initial: f64,
}

/// Box-constrained Nelder-Mead: trial points are projected onto the box.
/// Returns the best point ever evaluated.
fn simplex_search<F: Fn(&[f64]) -> Result<f64>>(f: &F, x0: Vec<f64>, budget: usize) -> Result<SearchRun> {
    let k = x0.len();
    let mut evals = 0usize;
    let mut best = (f64::INFINITY, x0.clone());
    let eval = |x: &[f64], evals: &mut usize, best: &mut (f64, Vec<f64>)| -> Result<f64> {
        *evals += 1;
        let v = f(x)?;
        if v < best.0 {
            *best = (v, x.to_vec());
        }
        Ok(v)
    };
    let project = |x: &mut [f64]| x.iter_mut().for_each(|c| *c = c.clamp(0.0, 1.0));
    let initial = eval(&x0, &mut evals, &mut best)?;
    let mut simplex: Vec<(f64, Vec<f64>)> = vec![(initial, x0.clone())];
    for i in 0..k {
        if evals >= budget {
            return Ok(SearchRun { best, evaluations: evals, converged: false, initial });
        }
        let mut x = x0.clone();
        x[i] = if x[i] + 0.1 <= 1.0 { x[i] + 0.1 } else { x[i] - 0.1 };
        let v = eval(&x, &mut evals, &mut best)?;
        simplex.push((v, x));
    }
    let mut converged = false;
    while evals < budget {
        simplex.sort_by(|a, b| a.0.total_cmp(&b.0));
        // size alone decides, so the search only ever compares objective values
        let size = simplex[1..].iter().map(|(_, x)| x.iter().zip(&simplex[0].1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
        if size <= 1e-10 {
            converged = true;
            break;
        }
        let mut centroid = vec![0.0; k];
        for (_, x) in &simplex[..k] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / k as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid.iter().zip(&simplex[k].1).map(|(c, w)| c + t * (c - w)).collect();
            project(&mut p);
            p
        };
        let xr = along(1.0);
        let fr = eval(&xr, &mut evals, &mut best)?;
        if fr < simplex[0].0 {
            let xe = along(2.0);
            let fe = if evals < budget { eval(&xe, &mut evals, &mut best)? } else { f64::INFINITY };
            simplex[k] = if fe < fr { (fe, xe) } else { (fr, xr) };
            continue;
        }
        if fr < simplex[k - 1].0 {
            simplex[k] = (fr, xr);
            continue;
        }
        if evals >= budget {
            break;
        }
        let (xc, fc) = if fr < simplex[k].0 {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals, &mut best)?;
            (xc, fc)
        } else {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals, &mut best)?;
            (xc, fc)
        };
        if fc < simplex[k].0.min(fr) {
            simplex[k] = (fc, xc);
            continue;
        }
        // shrink toward the best vertex
        let anchor = simplex[0].1.clone();
        for slot in simplex.iter_mut().skip(1) {
            if evals >= budget {
                break;
            }
            let x: Vec<f64> = anchor.iter().zip(&slot.1).map(|(a, v)| a + 0.5 * (v - a)).collect();
            let v = eval(&x, &mut evals, &mut best)?;
            *slot = (v, x);
        }
    }
    Ok(SearchRun { best, evaluations: evals, converged, initial })
}

/// Minimizes the empirical objective with `problem.restarts` simplex searches:
/// restart 0 starts at the box center, the others at random points drawn from
/// their own derived streams. Ties go to the lowest restart index.
pub fn fit(problem: &ErmProblem, data: &PointSet, stream: &Stream) -> Result<ErmSolution> {
    let objective = Objective::new(problem, data, common_latents(problem, stream)?)?;
    fit_objective(problem, &|theta| objective.value(theta), stream)
}

/// [`fit`] for an arbitrary objective over the family's parameter box.
pub fn fit_objective<F: Fn(&[f64]) -> Result<f64> + Sync>(problem: &ErmProblem, f: &F, stream: &Stream) -> Result<ErmSolution> {
    let k = problem.family.param_count();
    if problem.restarts == 0 {
        return Err(Error::InvalidSpec("fit needs at least one restart".into()));
    }
    let mut warnings = Vec::new();
    if problem.budget < k + 2 {
        warnings.push(format!("budget {} is below dim(theta) + 2 = {}", problem.budget, k + 2));
    }
    let budget = problem.budget.max(1);
    let runs: Vec<Result<SearchRun>> = (0..problem.restarts)
        .into_par_iter()
        .map(|r| {
            let x0 = if r == 0 {
                vec![0.5; k]
            } else {
                let mut s = stream.child(RESTART_TAG + r as u64);
                (0..k).map(|_| s.uniform()).collect()
            };
            simplex_search(f, x0, budget)
        })
        .collect();
    let mut runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let mut winner = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.best.0 < runs[winner].best.0 {
            winner = r;
        }
    }
    if runs.iter().any(|r| !r.converged) {
        warnings.push("budget exhausted before convergence in at least one restart".into());
    }
    let evaluations = runs.iter().map(|r| r.evaluations).sum();
    let initial_values = runs.iter().map(|r| r.initial).collect();
    let converged = runs[winner].converged;
    let (objective, theta) = std::mem::take(&mut runs[winner].best);
    Ok(ErmSolution { theta, objective, evaluations, restart: winner, converged, warnings, initial_values })
}

/// `d(g # U_d, g_star # U_d)`, exact for the projection metric and for one-dimensional
/// W1 between interval laws; `None` when no closed form applies.
pub fn exact_risk(g: &GeneratorSpec, g_star: &GeneratorSpec, metric: &IpmSpec) -> Result<Option<f64>> {
    if let IpmSpec::ProjectionFirstAxis = metric {
        return Ok(Some((g.first_coordinate_mean() - g_star.first_coordinate_mean()).abs()));
    }
    if metric.is_w1() {
        if let (Some((a, b)), Some((c, d))) = (g.uniform_interval_law(), g_star.uniform_interval_law()) {
            return Ok(Some(w1_exact_1d(Law1d::Uniform { lo: a, hi: b }, Law1d::Uniform { lo: c, hi: d })?));
        }
    }
    Ok(None)
}

/// `d(g # U_m, g # U_d)` for the sample `g # U_m` of the common latents: the
/// price of substituting the sample for the law. Exact for the projection
/// metric and one-dimensional W1 between interval laws; otherwise estimated
/// against a fresh sample of the same size.
pub fn substitution_error(g: &GeneratorSpec, latents: &PointSet, metric: &IpmSpec, stream: &Stream) -> Result<f64> {
    let sample = g.pushforward(latents)?;
    let p = DiscreteMeasure::empirical(sample.clone())?;
    if let IpmSpec::ProjectionFirstAxis = metric {
        return Ok((p.expect(|x| x[0]) - g.first_coordinate_mean()).abs());
    }
    if let Some((lo, hi)) = g.uniform_interval_law() {
        let w1 = w1_exact_1d(Law1d::Discrete(&p), Law1d::Uniform { lo, hi })?;
        // every class in use is contained in the L-Lipschitz ball
        return Ok(metric.lipschitz() * w1);
    }
    let fresh = g.pushforward(&sample_latent(latents.len(), g.latent_dim(), &mut stream.child(FRESH_TAG))?)?;
    measure_distance(metric, &p, &DiscreteMeasure::empirical(fresh)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub replication: usize,
    /// `R(g_hat)`
    pub risk: f64,
    /// `min` of `R` over the parameter grid, an upper bound on `inf_G R`
    pub inf_grid: f64,
    /// `2 d(P_n, P*)`
    pub stat_term: f64,
    /// substitution error of `g_hat` plus that of the grid minimizer, plus the solver tolerance
    pub mc_error: f64,
    pub objective: f64,
    /// objective of `g_hat` minus the smallest objective on the grid (positive when the search missed)
    pub optimizer_gap: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    pub all_hold: bool,
    /// true when every risk and distance came from a closed form
    pub exact: bool,
    pub grid_resolution: usize,
}

/// Fits on `reps` datasets from `data` (size `n` each) and checks
/// `R(g_hat) <= inf_grid + 2 d(P_n, P*) + 3 mc_error` per replication.
pub fn audit_oracle_inequality(
    problem: &ErmProblem,
    data: &DataSpec,
    n: usize,
    reps: usize,
    grid_resolution: usize,
    stream: &Stream,
) -> Result<AuditReport> {
    let g_star = &data.generator;
    let grid = problem.family.grid(grid_resolution)?;
    let generators: Vec<GeneratorSpec> = grid.iter().map(|t| problem.family.instantiate(t)).collect::<Result<_>>()?;
    let risk_of = |g: &GeneratorSpec, s: &Stream| -> Result<(f64, bool)> {
        match exact_risk(g, g_star, &problem.metric)? {
            Some(r) => Ok((r, true)),
            None => {
                let mut s = s.child(FRESH_TAG);
                let a = DiscreteMeasure::empirical(crate::generators::pushforward_sample(g, problem.m, &mut s)?)?;
                let b = DiscreteMeasure::empirical(crate::generators::pushforward_sample(g_star, problem.m, &mut s)?)?;
                Ok((measure_distance(&problem.metric, &a, &b)?, false))
            }
        }
    };
    let mut exact = true;
    let mut grid_risk = Vec::with_capacity(generators.len());
    for g in &generators {
        let (r, e) = risk_of(g, stream)?;
        exact &= e;
        grid_risk.push(r);
    }
    let mut best_idx = 0;
    for (i, &r) in grid_risk.iter().enumerate() {
        if r < grid_risk[best_idx] {
            best_idx = i;
        }
    }
    let inf_grid = grid_risk[best_idx];
    let mut rows = Vec::with_capacity(reps);
    for rep in 0..reps {
        let data_stream = stream.child(2 * rep as u64);
        let fit_stream = stream.child(2 * rep as u64 + 1);
        let sample = synthesize(data, n, &data_stream)?;
        let latents = common_latents(problem, &fit_stream)?;
        let objective = Objective::new(problem, &sample.points, latents.clone())?;
        let sol = fit_objective(problem, &|t| objective.value(t), &fit_stream)?;
        let g_hat = problem.family.instantiate(&sol.theta)?;
        let (risk, e) = risk_of(&g_hat, &fit_stream)?;
        exact &= e;
        let mut ref_stream = data_stream.child(FRESH_TAG);
        let dist = distance_to_pushforward(&sample.points, g_star, &problem.metric, problem.m, &mut ref_stream)?;
        if !(g_star.uniform_interval_law().is_some() || matches!(problem.metric, IpmSpec::ProjectionFirstAxis)) {
            exact = false;
        }
        let mc_error = substitution_error(&g_hat, &latents, &problem.metric, &fit_stream)?
            + substitution_error(&generators[best_idx], &latents, &problem.metric, &fit_stream)?
            + SOLVER_TOL;
        let grid_objective = grid.iter().map(|t| objective.value(t)).collect::<Result<Vec<_>>>()?;
        let min_grid_obj = grid_objective.iter().copied().fold(f64::INFINITY, f64::min);
        let holds = risk <= inf_grid + 2.0 * dist + 3.0 * mc_error;
        rows.push(AuditRow {
            replication: rep,
            risk,
            inf_grid,
            stat_term: 2.0 * dist,
            mc_error,
            objective: sol.objective,
            optimizer_gap: sol.objective - min_grid_obj,
            holds,
        });
    }
    let all_hold = rows.iter().all(|r| r.holds);
    Ok(AuditReport { rows, all_hold, exact, grid_resolution })
}

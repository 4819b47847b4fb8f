//! WebAssembly bindings for the browser demo. Every export takes plain numbers
//! and returns a JSON string, so the page needs no generated type glue.

use pushlab::contamination::{synthesize, DataSpec, NoiseModel, OutlierPolicy};
use pushlab::experiments::{rate_study, RateConfig};
use pushlab::generators::GeneratorSpec;
use pushlab::ipm::{distance_to_pushforward, IpmSpec};
use pushlab::sampling::{Purpose, SeedPolicy};
use pushlab::smoothness::composition_constant;
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Largest latent dimension and replication count the page accepts; keeps a
/// single-threaded run under a few seconds.
pub const MAX_DEMO_DIM: usize = 3;
pub const MAX_DEMO_REPS: usize = 60;
pub const MAX_DEMO_POINTS: usize = 5000;

fn fail(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Exact `C(D, d, alpha)` as `{"exact": "p/q", "value": f64, "argmax": [...]}`.
#[wasm_bindgen]
pub fn constant(big_d: usize, d: usize, alpha: u32) -> Result<String, JsError> {
    constant_json(big_d, d, alpha).map_err(fail)
}

pub fn constant_json(big_d: usize, d: usize, alpha: u32) -> Result<String, String> {
    if big_d > 4 || d > 3 || alpha > 4 {
        return Err("the demo is limited to D <= 4, d <= 3, alpha <= 4".into());
    }
    let c = composition_constant(big_d, d, alpha).map_err(|e| e.to_string())?;
    Ok(json!({ "D": c.ambient, "d": c.d, "alpha": c.alpha, "exact": c.exact, "value": c.value, "argmax": c.argmax }).to_string())
}

/// W1 rate study for the identity generator on `[0,1]^d` over `n = 64 .. 1024`.
#[wasm_bindgen]
pub fn rate(d: usize, reps: usize, seed: u64) -> Result<String, JsError> {
    rate_json(d, reps, seed).map_err(fail)
}

pub fn rate_json(d: usize, reps: usize, seed: u64) -> Result<String, String> {
    if d == 0 || d > MAX_DEMO_DIM || !(30..=MAX_DEMO_REPS).contains(&reps) {
        return Err(format!("need 1 <= d <= {MAX_DEMO_DIM} and 30 <= reps <= {MAX_DEMO_REPS}"));
    }
    let g = GeneratorSpec::identity(d).map_err(|e| e.to_string())?;
    let metric = if d == 1 { IpmSpec::W1Exact1d } else { IpmSpec::W1Assignment };
    let stream = SeedPolicy::new(seed).stream(0, Purpose::Reference);
    let fit = rate_study(&g, &metric, &[64, 128, 256, 512, 1024], reps, RateConfig::default(), &stream)
        .map_err(|e| e.to_string())?;
    let expected = -(1.0 / d as f64).min(0.5);
    Ok(json!({ "d": d, "slope": fit.slope, "slope_std_error": fit.slope_std_error, "r_squared": fit.r_squared,
               "expected": expected, "rows": fit.rows })
    .to_string())
}

/// A contaminated sample of `g(u) = (2u + 1) / 4` on `[0,1]^2` with sphere noise
/// and corner outliers, plus its projection distance to the clean law.
#[wasm_bindgen]
pub fn sample(sigma: f64, epsilon: f64, n: usize, seed: u64) -> Result<String, JsError> {
    sample_json(sigma, epsilon, n, seed).map_err(fail)
}

pub fn sample_json(sigma: f64, epsilon: f64, n: usize, seed: u64) -> Result<String, String> {
    if n == 0 || n > MAX_DEMO_POINTS {
        return Err(format!("need 1 <= n <= {MAX_DEMO_POINTS}"));
    }
    let g = GeneratorSpec::quarter_shift(2).map_err(|e| e.to_string())?;
    let spec = DataSpec::new(g.clone()).with_noise(sigma, NoiseModel::SphereFixed).with_outliers(epsilon, OutlierPolicy::Corner);
    let data = synthesize(&spec, n, &SeedPolicy::new(seed).stream(0, Purpose::Latent)).map_err(|e| e.to_string())?;
    let mut scratch = SeedPolicy::new(seed).stream(0, Purpose::Reference);
    let projection = distance_to_pushforward(&data.points, &g, &IpmSpec::ProjectionFirstAxis, n, &mut scratch)
        .map_err(|e| e.to_string())?;
    let points: Vec<[f64; 2]> = data.points.rows().map(|r| [r[0], r[1]]).collect();
    Ok(json!({ "points": points, "inlier": data.inlier_mask, "projection": projection,
               "bound": sigma + 2.0 * epsilon })
    .to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_matches_the_first_order_value() {
        let v: serde_json::Value = serde_json::from_str(&constant_json(3, 2, 1).unwrap()).unwrap();
        assert_eq!(v["value"], 3.0);
        assert!(constant_json(9, 1, 1).is_err());
    }
}

//! Reproducible random streams and the point containers shared by every module.
//!
//! A [`SeedPolicy`] turns `(master_seed, replication, purpose)` into an
//! independent ChaCha8 stream without touching any shared state: the master
//! seed and purpose are mixed into the 256-bit key, and the replication index
//! selects the ChaCha stream id. Any worker can therefore rebuild any stream.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a stream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Latent,
    Noise,
    Outlier,
    Reference,
    Erm,
    Probe,
    Custom(u64),
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Latent => 0x4c41_5445_4e54,
            Purpose::Noise => 0x4e4f_4953_45,
            Purpose::Outlier => 0x4f55_544c_4945_52,
            Purpose::Reference => 0x5245_4645_5245_4e43,
            Purpose::Erm => 0x4552_4d,
            Purpose::Probe => 0x5052_4f42_45,
            Purpose::Custom(t) => t ^ 0xc0ff_ee00_0000_0000,
        }
    }
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn derive_key(parts: &[u64]) -> [u8; 32] {
    let mut state = 0x243f_6a88_85a3_08d3u64;
    for &p in parts {
        state ^= p;
        splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPolicy {
    pub master_seed: u64,
}

impl SeedPolicy {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn stream(&self, replication: u64, purpose: Purpose) -> Stream {
        Stream::from_parts(derive_key(&[self.master_seed, purpose.tag()]), replication)
    }
}

/// A value-like random stream. Cloning a stream clones its position.
#[derive(Debug, Clone)]
pub struct Stream {
    key: [u8; 32],
    id: u64,
    rng: ChaCha8Rng,
}

impl Stream {
    fn from_parts(key: [u8; 32], id: u64) -> Self {
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(id);
        Self { key, id, rng }
    }

    /// Independent sub-stream, derived from this stream's identity only
    /// (not from its current position).
    pub fn child(&self, tag: u64) -> Stream {
        let mut parts = [0u64; 6];
        for (i, chunk) in self.key.chunks(8).enumerate() {
            parts[i] = u64::from_le_bytes(chunk.try_into().unwrap());
        }
        parts[4] = self.id;
        parts[5] = tag;
        Stream::from_parts(derive_key(&parts), self.id)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// A list of points of fixed dimension, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize) -> Self {
        Self { dim, coords: Vec::new() }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        Self { dim, coords: Vec::with_capacity(dim * n) }
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDimension("point dimension must be at least 1".into()));
        }
        if coords.len() % dim != 0 {
            return Err(Error::InvalidSpec(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidSpec(format!("non-finite coordinate {bad}")));
        }
        Ok(Self { dim, coords })
    }

    pub fn from_rows(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            flat.extend_from_slice(r);
        }
        Self::from_flat(dim, flat)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim.max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, p: &[f64]) {
        debug_assert_eq!(p.len(), self.dim);
        self.coords.extend_from_slice(p);
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// Values of coordinate `axis` across all points.
    pub fn column(&self, axis: usize) -> Vec<f64> {
        self.rows().map(|r| r[axis]).collect()
    }

    pub fn concat(&self, other: &PointSet) -> Result<PointSet> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        Ok(PointSet { dim: self.dim, coords })
    }
}

/// `n` iid draws from the uniform law on `[0,1]^d`.
pub fn sample_latent(n: usize, d: usize, stream: &mut Stream) -> Result<PointSet> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidDimension(format!("sample_latent needs n >= 1 and d >= 1 (got n={n}, d={d})")));
    }
    let coords = (0..n * d).map(|_| stream.uniform()).collect();
    Ok(PointSet { dim: d, coords })
}

/// Uniform direction on the unit sphere of `R^dim`, via a normalized Gaussian vector.
pub fn sample_sphere_direction(dim: usize, stream: &mut Stream) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::InvalidDimension("sphere dimension must be at least 1".into()));
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| stream.normal()).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            return Ok(v.into_iter().map(|x| x / norm).collect());
        }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

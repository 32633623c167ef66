//! Generative sampler: categorical labels, a `K x K x D` Poisson rate grid
//! and independent Poisson cell draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{build_tensor, EventRecord, InteractionTensor, Mode};

/// Rate grid `lambda[k][g][d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateGrid {
    pub k: usize,
    pub d: usize,
    pub values: Vec<f64>,
}

impl RateGrid {
    pub fn new(k: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if k == 0 || d == 0 || values.len() != k * k * d {
            return Err(Error::Contract(format!(
                "rate grid needs {k}x{k}x{d} values, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Contract(format!("rates must be positive, got {bad}")));
        }
        Ok(Self { k, d, values })
    }

    /// Same rate everywhere.
    pub fn constant(k: usize, d: usize, rate: f64) -> Result<Self> {
        Self::new(k, d, vec![rate; k * k * d])
    }

    #[inline]
    pub fn get(&self, k: usize, g: usize, d: usize) -> f64 {
        self.values[(k * self.k + g) * self.d + d]
    }

    /// Nested `[k][g][d]` form.
    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.k)
            .map(|k| {
                (0..self.k)
                    .map(|g| (0..self.d).map(|d| self.get(k, g, d)).collect())
                    .collect()
            })
            .collect()
    }
}

/// `lambda[k][g][d] = s1[k] + s2[g] + s3[d]`.
pub fn additive_rates(s1: &[f64], s2: &[f64], s3: &[f64]) -> Result<RateGrid> {
    if s1.is_empty() || s3.is_empty() || s1.len() != s2.len() {
        return Err(Error::Contract(format!(
            "s1 and s2 must share a non-zero length K and s3 must be non-empty (got {}, {}, {})",
            s1.len(),
            s2.len(),
            s3.len()
        )));
    }
    let mut values = Vec::with_capacity(s1.len() * s2.len() * s3.len());
    for x in s1 {
        for y in s2 {
            for z in s3 {
                values.push(x + y + z);
            }
        }
    }
    RateGrid::new(s1.len(), s3.len(), values)
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` i.i.d. categorical draws. Clusters may come out empty.
pub fn sample_partition(n: usize, weights: &[f64], seed: u64) -> Result<Vec<usize>> {
    sample_labels(n, weights, &mut seeded(seed, 0))
}

fn sample_labels(n: usize, weights: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let dist =
        WeightedIndex::new(weights).map_err(|e| Error::Contract(format!("invalid label weights {weights:?}: {e}")))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeSpec {
    pub num_nodes: usize,
    pub num_bins: usize,
    pub node_weights: Vec<f64>,
    pub time_weights: Vec<f64>,
    pub rates: RateGrid,
    pub delta: f64,
    pub seed: u64,
    pub mode: Mode,
}

impl GenerativeSpec {
    /// Uniform label weights, unit bins, directed mode.
    pub fn uniform(num_nodes: usize, num_bins: usize, rates: RateGrid, seed: u64) -> Self {
        Self {
            num_nodes,
            num_bins,
            node_weights: vec![1.0 / rates.k as f64; rates.k],
            time_weights: vec![1.0 / rates.d as f64; rates.d],
            rates,
            delta: 1.0,
            seed,
            mode: Mode::Directed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_weights.len() != self.rates.k || self.time_weights.len() != self.rates.d {
            return Err(Error::Contract(format!(
                "weights have lengths {}/{} but the rate grid is {}x{}x{}",
                self.node_weights.len(),
                self.time_weights.len(),
                self.rates.k,
                self.rates.k,
                self.rates.d
            )));
        }
        for w in [&self.node_weights, &self.time_weights] {
            let sum: f64 = w.iter().sum();
            if w.iter().any(|x| x.is_nan() || *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Contract(format!("weights {w:?} are not on the simplex")));
            }
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::Contract(format!("delta must be > 0, got {}", self.delta)));
        }
        Ok(())
    }
}

/// Draws every cell `(i, j, u)` from `Poisson(delta * lambda[c_i][c_j][y_u])`.
/// Undirected mode only draws `i < j`.
pub fn simulate_tensor(spec: &GenerativeSpec, c: &[usize], y: &[usize]) -> Result<InteractionTensor> {
    spec.validate()?;
    if c.len() != spec.num_nodes || y.len() != spec.num_bins {
        return Err(Error::DimensionMismatch(format!(
            "expected {} node and {} bin labels, got {} and {}",
            spec.num_nodes,
            spec.num_bins,
            c.len(),
            y.len()
        )));
    }
    if c.iter().any(|&l| l >= spec.rates.k) || y.iter().any(|&l| l >= spec.rates.d) {
        return Err(Error::Contract("labels exceed the rate grid".into()));
    }
    let mut rng = seeded(spec.seed, 2);
    let mut records = Vec::new();
    for i in 0..spec.num_nodes {
        let first_j = match spec.mode {
            Mode::Directed => 0,
            Mode::Undirected => i + 1,
        };
        for j in first_j..spec.num_nodes {
            for (u, &yu) in y.iter().enumerate() {
                let mean = spec.delta * spec.rates.get(c[i], c[j], yu);
                let draw = Poisson::new(mean)
                    .map_err(|e| Error::Contract(format!("bad Poisson mean {mean}: {e}")))?
                    .sample(&mut rng) as u64;
                if draw > 0 {
                    records.push(EventRecord::new(i, j, u, draw));
                }
            }
        }
    }
    build_tensor(&records, spec.num_nodes, spec.num_bins, spec.mode)
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub tensor: InteractionTensor,
    pub node_labels: Vec<usize>,
    pub time_labels: Vec<usize>,
}

/// Draws labels from the spec's weights, then the tensor.
pub fn simulate(spec: &GenerativeSpec) -> Result<Simulation> {
    spec.validate()?;
    let node_labels = sample_labels(spec.num_nodes, &spec.node_weights, &mut seeded(spec.seed, 0))?;
    let time_labels = sample_labels(spec.num_bins, &spec.time_weights, &mut seeded(spec.seed, 1))?;
    let tensor = simulate_tensor(spec, &node_labels, &time_labels)?;
    Ok(Simulation {
        tensor,
        node_labels,
        time_labels,
    })
}

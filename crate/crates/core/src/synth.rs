//! Synthetic benchmark data: Gaussian-mixture contextual features,
//! behavioral features depending on them through one of five schemes, and
//! ground-truth anomaly injection by perturbation.
//!
//! Random streams (see [`crate::rng`]) under the generator seed:
//! `[0, p]` contextual feature `p`, `[1]` behavioral coefficients,
//! `[2]` behavioral noise. Injection uses its own seed.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::dataset::{label_encode, Column, Dataset, Feature, FeatureSchema, Kind, Role};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub const N_CLUSTERS: usize = 5;
/// Categorical centroids are drawn from `0..=CATEGORICAL_MAX`.
pub const CATEGORICAL_MAX: u32 = 10;
pub const NOISE_MAX: f64 = 0.05;
pub const ZERO_COEFFICIENT_PROB: f64 = 1.0 / 3.0;
pub const DELTA_MIN: f64 = 0.1;
pub const DELTA_MAX: f64 = 0.5;

/// Dependency of the behavioral features on the contextual ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Linear.
    S1,
    /// Cubic.
    S2,
    /// Sine.
    S3,
    /// `log(1 + |c|)`.
    S4,
    /// Sum of the four above, each with its own coefficients.
    S5,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::S1, Scheme::S2, Scheme::S3, Scheme::S4, Scheme::S5];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = Scheme::ALL.iter().position(|s| s == self).unwrap() + 1;
        write!(f, "s{i}")
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "s1" => Ok(Scheme::S1),
            "s2" => Ok(Scheme::S2),
            "s3" => Ok(Scheme::S3),
            "s4" => Ok(Scheme::S4),
            "s5" => Ok(Scheme::S5),
            _ => Err(Error::param(format!("unknown scheme `{s}` (expected s1..s5)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeSpec {
    pub scheme: Scheme,
    /// Contextual feature count.
    pub n_contextual: usize,
    /// How many of the contextual features (the last ones) are categorical.
    pub n_categorical: usize,
    pub n_behavioral: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl SchemeSpec {
    pub fn new(scheme: Scheme, n_contextual: usize, n_categorical: usize, n_behavioral: usize, n_samples: usize, seed: u64) -> Self {
        SchemeSpec {
            scheme,
            n_contextual,
            n_categorical,
            n_behavioral,
            n_samples,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_contextual == 0 {
            return Err(Error::param("at least one contextual feature is required"));
        }
        if self.n_categorical > self.n_contextual {
            return Err(Error::param(format!(
                "{} categorical features exceed {} contextual features",
                self.n_categorical, self.n_contextual
            )));
        }
        if self.n_behavioral == 0 {
            return Err(Error::param("at least one behavioral feature is required"));
        }
        if self.n_samples == 0 {
            return Err(Error::param("sample size must be at least 1"));
        }
        Ok(())
    }

    pub fn is_categorical(&self, p: usize) -> bool {
        p >= self.n_contextual - self.n_categorical
    }

    pub fn schema(&self) -> FeatureSchema {
        let n_num = self.n_contextual - self.n_categorical;
        let mut features: Vec<Feature> = (0..self.n_contextual)
            .map(|p| {
                if p < n_num {
                    Feature::new(format!("num{}", p + 1), Role::Contextual, Kind::Numeric)
                } else {
                    Feature::new(format!("cat{}", p - n_num + 1), Role::Contextual, Kind::Categorical)
                }
            })
            .collect();
        features.extend((0..self.n_behavioral).map(|q| Feature::new(format!("b{}", q + 1), Role::Behavioral, Kind::Numeric)));
        FeatureSchema::new(features).expect("generated schema is valid")
    }
}

/// Standard deviation of a mixture component: a quarter of the mean
/// pairwise absolute distance between the centroids.
pub fn mixture_sigma(centroids: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            total += (centroids[i] - centroids[j]).abs();
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total / pairs as f64 / 4.0
    }
}

/// Draws `n` values from a 5-component mixture with uniform weights around
/// `centroids`. Categorical draws are rounded and clamped at zero.
pub fn sample_mixture(centroids: &[f64], categorical: bool, n: usize, rng: &mut Rng) -> Vec<f64> {
    let sigma = mixture_sigma(centroids);
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|_| {
            let c = centroids[rng.random_range(0..centroids.len())];
            let v = c + sigma * normal.sample(rng);
            if categorical {
                v.round().max(0.0)
            } else {
                v
            }
        })
        .collect()
}

/// Generates the contextual block, one value vector per feature.
/// Categorical features hold non-negative integer values.
pub fn gen_contextual(spec: &SchemeSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    Ok((0..spec.n_contextual)
        .map(|p| {
            let mut rng = rng::stream(spec.seed, &[0, p as u64]);
            let categorical = spec.is_categorical(p);
            let centroids: Vec<f64> = (0..N_CLUSTERS)
                .map(|_| {
                    if categorical {
                        rng.random_range(0..=CATEGORICAL_MAX) as f64
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect();
            sample_mixture(&centroids, categorical, spec.n_samples, &mut rng)
        })
        .collect())
}

/// Scheme coefficients, indexed `[q][p]`. Only S5 uses all four families;
/// S1-S4 use `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
}

impl Coefficients {
    pub fn zeros(n_behavioral: usize, n_terms: usize) -> Self {
        let z = vec![vec![0.0; n_terms]; n_behavioral];
        Coefficients {
            alpha: z.clone(),
            beta: z.clone(),
            gamma: z.clone(),
            delta: z,
        }
    }

    /// Each coefficient is `Uniform(0, 1)`, replaced by zero with
    /// probability 1/3.
    pub fn sample(n_behavioral: usize, n_terms: usize, rng: &mut Rng) -> Self {
        let mut draw = || -> Vec<Vec<f64>> {
            (0..n_behavioral)
                .map(|_| {
                    (0..n_terms)
                        .map(|_| {
                            let v: f64 = rng.random();
                            if rng.random_bool(ZERO_COEFFICIENT_PROB) {
                                0.0
                            } else {
                                v
                            }
                        })
                        .collect()
                })
                .collect()
        };
        let alpha = draw();
        let beta = draw();
        let gamma = draw();
        let delta = draw();
        Coefficients { alpha, beta, gamma, delta }
    }
}

/// Number of contextual features entering each behavioral sum.
pub fn n_terms(n_contextual: usize, n_behavioral: usize) -> usize {
    n_contextual.min(n_behavioral)
}

/// Evaluates the scheme formula for behavioral feature `q` at one row of
/// contextual values.
pub fn scheme_value(scheme: Scheme, coef: &Coefficients, q: usize, c: &[f64]) -> f64 {
    let mut b = 0.0;
    for (p, &x) in c.iter().enumerate() {
        let a = coef.alpha[q][p];
        b += match scheme {
            Scheme::S1 => a * x,
            Scheme::S2 => a * x.powi(3),
            Scheme::S3 => a * x.sin(),
            Scheme::S4 => a * x.abs().ln_1p(),
            Scheme::S5 => {
                a * x + coef.beta[q][p] * x.powi(3) + coef.gamma[q][p] * x.sin() + coef.delta[q][p] * x.abs().ln_1p()
            }
        };
    }
    b
}

/// Builds behavioral columns from given coefficients and per-feature noise
/// (`noise[q][n]`).
pub fn evaluate_scheme(scheme: Scheme, coef: &Coefficients, contextual: &[Vec<f64>], noise: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = contextual.first().map_or(0, Vec::len);
    let terms = coef.alpha.first().map_or(0, Vec::len).min(contextual.len());
    noise
        .iter()
        .enumerate()
        .map(|(q, eps)| {
            (0..n)
                .map(|i| {
                    let c: Vec<f64> = contextual[..terms].iter().map(|col| col[i]).collect();
                    scheme_value(scheme, coef, q, &c) + eps[i]
                })
                .collect()
        })
        .collect()
}

/// Draws coefficients and `Uniform(0, 0.05)` noise and evaluates the scheme.
/// The sums run over the first `min(P, Q)` contextual features.
pub fn gen_behavioral(scheme: Scheme, contextual: &[Vec<f64>], n_behavioral: usize, seed: u64) -> Vec<Vec<f64>> {
    let n = contextual.first().map_or(0, Vec::len);
    let terms = n_terms(contextual.len(), n_behavioral);
    let coef = Coefficients::sample(n_behavioral, terms, &mut rng::stream(seed, &[1]));
    let mut noise_rng = rng::stream(seed, &[2]);
    let noise: Vec<Vec<f64>> = (0..n_behavioral)
        .map(|_| (0..n).map(|_| noise_rng.random_range(0.0..NOISE_MAX)).collect())
        .collect();
    evaluate_scheme(scheme, &coef, contextual, &noise)
}

fn integer_label(v: f64) -> String {
    format!("{}", v as i64)
}

/// Generates a dataset for `spec` with min-max normalized behavioral
/// columns. Categorical contextual values are label-encoded from their
/// integer labels.
pub fn make_synthetic(spec: &SchemeSpec) -> Result<Dataset> {
    let contextual = gen_contextual(spec)?;
    let behavioral = gen_behavioral(spec.scheme, &contextual, spec.n_behavioral, spec.seed);
    let mut columns: Vec<Column> = contextual
        .into_iter()
        .enumerate()
        .map(|(p, values)| {
            if spec.is_categorical(p) {
                let raw: Vec<String> = values.iter().map(|&v| integer_label(v)).collect();
                let (codes, labels) = label_encode(&raw);
                Column::Categorical { codes, labels }
            } else {
                Column::Numeric(values)
            }
        })
        .collect();
    columns.extend(behavioral.into_iter().map(Column::Numeric));
    let raw = Dataset::new(spec.schema(), columns, None)?;
    Ok(raw.minmax_normalize().0)
}

/// Which rows were perturbed and by how much (`deltas[r][q]` for the
/// `r`-th perturbed index).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InjectionRecord {
    pub indices: Vec<usize>,
    pub deltas: Vec<Vec<f64>>,
}

/// Number of anomalies for a given rate, at least one.
pub fn anomaly_count(n: usize, rate: f64) -> usize {
    ((n as f64 * rate).round() as usize).max(1)
}

/// Perturbs `m` distinct random rows in every behavioral feature by
/// `±Uniform(0.1, 0.5)` without truncating to `[0, 1]`, and labels them.
pub fn inject_anomalies(ds: &Dataset, m: usize, seed: u64) -> Result<(Dataset, InjectionRecord)> {
    let n = ds.len();
    if m == 0 || m >= n {
        return Err(Error::param(format!("anomaly count must lie in 1..{n}, got {m}")));
    }
    let mut rng = rng::rng_from_seed(seed);
    let mut indices = index::sample(&mut rng, n, m).into_vec();
    indices.sort_unstable();
    let mut behavioral: Vec<Vec<f64>> = (0..ds.n_behavioral()).map(|q| ds.behavioral_column(q).to_vec()).collect();
    let mut deltas = Vec::with_capacity(m);
    for &i in &indices {
        let row: Vec<f64> = behavioral
            .iter_mut()
            .map(|col| {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let delta = sign * rng.random_range(DELTA_MIN..=DELTA_MAX);
                col[i] += delta;
                delta
            })
            .collect();
        deltas.push(row);
    }
    let mut labels = vec![false; n];
    for &i in &indices {
        labels[i] = true;
    }
    let out = ds.clone().with_behavioral(behavioral)?.with_labels(labels)?;
    Ok((out, InjectionRecord { indices, deltas }))
}

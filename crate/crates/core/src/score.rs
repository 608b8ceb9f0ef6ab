//! The contextual anomaly scorer.
//!
//! For every object and every behavioral feature a quantile regression
//! forest is fitted on the object's reference group (contextual features as
//! predictors, that behavioral feature as response). The forest's
//! percentile profile at the object's contextual values turns the object's
//! actual behavioral value into a partial score: the width of the
//! percentile interval it falls in, extrapolated by IQR-scaled distance
//! outside the estimated support, and clipped at `eta / 100`. The final
//! score is the mean of the partial scores.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde_json::{Map, Value};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gower::{distance_matrix, reference_group, DistanceMatrix, ReferenceGroup};
use crate::qrf::{fit_forest, ForestParams, Predictors, QuantileForest};
use crate::rng;

/// Floor applied to the interquartile range when extrapolating beyond the
/// estimated support.
pub const IQR_FLOOR: f64 = 1e-6;

/// Conditional percentiles `tau_0..tau_nq` of one behavioral feature for one
/// object, with the derived interval widths.
#[derive(Debug, Clone, PartialEq)]
pub struct PercentileProfile {
    taus: Vec<f64>,
    widths: Vec<f64>,
    quartiles: (f64, f64),
    max_width: f64,
}

impl PercentileProfile {
    /// Builds a profile from a non-decreasing grid of at least two values.
    /// When the grid has a multiple of four intervals the quartiles are read
    /// from it; otherwise `quartiles` must be supplied.
    pub fn new(taus: Vec<f64>, quartiles: Option<(f64, f64)>) -> Result<Self> {
        if taus.len() < 2 {
            return Err(Error::param("a percentile profile needs at least two levels"));
        }
        if taus.iter().any(|t| !t.is_finite()) || taus.windows(2).any(|p| p[1] < p[0]) {
            return Err(Error::param("percentiles must be finite and non-decreasing"));
        }
        let nq = taus.len() - 1;
        let (q25, q75) = match quartiles {
            Some(q) => q,
            None if nq.is_multiple_of(4) => (taus[nq / 4], taus[3 * nq / 4]),
            None => return Err(Error::param("quartiles are not on the grid and were not supplied")),
        };
        let widths: Vec<f64> = taus.windows(2).map(|p| p[1] - p[0]).collect();
        let max_width = widths.iter().copied().fold(0.0, f64::max);
        Ok(PercentileProfile {
            taus,
            widths,
            quartiles: (q25, q75.max(q25)),
            max_width,
        })
    }

    /// Profile with `tau_i = i / nq`.
    pub fn uniform(nq: usize) -> Self {
        Self::new((0..=nq).map(|i| i as f64 / nq as f64).collect(), Some((0.25, 0.75))).unwrap()
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// `tau_75 - tau_25`.
    pub fn iqr(&self) -> f64 {
        self.quartiles.1 - self.quartiles.0
    }

    /// `(tau_25, tau_75)`.
    pub fn quartiles(&self) -> (f64, f64) {
        self.quartiles
    }

    pub fn median(&self) -> f64 {
        let nq = self.n_intervals();
        if nq.is_multiple_of(2) {
            self.taus[nq / 2]
        } else {
            (self.taus[nq / 2] + self.taus[nq / 2 + 1]) / 2.0
        }
    }

    pub fn max_width(&self) -> f64 {
        self.max_width
    }

    /// Number of percentile intervals.
    pub fn n_intervals(&self) -> usize {
        self.widths.len()
    }

    pub fn lowest(&self) -> f64 {
        self.taus[0]
    }

    pub fn highest(&self) -> f64 {
        self.taus[self.taus.len() - 1]
    }

    /// Width of the interval containing `b`: interval `i` for the largest
    /// `i` with `tau_i <= b`, with the top level folded into the last
    /// interval. `None` outside `[tau_0, tau_nq]`.
    pub fn matched_width(&self, b: f64) -> Option<f64> {
        if !(self.lowest() <= b && b <= self.highest()) {
            return None;
        }
        let i = self.taus.partition_point(|&t| t <= b) - 1;
        Some(self.widths[i.min(self.widths.len() - 1)])
    }
}

/// Builds the profile of `forest` at `u` on the grid `i / nq`.
pub fn percentile_profile(forest: &QuantileForest, u: &[f64], nq: usize) -> Result<PercentileProfile> {
    if nq == 0 {
        return Err(Error::param("quantile grid size must be at least 1"));
    }
    let alphas: Vec<f64> = (0..=nq).map(|i| i as f64 / nq as f64).collect();
    let taus = forest.conditional_quantiles(u, &alphas);
    let quartiles = if nq.is_multiple_of(4) {
        None
    } else {
        let q = forest.conditional_quantiles(u, &[0.25, 0.75]);
        Some((q[0], q[1]))
    };
    PercentileProfile::new(taus, quartiles)
}

/// Width of the percentile interval `b` falls into.
pub fn matched_width(p: &PercentileProfile, b: f64) -> Option<f64> {
    p.matched_width(b)
}

/// Raw partial score before clipping. Outside the estimated support the
/// maximum width is scaled by `1 + distance / IQR` when `scale_outside` is
/// set, and used as is otherwise.
pub fn intermediate_score(p: &PercentileProfile, b: f64, scale_outside: bool) -> f64 {
    let iqr = p.iqr().max(IQR_FLOOR);
    if b < p.lowest() {
        if scale_outside {
            (1.0 + (p.lowest() - b) / iqr) * p.max_width()
        } else {
            p.max_width()
        }
    } else if b > p.highest() {
        if scale_outside {
            (1.0 + (b - p.highest()) / iqr) * p.max_width()
        } else {
            p.max_width()
        }
    } else {
        p.matched_width(b).expect("b lies inside the support")
    }
}

/// Caps a raw score at `eta / 100`.
pub fn clip_score(is: f64, eta: f64) -> f64 {
    is.min(eta / 100.0)
}

/// How a profile and a value become a partial score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRule {
    /// Clipping constant; `None` disables clipping.
    pub eta: Option<f64>,
    /// IQR-scaled extrapolation outside `[tau_0, tau_nq]`.
    pub scale_outside: bool,
}

impl Default for ScoreRule {
    fn default() -> Self {
        ScoreRule {
            eta: Some(10.0),
            scale_outside: true,
        }
    }
}

impl ScoreRule {
    pub fn partial(&self, p: &PercentileProfile, b: f64) -> f64 {
        let is = intermediate_score(p, b, self.scale_outside);
        match self.eta {
            Some(eta) => clip_score(is, eta),
            None => is,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QcadParams {
    /// Reference group size; `None` means `min(N / 2, 500)`.
    pub k: Option<usize>,
    /// Number of percentile intervals (the grid has `n_quantiles + 1` levels).
    pub n_quantiles: usize,
    pub forest: ForestParams,
    pub rule: ScoreRule,
    pub seed: u64,
}

impl Default for QcadParams {
    fn default() -> Self {
        QcadParams {
            k: None,
            n_quantiles: 100,
            forest: ForestParams::default(),
            rule: ScoreRule::default(),
            seed: 0,
        }
    }
}

impl QcadParams {
    pub fn resolve_k(&self, n: usize) -> usize {
        self.k.unwrap_or_else(|| (n / 2).min(500))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let k = self.resolve_k(n);
        if k == 0 || k >= n {
            return Err(Error::param(format!(
                "k must lie in 1..={} for {n} objects, got {k}",
                n.saturating_sub(1)
            )));
        }
        if self.n_quantiles == 0 {
            return Err(Error::param("n_quantiles must be at least 1"));
        }
        if self.forest.n_trees == 0 || self.forest.min_samples_split == 0 || self.forest.max_features == Some(0) {
            return Err(Error::param("forest counts must be at least 1"));
        }
        if let Some(eta) = self.rule.eta {
            if eta.is_nan() || eta <= 0.0 {
                return Err(Error::param(format!("eta must be positive, got {eta}")));
            }
        }
        Ok(())
    }
}

/// Score of one object, decomposed per behavioral feature.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyReport {
    pub index: usize,
    pub reference_group: ReferenceGroup,
    pub partial_scores: Vec<f64>,
    pub final_score: f64,
}

impl AnomalyReport {
    fn from_partials(index: usize, reference_group: ReferenceGroup, partial_scores: Vec<f64>) -> Self {
        let final_score = partial_scores.iter().sum::<f64>() / partial_scores.len() as f64;
        AnomalyReport {
            index,
            reference_group,
            partial_scores,
            final_score,
        }
    }
}

/// Everything the score of one object depends on apart from the
/// [`ScoreRule`]; lets ablations rescore without refitting forests.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectProfiles {
    pub index: usize,
    pub reference_group: ReferenceGroup,
    pub profiles: Vec<PercentileProfile>,
    pub values: Vec<f64>,
}

impl ObjectProfiles {
    pub fn report(&self, rule: &ScoreRule) -> AnomalyReport {
        let partials = self
            .profiles
            .iter()
            .zip(&self.values)
            .map(|(p, &b)| rule.partial(p, b))
            .collect();
        AnomalyReport::from_partials(self.index, self.reference_group.clone(), partials)
    }
}

/// Shared state for scoring the objects of one dataset.
pub struct Scorer<'a> {
    ds: &'a Dataset,
    matrix: Option<&'a DistanceMatrix>,
    contextual: Vec<f64>,
    params: QcadParams,
    k: usize,
}

impl<'a> Scorer<'a> {
    pub fn new(ds: &'a Dataset, matrix: &'a DistanceMatrix, params: QcadParams) -> Result<Self> {
        if matrix.n() != ds.len() {
            return Err(Error::param(format!(
                "distance matrix covers {} objects, dataset has {}",
                matrix.n(),
                ds.len()
            )));
        }
        params.validate(ds.len())?;
        Ok(Scorer {
            ds,
            matrix: Some(matrix),
            contextual: ds.contextual_matrix(),
            k: params.resolve_k(ds.len()),
            params,
        })
    }

    /// A scorer that can only work from known reference groups
    /// ([`Scorer::profiles_for_group`]).
    pub fn without_matrix(ds: &'a Dataset, params: QcadParams) -> Result<Self> {
        params.validate(ds.len())?;
        Ok(Scorer {
            ds,
            matrix: None,
            contextual: ds.contextual_matrix(),
            k: params.resolve_k(ds.len()),
            params,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn contextual_row(&self, i: usize) -> &[f64] {
        let p = self.ds.n_contextual();
        &self.contextual[i * p..(i + 1) * p]
    }

    /// Forest for behavioral feature `q` trained on `group`, seeded by the
    /// stable identifier of object `i`.
    pub fn forest(&self, i: usize, group: &ReferenceGroup, q: usize) -> Result<QuantileForest> {
        let p = self.ds.n_contextual();
        let mut x = Vec::with_capacity(group.members.len() * p);
        for &j in &group.members {
            x.extend_from_slice(self.contextual_row(j));
        }
        let column = self.ds.behavioral_column(q);
        let y: Vec<f64> = group.members.iter().map(|&j| column[j]).collect();
        let seed = rng::derive(self.params.seed, &[self.ds.ids()[i], q as u64]);
        fit_forest(Predictors::new(x, p)?, y, &self.params.forest, seed)
    }

    pub fn profiles(&self, i: usize) -> Result<ObjectProfiles> {
        let matrix = self
            .matrix
            .ok_or_else(|| Error::param("scorer has no distance matrix"))?;
        self.profiles_for_group(i, reference_group(matrix, i, self.k)?)
    }

    /// Profiles of object `i` against a given reference group.
    pub fn profiles_for_group(&self, i: usize, group: ReferenceGroup) -> Result<ObjectProfiles> {
        if i >= self.ds.len() || group.members.is_empty() || group.members.iter().any(|&j| j >= self.ds.len() || j == i) {
            return Err(Error::param(format!("invalid reference group for object {i}")));
        }
        let u = self.contextual_row(i);
        let profiles = (0..self.ds.n_behavioral())
            .map(|q| percentile_profile(&self.forest(i, &group, q)?, u, self.params.n_quantiles))
            .collect::<Result<Vec<_>>>()?;
        let values = (0..self.ds.n_behavioral())
            .map(|q| self.ds.behavioral_column(q)[i])
            .collect();
        Ok(ObjectProfiles {
            index: i,
            reference_group: group,
            profiles,
            values,
        })
    }

    pub fn score(&self, i: usize) -> Result<AnomalyReport> {
        Ok(self.profiles(i)?.report(&self.params.rule))
    }

    /// Profiles of every object, computed in parallel, in object order.
    pub fn all_profiles(&self) -> Result<Vec<ObjectProfiles>> {
        (0..self.ds.len())
            .into_par_iter()
            .map(|i| {
                self.profiles(i).map_err(|e| Error::Object {
                    index: i,
                    source: Box::new(e),
                })
            })
            .collect()
    }

    pub fn score_all(&self) -> Result<Vec<AnomalyReport>> {
        let rule = self.params.rule;
        (0..self.ds.len())
            .into_par_iter()
            .map(|i| {
                self.profiles(i)
                    .map(|p| p.report(&rule))
                    .map_err(|e| Error::Object {
                        index: i,
                        source: Box::new(e),
                    })
            })
            .collect()
    }
}

/// Scores object `i` of a normalized dataset.
pub fn score_object(ds: &Dataset, m: &DistanceMatrix, i: usize, params: &QcadParams) -> Result<AnomalyReport> {
    Scorer::new(ds, m, *params)?.score(i)
}

/// Scores every object of a normalized dataset using a precomputed
/// distance matrix.
pub fn detect_with_matrix(ds: &Dataset, m: &DistanceMatrix, params: &QcadParams) -> Result<Vec<AnomalyReport>> {
    Scorer::new(ds, m, *params)?.score_all()
}

/// Scores every object of a normalized dataset.
pub fn detect(ds: &Dataset, params: &QcadParams) -> Result<Vec<AnomalyReport>> {
    params.validate(ds.len())?;
    let m = distance_matrix(ds);
    detect_with_matrix(ds, &m, params)
}

/// Final scores in object order.
pub fn final_scores(reports: &[AnomalyReport]) -> Vec<f64> {
    reports.iter().map(|r| r.final_score).collect()
}

/// Writes one JSON object per line:
/// `{"index", "final_score", "partial_scores": {feature: score}, "reference_group"}`.
pub fn write_jsonl<W: Write>(mut w: W, reports: &[AnomalyReport], ds: &Dataset) -> Result<()> {
    let names: Vec<&str> = ds.schema().behavioral_features().map(|f| f.name.as_str()).collect();
    for r in reports {
        let mut partial = Map::new();
        for (name, s) in names.iter().zip(&r.partial_scores) {
            partial.insert((*name).to_string(), Value::from(*s));
        }
        let mut obj = Map::new();
        obj.insert("index".into(), Value::from(r.index));
        obj.insert("final_score".into(), Value::from(r.final_score));
        obj.insert("partial_scores".into(), Value::Object(partial));
        obj.insert("reference_group".into(), Value::from(r.reference_group.members.clone()));
        serde_json::to_writer(&mut w, &Value::Object(obj))?;
        w.write_all(b"\n").map_err(|e| Error::io("<jsonl>", e))?;
    }
    w.flush().map_err(|e| Error::io("<jsonl>", e))
}

/// Reads reports written by [`write_jsonl`]; partial scores are ordered by
/// the dataset's behavioral features.
pub fn read_jsonl<R: BufRead>(r: R, ds: &Dataset) -> Result<Vec<AnomalyReport>> {
    let names: Vec<&str> = ds.schema().behavioral_features().map(|f| f.name.as_str()).collect();
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<jsonl>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Format(format!("scores line {}: {what}", lineno + 1));
        let v: Value = serde_json::from_str(&line)?;
        let index = v["index"].as_u64().ok_or_else(|| bad("missing index"))? as usize;
        let final_score = v["final_score"].as_f64().ok_or_else(|| bad("missing final_score"))?;
        let partial: HashMap<&str, f64> = v["partial_scores"]
            .as_object()
            .ok_or_else(|| bad("missing partial_scores"))?
            .iter()
            .filter_map(|(k, v)| Some((k.as_str(), v.as_f64()?)))
            .collect();
        let partial_scores = names
            .iter()
            .map(|n| partial.get(n).copied().ok_or_else(|| bad(&format!("no partial score for `{n}`"))))
            .collect::<Result<Vec<_>>>()?;
        let members = v["reference_group"]
            .as_array()
            .ok_or_else(|| bad("missing reference_group"))?
            .iter()
            .map(|m| m.as_u64().map(|m| m as usize).ok_or_else(|| bad("bad reference_group entry")))
            .collect::<Result<Vec<_>>>()?;
        out.push(AnomalyReport {
            index,
            reference_group: ReferenceGroup {
                center: index,
                members,
            },
            partial_scores,
            final_score,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile_from(taus: &[f64]) -> PercentileProfile {
        PercentileProfile::new(taus.to_vec(), None).unwrap()
    }

    #[test]
    fn matched_width_example_values() {
        let mut taus: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
        taus[46] = 0.5;
        taus[47] = 0.513;
        for t in taus.iter_mut().skip(48) {
            *t = t.max(0.513);
        }
        let p = profile_from(&taus);
        assert!((p.matched_width(0.505).unwrap() - 0.013).abs() < 1e-12);
        assert_eq!(p.matched_width(1.0), Some(p.widths()[99]));
        assert_eq!(p.matched_width(1.5), None);

        let u = PercentileProfile::uniform(100);
        assert!((u.matched_width(0.314).unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn matched_width_with_duplicate_levels() {
        // taus: 0, 0.5, 0.5, 0.5, 1 -> b = 0.5 sits at index 3
        let p = profile_from(&[0.0, 0.5, 0.5, 0.5, 1.0]);
        assert_eq!(p.matched_width(0.5), Some(0.5));
        assert_eq!(p.matched_width(0.2), Some(0.5));
        let flat = profile_from(&[0.4; 5]);
        assert_eq!(flat.matched_width(0.4), Some(0.0));
    }

    #[test]
    fn intermediate_score_branches() {
        // tau_0 = 0.2, tau_25 = 0.3, tau_75 = 0.5, tau_100 = 0.8, max width 0.05 (first interval)
        let mut taus = vec![0.0; 101];
        for (i, t) in taus.iter_mut().enumerate() {
            *t = match i {
                0 => 0.2,
                1..=25 => 0.25 + 0.05 * (i - 1) as f64 / 24.0,
                26..=75 => 0.3 + 0.2 * (i - 25) as f64 / 50.0,
                _ => 0.5 + 0.3 * (i - 75) as f64 / 25.0,
            };
        }
        let p = PercentileProfile::new(taus, None).unwrap();
        assert!((p.iqr() - 0.2).abs() < 1e-12);
        assert!((p.max_width() - 0.05).abs() < 1e-12);
        assert!((intermediate_score(&p, 0.1, true) - 0.075).abs() < 1e-12);
        assert!((intermediate_score(&p, 1.0, true) - (1.0 + 0.2 / 0.2) * 0.05).abs() < 1e-12);
        assert_eq!(intermediate_score(&p, 0.1, false), p.max_width());
        assert_eq!(intermediate_score(&p, 0.4, true), p.matched_width(0.4).unwrap());
    }

    #[test]
    fn zero_iqr_is_floored() {
        let p = profile_from(&[0.0, 0.5, 0.5, 0.5, 1.0]);
        assert_eq!(p.iqr(), 0.0);
        let s = intermediate_score(&p, 1.1, true);
        assert!((s - (1.0 + 0.1 / IQR_FLOOR) * 0.5).abs() < 1e-6);
    }

    #[test]
    fn clipping() {
        assert_eq!(clip_score(0.15, 10.0), 0.10);
        assert_eq!(clip_score(0.05, 10.0), 0.05);
        assert_eq!(clip_score(0.1, 10.0), 0.1);
    }

    #[test]
    fn profile_validation() {
        assert!(PercentileProfile::new(vec![0.0], None).is_err());
        assert!(PercentileProfile::new(vec![0.0, 1.0, 0.5], Some((0.0, 1.0))).is_err());
        assert!(PercentileProfile::new(vec![0.0, 0.5, 1.0], None).is_err());
    }

    #[test]
    fn default_k() {
        let p = QcadParams::default();
        assert_eq!(p.resolve_k(2000), 500);
        assert_eq!(p.resolve_k(300), 150);
        assert!(p.validate(1).is_err());
        assert!(p.validate(2).is_ok());
        let big_k = QcadParams { k: Some(10), ..p };
        assert!(big_k.validate(10).is_err());
    }
}

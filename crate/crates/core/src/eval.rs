//! Threshold-free detection metrics and the multi-trial experiment runner.

use std::fmt::Write as _;
use std::io::Write;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gower::{distance_matrix, DistanceMatrix};
use crate::rng;
use crate::score::{final_scores, QcadParams, ScoreRule, Scorer};
use crate::synth::{anomaly_count, inject_anomalies, make_synthetic, SchemeSpec};

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::param(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::param("scores contain NaN"));
    }
    Ok(())
}

/// Object indices by descending score, ties by ascending index.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Area under the ROC curve: the probability that a random positive
/// outscores a random negative, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("ROC AUC needs both positive and negative labels".into()));
    }
    // Mid-ranks over ascending scores.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let mid = (start + 1 + end) as f64 / 2.0;
        let pos_in_run = order[start..end].iter().filter(|&&i| labels[i]).count();
        pos_rank_sum += mid * pos_in_run as f64;
        start = end;
    }
    let n_pos = n_pos as f64;
    let u = pos_rank_sum - n_pos * (n_pos + 1.0) / 2.0;
    Ok(u / (n_pos * n_neg as f64))
}

/// Average precision over the score ranking.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(Error::UndefinedMetric("average precision needs a positive label".into()));
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in ranking(scores).iter().enumerate() {
        if labels[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / n_pos as f64)
}

/// Fraction of positives among the `n` highest-scored objects.
pub fn precision_at_n(scores: &[f64], labels: &[bool], n: usize) -> Result<f64> {
    check_lengths(scores, labels)?;
    if n == 0 || n > scores.len() {
        return Err(Error::param(format!("n must lie in 1..={}, got {n}", scores.len())));
    }
    let hits = ranking(scores).iter().take(n).filter(|&&i| labels[i]).count();
    Ok(hits as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub p_at_n: f64,
}

/// All three metrics, with `n` for P@n set to the number of positives.
pub fn evaluate(scores: &[f64], labels: &[bool]) -> Result<Metrics> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    Ok(Metrics {
        roc_auc: roc_auc(scores, labels)?,
        pr_auc: pr_auc(scores, labels)?,
        p_at_n: precision_at_n(scores, labels, n_pos.max(1))?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; zero for a single trial.
    pub std: f64,
}

impl MetricSummary {
    pub fn new(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MetricSummary { values, mean, std }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub roc_auc: MetricSummary,
    pub pr_auc: MetricSummary,
    pub p_at_n: MetricSummary,
}

impl TrialResult {
    pub fn from_trials(trials: &[Metrics]) -> Self {
        TrialResult {
            roc_auc: MetricSummary::new(trials.iter().map(|m| m.roc_auc).collect()),
            pr_auc: MetricSummary::new(trials.iter().map(|m| m.pr_auc).collect()),
            p_at_n: MetricSummary::new(trials.iter().map(|m| m.p_at_n).collect()),
        }
    }

    pub fn n_trials(&self) -> usize {
        self.roc_auc.values.len()
    }
}

/// Where trial data comes from. Injection always starts from the clean,
/// normalized data.
#[derive(Debug, Clone)]
pub enum DataSource {
    Synthetic(SchemeSpec),
    Dataset(Dataset),
}

impl DataSource {
    pub fn materialize(&self) -> Result<Dataset> {
        match self {
            DataSource::Synthetic(spec) => make_synthetic(spec),
            DataSource::Dataset(ds) => Ok(ds.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialConfig {
    pub trials: usize,
    pub inject_rate: f64,
    /// Root of the per-trial injection and detector seeds.
    pub seed: u64,
}

impl Default for TrialConfig {
    fn default() -> Self {
        TrialConfig {
            trials: 10,
            inject_rate: 0.025,
            seed: 0,
        }
    }
}

impl TrialConfig {
    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::param("at least one trial is required"));
        }
        if !(self.inject_rate > 0.0 && self.inject_rate < 1.0) {
            return Err(Error::param(format!("inject rate must lie in (0, 1), got {}", self.inject_rate)));
        }
        Ok(())
    }
}

/// A prepared clean dataset together with its contextual distances, which
/// injection never changes.
pub struct Experiment {
    clean: Dataset,
    matrix: DistanceMatrix,
    config: TrialConfig,
}

impl Experiment {
    pub fn new(source: &DataSource, config: TrialConfig) -> Result<Self> {
        config.validate()?;
        let clean = source.materialize()?;
        let matrix = distance_matrix(&clean);
        Ok(Experiment { clean, matrix, config })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.clean
    }

    /// Injected dataset of trial `t`.
    pub fn trial_data(&self, t: usize) -> Result<Dataset> {
        let m = anomaly_count(self.clean.len(), self.config.inject_rate);
        Ok(inject_anomalies(&self.clean, m, rng::derive(self.config.seed, &[t as u64, 0]))?.0)
    }

    /// Runs every trial once per set of parameters and scores each trial
    /// under all `rules`. Forests are fitted once per trial and parameter
    /// set; only the rules vary.
    pub fn run_rules(&self, params: &QcadParams, rules: &[ScoreRule]) -> Result<Vec<TrialResult>> {
        let mut per_rule: Vec<Vec<Metrics>> = vec![Vec::new(); rules.len()];
        for t in 0..self.config.trials {
            let ds = self.trial_data(t)?;
            let labels = ds.labels().expect("injection sets labels").to_vec();
            let trial_params = QcadParams {
                seed: rng::derive(params.seed, &[t as u64]),
                ..*params
            };
            let profiles = Scorer::new(&ds, &self.matrix, trial_params)?.all_profiles()?;
            for (rule, out) in rules.iter().zip(per_rule.iter_mut()) {
                let reports: Vec<_> = profiles.iter().map(|p| p.report(rule)).collect();
                out.push(evaluate(&final_scores(&reports), &labels)?);
            }
        }
        Ok(per_rule.iter().map(|m| TrialResult::from_trials(m)).collect())
    }

    pub fn run(&self, params: &QcadParams) -> Result<TrialResult> {
        Ok(self.run_rules(params, &[params.rule])?.remove(0))
    }
}

/// Injects, detects and evaluates `config.trials` times.
pub fn run_trials(source: &DataSource, params: &QcadParams, config: &TrialConfig) -> Result<TrialResult> {
    Experiment::new(source, *config)?.run(params)
}

/// One configuration of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub config: String,
    pub result: TrialResult,
}

/// Repeats the trials for every reference group size.
pub fn sweep_k(source: &DataSource, params: &QcadParams, config: &TrialConfig, k_values: &[usize]) -> Result<Vec<SweepRow>> {
    if k_values.is_empty() {
        return Err(Error::param("k sweep needs at least one value"));
    }
    let exp = Experiment::new(source, *config)?;
    k_values
        .iter()
        .map(|&k| {
            let p = QcadParams { k: Some(k), ..*params };
            Ok(SweepRow {
                config: format!("k={k}"),
                result: exp.run(&p)?,
            })
        })
        .collect()
}

fn eta_label(eta: Option<f64>) -> String {
    match eta {
        Some(e) => format!("eta={e}"),
        None => "eta=none".into(),
    }
}

/// Repeats the trials for every clipping constant; `None` disables
/// clipping.
pub fn sweep_eta(source: &DataSource, params: &QcadParams, config: &TrialConfig, etas: &[Option<f64>]) -> Result<Vec<SweepRow>> {
    if etas.is_empty() {
        return Err(Error::param("eta sweep needs at least one value"));
    }
    if let Some(bad) = etas.iter().flatten().find(|e| e.is_nan() || **e <= 0.0) {
        return Err(Error::param(format!("eta must be positive, got {bad}")));
    }
    let rules: Vec<ScoreRule> = etas.iter().map(|&eta| ScoreRule { eta, ..params.rule }).collect();
    let results = Experiment::new(source, *config)?.run_rules(params, &rules)?;
    Ok(etas
        .iter()
        .zip(results)
        .map(|(&eta, result)| SweepRow {
            config: eta_label(eta),
            result,
        })
        .collect())
}

/// Trials with and without IQR-scaled extrapolation outside the support.
pub fn sweep_scaling(source: &DataSource, params: &QcadParams, config: &TrialConfig) -> Result<Vec<SweepRow>> {
    let rules = [
        ScoreRule {
            scale_outside: true,
            ..params.rule
        },
        ScoreRule {
            scale_outside: false,
            ..params.rule
        },
    ];
    let results = Experiment::new(source, *config)?.run_rules(params, &rules)?;
    Ok(["scaling=on", "scaling=off"]
        .iter()
        .zip(results)
        .map(|(c, result)| SweepRow {
            config: (*c).to_string(),
            result,
        })
        .collect())
}

/// One row per configuration with mean and standard deviation of each
/// metric.
pub fn write_results_csv<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "config",
        "trials",
        "roc_auc_mean",
        "roc_auc_std",
        "pr_auc_mean",
        "pr_auc_std",
        "p_at_n_mean",
        "p_at_n_std",
    ])?;
    for row in rows {
        let r = &row.result;
        out.write_record([
            row.config.clone(),
            r.n_trials().to_string(),
            r.roc_auc.mean.to_string(),
            r.roc_auc.std.to_string(),
            r.pr_auc.mean.to_string(),
            r.pr_auc.std.to_string(),
            r.p_at_n.mean.to_string(),
            r.p_at_n.std.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))
}

/// Human-readable table of `mean ± std` per metric.
pub fn format_table(rows: &[SweepRow]) -> String {
    let width = rows.iter().map(|r| r.config.len()).max().unwrap_or(6).max(6);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}  {:>13}  {:>13}  {:>13}", "config", "ROC AUC", "PRC AUC", "P@n");
    for row in rows {
        let r = &row.result;
        let _ = writeln!(
            s,
            "{:<width$}  {:>6.3} ± {:<4.2}  {:>6.3} ± {:<4.2}  {:>6.3} ± {:<4.2}",
            row.config, r.roc_auc.mean, r.roc_auc.std, r.pr_auc.mean, r.pr_auc.std, r.p_at_n.mean, r.p_at_n.std
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roc_examples() {
        let l = [true, false, true, false];
        assert_eq!(roc_auc(&[0.9, 0.8, 0.7, 0.6], &l).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.9, 0.1, 0.8, 0.2], &l).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &l).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[true, true]), Err(Error::UndefinedMetric(_))));
        assert!(roc_auc(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn ap_examples() {
        assert_eq!(pr_auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(pr_auc(&[0.9, 0.8, 0.7, 0.6], &[false, true, false, false]).unwrap(), 0.5);
        assert_eq!(pr_auc(&[0.3, 0.2], &[true, true]).unwrap(), 1.0);
        assert!(pr_auc(&[0.3, 0.2], &[false, false]).is_err());
        // tie: index 1 ranks after index 0
        assert_eq!(pr_auc(&[0.5, 0.5], &[false, true]).unwrap(), 0.5);
    }

    #[test]
    fn precision_at_n_examples() {
        let s = [0.9, 0.8, 0.1];
        let l = [true, false, true];
        assert_eq!(precision_at_n(&s, &l, 2).unwrap(), 0.5);
        assert_eq!(precision_at_n(&s, &l, 1).unwrap(), 1.0);
        assert!((precision_at_n(&s, &l, 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(precision_at_n(&s, &l, 0).is_err());
        assert!(precision_at_n(&s, &l, 4).is_err());
    }

    #[test]
    fn summary_statistics() {
        let s = MetricSummary::new(vec![0.7]);
        assert_eq!((s.mean, s.std), (0.7, 0.0));
        let s = MetricSummary::new(vec![1.0, 2.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
    }

    #[test]
    fn csv_has_one_row_per_configuration() {
        let r = TrialResult::from_trials(&[Metrics {
            roc_auc: 1.0,
            pr_auc: 0.5,
            p_at_n: 0.25,
        }]);
        let rows: Vec<SweepRow> = ["a", "b"]
            .iter()
            .map(|c| SweepRow {
                config: c.to_string(),
                result: r.clone(),
            })
            .collect();
        let mut buf = Vec::new();
        write_results_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(1).unwrap().starts_with("a,1,1,0,0.5,0,0.25,0"));
        assert!(format_table(&rows).contains("0.500"));
    }
}

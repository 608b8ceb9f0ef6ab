//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Tolerances are pinned below.

use std::time::Instant;

use qcad::dataset::{Column, Dataset, Feature, FeatureSchema, Kind, Role};
use qcad::eval::{self, DataSource, Experiment, TrialConfig, TrialResult};
use qcad::gower::distance_matrix;
use qcad::qrf::{fit_forest, ForestParams, NodeView, Predictors, QuantileForest};
use qcad::rng::stream;
use qcad::score::{self, intermediate_score, ObjectProfiles, PercentileProfile, QcadParams, ScoreRule};
use qcad::gower::ReferenceGroup;
use qcad::synth::{Scheme, SchemeSpec};
use rand::Rng;

const SEED: u64 = 20240601;

const C1_MIN_ROC: f64 = 0.97;
const C1_MIN_PR: f64 = 0.90;
const C1_MIN_P_AT_N: f64 = 0.90;
const C2_MIN_ROC: f64 = 0.95;
const C3_MAX_MEDIAN_ERR: f64 = 0.08;
const C3_MAX_QUARTILE_ERR: f64 = 0.1;
/// Leaves must grow with n for the estimate to converge; 10% of the rows.
const C3_MIN_SAMPLES_SPLIT: usize = 200;
const C4_WEIGHT_TOL: f64 = 1e-12;
const C5_MEAN_TOL: f64 = 1e-12;
const C5_WEIGHT_SUM_TOL: f64 = 1e-12;
const C6_MIN_SCALING_GAIN: f64 = 0.05;
const C6_ETA_SLACK: f64 = 0.02;
const C7_MAX_PLATEAU_GAP: f64 = 0.03;
const C8_MAX_RATIO: f64 = 6.0;
const C8_FIXED_K: usize = 250;

const TRIALS: usize = 3;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome { name, pass, detail }
}

fn s1_spec(n: usize) -> SchemeSpec {
    SchemeSpec::new(Scheme::S1, 5, 2, 5, n, SEED)
}

fn trial_config() -> TrialConfig {
    TrialConfig {
        trials: TRIALS,
        inject_rate: 0.025,
        seed: SEED,
    }
}

fn defaults() -> QcadParams {
    QcadParams {
        seed: SEED,
        ..QcadParams::default()
    }
}

fn fmt(r: &TrialResult) -> String {
    format!(
        "ROC {:.3}±{:.3} PRC {:.3}±{:.3} P@n {:.3}±{:.3}",
        r.roc_auc.mean, r.roc_auc.std, r.pr_auc.mean, r.pr_auc.std, r.p_at_n.mean, r.p_at_n.std
    )
}

/// Criteria 1 and 6 share the same trials: forests are fitted once and
/// rescored under each rule.
fn criteria_1_and_6() -> Vec<Outcome> {
    let exp = Experiment::new(&DataSource::Synthetic(s1_spec(2000)), trial_config()).expect("experiment");
    let params = defaults();
    let rules = [
        params.rule,
        ScoreRule {
            scale_outside: false,
            ..params.rule
        },
        ScoreRule {
            eta: None,
            ..params.rule
        },
    ];
    let res = exp.run_rules(&params, &rules).expect("trials");
    let (base, unscaled, unclipped) = (&res[0], &res[1], &res[2]);

    let c1 = base.roc_auc.mean >= C1_MIN_ROC && base.pr_auc.mean >= C1_MIN_PR && base.p_at_n.mean >= C1_MIN_P_AT_N;
    let gain = base.pr_auc.mean - unscaled.pr_auc.mean;
    let c6 = gain >= C6_MIN_SCALING_GAIN && base.pr_auc.mean >= unclipped.pr_auc.mean - C6_ETA_SLACK;
    vec![
        outcome("C1 synthetic end-to-end (S1, N=2000)", c1, fmt(base)),
        outcome(
            "C6 ablation signs",
            c6,
            format!(
                "PRC scaled {:.3} unscaled {:.3} (gain {gain:.3}); eta=10 {:.3} vs unclipped {:.3}",
                base.pr_auc.mean, unscaled.pr_auc.mean, base.pr_auc.mean, unclipped.pr_auc.mean
            ),
        ),
    ]
}

fn criterion_2() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for scheme in [Scheme::S2, Scheme::S3, Scheme::S4, Scheme::S5] {
        let spec = SchemeSpec::new(scheme, 5, 2, 5, 1000, SEED);
        let r = eval::run_trials(&DataSource::Synthetic(spec), &defaults(), &trial_config()).expect("trials");
        pass &= r.roc_auc.mean >= C2_MIN_ROC;
        parts.push(format!("{scheme} ROC {:.3}", r.roc_auc.mean));
    }
    outcome("C2 scheme robustness (S2-S5, N=1000)", pass, parts.join(", "))
}

/// Mean absolute error of the estimated quartiles over the grid.
fn quartile_errors(min_samples_split: usize) -> [f64; 3] {
    let n = 2000;
    let mut rng = stream(SEED, &[3]);
    let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| x + rng.random::<f64>()).collect();
    let params = ForestParams {
        n_trees: 100,
        min_samples_split,
        ..ForestParams::default()
    };
    let forest = fit_forest(Predictors::new(xs, 1).unwrap(), ys, &params, SEED).unwrap();
    let grid: Vec<f64> = (0..50).map(|j| (j as f64 + 0.5) / 50.0).collect();
    let mut err = [0.0; 3];
    for &x in &grid {
        let q = forest.conditional_quantiles(&[x], &[0.25, 0.5, 0.75]);
        for (e, (qa, a)) in err.iter_mut().zip(q.iter().zip([0.25, 0.5, 0.75])) {
            *e += (qa - (x + a)).abs() / grid.len() as f64;
        }
    }
    err
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let err = quartile_errors(C3_MIN_SAMPLES_SPLIT);
    let elapsed = start.elapsed().as_secs_f64();
    let small_leaves = quartile_errors(ForestParams::default().min_samples_split);
    let pass = err[1] <= C3_MAX_MEDIAN_ERR && err[0] <= C3_MAX_QUARTILE_ERR && err[2] <= C3_MAX_QUARTILE_ERR;
    outcome(
        "C3 QRF consistency",
        pass,
        format!(
            "n_s={C3_MIN_SAMPLES_SPLIT}: mean |err| q25 {:.4} q50 {:.4} q75 {:.4} in {elapsed:.1}s \
             (n_s=10: q25 {:.4} q50 {:.4} q75 {:.4})",
            err[0], err[1], err[2], small_leaves[0], small_leaves[1], small_leaves[2]
        ),
    )
}

fn naive_gower(rows: &[Vec<f64>], categorical: &[bool]) -> Vec<Vec<f64>> {
    let p = categorical.len();
    let ranges: Vec<f64> = (0..p)
        .map(|f| {
            let lo = rows.iter().map(|r| r[f]).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r[f]).fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        })
        .collect();
    let mut d = vec![vec![0.0; rows.len()]; rows.len()];
    for i in 0..rows.len() {
        for j in 0..rows.len() {
            let mut s = 0.0;
            for f in 0..p {
                s += if categorical[f] {
                    if rows[i][f] == rows[j][f] {
                        1.0
                    } else {
                        0.0
                    }
                } else if ranges[f] == 0.0 {
                    1.0
                } else {
                    1.0 - (rows[i][f] - rows[j][f]).abs() / ranges[f]
                };
            }
            d[i][j] = 1.0 - s / p as f64;
        }
    }
    d
}

fn criterion_4a() -> (bool, String) {
    let mut rng = stream(SEED, &[4, 1]);
    let n = 100;
    let categorical = [false, true, false, true, false];
    let mut columns = Vec::new();
    let mut features = Vec::new();
    let mut rows = vec![Vec::new(); n];
    for (f, &cat) in categorical.iter().enumerate() {
        if cat {
            let codes: Vec<u32> = (0..n).map(|_| rng.random_range(0..4)).collect();
            for (r, &c) in rows.iter_mut().zip(&codes) {
                r.push(c as f64);
            }
            columns.push(Column::Categorical {
                codes,
                labels: (0..4).map(|l| format!("c{l}")).collect(),
            });
            features.push(Feature::new(format!("f{f}"), Role::Contextual, Kind::Categorical));
        } else {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            for (r, &x) in rows.iter_mut().zip(&v) {
                r.push(x);
            }
            columns.push(Column::Numeric(v));
            features.push(Feature::new(format!("f{f}"), Role::Contextual, Kind::Numeric));
        }
    }
    features.push(Feature::new("b", Role::Behavioral, Kind::Numeric));
    columns.push(Column::Numeric(vec![0.0; n]));
    let ds = Dataset::new(FeatureSchema::new(features).unwrap(), columns, None).unwrap();
    let m = distance_matrix(&ds);
    let oracle = naive_gower(&rows, &categorical);
    let mismatches = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| m.get(i, j) != oracle[i][j])
        .count();
    (mismatches == 0, format!("gower mismatches {mismatches}/{}", n * n))
}

fn routed_weights(forest: &QuantileForest, u: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; forest.responses().len()];
    let k = forest.trees().len() as f64;
    for tree in forest.trees() {
        let mut node = tree.root();
        let rows = loop {
            match node {
                NodeView::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = tree.node(if u[feature] <= threshold { left } else { right }),
                NodeView::Leaf(rows) => break rows,
            }
        };
        for &r in rows {
            w[r] += 1.0 / (k * rows.len() as f64);
        }
    }
    w
}

fn random_forest(rng: &mut impl Rng, seed: u64) -> QuantileForest {
    let n = rng.random_range(5..40);
    let dim = rng.random_range(1..4);
    let x: Vec<f64> = (0..n * dim).map(|_| (rng.random_range(0..8) as f64) / 4.0).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let params = ForestParams {
        n_trees: rng.random_range(1..6),
        max_features: Some(rng.random_range(1..=dim)),
        min_samples_split: rng.random_range(2..6),
        bootstrap: rng.random_bool(0.8),
    };
    fit_forest(Predictors::new(x, dim).unwrap(), y, &params, seed).unwrap()
}

fn criterion_4b() -> (bool, String) {
    let mut rng = stream(SEED, &[4, 2]);
    let mut worst: f64 = 0.0;
    for f in 0..20 {
        let forest = random_forest(&mut rng, f);
        let dim = forest.predictors().dim();
        for _ in 0..10 {
            let u: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..2.5)).collect();
            let got = forest.leaf_weights(&u);
            let want = routed_weights(&forest, &u);
            for (a, b) in got.as_slice().iter().zip(&want) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    (worst <= C4_WEIGHT_TOL, format!("weights max diff {worst:.1e}"))
}

fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut credit = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    credit += 1.0;
                } else if scores[i] == scores[j] {
                    credit += 0.5;
                }
            }
        }
    }
    credit / pairs
}

fn criterion_4c() -> (bool, String) {
    let mut rng = stream(SEED, &[4, 3]);
    let mut mismatches = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=12);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64 * 0.25).collect();
        if eval::roc_auc(&scores, &labels).unwrap() != pairwise_auc(&scores, &labels) {
            mismatches += 1;
        }
    }
    (mismatches == 0, format!("roc mismatches {mismatches}/200"))
}

fn criterion_4() -> Outcome {
    let parts = [criterion_4a(), criterion_4b(), criterion_4c()];
    let pass = parts.iter().all(|p| p.0);
    let detail = parts.iter().map(|p| p.1.as_str()).collect::<Vec<_>>().join("; ");
    outcome("C4 oracle equivalence", pass, detail)
}

/// Direct evaluation of the intermediate score from the raw percentiles.
fn score_oracle(taus: &[f64], b: f64, scale: bool) -> f64 {
    let nq = taus.len() - 1;
    let widths: Vec<f64> = taus.windows(2).map(|w| w[1] - w[0]).collect();
    let max_w = widths.iter().cloned().fold(0.0, f64::max);
    let iqr = (taus[3 * nq / 4] - taus[nq / 4]).max(1e-6);
    if b < taus[0] {
        if scale {
            (1.0 + (taus[0] - b) / iqr) * max_w
        } else {
            max_w
        }
    } else if b > taus[nq] {
        if scale {
            (1.0 + (b - taus[nq]) / iqr) * max_w
        } else {
            max_w
        }
    } else {
        let i = (0..=nq).filter(|&i| taus[i] <= b).max().unwrap().min(nq - 1);
        widths[i]
    }
}

fn criterion_5() -> Outcome {
    let mut rng = stream(SEED, &[5]);
    let mut branch_mismatch = 0;
    let mut clip_violations = 0;
    let mut worst_mean: f64 = 0.0;
    for _ in 0..1000 {
        let nq = 4 * rng.random_range(1..=25);
        let mut t = rng.random_range(-1.0..1.0);
        let taus: Vec<f64> = (0..=nq)
            .map(|_| {
                let v = t;
                if !rng.random_bool(0.2) {
                    t += rng.random::<f64>() * 0.05;
                }
                v
            })
            .collect();
        let p = PercentileProfile::new(taus.clone(), None).unwrap();
        let eta = rng.random_range(0.5..20.0);
        let n_feat = rng.random_range(1..6);
        let mut values = Vec::new();
        for _ in 0..n_feat {
            let b = match rng.random_range(0..4) {
                0 => taus[rng.random_range(0..=nq)],
                _ => rng.random_range(taus[0] - 0.5..taus[nq] + 0.5),
            };
            values.push(b);
            for scale in [true, false] {
                if intermediate_score(&p, b, scale) != score_oracle(&taus, b, scale) {
                    branch_mismatch += 1;
                }
                let rule = ScoreRule {
                    eta: Some(eta),
                    scale_outside: scale,
                };
                let s = rule.partial(&p, b);
                if !(0.0..=eta / 100.0).contains(&s) {
                    clip_violations += 1;
                }
            }
        }
        let obj = ObjectProfiles {
            index: 0,
            reference_group: ReferenceGroup {
                center: 0,
                members: vec![1],
            },
            profiles: vec![p; n_feat],
            values,
        };
        let report = obj.report(&ScoreRule {
            eta: Some(eta),
            scale_outside: true,
        });
        let mean = report.partial_scores.iter().sum::<f64>() / n_feat as f64;
        worst_mean = worst_mean.max((report.final_score - mean).abs());
    }

    let mut worst_sum: f64 = 0.0;
    for f in 0..100 {
        let forest = random_forest(&mut rng, 1000 + f);
        let dim = forest.predictors().dim();
        let u: Vec<f64> = (0..dim).map(|_| rng.random_range(-0.5..2.5)).collect();
        worst_sum = worst_sum.max((forest.leaf_weights(&u).sum() - 1.0).abs());
    }

    let pass = branch_mismatch == 0 && clip_violations == 0 && worst_mean <= C5_MEAN_TOL && worst_sum <= C5_WEIGHT_SUM_TOL;
    outcome(
        "C5 score contract",
        pass,
        format!(
            "branch mismatches {branch_mismatch}, clip violations {clip_violations}, \
             max |final-mean| {worst_mean:.1e}, max |sum w - 1| {worst_sum:.1e}"
        ),
    )
}

fn criterion_7() -> Outcome {
    let ks = [25, 250, 500];
    let rows = eval::sweep_k(&DataSource::Synthetic(s1_spec(1000)), &defaults(), &trial_config(), &ks).expect("sweep");
    let roc: Vec<f64> = rows.iter().map(|r| r.result.roc_auc.mean).collect();
    let pass = roc[2] >= roc[0] && (roc[1] - roc[2]).abs() <= C7_MAX_PLATEAU_GAP;
    outcome(
        "C7 k-sensitivity (N=1000)",
        pass,
        format!("ROC k=25 {:.4}, k=250 {:.4}, k=500 {:.4}", roc[0], roc[1], roc[2]),
    )
}

fn criterion_8() -> Outcome {
    let params = QcadParams {
        k: Some(C8_FIXED_K),
        ..defaults()
    };
    let mut times = Vec::new();
    for n in [500, 1000, 2000] {
        let ds = qcad::synth::make_synthetic(&s1_spec(n)).unwrap();
        let start = Instant::now();
        score::detect(&ds, &params).unwrap();
        times.push(start.elapsed().as_secs_f64());
    }
    let ratio = times[2] / times[0];
    outcome(
        "C8 runtime scaling",
        ratio <= C8_MAX_RATIO,
        format!(
            "k={C8_FIXED_K}: t(500) {:.2}s t(1000) {:.2}s t(2000) {:.2}s, ratio {ratio:.2}",
            times[0], times[1], times[2]
        ),
    )
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let path = |name: &str| d.join(name).to_str().unwrap().to_string();
    let synth = ["qcad", "synth", "--n", "300", "--seed", "9", "--out-dir", &path(""), "--name", "det"];
    assert_eq!(qcad::cli::run(synth), 0);
    let detect = |threads: &str, out: &str| {
        let args = [
            "qcad", "--threads", threads, "detect", "--data", &path("det.csv"), "--schema", &path("det.schema"),
            "--seed", "5", "--out", &path(out), "--show", "0",
        ];
        assert_eq!(qcad::cli::run(args), 0);
        std::fs::read(d.join(out)).unwrap()
    };
    let a = detect("1", "a.jsonl");
    let b = detect("1", "b.jsonl");
    let c = detect("3", "c.jsonl");
    let pass = a == b && a == c && !a.is_empty();
    outcome(
        "C9 determinism",
        pass,
        format!("repeat identical: {}, 1 vs 3 threads identical: {}", a == b, a == c),
    )
}

fn main() {
    let mut results = Vec::new();
    let mut report = |o: Outcome| {
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
        results.push(o.pass);
    };
    report(criterion_3());
    report(criterion_4());
    report(criterion_5());
    report(criterion_9());
    report(criterion_8());
    for o in criteria_1_and_6() {
        report(o);
    }
    report(criterion_2());
    report(criterion_7());
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

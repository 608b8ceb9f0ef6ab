//! Loads a CSV with a schema, scores every object and prints the most
//! anomalous ones with their per-feature scores.
//!
//! Run with `cargo run --release --example detect_csv -- DATA.csv DATA.schema`.
//! Without arguments a small synthetic dataset is generated first.

use std::env;

use qcad::dataset::{Dataset, FeatureSchema};
use qcad::eval::ranking;
use qcad::score::{detect, final_scores, QcadParams};
use qcad::synth::{inject_anomalies, make_synthetic, Scheme, SchemeSpec};

fn main() -> qcad::Result<()> {
    let args: Vec<String> = env::args().skip(1).collect();
    let ds = match args.as_slice() {
        [data, schema] => {
            let schema = FeatureSchema::load(schema)?;
            Dataset::load_csv(data, &schema)?.minmax_normalize().0
        }
        _ => {
            let clean = make_synthetic(&SchemeSpec::new(Scheme::S1, 3, 1, 3, 400, 2))?;
            inject_anomalies(&clean, 10, 3)?.0
        }
    };

    let reports = detect(&ds, &QcadParams::default())?;
    let names: Vec<&str> = ds.schema().behavioral_features().map(|f| f.name.as_str()).collect();
    let labels = ds.labels();
    for &i in ranking(&final_scores(&reports)).iter().take(10) {
        let r = &reports[i];
        let partial: Vec<String> = names
            .iter()
            .zip(&r.partial_scores)
            .map(|(n, s)| format!("{n}={:.1}", s * 100.0))
            .collect();
        let truth = match labels {
            Some(l) if l[i] => " (injected)",
            _ => "",
        };
        println!("{i:>5}  {:>6.2}  {}{truth}", r.final_score * 100.0, partial.join(" "));
    }
    Ok(())
}

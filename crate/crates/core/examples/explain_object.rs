//! Explains the top-scored object: ranked features, a context summary of
//! its reference group, and one beanplot SVG per behavioral feature.
//!
//! Run with `cargo run --release --example explain_object -- OUT_DIR`.

use std::{env, fs, path::PathBuf};

use qcad::explain::{explain, render_beanplot};
use qcad::eval::ranking;
use qcad::gower::distance_matrix;
use qcad::score::{final_scores, QcadParams, Scorer};
use qcad::synth::{inject_anomalies, make_synthetic, Scheme, SchemeSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = env::args().nth(1).unwrap_or_else(|| "beanplots".into()).into();
    let clean = make_synthetic(&SchemeSpec::new(Scheme::S2, 4, 1, 3, 300, 5))?;
    let (ds, _) = inject_anomalies(&clean, 8, 6)?;

    let m = distance_matrix(&ds);
    let scorer = Scorer::new(&ds, &m, QcadParams::default())?;
    let profiles = scorer.all_profiles()?;
    let rule = QcadParams::default().rule;
    let reports: Vec<_> = profiles.iter().map(|p| p.report(&rule)).collect();
    let top = ranking(&final_scores(&reports))[0];

    let e = explain(&reports[top], &ds, 2)?;
    println!("{}", e.to_json()?);

    fs::create_dir_all(&out)?;
    for (q, f) in ds.schema().behavioral_features().enumerate() {
        let svg = render_beanplot(&profiles[top].profiles[q], profiles[top].values[q], &f.name);
        let path = out.join(format!("object_{top}_{}.svg", f.name));
        fs::write(&path, svg)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

//! Effect of the clipping constant and of out-of-support scaling.
//!
//! Run with `cargo run --release --example ablation_sweep`.

use qcad::eval::{format_table, sweep_eta, sweep_k, sweep_scaling, DataSource, TrialConfig};
use qcad::score::QcadParams;
use qcad::synth::{Scheme, SchemeSpec};

fn main() -> qcad::Result<()> {
    let source = DataSource::Synthetic(SchemeSpec::new(Scheme::S1, 5, 2, 5, 600, 4));
    let params = QcadParams::default();
    let config = TrialConfig {
        trials: 2,
        ..TrialConfig::default()
    };

    let mut rows = sweep_eta(&source, &params, &config, &[Some(1.0), Some(3.0), Some(10.0), None])?;
    rows.extend(sweep_scaling(&source, &params, &config)?);
    rows.extend(sweep_k(&source, &params, &config, &[25, 100, 300])?);
    print!("{}", format_table(&rows));
    Ok(())
}

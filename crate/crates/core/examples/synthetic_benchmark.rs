//! Repeated injection trials on every generation scheme.
//!
//! Run with `cargo run --release --example synthetic_benchmark -- [N] [TRIALS]`.

use std::env;

use qcad::eval::{format_table, run_trials, DataSource, SweepRow, TrialConfig};
use qcad::score::QcadParams;
use qcad::synth::{Scheme, SchemeSpec};

fn main() -> qcad::Result<()> {
    let mut args = env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let n = args.next().unwrap_or(500);
    let trials = args.next().unwrap_or(2);

    let config = TrialConfig {
        trials,
        ..TrialConfig::default()
    };
    let mut rows = Vec::new();
    for scheme in Scheme::ALL {
        let spec = SchemeSpec::new(scheme, 5, 2, 5, n, 1);
        let result = run_trials(&DataSource::Synthetic(spec), &QcadParams::default(), &config)?;
        rows.push(SweepRow {
            config: scheme.to_string(),
            result,
        });
    }
    print!("{}", format_table(&rows));
    Ok(())
}

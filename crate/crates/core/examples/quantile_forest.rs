//! Fits a quantile regression forest to heteroscedastic data and prints
//! conditional quartiles at a few query points.
//!
//! Run with `cargo run --example quantile_forest`.

use qcad::qrf::{fit_forest, ForestParams, Predictors};
use qcad::rng::stream;
use rand::Rng;

fn main() -> qcad::Result<()> {
    let mut rng = stream(1, &[]);
    let n = 2000;
    let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    // spread grows with x
    let y: Vec<f64> = x.iter().map(|&v| v + v * (rng.random::<f64>() - 0.5)).collect();

    let params = ForestParams {
        n_trees: 50,
        min_samples_split: 100,
        ..ForestParams::default()
    };
    let forest = fit_forest(Predictors::new(x, 1)?, y, &params, 7)?;

    println!("{:>5}  {:>8}  {:>8}  {:>8}", "x", "q25", "median", "q75");
    for u in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let q = forest.conditional_quantiles(&[u], &[0.25, 0.5, 0.75]);
        println!("{u:>5.1}  {:>8.3}  {:>8.3}  {:>8.3}", q[0], q[1], q[2]);
    }
    Ok(())
}

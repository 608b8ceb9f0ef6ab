//! Ranking metrics on a hand-made score vector.
//!
//! Run with `cargo run --example metrics`.

use qcad::eval::{evaluate, pr_auc, precision_at_n, roc_auc};

fn main() -> qcad::Result<()> {
    let scores = [0.9, 0.8, 0.8, 0.4, 0.35, 0.3, 0.1, 0.05];
    let labels = [true, false, true, false, true, false, false, false];
    println!("ROC AUC {:.4}", roc_auc(&scores, &labels)?);
    println!("PRC AUC {:.4}", pr_auc(&scores, &labels)?);
    println!("P@3     {:.4}", precision_at_n(&scores, &labels, 3)?);
    println!("{:?}", evaluate(&scores, &labels)?);
    Ok(())
}

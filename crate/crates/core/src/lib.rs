//! Contextual anomaly detection for mixed-type tabular data.
//!
//! Each record is split into contextual features (which decide what the
//! record should be compared with) and numeric behavioral features (on which
//! deviation is measured). Scoring runs in three steps:
//!
//! 1. [`gower`]: Gower distances on the contextual features give every
//!    object a reference group of its `k` nearest neighbours.
//! 2. [`score`]: per behavioral feature, a quantile regression forest
//!    ([`qrf`]) fitted on the reference group estimates the object's
//!    conditional percentiles; the width of the percentile interval the
//!    actual value falls in (extrapolated outside the support, clipped) is
//!    the partial score, and the final score is their mean.
//! 3. [`explain`]: partial scores are ranked and drawn as anomaly
//!    beanplots.
//!
//! [`synth`] generates benchmark data with injected anomalies and [`eval`]
//! runs repeated trials with ROC AUC, average precision and P@n.
//!
//! ```no_run
//! use qcad::{synth, score};
//!
//! let spec = synth::SchemeSpec::new(synth::Scheme::S1, 5, 2, 5, 500, 7);
//! let clean = synth::make_synthetic(&spec).unwrap();
//! let (data, _record) = synth::inject_anomalies(&clean, 12, 1).unwrap();
//! let reports = score::detect(&data, &score::QcadParams::default()).unwrap();
//! println!("object 0 scores {}", reports[0].final_score);
//! ```

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod gower;
pub mod qrf;
pub mod rng;
pub mod score;
pub mod synth;

pub use dataset::{Dataset, FeatureSchema};
pub use error::{Error, Result};
pub use score::{detect, AnomalyReport, QcadParams};

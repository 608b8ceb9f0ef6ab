//! Score explanations: ranked partial scores, reference group summaries and
//! anomaly beanplots.

use std::fmt::Write as _;

use serde::Serialize;

use crate::dataset::{min_max, Column, Dataset};
use crate::error::{Error, Result};
use crate::score::{AnomalyReport, PercentileProfile};

/// Numeric contextual features are summarized with at most this many bins.
pub const HISTOGRAM_BINS: usize = 10;
/// Floor on interval widths when turning them into densities.
pub const WIDTH_FLOOR: f64 = 1e-9;

pub const CANVAS_WIDTH: f64 = 400.0;
pub const CANVAS_HEIGHT: f64 = 600.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedFeature {
    /// Position among the behavioral features.
    pub feature: usize,
    pub name: String,
    pub score: f64,
}

/// Distribution of one contextual feature over a reference group.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GroupHistogram {
    Numeric {
        name: String,
        /// `bins + 1` edges.
        edges: Vec<f64>,
        counts: Vec<usize>,
        value: f64,
    },
    Categorical {
        name: String,
        labels: Vec<String>,
        counts: Vec<usize>,
        value: String,
    },
}

impl GroupHistogram {
    pub fn name(&self) -> &str {
        match self {
            GroupHistogram::Numeric { name, .. } | GroupHistogram::Categorical { name, .. } => name,
        }
    }

    pub fn counts(&self) -> &[usize] {
        match self {
            GroupHistogram::Numeric { counts, .. } | GroupHistogram::Categorical { counts, .. } => counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Explanation {
    pub index: usize,
    pub final_score: f64,
    pub reference_group: Vec<usize>,
    pub top_features: Vec<RankedFeature>,
    pub group_profile: Vec<GroupHistogram>,
}

impl Explanation {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Behavioral features by descending partial score, ties by feature index,
/// truncated to `h`.
pub fn rank_features(partial_scores: &[f64], h: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..partial_scores.len()).collect();
    order.sort_by(|&a, &b| partial_scores[b].total_cmp(&partial_scores[a]).then(a.cmp(&b)));
    order.truncate(h);
    order
}

fn numeric_histogram(name: &str, values: &[f64], value: f64) -> GroupHistogram {
    let (lo, hi) = min_max(values);
    let bins = if hi > lo { HISTOGRAM_BINS } else { 1 };
    let step = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|b| lo + step * b as f64).collect();
    edges.push(hi);
    let mut counts = vec![0; bins];
    for &v in values {
        let b = if hi > lo {
            (((v - lo) / (hi - lo)) * bins as f64).floor() as usize
        } else {
            0
        };
        counts[b.min(bins - 1)] += 1;
    }
    GroupHistogram::Numeric {
        name: name.to_string(),
        edges,
        counts,
        value,
    }
}

/// Histograms of every contextual feature over `members`, with the value of
/// object `index`.
pub fn group_profile(ds: &Dataset, index: usize, members: &[usize]) -> Vec<GroupHistogram> {
    ds.schema()
        .contextual_features()
        .enumerate()
        .map(|(p, feat)| match ds.contextual_column(p) {
            Column::Numeric(v) => {
                let values: Vec<f64> = members.iter().map(|&j| v[j]).collect();
                numeric_histogram(&feat.name, &values, v[index])
            }
            Column::Categorical { codes, labels } => {
                let mut counts = vec![0; labels.len()];
                for &j in members {
                    counts[codes[j] as usize] += 1;
                }
                GroupHistogram::Categorical {
                    name: feat.name.clone(),
                    labels: labels.clone(),
                    counts,
                    value: labels[codes[index] as usize].clone(),
                }
            }
        })
        .collect()
}

/// Explains one scored object: its top-`h` behavioral features and how its
/// reference group is distributed over the contextual features.
pub fn explain(entry: &AnomalyReport, ds: &Dataset, h: usize) -> Result<Explanation> {
    if h == 0 {
        return Err(Error::param("h must be at least 1"));
    }
    if entry.index >= ds.len() || entry.reference_group.members.iter().any(|&j| j >= ds.len()) {
        return Err(Error::param(format!("report for object {} does not match the dataset", entry.index)));
    }
    if entry.partial_scores.len() != ds.n_behavioral() {
        return Err(Error::param(format!(
            "{} partial scores for {} behavioral features",
            entry.partial_scores.len(),
            ds.n_behavioral()
        )));
    }
    let names: Vec<&str> = ds.schema().behavioral_features().map(|f| f.name.as_str()).collect();
    let top_features = rank_features(&entry.partial_scores, h)
        .into_iter()
        .map(|q| RankedFeature {
            feature: q,
            name: names[q].to_string(),
            score: entry.partial_scores[q],
        })
        .collect();
    Ok(Explanation {
        index: entry.index,
        final_score: entry.final_score,
        reference_group: entry.reference_group.members.clone(),
        top_features,
        group_profile: group_profile(ds, entry.index, &entry.reference_group.members),
    })
}

/// Half-width of the beanplot silhouette per percentile interval, in pixels.
/// Density over interval `i` is `(1 / nq) / max(w_i, WIDTH_FLOOR)`; the
/// densest interval spans `max_half_width`.
pub fn silhouette_half_widths(p: &PercentileProfile, max_half_width: f64) -> Vec<f64> {
    let mass = 1.0 / p.n_intervals() as f64;
    let density: Vec<f64> = p.widths().iter().map(|&w| mass / w.max(WIDTH_FLOOR)).collect();
    let top = density.iter().copied().fold(0.0, f64::max);
    density.iter().map(|d| d / top * max_half_width).collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Vertical value range of a beanplot: the profile and the actual value,
/// padded by 5%.
pub fn beanplot_range(p: &PercentileProfile, actual: f64) -> (f64, f64) {
    let lo = p.lowest().min(actual);
    let hi = p.highest().max(actual);
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

struct Frame {
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn y(&self, v: f64) -> f64 {
        self.top + (self.hi - v) / (self.hi - self.lo) * (self.bottom - self.top)
    }

    fn center(&self) -> f64 {
        (self.left + self.right) / 2.0
    }
}

/// Renders an anomaly beanplot as a standalone SVG document.
///
/// Drawn back to front: the density silhouette (red), the quartile box
/// (cyan) with its median, one short blue tick per percentile, and a
/// full-width black line at the actual value.
pub fn render_beanplot(p: &PercentileProfile, actual: f64, feature: &str) -> String {
    let (lo, hi) = beanplot_range(p, actual);
    let frame = Frame {
        left: 60.0,
        right: CANVAS_WIDTH - 20.0,
        top: 40.0,
        bottom: CANVAS_HEIGHT - 30.0,
        lo,
        hi,
    };
    let cx = frame.center();
    let half = silhouette_half_widths(p, (frame.right - frame.left) / 2.0);
    let taus = p.taus();

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = CANVAS_WIDTH,
        h = CANVAS_HEIGHT
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{CANVAS_WIDTH}" height="{CANVAS_HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        CANVAS_WIDTH / 2.0,
        escape(feature)
    );

    // axis
    let _ = writeln!(
        s,
        r#"<line class="axis" x1="{l:.2}" y1="{t:.2}" x2="{l:.2}" y2="{b:.2}" stroke="dimgray" stroke-width="1"/>"#,
        l = frame.left,
        t = frame.top,
        b = frame.bottom
    );
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = frame.y(v);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="dimgray"/><text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{:.3}</text>"#,
            frame.left - 5.0,
            frame.left,
            frame.left - 8.0,
            y + 4.0,
            v
        );
    }

    // silhouette: up the right side, down the left side
    let mut points = Vec::with_capacity(4 * half.len());
    for (i, &hw) in half.iter().enumerate() {
        points.push((cx + hw, frame.y(taus[i])));
        points.push((cx + hw, frame.y(taus[i + 1])));
    }
    for (i, &hw) in half.iter().enumerate().rev() {
        points.push((cx - hw, frame.y(taus[i + 1])));
        points.push((cx - hw, frame.y(taus[i])));
    }
    let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(
        s,
        r#"<polygon class="density" points="{}" fill="red" fill-opacity="0.45" stroke="red" stroke-width="0.5"/>"#,
        pts.join(" ")
    );

    // quartile box and median
    let (q25, q75) = p.quartiles();
    let box_half = 20.0;
    let _ = writeln!(
        s,
        r#"<rect class="quartiles" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="cyan" fill-opacity="0.6" stroke="darkcyan"/>"#,
        cx - box_half,
        frame.y(q75),
        2.0 * box_half,
        frame.y(q25) - frame.y(q75)
    );
    let my = frame.y(p.median());
    let _ = writeln!(
        s,
        r#"<line class="median" x1="{:.2}" y1="{my:.2}" x2="{:.2}" y2="{my:.2}" stroke="darkcyan" stroke-width="2"/>"#,
        cx - box_half,
        cx + box_half
    );

    // percentile ticks
    let _ = writeln!(s, r#"<g class="percentiles" stroke="blue" stroke-width="1">"#);
    for &t in taus {
        let y = frame.y(t);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}"/>"#, cx - 12.0, cx + 12.0);
    }
    let _ = writeln!(s, "</g>");

    let ay = frame.y(actual);
    let _ = writeln!(
        s,
        r#"<line class="actual" x1="{:.2}" y1="{ay:.2}" x2="{:.2}" y2="{ay:.2}" stroke="black" stroke-width="2"/>"#,
        frame.left,
        frame.right
    );
    let _ = writeln!(s, "</svg>");
    s
}

/// Bar chart of a reference-group histogram with the object's own value
/// marked.
pub fn render_histogram(hist: &GroupHistogram) -> String {
    let (w, h) = (CANVAS_WIDTH, 300.0);
    let (left, right, top, bottom) = (40.0, w - 20.0, 40.0, h - 40.0);
    let counts = hist.counts();
    let max_count = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let bar_w = (right - left) / counts.len().max(1) as f64;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        w / 2.0,
        escape(hist.name())
    );
    let highlighted = match hist {
        GroupHistogram::Categorical { labels, value, .. } => labels.iter().position(|l| l == value),
        GroupHistogram::Numeric { .. } => None,
    };
    for (i, &c) in counts.iter().enumerate() {
        let bh = c as f64 / max_count * (bottom - top);
        let fill = if highlighted == Some(i) { "orange" } else { "steelblue" };
        let _ = writeln!(
            s,
            r#"<rect class="bar" x="{:.2}" y="{:.2}" width="{:.2}" height="{bh:.2}" fill="{fill}" stroke="white"/>"#,
            left + bar_w * i as f64,
            bottom - bh,
            bar_w
        );
    }
    match hist {
        GroupHistogram::Numeric { edges, value, .. } => {
            let (lo, hi) = (edges[0], edges[edges.len() - 1]);
            let _ = writeln!(
                s,
                r#"<text x="{left:.2}" y="{:.2}" font-family="sans-serif" font-size="11">{lo:.3}</text><text x="{right:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{hi:.3}</text>"#,
                bottom + 16.0,
                bottom + 16.0
            );
            let frac = if hi > lo { ((value - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
            let x = left + frac * (right - left);
            let _ = writeln!(
                s,
                r#"<line class="actual" x1="{x:.2}" y1="{top:.2}" x2="{x:.2}" y2="{bottom:.2}" stroke="black" stroke-width="2"/>"#
            );
        }
        GroupHistogram::Categorical { labels, .. } => {
            for (i, l) in labels.iter().enumerate() {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
                    left + bar_w * (i as f64 + 0.5),
                    bottom + 14.0,
                    escape(l)
                );
            }
        }
    }
    let _ = writeln!(s, "</svg>");
    s
}

//! Gower distance over the contextual features and k-nearest reference
//! groups.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{min_max, Column, Dataset};
use crate::error::{Error, Result};

/// How one contextual feature enters the distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureRange {
    /// `max - min` of a numeric feature over the whole dataset.
    Numeric(f64),
    Categorical,
}

/// Per-contextual-feature ranges computed once over the full dataset.
pub fn contextual_ranges(ds: &Dataset) -> Vec<FeatureRange> {
    (0..ds.n_contextual())
        .map(|p| match ds.contextual_column(p) {
            Column::Numeric(v) => {
                let (lo, hi) = min_max(v);
                FeatureRange::Numeric(hi - lo)
            }
            Column::Categorical { .. } => FeatureRange::Categorical,
        })
        .collect()
}

/// Gower distance between two contextual rows.
///
/// A numeric feature with zero range counts as fully similar.
pub fn gower(a: &[f64], b: &[f64], ranges: &[FeatureRange]) -> f64 {
    let mut sim = 0.0;
    for ((&x, &y), range) in a.iter().zip(b).zip(ranges) {
        sim += match *range {
            FeatureRange::Numeric(r) if r > 0.0 => 1.0 - (x - y).abs() / r,
            FeatureRange::Numeric(_) => 1.0,
            FeatureRange::Categorical => {
                if x == y {
                    1.0
                } else {
                    0.0
                }
            }
        };
    }
    1.0 - sim / ranges.len() as f64
}

/// Gower distance between objects `i` and `j` of `ds`.
pub fn gower_distance(i: usize, j: usize, ds: &Dataset, ranges: &[FeatureRange]) -> f64 {
    gower(&ds.contextual_row(i), &ds.contextual_row(j), ranges)
}

/// Dense symmetric matrix of pairwise contextual distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix from row-major values, checking shape and symmetry.
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Format(format!("{} values for a {n}x{n} matrix", values.len())));
        }
        for i in 0..n {
            if values[i * n + i] != 0.0 {
                return Err(Error::Format(format!("non-zero diagonal at {i}")));
            }
            for j in 0..i {
                let v = values[i * n + j];
                if v != values[j * n + i] || !(0.0..=1.0).contains(&v) {
                    return Err(Error::Format(format!("invalid entry at ({i}, {j})")));
                }
            }
        }
        Ok(DistanceMatrix { n, values })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    /// Writes the cache format: `n` as little-endian u64, then `n*n`
    /// little-endian f64 values in row-major order.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&(self.n as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 8];
        r.read_exact(&mut header)
            .map_err(|e| Error::Format(format!("distance cache header: {e}")))?;
        let n = u64::from_le_bytes(header) as usize;
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| Error::Format(format!("distance cache body: {e}")))?;
        if Some(buf.len()) != n.checked_mul(n).and_then(|c| c.checked_mul(8)) {
            return Err(Error::Format(format!(
                "distance cache holds {} bytes, expected {} for n={n}",
                buf.len(),
                n * n * 8
            )));
        }
        let values = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_values(n, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}

/// All pairwise Gower distances of `ds` on its contextual features. Rows
/// are computed in parallel; only the lower triangle is evaluated and
/// mirrored.
pub fn distance_matrix(ds: &Dataset) -> DistanceMatrix {
    let n = ds.len();
    let p = ds.n_contextual();
    let ranges = contextual_ranges(ds);
    let ctx = ds.contextual_matrix();
    let lower: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = &ctx[i * p..(i + 1) * p];
            (0..i).map(|j| gower(a, &ctx[j * p..(j + 1) * p], &ranges)).collect()
        })
        .collect();
    let mut values = vec![0.0; n * n];
    for (i, row) in lower.iter().enumerate() {
        for (j, &d) in row.iter().enumerate() {
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    DistanceMatrix { n, values }
}

/// The `k` nearest neighbours of one object, nearest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceGroup {
    pub center: usize,
    pub members: Vec<usize>,
}

/// Selects the `k` objects closest to `i`, excluding `i` itself. Equal
/// distances are ordered by ascending index.
pub fn reference_group(m: &DistanceMatrix, i: usize, k: usize) -> Result<ReferenceGroup> {
    let n = m.n();
    if i >= n {
        return Err(Error::param(format!("object index {i} out of range for {n} objects")));
    }
    if k == 0 || k >= n {
        return Err(Error::param(format!("k must lie in 1..={}, got {k}", n.saturating_sub(1))));
    }
    let row = m.row(i);
    let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let by_distance = |a: &usize, b: &usize| row[*a].total_cmp(&row[*b]).then(a.cmp(b));
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, by_distance);
        order.truncate(k);
    }
    order.sort_unstable_by(by_distance);
    Ok(ReferenceGroup {
        center: i,
        members: order,
    })
}

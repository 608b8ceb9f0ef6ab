//! Mixed-type tabular data: schema, loading, label encoding and min-max
//! normalization of behavioral features.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Name of the optional ground-truth column in CSV files.
pub const LABEL_COLUMN: &str = "__anomaly__";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Contextual,
    Behavioral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Numeric,
    Categorical,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Contextual => "contextual",
            Role::Behavioral => "behavioral",
        })
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Numeric => "numeric",
            Kind::Categorical => "categorical",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feature {
    pub name: String,
    pub role: Role,
    pub kind: Kind,
}

impl Feature {
    pub fn new(name: impl Into<String>, role: Role, kind: Kind) -> Self {
        Feature {
            name: name.into(),
            role,
            kind,
        }
    }
}

/// Ordered feature declarations splitting the columns into a contextual
/// and a behavioral set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    features: Vec<Feature>,
    contextual: Vec<usize>,
    behavioral: Vec<usize>,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, f) in features.iter().enumerate() {
            if f.name.is_empty() {
                return Err(Error::Schema(format!("feature {i} has an empty name")));
            }
            if f.name == LABEL_COLUMN {
                return Err(Error::Schema(format!("`{LABEL_COLUMN}` is reserved")));
            }
            if seen.insert(f.name.as_str(), i).is_some() {
                return Err(Error::Schema(format!("duplicate feature name `{}`", f.name)));
            }
            if f.role == Role::Behavioral && f.kind != Kind::Numeric {
                return Err(Error::Schema(format!(
                    "behavioral feature `{}` must be numeric",
                    f.name
                )));
            }
        }
        let contextual: Vec<usize> = (0..features.len())
            .filter(|&i| features[i].role == Role::Contextual)
            .collect();
        let behavioral: Vec<usize> = (0..features.len())
            .filter(|&i| features[i].role == Role::Behavioral)
            .collect();
        if contextual.is_empty() {
            return Err(Error::Schema("at least one contextual feature is required".into()));
        }
        if behavioral.is_empty() {
            return Err(Error::Schema("at least one behavioral feature is required".into()));
        }
        Ok(FeatureSchema {
            features,
            contextual,
            behavioral,
        })
    }

    /// Parses the `name,role,kind` line format. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut features = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(Error::Schema(format!(
                    "line {}: expected `name,role,kind`, got `{line}`",
                    lineno + 1
                )));
            }
            let role = match parts[1].to_ascii_lowercase().as_str() {
                "contextual" => Role::Contextual,
                "behavioral" | "behavioural" => Role::Behavioral,
                other => {
                    return Err(Error::Schema(format!(
                        "line {}: unknown role `{other}`",
                        lineno + 1
                    )))
                }
            };
            let kind = match parts[2].to_ascii_lowercase().as_str() {
                "numeric" => Kind::Numeric,
                "categorical" => Kind::Categorical,
                other => {
                    return Err(Error::Schema(format!(
                        "line {}: unknown kind `{other}`",
                        lineno + 1
                    )))
                }
            };
            features.push(Feature::new(parts[0], role, kind));
        }
        Self::new(features)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.features
            .iter()
            .map(|f| format!("{},{},{}\n", f.name, f.role, f.kind))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    /// Schema positions of the contextual features, in order.
    pub fn contextual(&self) -> &[usize] {
        &self.contextual
    }

    /// Schema positions of the behavioral features, in order.
    pub fn behavioral(&self) -> &[usize] {
        &self.behavioral
    }

    pub fn contextual_features(&self) -> impl Iterator<Item = &Feature> {
        self.contextual.iter().map(|&i| &self.features[i])
    }

    pub fn behavioral_features(&self) -> impl Iterator<Item = &Feature> {
        self.behavioral.iter().map(|&i| &self.features[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<f64>),
    /// Integer codes `0..labels.len()` plus the code → label map.
    Categorical { codes: Vec<u32>, labels: Vec<String> },
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Numeric view of one cell; categorical codes are returned as reals.
    pub fn value(&self, row: usize) -> f64 {
        match self {
            Column::Numeric(v) => v[row],
            Column::Categorical { codes, .. } => codes[row] as f64,
        }
    }

    fn kind(&self) -> Kind {
        match self {
            Column::Numeric(_) => Kind::Numeric,
            Column::Categorical { .. } => Kind::Categorical,
        }
    }

    fn cell_text(&self, row: usize) -> String {
        match self {
            Column::Numeric(v) => format!("{}", v[row]),
            Column::Categorical { codes, labels } => labels[codes[row] as usize].clone(),
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical { codes, labels } => Column::Categorical {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                labels: labels.clone(),
            },
        }
    }
}

/// Assigns integer codes to labels in order of first appearance.
pub fn label_encode<S: AsRef<str>>(raw: &[S]) -> (Vec<u32>, Vec<String>) {
    let mut index: HashMap<&str, u32> = HashMap::new();
    let mut labels = Vec::new();
    let codes = raw
        .iter()
        .map(|s| {
            let s = s.as_ref();
            *index.entry(s).or_insert_with(|| {
                labels.push(s.to_string());
                (labels.len() - 1) as u32
            })
        })
        .collect();
    (codes, labels)
}

/// Inverse of [`label_encode`].
pub fn label_decode(codes: &[u32], labels: &[String]) -> Vec<String> {
    codes.iter().map(|&c| labels[c as usize].clone()).collect()
}

/// Immutable column-oriented table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    columns: Vec<Column>,
    /// `(min, max)` per behavioral feature, recorded by the last normalization.
    norm_params: Option<Vec<(f64, f64)>>,
    labels: Option<Vec<bool>>,
    /// Stable row identifiers; survive permutation and injection.
    ids: Vec<u64>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, columns: Vec<Column>, labels: Option<Vec<bool>>) -> Result<Self> {
        if columns.len() != schema.features().len() {
            return Err(Error::Schema(format!(
                "{} columns supplied for {} features",
                columns.len(),
                schema.features().len()
            )));
        }
        let n = columns[0].len();
        if n == 0 {
            return Err(Error::Schema("dataset has no rows".into()));
        }
        for (col, feat) in columns.iter().zip(schema.features()) {
            if col.len() != n {
                return Err(Error::Schema(format!(
                    "column `{}` has {} rows, expected {n}",
                    feat.name,
                    col.len()
                )));
            }
            if col.kind() != feat.kind {
                return Err(Error::Schema(format!(
                    "column `{}` is {} but declared {}",
                    feat.name,
                    col.kind(),
                    feat.kind
                )));
            }
            if let Column::Categorical { codes, labels } = col {
                if codes.iter().any(|&c| c as usize >= labels.len()) {
                    return Err(Error::Schema(format!(
                        "column `{}` has a code without a label",
                        feat.name
                    )));
                }
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Schema(format!("{} labels for {n} rows", l.len())));
            }
        }
        Ok(Dataset {
            schema,
            columns,
            norm_params: None,
            labels,
            ids: (0..n as u64).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn n_contextual(&self) -> usize {
        self.schema.contextual().len()
    }

    pub fn n_behavioral(&self) -> usize {
        self.schema.behavioral().len()
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn norm_params(&self) -> Option<&[(f64, f64)]> {
        self.norm_params.as_deref()
    }

    /// The `p`-th contextual column.
    pub fn contextual_column(&self, p: usize) -> &Column {
        &self.columns[self.schema.contextual()[p]]
    }

    /// Values of the `q`-th behavioral feature.
    pub fn behavioral_column(&self, q: usize) -> &[f64] {
        match &self.columns[self.schema.behavioral()[q]] {
            Column::Numeric(v) => v,
            Column::Categorical { .. } => unreachable!("schema guarantees numeric behavioral columns"),
        }
    }

    /// Contextual values of all rows, row-major (`len() × n_contextual()`),
    /// with categorical codes as reals.
    pub fn contextual_matrix(&self) -> Vec<f64> {
        let p = self.n_contextual();
        let mut out = vec![0.0; self.len() * p];
        for j in 0..p {
            let col = self.contextual_column(j);
            for i in 0..self.len() {
                out[i * p + j] = col.value(i);
            }
        }
        out
    }

    pub fn contextual_row(&self, i: usize) -> Vec<f64> {
        (0..self.n_contextual())
            .map(|p| self.contextual_column(p).value(i))
            .collect()
    }

    /// Replaces the ground-truth labels.
    pub fn with_labels(mut self, labels: Vec<bool>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Schema(format!(
                "{} labels for {} rows",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Replaces the behavioral columns, leaving contextual data untouched.
    pub fn with_behavioral(mut self, behavioral: Vec<Vec<f64>>) -> Result<Self> {
        if behavioral.len() != self.n_behavioral() || behavioral.iter().any(|c| c.len() != self.len()) {
            return Err(Error::Schema("behavioral block has the wrong shape".into()));
        }
        for (q, values) in behavioral.into_iter().enumerate() {
            let idx = self.schema.behavioral()[q];
            self.columns[idx] = Column::Numeric(values);
        }
        Ok(self)
    }

    /// Row `perm[r]` of `self` becomes row `r` of the result. Identifiers
    /// and labels travel with their rows.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::param("not a permutation of the rows"));
        }
        Ok(Dataset {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(perm)).collect(),
            norm_params: self.norm_params.clone(),
            labels: self.labels.as_ref().map(|l| perm.iter().map(|&r| l[r]).collect()),
            ids: perm.iter().map(|&r| self.ids[r]).collect(),
        })
    }

    /// Min-max scales every behavioral column to `[0, 1]`.
    ///
    /// Constant columns are mapped to zeros; their names are returned as
    /// warnings.
    pub fn minmax_normalize(&self) -> (Dataset, Vec<String>) {
        let mut out = self.clone();
        let mut params = Vec::with_capacity(self.n_behavioral());
        let mut warnings = Vec::new();
        for q in 0..self.n_behavioral() {
            let values = self.behavioral_column(q);
            let (min, max) = min_max(values);
            let scaled = if max > min {
                let range = max - min;
                values.iter().map(|&x| (x - min) / range).collect()
            } else {
                let name = &self.schema.features()[self.schema.behavioral()[q]].name;
                log::warn!("behavioral feature `{name}` is constant; normalized to zeros");
                warnings.push(format!("behavioral feature `{name}` is constant ({min}); mapped to 0"));
                vec![0.0; values.len()]
            };
            out.columns[self.schema.behavioral()[q]] = Column::Numeric(scaled);
            params.push((min, max));
        }
        out.norm_params = Some(params);
        (out, warnings)
    }

    /// Maps normalized values of behavioral feature `q` back to raw units.
    pub fn denormalize(&self, q: usize, values: &[f64]) -> Option<Vec<f64>> {
        let (min, max) = *self.norm_params.as_ref()?.get(q)?;
        Some(values.iter().map(|&v| min + v * (max - min)).collect())
    }

    /// Reads a CSV file with a header row. Columns are matched to the schema
    /// by name; an optional `__anomaly__` column supplies labels.
    pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(BufReader::new(file), schema)
    }

    pub fn read_csv<R: BufRead>(reader: R, schema: &FeatureSchema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

        let mut position = Vec::with_capacity(schema.features().len());
        for f in schema.features() {
            match header.iter().position(|h| *h == f.name) {
                Some(p) => position.push(p),
                None => {
                    return Err(Error::Load {
                        row: 1,
                        column: f.name.clone(),
                        message: "missing column".into(),
                    })
                }
            }
        }
        let label_pos = header.iter().position(|h| h == LABEL_COLUMN);
        if let Some(extra) = header
            .iter()
            .find(|h| *h != LABEL_COLUMN && !schema.features().iter().any(|f| &f.name == *h))
        {
            return Err(Error::Load {
                row: 1,
                column: extra.clone(),
                message: "column not declared in schema".into(),
            });
        }

        let mut raw: Vec<Vec<String>> = vec![Vec::new(); schema.features().len()];
        let mut numeric: Vec<Vec<f64>> = vec![Vec::new(); schema.features().len()];
        let mut labels = label_pos.map(|_| Vec::new());

        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
            if record.len() != header.len() {
                return Err(Error::Load {
                    row: line,
                    column: String::new(),
                    message: format!("expected {} fields, found {}", header.len(), record.len()),
                });
            }
            for (j, f) in schema.features().iter().enumerate() {
                let cell = record[position[j]].trim();
                if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                    return Err(Error::Load {
                        row: line,
                        column: f.name.clone(),
                        message: "missing value".into(),
                    });
                }
                match f.kind {
                    Kind::Numeric => {
                        let v: f64 = cell.parse().map_err(|_| Error::Load {
                            row: line,
                            column: f.name.clone(),
                            message: format!("cannot parse `{cell}` as a number"),
                        })?;
                        if !v.is_finite() {
                            return Err(Error::Load {
                                row: line,
                                column: f.name.clone(),
                                message: format!("non-finite value `{cell}`"),
                            });
                        }
                        numeric[j].push(v);
                    }
                    Kind::Categorical => raw[j].push(cell.to_string()),
                }
            }
            if let (Some(p), Some(l)) = (label_pos, labels.as_mut()) {
                let flag = match record[p].trim() {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::Load {
                            row: line,
                            column: LABEL_COLUMN.into(),
                            message: format!("label must be 0 or 1, got `{other}`"),
                        })
                    }
                };
                l.push(flag);
            }
        }

        let columns = schema
            .features()
            .iter()
            .enumerate()
            .map(|(j, f)| match f.kind {
                Kind::Numeric => Column::Numeric(std::mem::take(&mut numeric[j])),
                Kind::Categorical => {
                    let (codes, labels) = label_encode(&raw[j]);
                    Column::Categorical { codes, labels }
                }
            })
            .collect::<Vec<_>>();
        if columns[0].is_empty() {
            return Err(Error::Load {
                row: 2,
                column: String::new(),
                message: "no data rows".into(),
            });
        }
        Dataset::new(schema.clone(), columns, labels)
    }

    /// Writes the canonical CSV form: schema-ordered header, labels last.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.schema.features().iter().map(|f| f.name.as_str()).collect();
        if self.labels.is_some() {
            header.push(LABEL_COLUMN);
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.columns.iter().map(|c| c.cell_text(i)).collect();
            if let Some(l) = &self.labels {
                row.push(if l[i] { "1" } else { "0" }.into());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub(crate) fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

//! Tabular data model: schema-driven CSV ingestion, preprocessing, group
//! partitioning, and seeded train/validation/test splitting.
//!
//! Preprocessing drops rows with missing cells, min-max normalizes numerical
//! columns to `[0, 1]`, one-hot encodes categoricals, and maps the group and
//! label columns to `{0, 1}`. The group column is kept out of the learner
//! feature matrix unless explicitly requested.

use std::collections::BTreeSet;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role of a column in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numerical,
    Categorical,
    Group,
    Label,
    Ignore,
}

/// Name and role of one input column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self {
            name: name.into(),
            kind,
        }
    }
}

/// Defines the binary group mapping: rows whose group-column value is in
/// `minority_values` map to the minority (1), all others to the majority (0).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub column: String,
    pub minority_values: BTreeSet<String>,
}

impl GroupSpec {
    pub fn new<S: Into<String>, I: IntoIterator<Item = S>>(column: S, minority: I) -> Self {
        Self {
            column: column.into(),
            minority_values: minority.into_iter().map(Into::into).collect(),
        }
    }
}

/// Ingestion options.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Append the 0/1 group indicator to the learner feature matrix.
    /// Off by default: models and routing stay group-blind.
    pub include_group_in_features: bool,
}

pub const MAJORITY: u8 = 0;
pub const MINORITY: u8 = 1;

/// Preprocessed tabular dataset. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Vec<ColumnSchema>,
    group_spec: GroupSpec,
    header: Vec<String>,
    raw_rows: Vec<Vec<String>>,
    numeric_names: Vec<String>,
    numeric: Vec<f64>, // row-major, n x m, normalized to [0,1]
    m: usize,
    encoded_names: Vec<String>,
    encoded: Vec<f64>, // row-major, n x p
    p: usize,
    labels: Vec<u8>,
    groups: Vec<u8>,
    weights: Vec<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Number of numerical attributes (width of the constraint space).
    pub fn num_numeric(&self) -> usize {
        self.m
    }

    /// Width of the learner feature matrix.
    pub fn feature_count(&self) -> usize {
        self.p
    }

    pub fn numeric_row(&self, i: usize) -> &[f64] {
        &self.numeric[i * self.m..(i + 1) * self.m]
    }

    pub fn encoded_row(&self, i: usize) -> &[f64] {
        &self.encoded[i * self.p..(i + 1) * self.p]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn group(&self, i: usize) -> u8 {
        self.groups[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn groups(&self) -> &[u8] {
        &self.groups
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn group_spec(&self) -> &GroupSpec {
        &self.group_spec
    }

    pub fn numeric_names(&self) -> &[String] {
        &self.numeric_names
    }

    pub fn encoded_names(&self) -> &[String] {
        &self.encoded_names
    }

    pub fn header(&self) -> &[String] {
        &self.header
    }

    pub fn raw_row(&self, i: usize) -> &[String] {
        &self.raw_rows[i]
    }
}

fn is_null(cell: &str) -> bool {
    cell.trim().is_empty()
}

fn validate_schema(schema: &[ColumnSchema], group_spec: &GroupSpec) -> Result<()> {
    let groups = schema
        .iter()
        .filter(|c| c.kind == ColumnKind::Group)
        .count();
    let labels = schema
        .iter()
        .filter(|c| c.kind == ColumnKind::Label)
        .count();
    let numericals = schema
        .iter()
        .filter(|c| c.kind == ColumnKind::Numerical)
        .count();
    if groups != 1 {
        return Err(Error::Schema(format!(
            "expected exactly one group column, found {groups}"
        )));
    }
    if labels != 1 {
        return Err(Error::Schema(format!(
            "expected exactly one label column, found {labels}"
        )));
    }
    if numericals < 2 {
        return Err(Error::Schema(format!(
            "need at least two numerical columns to derive constraints, found {numericals}"
        )));
    }
    let group_col = schema
        .iter()
        .find(|c| c.kind == ColumnKind::Group)
        .expect("checked above");
    if group_col.name != group_spec.column {
        return Err(Error::Schema(format!(
            "group spec names column {:?} but the schema's group column is {:?}",
            group_spec.column, group_col.name
        )));
    }
    let mut seen = BTreeSet::new();
    for col in schema {
        if !seen.insert(col.name.as_str()) {
            return Err(Error::Schema(format!("duplicate column {:?}", col.name)));
        }
    }
    Ok(())
}

/// Map two raw label values to {0, 1}. Numeric order when both values parse
/// as numbers, lexicographic otherwise; the greater value becomes 1. A single
/// distinct value becomes 1 only if it is literally "1".
fn label_mapping(distinct: &BTreeSet<String>) -> Vec<(String, u8)> {
    let mut vals: Vec<&String> = distinct.iter().collect();
    if vals.len() == 2 {
        let nums: Option<Vec<f64>> = vals.iter().map(|v| v.parse::<f64>().ok()).collect();
        if let Some(ns) = nums {
            if ns[0] > ns[1] {
                vals.swap(0, 1);
            }
        }
        vec![(vals[0].clone(), 0), (vals[1].clone(), 1)]
    } else {
        let v = vals[0];
        vec![(v.clone(), if v == "1" { 1 } else { 0 })]
    }
}

/// Build a dataset from already-parsed rows. `header` gives the column order
/// of `rows`; every schema column must appear in it and vice versa.
pub fn build(
    schema: &[ColumnSchema],
    group_spec: &GroupSpec,
    options: LoadOptions,
    header: &[String],
    rows: Vec<Vec<String>>,
) -> Result<Dataset> {
    validate_schema(schema, group_spec)?;
    for col in schema {
        if !header.contains(&col.name) {
            return Err(Error::Schema(format!(
                "column {:?} missing from the input header",
                col.name
            )));
        }
    }
    for name in header {
        if !schema.iter().any(|c| &c.name == name) {
            return Err(Error::Schema(format!(
                "input column {:?} is not covered by the schema (use kind=ignore to skip it)"
            , name)));
        }
    }
    let col_index = |name: &str| header.iter().position(|h| h == name).expect("checked");

    // Drop rows with a null cell in any non-ignored column.
    let active: Vec<usize> = schema
        .iter()
        .filter(|c| c.kind != ColumnKind::Ignore)
        .map(|c| col_index(&c.name))
        .collect();
    let kept: Vec<Vec<String>> = rows
        .into_iter()
        .filter(|r| r.len() == header.len() && active.iter().all(|&j| !is_null(&r[j])))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = kept.len();

    let numeric_cols: Vec<&ColumnSchema> = schema
        .iter()
        .filter(|c| c.kind == ColumnKind::Numerical)
        .collect();
    let categorical_cols: Vec<&ColumnSchema> = schema
        .iter()
        .filter(|c| c.kind == ColumnKind::Categorical)
        .collect();
    let label_col = col_index(
        &schema
            .iter()
            .find(|c| c.kind == ColumnKind::Label)
            .expect("validated")
            .name,
    );
    let group_col = col_index(&group_spec.column);

    // Parse numerical columns.
    let m = numeric_cols.len();
    let mut numeric = vec![0.0f64; n * m];
    for (k, col) in numeric_cols.iter().enumerate() {
        let j = col_index(&col.name);
        for (i, row) in kept.iter().enumerate() {
            let cell = row[j].trim();
            let v: f64 = cell.parse().map_err(|_| Error::InvalidNumeric {
                row: i,
                column: col.name.clone(),
                value: row[j].clone(),
            })?;
            if !v.is_finite() {
                return Err(Error::InvalidNumeric {
                    row: i,
                    column: col.name.clone(),
                    value: row[j].clone(),
                });
            }
            numeric[i * m + k] = v;
        }
    }
    // Min-max normalize; constant columns become all zeros.
    for k in 0..m {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            lo = lo.min(numeric[i * m + k]);
            hi = hi.max(numeric[i * m + k]);
        }
        for i in 0..n {
            let cell = &mut numeric[i * m + k];
            *cell = if hi > lo { (*cell - lo) / (hi - lo) } else { 0.0 };
        }
    }

    // Labels.
    let distinct_labels: BTreeSet<String> = kept
        .iter()
        .map(|r| r[label_col].trim().to_string())
        .collect();
    if distinct_labels.len() > 2 {
        let name = &schema
            .iter()
            .find(|c| c.kind == ColumnKind::Label)
            .expect("validated")
            .name;
        return Err(Error::UnsupportedMulticlass {
            column: name.clone(),
            distinct: distinct_labels.len(),
        });
    }
    let mapping = label_mapping(&distinct_labels);
    let labels: Vec<u8> = kept
        .iter()
        .map(|r| {
            let v = r[label_col].trim();
            mapping
                .iter()
                .find(|(raw, _)| raw == v)
                .map(|(_, b)| *b)
                .expect("mapping covers all distinct values")
        })
        .collect();

    // Groups.
    let groups: Vec<u8> = kept
        .iter()
        .map(|r| {
            if group_spec.minority_values.contains(r[group_col].trim()) {
                MINORITY
            } else {
                MAJORITY
            }
        })
        .collect();

    // One-hot categories, sorted per column for determinism.
    let mut encoded_names: Vec<String> = numeric_cols.iter().map(|c| c.name.clone()).collect();
    let mut cat_values: Vec<(usize, Vec<String>)> = Vec::new();
    for col in &categorical_cols {
        let j = col_index(&col.name);
        let values: BTreeSet<String> = kept.iter().map(|r| r[j].trim().to_string()).collect();
        let values: Vec<String> = values.into_iter().collect();
        for v in &values {
            encoded_names.push(format!("{}={}", col.name, v));
        }
        cat_values.push((j, values));
    }
    if options.include_group_in_features {
        encoded_names.push(group_spec.column.clone());
    }
    let p = encoded_names.len();
    let mut encoded = vec![0.0f64; n * p];
    for i in 0..n {
        encoded[i * p..i * p + m].copy_from_slice(&numeric[i * m..i * m + m]);
        let mut off = m;
        for (j, values) in &cat_values {
            let cell = kept[i][*j].trim();
            let pos = values
                .iter()
                .position(|v| v == cell)
                .expect("collected from the same rows");
            encoded[i * p + off + pos] = 1.0;
            off += values.len();
        }
        if options.include_group_in_features {
            encoded[i * p + p - 1] = f64::from(groups[i]);
        }
    }

    Ok(Dataset {
        schema: schema.to_vec(),
        group_spec: group_spec.clone(),
        header: header.to_vec(),
        raw_rows: kept,
        numeric_names: numeric_cols.iter().map(|c| c.name.clone()).collect(),
        numeric,
        m,
        encoded_names,
        encoded,
        p,
        labels,
        groups,
        weights: vec![1.0; n],
    })
}

/// Build a dataset from in-memory numeric rows plus group/label vectors.
/// The group column is named "group" with minority value "1"; the label
/// column is named "label". Goes through the same preprocessing as CSV
/// ingestion, so writing these rows to CSV and reloading them yields the
/// same dataset.
pub fn from_numeric(
    numeric_names: &[String],
    rows: Vec<Vec<f64>>,
    groups: Vec<u8>,
    labels: Vec<u8>,
) -> Result<Dataset> {
    let mut schema: Vec<ColumnSchema> = numeric_names
        .iter()
        .map(|n| ColumnSchema::new(n.clone(), ColumnKind::Numerical))
        .collect();
    schema.push(ColumnSchema::new("group", ColumnKind::Group));
    schema.push(ColumnSchema::new("label", ColumnKind::Label));
    let group_spec = GroupSpec::new("group", ["1"]);
    let header: Vec<String> = schema.iter().map(|c| c.name.clone()).collect();
    let raw: Vec<Vec<String>> = rows
        .into_iter()
        .zip(groups.iter().zip(&labels))
        .map(|(r, (g, l))| {
            let mut cells: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
            cells.push(format!("{g}"));
            cells.push(format!("{l}"));
            cells
        })
        .collect();
    build(&schema, &group_spec, LoadOptions::default(), &header, raw)
}

/// Load a dataset from an RFC 4180 CSV file with a header row.
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: &[ColumnSchema],
    group_spec: &GroupSpec,
    options: LoadOptions,
) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    load_csv_reader(file, schema, group_spec, options)
}

/// Same as [`load_csv`] but from any reader.
pub fn load_csv_reader<R: Read>(
    reader: R,
    schema: &[ColumnSchema],
    group_spec: &GroupSpec,
    options: LoadOptions,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        rows.push(record.iter().map(|c| c.to_string()).collect());
    }
    build(schema, group_spec, options, &header, rows)
}

/// Disjoint train/validation/test index partition produced by [`split`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

pub const MIN_SPLIT_ROWS: usize = 10;

/// Shuffle `[0, n)` with a ChaCha8 stream seeded from `seed` and cut it into
/// 70% / 15% / remainder. Deterministic for a given `(n, seed)`; no
/// stratification (rows land in the three sets i.i.d.).
pub fn split(d: &Dataset, seed: u64) -> Result<SplitIndices> {
    let n = d.n();
    if n < MIN_SPLIT_ROWS {
        return Err(Error::DatasetTooSmall {
            n,
            min: MIN_SPLIT_ROWS,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_train = (0.70 * n as f64).round() as usize;
    let n_val = (0.15 * n as f64).round() as usize;
    let validation = idx.split_off(n_train);
    let mut validation = validation;
    let test = validation.split_off(n_val.min(validation.len()));
    Ok(SplitIndices {
        train: idx,
        validation,
        test,
        seed,
    })
}

/// Index lists for the four group x label cells, in input order.
#[derive(Debug, Clone, Default)]
pub struct GroupLabelPartition {
    cells: [Vec<usize>; 4],
}

impl GroupLabelPartition {
    pub fn cell(&self, group: u8, label: u8) -> &[usize] {
        &self.cells[usize::from(group) * 2 + usize::from(label)]
    }

    /// Iterate cells as `(group, label, indices)` in (W,0), (W,1), (U,0), (U,1) order.
    pub fn iter(&self) -> impl Iterator<Item = (u8, u8, &[usize])> {
        (0..4u8).map(move |k| (k / 2, k % 2, self.cells[k as usize].as_slice()))
    }
}

/// Partition `idx` by (group, label).
pub fn partition_by_group_label(d: &Dataset, idx: &[usize]) -> GroupLabelPartition {
    let mut part = GroupLabelPartition::default();
    for &i in idx {
        let k = usize::from(d.group(i)) * 2 + usize::from(d.label(i));
        part.cells[k].push(i);
    }
    part
}

//! Columnar table model and the transforms that turn tables into training
//! matrices: imputation, categorical binarization, holdout splitting.

mod csv_io;

pub use csv_io::{load_csv, write_csv, DTypeHint, SchemaHints};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{CoreError, Result};
use crate::rng::rng_for;

const IMPUTE_STREAM: u64 = 0x494d5055; // "IMPU"
const SPLIT_STREAM: u64 = 0x53504c49; // "SPLI"

/// Time unit for datetime columns. Values are stored as integer multiples of
/// the unit since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Granularity {
    Seconds,
    Minutes,
    Hours,
    Days,
}

impl Granularity {
    pub fn unit_seconds(self) -> i64 {
        match self {
            Granularity::Seconds => 1,
            Granularity::Minutes => 60,
            Granularity::Hours => 3_600,
            Granularity::Days => 86_400,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Granularity::Seconds => "s",
            Granularity::Minutes => "min",
            Granularity::Hours => "h",
            Granularity::Days => "d",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "s" => Some(Granularity::Seconds),
            "min" => Some(Granularity::Minutes),
            "h" => Some(Granularity::Hours),
            "d" => Some(Granularity::Days),
            _ => None,
        }
    }

    /// True when `self` ticks more often than `other`.
    pub fn finer_than(self, other: Granularity) -> bool {
        self.unit_seconds() < other.unit_seconds()
    }
}

/// Typed column storage. Missing slots hold a placeholder value and are
/// flagged in the owning column's mask.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    /// Codes index into `dict`; dict order is first occurrence.
    Categorical { codes: Vec<u32>, dict: Vec<String> },
    Datetime { values: Vec<i64>, granularity: Granularity },
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
            ColumnData::Datetime { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype_name(&self) -> &'static str {
        match self {
            ColumnData::Numeric(_) => "numeric",
            ColumnData::Categorical { .. } => "categorical",
            ColumnData::Datetime { .. } => "datetime",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
    pub missing: Vec<bool>,
    /// Source table for columns appended by a join; `None` for native columns.
    pub origin: Option<String>,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        let missing = vec![false; values.len()];
        Column { name: name.into(), data: ColumnData::Numeric(values), missing, origin: None }
    }

    pub fn numeric_masked(name: impl Into<String>, values: Vec<f64>, missing: Vec<bool>) -> Self {
        Column { name: name.into(), data: ColumnData::Numeric(values), missing, origin: None }
    }

    pub fn categorical(name: impl Into<String>, values: &[&str]) -> Self {
        let mut dict: Vec<String> = Vec::new();
        let mut lookup: HashMap<&str, u32> = HashMap::new();
        let mut codes = Vec::with_capacity(values.len());
        for &v in values {
            let code = *lookup.entry(v).or_insert_with(|| {
                dict.push(v.to_string());
                (dict.len() - 1) as u32
            });
            codes.push(code);
        }
        let missing = vec![false; values.len()];
        Column { name: name.into(), data: ColumnData::Categorical { codes, dict }, missing, origin: None }
    }

    pub fn datetime(name: impl Into<String>, values: Vec<i64>, granularity: Granularity) -> Self {
        let missing = vec![false; values.len()];
        Column { name: name.into(), data: ColumnData::Datetime { values, granularity }, missing, origin: None }
    }

    pub fn with_missing(mut self, missing: Vec<bool>) -> Self {
        self.missing = missing;
        self
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    /// String form of a cell for CSV output; `None` for missing cells.
    pub fn render(&self, row: usize) -> Option<String> {
        if self.missing[row] {
            return None;
        }
        Some(match &self.data {
            ColumnData::Numeric(v) => format!("{}", v[row]),
            ColumnData::Categorical { codes, dict } => dict[codes[row] as usize].clone(),
            ColumnData::Datetime { values, granularity } => {
                csv_io::render_datetime(values[row], *granularity)
            }
        })
    }

    fn take_rows(&self, idx: &[usize]) -> Column {
        let missing = idx.iter().map(|&i| self.missing[i]).collect();
        let data = match &self.data {
            ColumnData::Numeric(v) => ColumnData::Numeric(idx.iter().map(|&i| v[i]).collect()),
            ColumnData::Categorical { codes, dict } => ColumnData::Categorical {
                codes: idx.iter().map(|&i| codes[i]).collect(),
                dict: dict.clone(),
            },
            ColumnData::Datetime { values, granularity } => ColumnData::Datetime {
                values: idx.iter().map(|&i| values[i]).collect(),
                granularity: *granularity,
            },
        };
        Column { name: self.name.clone(), data, missing, origin: self.origin.clone() }
    }
}

/// A named table of typed, row-aligned columns. The universal currency of the
/// pipeline: base tables, foreign tables, and join outputs are all `Table`s.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<Column>,
    pub row_count: usize,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: Vec<Column>) -> Result<Table> {
        let name = name.into();
        let row_count = columns.first().map_or(0, Column::len);
        let mut seen = BTreeSet::new();
        for c in &columns {
            if c.len() != row_count || c.missing.len() != row_count {
                return Err(CoreError::LengthMismatch(format!(
                    "column {} has {} rows, expected {}",
                    c.name,
                    c.len(),
                    row_count
                )));
            }
            if !seen.insert(c.name.clone()) {
                return Err(CoreError::Format {
                    line: 0,
                    msg: format!("duplicate column name: {}", c.name),
                });
            }
        }
        Ok(Table { name, columns, row_count })
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn require_column(&self, name: &str) -> Result<&Column> {
        self.column(name)
            .ok_or_else(|| CoreError::MissingColumn(format!("{} in table {}", name, self.name)))
    }

    pub fn has_missing(&self) -> bool {
        self.columns.iter().any(Column::has_missing)
    }

    /// New table holding the given rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Table {
        let columns = self.columns.iter().map(|c| c.take_rows(idx)).collect();
        Table { name: self.name.clone(), columns, row_count: idx.len() }
    }

    /// New table without the named column.
    pub fn drop_column(&self, name: &str) -> Table {
        let columns = self.columns.iter().filter(|c| c.name != name).cloned().collect();
        Table { name: self.name.clone(), columns, row_count: self.row_count }
    }
}

/// Dense n×d design matrix with per-feature provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    pub feature_names: Vec<String>,
    /// Source table id per feature.
    pub provenance: Vec<String>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.values.ncols()
    }

    /// New matrix restricted to the given feature columns, in the given order.
    pub fn select_features(&self, idx: &[usize]) -> FeatureMatrix {
        let values = ndarray::Array2::from_shape_fn((self.n_rows(), idx.len()), |(r, j)| {
            self.values[(r, idx[j])]
        });
        FeatureMatrix {
            values,
            feature_names: idx.iter().map(|&j| self.feature_names[j].clone()).collect(),
            provenance: idx.iter().map(|&j| self.provenance[j].clone()).collect(),
        }
    }

    pub fn select_rows(&self, idx: &[usize]) -> FeatureMatrix {
        let values = ndarray::Array2::from_shape_fn((idx.len(), self.n_features()), |(r, j)| {
            self.values[(idx[r], j)]
        });
        FeatureMatrix {
            values,
            feature_names: self.feature_names.clone(),
            provenance: self.provenance.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Regression,
    Classification,
}

/// Prediction target: raw numeric values for regression, contiguous class ids
/// `0..c` for classification.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelVector {
    Regression(Vec<f64>),
    Classification { ids: Vec<u32>, classes: Vec<String> },
}

impl LabelVector {
    pub fn len(&self) -> usize {
        match self {
            LabelVector::Regression(v) => v.len(),
            LabelVector::Classification { ids, .. } => ids.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            LabelVector::Regression(_) => Task::Regression,
            LabelVector::Classification { .. } => Task::Classification,
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            LabelVector::Regression(_) => 0,
            LabelVector::Classification { classes, .. } => classes.len(),
        }
    }

    /// Labels as f64 for numeric code paths (class ids cast for classification).
    pub fn as_f64(&self) -> Vec<f64> {
        match self {
            LabelVector::Regression(v) => v.clone(),
            LabelVector::Classification { ids, .. } => ids.iter().map(|&i| i as f64).collect(),
        }
    }

    pub fn select(&self, idx: &[usize]) -> LabelVector {
        match self {
            LabelVector::Regression(v) => {
                LabelVector::Regression(idx.iter().map(|&i| v[i]).collect())
            }
            LabelVector::Classification { ids, classes } => LabelVector::Classification {
                ids: idx.iter().map(|&i| ids[i]).collect(),
                classes: classes.clone(),
            },
        }
    }

    /// Build a label vector from a table column. Classification targets map
    /// column values to contiguous class ids in lexicographic value order.
    pub fn from_column(col: &Column, task: Task) -> Result<LabelVector> {
        if col.has_missing() {
            return Err(CoreError::Config(format!(
                "target column {} has missing values",
                col.name
            )));
        }
        match task {
            Task::Regression => match &col.data {
                ColumnData::Numeric(v) => Ok(LabelVector::Regression(v.clone())),
                ColumnData::Datetime { values, .. } => {
                    Ok(LabelVector::Regression(values.iter().map(|&v| v as f64).collect()))
                }
                ColumnData::Categorical { .. } => Err(CoreError::Config(format!(
                    "target column {} is categorical but task is regression",
                    col.name
                ))),
            },
            Task::Classification => {
                let raw: Vec<String> = match &col.data {
                    ColumnData::Numeric(v) => v.iter().map(|x| format!("{}", x)).collect(),
                    ColumnData::Categorical { codes, dict } => {
                        codes.iter().map(|&c| dict[c as usize].clone()).collect()
                    }
                    ColumnData::Datetime { values, .. } => {
                        values.iter().map(|v| format!("{}", v)).collect()
                    }
                };
                let classes: Vec<String> =
                    raw.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
                let index: HashMap<&String, u32> =
                    classes.iter().enumerate().map(|(i, c)| (c, i as u32)).collect();
                let ids = raw.iter().map(|v| index[v]).collect();
                Ok(LabelVector::Classification { ids, classes })
            }
        }
    }
}

/// Median of the non-missing values; even counts average the two middle values.
fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Replace missing values: column median for numeric and datetime, a seeded
/// uniform draw over observed distinct values for categorical. Columns that
/// are entirely missing are dropped; their names come back in the report.
pub fn impute(t: &Table, seed: u64) -> (Table, Vec<String>) {
    let mut columns = Vec::with_capacity(t.columns.len());
    let mut dropped = Vec::new();
    for (ci, col) in t.columns.iter().enumerate() {
        if !col.has_missing() {
            columns.push(col.clone());
            continue;
        }
        if col.missing.iter().all(|&m| m) {
            dropped.push(col.name.clone());
            continue;
        }
        let mut out = col.clone();
        match &mut out.data {
            ColumnData::Numeric(values) => {
                let mut present: Vec<f64> = values
                    .iter()
                    .zip(&col.missing)
                    .filter(|(_, &m)| !m)
                    .map(|(&v, _)| v)
                    .collect();
                let med = median(&mut present);
                for (v, &m) in values.iter_mut().zip(&col.missing) {
                    if m {
                        *v = med;
                    }
                }
            }
            ColumnData::Datetime { values, .. } => {
                let mut present: Vec<f64> = values
                    .iter()
                    .zip(&col.missing)
                    .filter(|(_, &m)| !m)
                    .map(|(&v, _)| v as f64)
                    .collect();
                // Integer restriction of the numeric median.
                let med = median(&mut present).floor() as i64;
                for (v, &m) in values.iter_mut().zip(&col.missing) {
                    if m {
                        *v = med;
                    }
                }
            }
            ColumnData::Categorical { codes, .. } => {
                let observed: Vec<u32> = codes
                    .iter()
                    .zip(&col.missing)
                    .filter(|(_, &m)| !m)
                    .map(|(&c, _)| c)
                    .collect::<BTreeSet<u32>>()
                    .into_iter()
                    .collect();
                let mut rng = rng_for(seed, &[IMPUTE_STREAM, ci as u64]);
                for (c, &m) in codes.iter_mut().zip(&col.missing) {
                    if m {
                        *c = observed[rng.random_range(0..observed.len())];
                    }
                }
            }
        }
        out.missing = vec![false; t.row_count];
        columns.push(out);
    }
    (Table { name: t.name.clone(), columns, row_count: t.row_count }, dropped)
}

/// Result of [`binarize`]: the design matrix plus the categorical columns
/// dropped for exceeding the cardinality limit.
#[derive(Debug, Clone)]
pub struct Binarized {
    pub matrix: FeatureMatrix,
    pub dropped: Vec<String>,
}

/// Expand categorical columns into 0/1 indicators (one per distinct value,
/// named `col=value`, in lexicographic value order); numeric and datetime
/// columns pass through. Categorical columns with more than `max_cardinality`
/// distinct values are dropped.
pub fn binarize(t: &Table, max_cardinality: usize) -> Result<Binarized> {
    if t.has_missing() {
        return Err(CoreError::Config(format!(
            "binarize requires an imputed table, but {} has missing values",
            t.name
        )));
    }
    let n = t.row_count;
    let mut features: Vec<(String, String, Vec<f64>)> = Vec::new();
    let mut dropped = Vec::new();
    for col in &t.columns {
        let source = col.origin.clone().unwrap_or_else(|| t.name.clone());
        match &col.data {
            ColumnData::Numeric(v) => features.push((col.name.clone(), source, v.clone())),
            ColumnData::Datetime { values, .. } => {
                let v = values.iter().map(|&x| x as f64).collect();
                features.push((col.name.clone(), source, v));
            }
            ColumnData::Categorical { codes, dict } => {
                let mut present: Vec<u32> = codes.iter().copied().collect::<BTreeSet<_>>()
                    .into_iter().collect();
                if present.len() > max_cardinality {
                    dropped.push(col.name.clone());
                    continue;
                }
                present.sort_by(|&a, &b| dict[a as usize].cmp(&dict[b as usize]));
                for &code in &present {
                    let ind: Vec<f64> =
                        codes.iter().map(|&c| if c == code { 1.0 } else { 0.0 }).collect();
                    let name = format!("{}={}", col.name, dict[code as usize]);
                    features.push((name, source.clone(), ind));
                }
            }
        }
    }
    if features.is_empty() {
        return Err(CoreError::NoFeatures);
    }
    let d = features.len();
    let mut values = Array2::zeros((n, d));
    let mut feature_names = Vec::with_capacity(d);
    let mut provenance = Vec::with_capacity(d);
    for (j, (name, source, col)) in features.into_iter().enumerate() {
        for (i, v) in col.into_iter().enumerate() {
            values[(i, j)] = v;
        }
        feature_names.push(name);
        provenance.push(source);
    }
    Ok(Binarized { matrix: FeatureMatrix { values, feature_names, provenance }, dropped })
}

/// Train/test row indices (both ascending) from a seeded shuffle. For
/// classification the split is stratified: per-class test counts are
/// `round(class_count * fraction)`, nudged by largest remainder to hit the
/// global total.
pub fn holdout_indices(
    y: &LabelVector,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = y.len();
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CoreError::Config(format!(
            "test_fraction must be in (0,1), got {}",
            test_fraction
        )));
    }
    if n < 4 {
        return Err(CoreError::DegenerateSplit(format!("need at least 4 rows, got {}", n)));
    }
    let n_test_global = ((n as f64 * test_fraction).round() as usize).clamp(1, n - 1);
    match y {
        LabelVector::Regression(_) => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng_for(seed, &[SPLIT_STREAM]));
            let mut test: Vec<usize> = order[..n_test_global].to_vec();
            let mut train: Vec<usize> = order[n_test_global..].to_vec();
            test.sort_unstable();
            train.sort_unstable();
            Ok((train, test))
        }
        LabelVector::Classification { ids, classes } => {
            let c = classes.len();
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
            for (i, &id) in ids.iter().enumerate() {
                members[id as usize].push(i);
            }
            for (k, m) in members.iter().enumerate() {
                if !m.is_empty() && m.len() < 2 {
                    return Err(CoreError::DegenerateSplit(format!(
                        "class {} has fewer than 2 members",
                        classes[k]
                    )));
                }
            }
            let exact: Vec<f64> =
                members.iter().map(|m| m.len() as f64 * test_fraction).collect();
            // round, then adjust +-1 by largest remainder toward the global total
            let mut counts: Vec<usize> = members
                .iter()
                .zip(&exact)
                .map(|(m, &e)| (e.round() as usize).min(m.len().saturating_sub(1)))
                .collect();
            let mut assigned: usize = counts.iter().sum();
            while assigned != n_test_global {
                if assigned < n_test_global {
                    let k = (0..c)
                        .filter(|&k| !members[k].is_empty() && counts[k] < members[k].len() - 1)
                        .max_by(|&a, &b| {
                            let ra = exact[a] - counts[a] as f64;
                            let rb = exact[b] - counts[b] as f64;
                            ra.partial_cmp(&rb).unwrap().then(b.cmp(&a))
                        })
                        .ok_or_else(|| {
                            CoreError::DegenerateSplit("cannot satisfy test fraction".into())
                        })?;
                    counts[k] += 1;
                    assigned += 1;
                } else {
                    let k = (0..c)
                        .filter(|&k| counts[k] > 0)
                        .min_by(|&a, &b| {
                            let ra = exact[a] - counts[a] as f64;
                            let rb = exact[b] - counts[b] as f64;
                            ra.partial_cmp(&rb).unwrap().then(a.cmp(&b))
                        })
                        .ok_or_else(|| {
                            CoreError::DegenerateSplit("cannot satisfy test fraction".into())
                        })?;
                    counts[k] -= 1;
                    assigned -= 1;
                }
            }
            let mut test = Vec::with_capacity(n_test_global);
            let mut train = Vec::with_capacity(n - n_test_global);
            for (k, m) in members.iter().enumerate() {
                let mut shuffled = m.clone();
                shuffled.shuffle(&mut rng_for(seed, &[SPLIT_STREAM, k as u64]));
                test.extend_from_slice(&shuffled[..counts[k]]);
                train.extend_from_slice(&shuffled[counts[k]..]);
            }
            test.sort_unstable();
            train.sort_unstable();
            Ok((train, test))
        }
    }
}

/// Materialized holdout split of a feature matrix and its labels.
pub fn holdout_split(
    x: &FeatureMatrix,
    y: &LabelVector,
    test_fraction: f64,
    seed: u64,
) -> Result<((FeatureMatrix, LabelVector), (FeatureMatrix, LabelVector))> {
    if x.n_rows() != y.len() {
        return Err(CoreError::LengthMismatch(format!(
            "matrix has {} rows, labels {}",
            x.n_rows(),
            y.len()
        )));
    }
    let (train, test) = holdout_indices(y, test_fraction, seed)?;
    Ok((
        (x.select_rows(&train), y.select(&train)),
        (x.select_rows(&test), y.select(&test)),
    ))
}

/// Deterministic per-stratum grouping of rows by a label column's values.
/// Strata are keyed by the column's rendered value in lexicographic order.
pub(crate) fn strata_of(col: &Column) -> Result<BTreeMap<String, Vec<usize>>> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for row in 0..col.len() {
        let key = match (&col.data, col.missing[row]) {
            (_, true) => "<missing>".to_string(),
            (ColumnData::Numeric(v), _) => {
                if v[row].fract() != 0.0 {
                    return Err(CoreError::Config(format!(
                        "stratification column {} has non-integer values",
                        col.name
                    )));
                }
                format!("{}", v[row])
            }
            (ColumnData::Categorical { codes, dict }, _) => dict[codes[row] as usize].clone(),
            (ColumnData::Datetime { values, .. }, _) => format!("{}", values[row]),
        };
        groups.entry(key).or_default().push(row);
    }
    Ok(groups)
}

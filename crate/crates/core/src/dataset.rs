//! Tabular `(X, T, M, Y)` data: schema, CSV ingestion, encoding and splitting.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Binary,
    /// Integer-coded levels `0..k`, one-hot encoded to width `k`.
    Categorical(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Covariate,
    Treatment,
    Mediator,
    Outcome,
}

/// Kind of a single encoded variable as seen by the models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub role: ColumnRole,
}

impl ColumnSpec {
    pub fn new(name: impl Into<String>, kind: ColumnKind, role: ColumnRole) -> Self {
        Self {
            name: name.into(),
            kind,
            role,
        }
    }

    pub fn covariate(name: impl Into<String>, kind: ColumnKind) -> Self {
        Self::new(name, kind, ColumnRole::Covariate)
    }

    fn width(&self) -> usize {
        match self.kind {
            ColumnKind::Categorical(k) => k,
            _ => 1,
        }
    }
}

/// Location of one schema covariate inside the encoded matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariateBlock {
    pub name: String,
    pub kind: ColumnKind,
    pub offset: usize,
    pub width: usize,
}

/// An immutable, fully observed dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    schema: Vec<ColumnSpec>,
    blocks: Vec<CovariateBlock>,
    x: Array2<f64>,
    t: Array1<f64>,
    m: Array1<f64>,
    y: Array1<f64>,
    mediator_kind: VarKind,
    outcome_kind: VarKind,
}

fn var_kind(spec: &ColumnSpec) -> Result<VarKind> {
    match spec.kind {
        ColumnKind::Continuous => Ok(VarKind::Continuous),
        ColumnKind::Binary => Ok(VarKind::Binary),
        ColumnKind::Categorical(_) => Err(Error::Schema(format!(
            "{:?} column `{}` must be continuous or binary",
            spec.role, spec.name
        ))),
    }
}

/// Checks role cardinalities and kinds; returns the covariate blocks.
pub fn validate_schema(schema: &[ColumnSpec]) -> Result<Vec<CovariateBlock>> {
    let count = |role| schema.iter().filter(|c| c.role == role).count();
    for (role, label) in [
        (ColumnRole::Treatment, "treatment"),
        (ColumnRole::Mediator, "mediator"),
        (ColumnRole::Outcome, "outcome"),
    ] {
        let k = count(role);
        if k != 1 {
            return Err(Error::Schema(format!("expected exactly one {label} column, found {k}")));
        }
    }
    let mut seen = HashMap::new();
    for c in schema {
        if seen.insert(c.name.as_str(), ()).is_some() {
            return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
        }
        if let ColumnKind::Categorical(k) = c.kind {
            if k < 2 {
                return Err(Error::Schema(format!(
                    "categorical column `{}` needs at least 2 levels",
                    c.name
                )));
            }
        }
        match c.role {
            ColumnRole::Treatment if c.kind != ColumnKind::Binary => {
                return Err(Error::Schema(format!("treatment `{}` must be binary", c.name)));
            }
            ColumnRole::Mediator | ColumnRole::Outcome => {
                var_kind(c)?;
            }
            _ => {}
        }
    }
    let mut blocks = Vec::new();
    let mut offset = 0;
    for c in schema.iter().filter(|c| c.role == ColumnRole::Covariate) {
        blocks.push(CovariateBlock {
            name: c.name.clone(),
            kind: c.kind,
            offset,
            width: c.width(),
        });
        offset += c.width();
    }
    if offset == 0 {
        return Err(Error::Schema("at least one covariate column is required".into()));
    }
    Ok(blocks)
}

fn is01(v: f64) -> bool {
    v == 0.0 || v == 1.0
}

impl Dataset {
    /// Assembles a dataset from already-encoded arrays.
    pub fn new(
        schema: Vec<ColumnSpec>,
        x: Array2<f64>,
        t: Array1<f64>,
        m: Array1<f64>,
        y: Array1<f64>,
    ) -> Result<Self> {
        let blocks = validate_schema(&schema)?;
        let by_role = |role| schema.iter().find(|c| c.role == role).unwrap();
        let mediator_kind = var_kind(by_role(ColumnRole::Mediator))?;
        let outcome_kind = var_kind(by_role(ColumnRole::Outcome))?;
        let n = x.nrows();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let width: usize = blocks.iter().map(|b| b.width).sum();
        if x.ncols() != width || t.len() != n || m.len() != n || y.len() != n {
            return Err(Error::Schema(format!(
                "array shapes do not match schema: X {:?} (width {width}), t {}, m {}, y {}",
                x.dim(),
                t.len(),
                m.len(),
                y.len()
            )));
        }
        if x.iter().chain(&t).chain(&m).chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("dataset contains non-finite values".into()));
        }
        if !t.iter().all(|&v| is01(v)) {
            return Err(Error::Invalid("treatment must be 0/1".into()));
        }
        if mediator_kind == VarKind::Binary && !m.iter().all(|&v| is01(v)) {
            return Err(Error::Invalid("binary mediator must be 0/1".into()));
        }
        if outcome_kind == VarKind::Binary && !y.iter().all(|&v| is01(v)) {
            return Err(Error::Invalid("binary outcome must be 0/1".into()));
        }
        for b in &blocks {
            if b.kind != ColumnKind::Continuous {
                let col = x.slice(s![.., b.offset..b.offset + b.width]);
                if !col.iter().all(|&v| is01(v)) {
                    return Err(Error::Invalid(format!("column `{}` must be 0/1 encoded", b.name)));
                }
            }
            if let ColumnKind::Categorical(_) = b.kind {
                let col = x.slice(s![.., b.offset..b.offset + b.width]);
                if col.axis_iter(Axis(0)).any(|r| r.sum() != 1.0) {
                    return Err(Error::Invalid(format!("column `{}` is not one-hot", b.name)));
                }
            }
        }
        Ok(Self {
            schema,
            blocks,
            x,
            t,
            m,
            y,
            mediator_kind,
            outcome_kind,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn x_dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn t(&self) -> ArrayView1<'_, f64> {
        self.t.view()
    }

    pub fn m(&self) -> ArrayView1<'_, f64> {
        self.m.view()
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    pub fn schema(&self) -> &[ColumnSpec] {
        &self.schema
    }

    pub fn blocks(&self) -> &[CovariateBlock] {
        &self.blocks
    }

    pub fn mediator_kind(&self) -> VarKind {
        self.mediator_kind
    }

    pub fn outcome_kind(&self) -> VarKind {
        self.outcome_kind
    }

    pub fn n_treated(&self) -> usize {
        self.t.iter().filter(|&&v| v == 1.0).count()
    }

    /// Kind of every encoded covariate column, one-hot columns being binary.
    pub fn x_kinds(&self) -> Vec<VarKind> {
        self.blocks
            .iter()
            .flat_map(|b| {
                let k = if b.kind == ColumnKind::Continuous {
                    VarKind::Continuous
                } else {
                    VarKind::Binary
                };
                std::iter::repeat_n(k, b.width)
            })
            .collect()
    }

    /// Names of the encoded covariate columns (`name=level` for one-hot columns).
    pub fn x_names(&self) -> Vec<String> {
        self.blocks
            .iter()
            .flat_map(|b| match b.kind {
                ColumnKind::Categorical(k) => (0..k).map(|l| format!("{}={l}", b.name)).collect(),
                _ => vec![b.name.clone()],
            })
            .collect()
    }

    pub fn block(&self, name: &str) -> Option<&CovariateBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn role_name(&self, role: ColumnRole) -> &str {
        &self.schema.iter().find(|c| c.role == role).unwrap().name
    }

    /// Covariates with the first level of each categorical dropped, so that an
    /// intercept can be added without collinearity.
    pub fn covariate_design(&self) -> Array2<f64> {
        let keep: Vec<usize> = self
            .blocks
            .iter()
            .flat_map(|b| match b.kind {
                ColumnKind::Categorical(_) => (b.offset + 1..b.offset + b.width).collect::<Vec<_>>(),
                _ => vec![b.offset],
            })
            .collect();
        self.x.select(Axis(1), &keep)
    }

    /// Rows `idx` in the given order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            blocks: self.blocks.clone(),
            x: self.x.select(Axis(0), idx),
            t: self.t.select(Axis(0), idx),
            m: self.m.select(Axis(0), idx),
            y: self.y.select(Axis(0), idx),
            mediator_kind: self.mediator_kind,
            outcome_kind: self.outcome_kind,
        }
    }

    /// Same covariates with new treatment, mediator and outcome vectors.
    pub fn with_tmy(&self, t: Array1<f64>, m: Array1<f64>, y: Array1<f64>) -> Result<Dataset> {
        Dataset::new(self.schema.clone(), self.x.clone(), t, m, y)
    }

    /// Replaces the mediator column's kind and values.
    pub fn with_mediator(&self, kind: ColumnKind, m: Array1<f64>) -> Result<Dataset> {
        let mut schema = self.schema.clone();
        for c in schema.iter_mut().filter(|c| c.role == ColumnRole::Mediator) {
            c.kind = kind;
        }
        Dataset::new(schema, self.x.clone(), self.t.clone(), m, self.y.clone())
    }

    pub fn with_outcome(&self, y: Array1<f64>) -> Result<Dataset> {
        Dataset::new(self.schema.clone(), self.x.clone(), self.t.clone(), self.m.clone(), y)
    }

    /// Standardizes continuous covariates to mean 0 and population variance 1.
    pub fn standardize(&self) -> Result<Dataset> {
        self.standardize_with(StandardizeOptions::default())
    }

    pub fn standardize_with(&self, opts: StandardizeOptions) -> Result<Dataset> {
        let mut out = self.clone();
        for b in self.blocks.iter().filter(|b| b.kind == ColumnKind::Continuous) {
            let col = out.x.column_mut(b.offset);
            standardize_in_place(col, &b.name)?;
        }
        if opts.mediator && self.mediator_kind == VarKind::Continuous {
            standardize_in_place(out.m.view_mut(), self.role_name(ColumnRole::Mediator))?;
        }
        if opts.outcome && self.outcome_kind == VarKind::Continuous {
            standardize_in_place(out.y.view_mut(), self.role_name(ColumnRole::Outcome))?;
        }
        Ok(out)
    }

    /// Splits per treatment arm so both halves keep the treated/control ratio.
    pub fn stratified_split(&self, train_fraction: f64, seed: u64) -> Result<SplitPair> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Split(format!("train fraction {train_fraction} not in (0, 1)")));
        }
        let mut rng = rng::seeded(seed);
        let mut train = Vec::new();
        let mut test = Vec::new();
        for arm in [0.0, 1.0] {
            let mut idx: Vec<usize> = (0..self.n()).filter(|&i| self.t[i] == arm).collect();
            let k = (train_fraction * idx.len() as f64).round() as usize;
            if k == 0 || k == idx.len() {
                return Err(Error::Split(format!(
                    "treatment group t={arm} has {} rows, too few to split at {train_fraction}",
                    idx.len()
                )));
            }
            idx.shuffle(&mut rng);
            train.extend_from_slice(&idx[..k]);
            test.extend_from_slice(&idx[k..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok(SplitPair {
            train: self.select(&train),
            test: self.select(&test),
            train_rows: train,
            test_rows: test,
            train_fraction,
        })
    }

    /// Writes the dataset in its schema column order, decoding one-hot blocks
    /// back to integer levels.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|source| Error::Output {
            path: path.to_path_buf(),
            source,
        })?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        w.write_record(self.schema.iter().map(|c| c.name.as_str()))?;
        let mut cov = self.blocks.iter();
        let order: Vec<Option<&CovariateBlock>> = self
            .schema
            .iter()
            .map(|c| match c.role {
                ColumnRole::Covariate => cov.next(),
                _ => None,
            })
            .collect();
        for i in 0..self.n() {
            let row = self.schema.iter().zip(&order).map(|(c, b)| match (c.role, b) {
                (ColumnRole::Treatment, _) => fmt_value(self.t[i]),
                (ColumnRole::Mediator, _) => fmt_value(self.m[i]),
                (ColumnRole::Outcome, _) => fmt_value(self.y[i]),
                (ColumnRole::Covariate, Some(b)) => match b.kind {
                    ColumnKind::Categorical(_) => {
                        let lvl = (0..b.width).find(|&l| self.x[[i, b.offset + l]] == 1.0).unwrap();
                        lvl.to_string()
                    }
                    _ => fmt_value(self.x[[i, b.offset]]),
                },
                (ColumnRole::Covariate, None) => unreachable!(),
            });
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fmt_value(v: f64) -> String {
    // Display for f64 is the shortest string that parses back to the same bits.
    format!("{v}")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandardizeOptions {
    #[serde(default)]
    pub mediator: bool,
    #[serde(default)]
    pub outcome: bool,
}

fn standardize_in_place(mut col: ndarray::ArrayViewMut1<f64>, name: &str) -> Result<()> {
    let n = col.len() as f64;
    let mean = col.sum() / n;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if !(var > 1e-300) {
        return Err(Error::ZeroVariance(name.to_string()));
    }
    let sd = var.sqrt();
    col.mapv_inplace(|v| (v - mean) / sd);
    Ok(())
}

#[derive(Clone, Debug)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    /// Original row indices of each half.
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub train_fraction: f64,
}

/// One-hot encodes integer codes in `0..k`.
pub fn one_hot(values: &[i64], k: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((values.len(), k));
    for (i, &v) in values.iter().enumerate() {
        if v < 0 || v as usize >= k {
            return Err(Error::OutOfRange { value: v, levels: k });
        }
        out[[i, v as usize]] = 1.0;
    }
    Ok(out)
}

/// Reads a CSV with a header row, keeping the columns named in `schema`.
pub fn load_csv(path: impl AsRef<Path>, schema: &[ColumnSpec]) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(reader: R, schema: &[ColumnSpec]) -> Result<Dataset> {
    let blocks = validate_schema(schema)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let pos: Vec<usize> = schema
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == c.name)
                .ok_or_else(|| Error::MissingColumn(c.name.clone()))
        })
        .collect::<Result<_>>()?;
    let width: usize = blocks.iter().map(|b| b.width).sum();
    let mut xs: Vec<f64> = Vec::new();
    let (mut t, mut m, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = row + 1;
        if rec.len() != headers.len() {
            return Err(Error::Arity {
                row,
                expected: headers.len(),
                found: rec.len(),
            });
        }
        let mut xrow = vec![0.0; width];
        let mut cov = blocks.iter();
        for (c, &p) in schema.iter().zip(&pos) {
            let cell = &rec[p];
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
                return Err(Error::MissingValue {
                    row,
                    column: c.name.clone(),
                });
            }
            let bad = |expected| Error::Parse {
                row,
                column: c.name.clone(),
                value: cell.to_string(),
                expected,
            };
            let value = match c.kind {
                ColumnKind::Continuous => cell
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad("a finite number"))?,
                ColumnKind::Binary => cell
                    .parse::<f64>()
                    .ok()
                    .filter(|&v| is01(v))
                    .ok_or_else(|| bad("0 or 1"))?,
                ColumnKind::Categorical(k) => {
                    
                    cell
                        .parse::<f64>()
                        .ok()
                        .filter(|v| v.fract() == 0.0 && *v >= 0.0 && (*v as usize) < k)
                        .ok_or_else(|| bad("an integer level code"))?
                }
            };
            match c.role {
                ColumnRole::Treatment => t.push(value),
                ColumnRole::Mediator => m.push(value),
                ColumnRole::Outcome => y.push(value),
                ColumnRole::Covariate => {
                    let b = cov.next().unwrap();
                    match b.kind {
                        ColumnKind::Categorical(_) => xrow[b.offset + value as usize] = 1.0,
                        _ => xrow[b.offset] = value,
                    }
                }
            }
        }
        xs.extend_from_slice(&xrow);
    }
    let n = t.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let x = Array2::from_shape_vec((n, width), xs).expect("row width is fixed");
    Dataset::new(
        schema.to_vec(),
        x,
        Array1::from(t),
        Array1::from(m),
        Array1::from(y),
    )
}

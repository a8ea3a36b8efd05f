//! Tabular data with an explicit missing mask, a typed column schema, and
//! per-row group labels.
//!
//! Numeric columns (features and targets) live in an `n x p` matrix. The
//! group column, when present, is kept apart as string labels. A cell whose
//! mask bit is set is never read by any statistic or model; its stored value
//! is unspecified.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Feature,
    Target,
    Group,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub unit: String,
    pub kind: ColumnKind,
}

impl ColumnSpec {
    pub fn new(name: &str, unit: &str, kind: ColumnKind) -> Self {
        Self {
            name: name.to_string(),
            unit: unit.to_string(),
            kind,
        }
    }
}

/// Validated list of column specs: unique names, at most one group column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ColumnSpec>", into = "Vec<ColumnSpec>")]
pub struct Schema {
    columns: Vec<ColumnSpec>,
}

impl TryFrom<Vec<ColumnSpec>> for Schema {
    type Error = Error;
    fn try_from(columns: Vec<ColumnSpec>) -> Result<Self> {
        Schema::new(columns)
    }
}

impl From<Schema> for Vec<ColumnSpec> {
    fn from(s: Schema) -> Self {
        s.columns
    }
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name '{}'", c.name)));
            }
        }
        let groups = columns.iter().filter(|c| c.kind == ColumnKind::Group).count();
        if groups > 1 {
            return Err(Error::Schema(format!("{groups} group columns; at most one allowed")));
        }
        if !columns.iter().any(|c| c.kind != ColumnKind::Group) {
            return Err(Error::Schema("schema has no numeric columns".into()));
        }
        Ok(Self { columns })
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn get(&self, name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn group_column(&self) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.kind == ColumnKind::Group)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The listed columns only, in schema order; unknown names are an error.
    pub fn restrict(&self, names: &[String]) -> Result<Self> {
        for n in names {
            if self.get(n).is_none() {
                return Err(Error::Schema(format!("unknown column '{n}'")));
            }
        }
        Self::new(self.columns.iter().filter(|c| names.contains(&c.name)).cloned().collect())
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.columns).expect("schema serializes")
    }

    /// The 45 numeric long-jump columns plus the `Gender` group column.
    pub fn long_jump() -> Self {
        use ColumnKind::*;
        let cols: &[(&str, &str, ColumnKind)] = &[
            ("d_resOffi", "m", Target),
            ("d_resEffe", "m", Target),
            ("d_loss_TO", "cm", Feature),
            ("t_step_S3", "ms", Feature),
            ("t_step_S2", "ms", Feature),
            ("t_step_S1", "ms", Feature),
            ("t_contact_S3", "ms", Feature),
            ("t_contact_S2", "ms", Feature),
            ("t_contact_S1", "ms", Feature),
            ("t_flight_S3", "ms", Feature),
            ("t_flight_S2", "ms", Feature),
            ("t_flight_S1", "ms", Feature),
            ("d_step_S3", "m", Feature),
            ("d_step_S2", "m", Feature),
            ("d_step_S1", "m", Feature),
            ("r_stepDiff_S32", "%", Feature),
            ("r_stepDiff_S21", "%", Feature),
            ("v_H_S3", "m/s", Feature),
            ("v_H_S2", "m/s", Feature),
            ("v_H_S1", "m/s", Feature),
            ("v_H_TO", "m/s", Feature),
            ("v_V_TO", "m/s", Feature),
            ("t_TDO", "s", Feature),
            ("v_HDiff_TDO", "m/s", Feature),
            ("v_TO", "m/s", Feature),
            ("a_TO", "°", Feature),
            ("h_CMLower", "cm", Feature),
            ("a_body_TD", "°", Feature),
            ("a_body_TO", "°", Feature),
            ("a_trunk_TD", "°", Feature),
            ("a_trunk_TO", "°", Feature),
            ("a_trunkRot_TDO", "°", Feature),
            ("a_thigh_TO", "°", Feature),
            ("w_thigh_TDO", "°/s", Feature),
            ("a_knee_TD", "°", Feature),
            ("a_kneeMin_TDO", "°", Feature),
            ("a_kneeRange_TDO", "°", Feature),
            ("w_knee_TDO", "°/s", Feature),
            ("a_hip_LD", "°", Feature),
            ("a_knee_LD", "°", Feature),
            ("a_trunk_LD", "°", Feature),
            ("d_loss_LD", "m", Feature),
            ("d_LD", "m", Feature),
            ("Height", "m", Feature),
            ("Weight", "kg", Feature),
            ("Gender", "", Group),
        ];
        Schema::new(cols.iter().map(|(n, u, k)| ColumnSpec::new(n, u, *k)).collect())
            .expect("built-in schema is valid")
    }
}

/// Canonical sex label: "men" or "women" for the usual spellings, `None` otherwise.
pub fn canonical_gender(label: &str) -> Option<&'static str> {
    match label.trim().to_ascii_lowercase().as_str() {
        "men" | "male" | "m" | "man" => Some("men"),
        "women" | "female" | "f" | "w" | "woman" => Some("women"),
        _ => None,
    }
}

fn is_missing_token(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("na")
}

#[derive(Debug, Clone)]
pub struct TabularDataset {
    columns: Vec<ColumnSpec>,
    values: Vec<Vec<f64>>,
    missing: Vec<Vec<bool>>,
    group_column: Option<String>,
    group: Vec<Option<String>>,
}

impl PartialEq for TabularDataset {
    /// Masked cells compare equal whatever their stored value.
    fn eq(&self, other: &Self) -> bool {
        self.columns == other.columns
            && self.group_column == other.group_column
            && self.group == other.group
            && self.missing == other.missing
            && self.cells() == other.cells()
    }
}

impl TabularDataset {
    /// Build from optional cells; `None` marks a missing entry.
    pub fn from_cells(
        columns: Vec<ColumnSpec>,
        cells: Vec<Vec<Option<f64>>>,
        group: Option<(String, Vec<Option<String>>)>,
    ) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Validation("dataset needs at least one column".into()));
        }
        if cells.is_empty() {
            return Err(Error::Validation("dataset needs at least one row".into()));
        }
        let p = columns.len();
        let mut names = HashSet::new();
        for c in &columns {
            if c.kind == ColumnKind::Group {
                return Err(Error::Schema(format!(
                    "group column '{}' cannot be numeric",
                    c.name
                )));
            }
            if !names.insert(c.name.clone()) {
                return Err(Error::Schema(format!("duplicate column name '{}'", c.name)));
            }
        }
        let mut values = Vec::with_capacity(cells.len());
        let mut missing = Vec::with_capacity(cells.len());
        for (i, row) in cells.into_iter().enumerate() {
            if row.len() != p {
                return Err(Error::Validation(format!(
                    "row {i} has {} cells, expected {p}",
                    row.len()
                )));
            }
            missing.push(row.iter().map(Option::is_none).collect());
            values.push(row.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect());
        }
        let n = values.len();
        let (group_column, group) = match group {
            Some((name, labels)) => {
                if labels.len() != n {
                    return Err(Error::Validation(format!(
                        "{} group labels for {n} rows",
                        labels.len()
                    )));
                }
                if names.contains(&name) {
                    return Err(Error::Schema(format!("duplicate column name '{name}'")));
                }
                (Some(name), labels)
            }
            None => (None, vec![None; n]),
        };
        Ok(Self {
            columns,
            values,
            missing,
            group_column,
            group,
        })
    }

    /// Build from a complete matrix.
    pub fn from_matrix(columns: Vec<ColumnSpec>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let cells = rows
            .into_iter()
            .map(|r| r.into_iter().map(Some).collect())
            .collect();
        Self::from_cells(columns, cells, None)
    }

    pub fn n_rows(&self) -> usize {
        self.values.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown column '{name}'")))
    }

    pub fn names_of_kind(&self, kind: ColumnKind) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.kind == kind)
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.names_of_kind(ColumnKind::Feature)
    }

    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.missing[i][j]
    }

    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        (!self.missing[i][j]).then(|| self.values[i][j])
    }

    /// Overwrite the stored value of a cell without touching its mask bit.
    pub fn set_raw(&mut self, i: usize, j: usize, v: f64) {
        self.values[i][j] = v;
    }

    /// Set a cell to an observed value.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[i][j] = v;
        self.missing[i][j] = false;
    }

    pub fn missing_mask(&self) -> &[Vec<bool>] {
        &self.missing
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().flatten().filter(|&&m| m).count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_count() == 0
    }

    pub fn column(&self, j: usize) -> Vec<Option<f64>> {
        (0..self.n_rows()).map(|i| self.value(i, j)).collect()
    }

    pub fn observed(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).filter_map(|i| self.value(i, j)).collect()
    }

    pub fn cells(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.n_rows())
            .map(|i| (0..self.n_cols()).map(|j| self.value(i, j)).collect())
            .collect()
    }

    pub fn group_column(&self) -> Option<&str> {
        self.group_column.as_deref()
    }

    pub fn group_labels(&self) -> &[Option<String>] {
        &self.group
    }

    fn group_payload(&self, rows: &[usize]) -> Option<(String, Vec<Option<String>>)> {
        self.group_column
            .as_ref()
            .map(|g| (g.clone(), rows.iter().map(|&i| self.group[i].clone()).collect()))
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let cells = rows
            .iter()
            .map(|&i| (0..self.n_cols()).map(|j| self.value(i, j)).collect())
            .collect();
        Self::from_cells(self.columns.clone(), cells, self.group_payload(rows))
    }

    pub fn select_columns(&self, names: &[String]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n))
            .collect::<Result<_>>()?;
        let columns = idx.iter().map(|&j| self.columns[j].clone()).collect();
        let cells = (0..self.n_rows())
            .map(|i| idx.iter().map(|&j| self.value(i, j)).collect())
            .collect();
        let all: Vec<usize> = (0..self.n_rows()).collect();
        Self::from_cells(columns, cells, self.group_payload(&all))
    }

    pub fn drop_columns(&self, names: &[String]) -> Result<Self> {
        for n in names {
            self.column_index(n)?;
        }
        let keep: Vec<String> = self
            .column_names()
            .into_iter()
            .filter(|c| !names.contains(c))
            .collect();
        self.select_columns(&keep)
    }

    /// Complete numeric matrix of the named columns; errors if any entry is missing.
    pub fn matrix(&self, names: &[String]) -> Result<Vec<Vec<f64>>> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| self.column_index(n))
            .collect::<Result<_>>()?;
        (0..self.n_rows())
            .map(|i| {
                idx.iter()
                    .map(|&j| {
                        self.value(i, j).ok_or_else(|| {
                            Error::Validation(format!(
                                "missing value at row {i}, column '{}'",
                                self.columns[j].name
                            ))
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// Rows whose `target` is observed, as `(row indices, X, y)` over `features`.
    pub fn supervised(
        &self,
        features: &[String],
        target: &str,
    ) -> Result<(Vec<usize>, Vec<Vec<f64>>, Vec<f64>)> {
        let t = self.column_index(target)?;
        let rows: Vec<usize> = (0..self.n_rows()).filter(|&i| !self.missing[i][t]).collect();
        let sub = self.select_rows(&rows)?;
        let x = sub.matrix(features)?;
        let y = rows.iter().map(|&i| self.values[i][t]).collect();
        Ok((rows, x, y))
    }

    /// Copy with every cell observed, taking values from `filled` where masked.
    pub(crate) fn with_filled(&self, filled: &[Vec<f64>]) -> Self {
        let mut out = self.clone();
        for (i, row) in filled.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if out.missing[i][j] {
                    out.values[i][j] = v;
                    out.missing[i][j] = false;
                }
            }
        }
        out
    }

    // -----------------------------------------------------------------------
    // CSV
    // -----------------------------------------------------------------------

    pub fn from_csv_reader<R: Read>(reader: R, schema: &Schema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        for h in &header {
            if schema.get(h).is_none() {
                return Err(Error::Schema(format!("unknown column '{h}' in CSV header")));
            }
        }
        for c in schema.columns() {
            if !header.contains(&c.name) {
                return Err(Error::Schema(format!("column '{}' missing from CSV header", c.name)));
            }
        }
        let mut seen = HashSet::new();
        for h in &header {
            if !seen.insert(h) {
                return Err(Error::Schema(format!("column '{h}' appears twice in CSV header")));
            }
        }
        let group_pos = header
            .iter()
            .position(|h| schema.get(h).map(|c| c.kind) == Some(ColumnKind::Group));
        let numeric: Vec<(usize, ColumnSpec)> = header
            .iter()
            .enumerate()
            .filter(|(k, _)| Some(*k) != group_pos)
            .map(|(k, h)| (k, schema.get(h).expect("checked").clone()))
            .collect();

        let mut cells = Vec::new();
        let mut labels = Vec::new();
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            let mut row = Vec::with_capacity(numeric.len());
            for (k, spec) in &numeric {
                let raw = record.get(*k).unwrap_or("");
                if is_missing_token(raw) {
                    row.push(None);
                } else {
                    let v: f64 = raw.parse().map_err(|_| Error::Parse {
                        row: r + 1,
                        column: spec.name.clone(),
                        value: raw.to_string(),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            row: r + 1,
                            column: spec.name.clone(),
                            value: raw.to_string(),
                        });
                    }
                    row.push(Some(v));
                }
            }
            cells.push(row);
            if let Some(g) = group_pos {
                let raw = record.get(g).unwrap_or("");
                labels.push((!is_missing_token(raw)).then(|| raw.to_string()));
            }
        }
        let group = group_pos.map(|g| (header[g].clone(), labels));
        Self::from_cells(numeric.into_iter().map(|(_, c)| c).collect(), cells, group)
    }

    pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Self> {
        let f = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(std::io::BufReader::new(f), schema)
    }

    /// Like [`load_csv`](Self::load_csv) but accepts any subset of the schema's columns.
    pub fn load_csv_partial(path: impl AsRef<Path>, schema: &Schema) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref())?;
        let header: Vec<String> = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(bytes.as_slice())
            .headers()?
            .iter()
            .map(str::to_string)
            .collect();
        Self::from_csv_reader(bytes.as_slice(), &schema.restrict(&header)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = self.column_names();
        if let Some(g) = &self.group_column {
            header.push(g.clone());
        }
        w.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec: Vec<String> = (0..self.n_cols())
                .map(|j| self.value(i, j).map(|v| v.to_string()).unwrap_or_default())
                .collect();
            if self.group_column.is_some() {
                rec.push(self.group[i].clone().unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|source| Error::Write {
            path: path.to_path_buf(),
            source,
        })?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Schema describing this dataset (numeric columns, then the group column).
    pub fn schema(&self) -> Schema {
        let mut cols = self.columns.clone();
        if let Some(g) = &self.group_column {
            cols.push(ColumnSpec::new(g, "", ColumnKind::Group));
        }
        Schema::new(cols).expect("dataset columns form a valid schema")
    }

    // -----------------------------------------------------------------------
    // Groups
    // -----------------------------------------------------------------------

    /// Partition rows by group label. Labels are returned in sorted order.
    pub fn split_by_group(&self) -> Result<BTreeMap<String, TabularDataset>> {
        let gname = self
            .group_column
            .as_ref()
            .ok_or_else(|| Error::Validation("dataset has no group column".into()))?;
        let mut rows: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, g) in self.group.iter().enumerate() {
            let label = g.as_ref().ok_or_else(|| {
                Error::Validation(format!("row {i} has no '{gname}' label"))
            })?;
            rows.entry(label.clone()).or_default().push(i);
        }
        rows.into_iter()
            .map(|(label, idx)| Ok((label, self.select_rows(&idx)?)))
            .collect()
    }

    /// Append a 0/1 feature column that is 1 where the group label equals `from_group`.
    pub fn add_indicator(&self, name: &str, from_group: &str) -> Result<Self> {
        let gname = self
            .group_column
            .as_ref()
            .ok_or_else(|| Error::Validation("dataset has no group column".into()))?;
        if self.columns.iter().any(|c| c.name == name) || gname == name {
            return Err(Error::Schema(format!("column '{name}' already exists")));
        }
        let mut out = self.clone();
        out.columns
            .push(ColumnSpec::new(name, "dimensionless", ColumnKind::Feature));
        for (i, g) in self.group.iter().enumerate() {
            let label = g.as_ref().ok_or_else(|| {
                Error::Validation(format!("row {i} has no '{gname}' label"))
            })?;
            out.values[i].push(if label == from_group { 1.0 } else { 0.0 });
            out.missing[i].push(false);
        }
        Ok(out)
    }

    // -----------------------------------------------------------------------
    // Summary statistics
    // -----------------------------------------------------------------------

    pub fn summarize(&self) -> SummaryStats {
        let n = self.n_rows();
        let columns = self
            .columns
            .iter()
            .enumerate()
            .map(|(j, spec)| {
                let obs = self.observed(j);
                let k = obs.len();
                let mean = (k > 0).then(|| obs.iter().sum::<f64>() / k as f64);
                let sd = match mean {
                    Some(m) if k > 1 => Some(
                        (obs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (k - 1) as f64)
                            .sqrt(),
                    ),
                    _ => None,
                };
                ColumnSummary {
                    name: spec.name.clone(),
                    unit: spec.unit.clone(),
                    n_observed: k,
                    mean,
                    sd,
                    missing_pct: 100.0 * (n - k) as f64 / n as f64,
                }
            })
            .collect();
        SummaryStats { n_rows: n, columns }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub unit: String,
    pub n_observed: usize,
    /// `None` when the column is fully missing.
    pub mean: Option<f64>,
    /// Sample SD (n - 1 denominator); `None` with fewer than two observations.
    pub sd: Option<f64>,
    pub missing_pct: f64,
}

impl ColumnSummary {
    pub fn missing_pct_rounded(&self) -> u32 {
        self.missing_pct.round() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n_rows: usize,
    pub columns: Vec<ColumnSummary>,
}

impl SummaryStats {
    pub fn get(&self, name: &str) -> Option<&ColumnSummary> {
        self.columns.iter().find(|c| c.name == name)
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "NA".into())
}

/// Table-1 style report: one block of (mean, SD, missing %) per group.
pub fn format_stats_report(groups: &[(String, SummaryStats)]) -> String {
    let mut out = String::new();
    let mut header = format!("{:<18} {:<6}", "Feature", "Unit");
    for (g, s) in groups {
        header.push_str(&format!(" | {:^30}", format!("{g} (n={})", s.n_rows)));
    }
    out.push_str(&header);
    out.push('\n');
    let mut sub = format!("{:<18} {:<6}", "", "");
    for _ in groups {
        sub.push_str(&format!(" | {:>10} {:>10} {:>8}", "Mean", "S.D.", "Rmiss%"));
    }
    out.push_str(&sub);
    out.push('\n');
    if let Some((_, first)) = groups.first() {
        for c in &first.columns {
            let mut line = format!("{:<18} {:<6}", c.name, c.unit);
            for (_, s) in groups {
                let cs = s.get(&c.name);
                line.push_str(&format!(
                    " | {:>10} {:>10} {:>8}",
                    fmt_opt(cs.and_then(|x| x.mean), 3),
                    fmt_opt(cs.and_then(|x| x.sd), 3),
                    cs.map(|x| x.missing_pct_rounded().to_string())
                        .unwrap_or_else(|| "NA".into())
                ));
            }
            out.push_str(&line);
            out.push('\n');
        }
    }
    out
}

/// Long-format CSV: `group,name,unit,n_observed,mean,sd,missing_pct`.
pub fn write_stats_csv<W: Write>(groups: &[(String, SummaryStats)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "name", "unit", "n_observed", "mean", "sd", "missing_pct"])?;
    for (g, s) in groups {
        for c in &s.columns {
            w.write_record([
                g.clone(),
                c.name.clone(),
                c.unit.clone(),
                c.n_observed.to_string(),
                c.mean.map(|v| v.to_string()).unwrap_or_else(|| "NA".into()),
                c.sd.map(|v| v.to_string()).unwrap_or_else(|| "NA".into()),
                c.missing_pct.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_schema() -> Schema {
        Schema::new(vec![
            ColumnSpec::new("a", "m", ColumnKind::Feature),
            ColumnSpec::new("b", "s", ColumnKind::Feature),
            ColumnSpec::new("y", "m", ColumnKind::Target),
            ColumnSpec::new("g", "", ColumnKind::Group),
        ])
        .unwrap()
    }

    #[test]
    fn csv_with_one_empty_cell_has_one_mask_bit() {
        let csv = "a,b,y,g\n1,2,3,men\n4,,6,women\n";
        let d = TabularDataset::from_csv_reader(csv.as_bytes(), &small_schema()).unwrap();
        assert_eq!(d.n_rows(), 2);
        assert_eq!(d.missing_count(), 1);
        assert!(d.is_missing(1, 1));
        assert_eq!(d.value(1, 2), Some(6.0));
        assert_eq!(d.group_labels()[1].as_deref(), Some("women"));
    }

    #[test]
    fn na_sentinel_is_case_insensitive() {
        let csv = "a,b,y,g\nNA,na,Na,m\n";
        let d = TabularDataset::from_csv_reader(csv.as_bytes(), &small_schema()).unwrap();
        assert_eq!(d.missing_count(), 3);
    }

    #[test]
    fn unknown_column_is_schema_error() {
        let csv = "a,b,y,g,zzz\n1,2,3,m,4\n";
        let e = TabularDataset::from_csv_reader(csv.as_bytes(), &small_schema()).unwrap_err();
        assert!(matches!(e, Error::Schema(_)), "{e}");
    }

    #[test]
    fn absent_schema_column_is_schema_error() {
        let csv = "a,y,g\n1,3,m\n";
        let e = TabularDataset::from_csv_reader(csv.as_bytes(), &small_schema()).unwrap_err();
        assert!(matches!(e, Error::Schema(_)));
    }

    #[test]
    fn bad_cell_reports_location() {
        let csv = "a,b,y,g\n1,2,3,m\n1,abc,3,m\n";
        match TabularDataset::from_csv_reader(csv.as_bytes(), &small_schema()).unwrap_err() {
            Error::Parse { row, column, value } => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
                assert_eq!(value, "abc");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn schema_rejects_duplicates() {
        let e = Schema::new(vec![
            ColumnSpec::new("a", "", ColumnKind::Feature),
            ColumnSpec::new("a", "", ColumnKind::Target),
        ]);
        assert!(e.is_err());
        let json = r#"[{"name":"x","unit":"m","kind":"feature"},{"name":"x","unit":"m","kind":"target"}]"#;
        assert!(serde_json::from_str::<Schema>(json).is_err());
    }

    #[test]
    fn long_jump_schema_shape() {
        let s = Schema::long_jump();
        let numeric = s.columns().iter().filter(|c| c.kind != ColumnKind::Group).count();
        assert_eq!(numeric, 45);
        assert_eq!(s.group_column().unwrap().name, "Gender");
        let back: Schema = serde_json::from_str(&s.to_json_pretty()).unwrap();
        assert_eq!(back, s);
    }

    fn one_col(vals: &[Option<f64>]) -> TabularDataset {
        TabularDataset::from_cells(
            vec![ColumnSpec::new("x", "", ColumnKind::Feature)],
            vals.iter().map(|v| vec![*v]).collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn constant_column_summary() {
        let s = one_col(&[Some(1.0), Some(1.0), Some(1.0)]).summarize();
        let c = &s.columns[0];
        assert_eq!(c.mean, Some(1.0));
        assert_eq!(c.sd, Some(0.0));
        assert_eq!(c.missing_pct, 0.0);
    }

    #[test]
    fn fully_missing_column_has_undefined_stats() {
        let s = one_col(&[None, None]).summarize();
        assert_eq!(s.columns[0].mean, None);
        assert_eq!(s.columns[0].sd, None);
        assert_eq!(s.columns[0].missing_pct, 100.0);
    }

    #[test]
    fn masked_values_never_leak_into_summary() {
        let mut d = one_col(&[Some(2.0), None, Some(4.0)]);
        let before = d.summarize();
        d.set_raw(1, 0, 1e9);
        assert_eq!(before, d.summarize());
        assert_eq!(before.columns[0].mean, Some(3.0));
        assert_eq!(before.columns[0].missing_pct_rounded(), 33);
    }

    fn grouped(labels: &[&str]) -> TabularDataset {
        TabularDataset::from_cells(
            vec![ColumnSpec::new("x", "", ColumnKind::Feature)],
            (0..labels.len()).map(|i| vec![Some(i as f64)]).collect(),
            Some((
                "g".into(),
                labels.iter().map(|l| Some(l.to_string())).collect(),
            )),
        )
        .unwrap()
    }

    #[test]
    fn split_by_group_partitions_rows() {
        let d = grouped(&["men", "women", "men", "women", "women"]);
        let parts = d.split_by_group().unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts["men"].n_rows(), 2);
        assert_eq!(parts["women"].n_rows(), 3);
        assert_eq!(parts["men"].observed(0), vec![0.0, 2.0]);
        assert!(!parts.contains_key("other"));
    }

    #[test]
    fn single_group_split_is_identity() {
        let d = grouped(&["men", "men"]);
        let parts = d.split_by_group().unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts["men"], d);
    }

    #[test]
    fn split_rejects_unlabelled_row() {
        let mut d = grouped(&["men", "men"]);
        d.group[1] = None;
        assert!(matches!(d.split_by_group(), Err(Error::Validation(_))));
        let no_group = one_col(&[Some(1.0)]);
        assert!(no_group.split_by_group().is_err());
    }

    #[test]
    fn indicator_column() {
        let d = grouped(&["men", "women", "women"]);
        let e = d.add_indicator("isFemale", "women").unwrap();
        let j = e.column_index("isFemale").unwrap();
        assert_eq!(e.observed(j).iter().sum::<f64>(), 2.0);
        assert!(e.add_indicator("isFemale", "women").is_err());
        let men = grouped(&["men", "men"]).add_indicator("isFemale", "women").unwrap();
        assert_eq!(men.observed(1), vec![0.0, 0.0]);
    }

    #[test]
    fn csv_roundtrip_preserves_mask_and_labels() {
        let csv = "a,b,y,g\n1.5,,3,men\n4,5,,women\n";
        let d = TabularDataset::from_csv_reader(csv.as_bytes(), &small_schema()).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = TabularDataset::from_csv_reader(buf.as_slice(), &d.schema()).unwrap();
        assert_eq!(back.cells(), d.cells());
        assert_eq!(back.group_labels(), d.group_labels());
    }
}

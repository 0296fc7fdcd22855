//! Long-format longitudinal input: loading, validation and risk sets.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::table::{LevelMap, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Survival,
    BinaryEof,
    ContinuousEof,
}

impl OutcomeKind {
    pub fn is_eof(self) -> bool {
        !matches!(self, OutcomeKind::Survival)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnType {
    Binary,
    Continuous,
    Categorical,
    TimeIndex,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnType,
}

impl ColumnSpec {
    pub fn new(name: &str, kind: ColumnType) -> Self {
        Self {
            name: name.to_string(),
            kind,
        }
    }
}

/// Column roles of the input file.
#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub id: String,
    pub time: String,
    pub outcome: String,
    pub compevent: Option<String>,
    pub outcome_kind: OutcomeKind,
    pub covariates: Vec<ColumnSpec>,
    pub baseline: Vec<ColumnSpec>,
    pub delimiter: u8,
    /// Missing-value token in addition to the empty cell.
    pub missing: String,
}

impl Schema {
    pub fn new(id: &str, time: &str, outcome: &str, outcome_kind: OutcomeKind) -> Self {
        Self {
            id: id.to_string(),
            time: time.to_string(),
            outcome: outcome.to_string(),
            compevent: None,
            outcome_kind,
            covariates: Vec::new(),
            baseline: Vec::new(),
            delimiter: b',',
            missing: "NA".to_string(),
        }
    }

    pub fn with_compevent(mut self, name: &str) -> Self {
        self.compevent = Some(name.to_string());
        self
    }

    pub fn covariate(mut self, name: &str, kind: ColumnType) -> Self {
        self.covariates.push(ColumnSpec::new(name, kind));
        self
    }

    pub fn baseline(mut self, name: &str, kind: ColumnType) -> Self {
        self.baseline.push(ColumnSpec::new(name, kind));
        self
    }

    fn value_columns(&self) -> impl Iterator<Item = &ColumnSpec> {
        self.covariates.iter().chain(&self.baseline)
    }
}

/// A view on one subject's records.
#[derive(Debug, Clone)]
pub struct SubjectHistory<'a> {
    pub id: &'a str,
    pub rows: Range<usize>,
}

/// Validated records sorted by (id, time). Missing cells are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    pub table: Table,
    pub schema: Schema,
    pub levels: LevelMap,
    ids: Vec<String>,
    ranges: Vec<Range<usize>>,
    max_time: usize,
}

impl PanelDataset {
    pub fn n_subjects(&self) -> usize {
        self.ids.len()
    }

    pub fn n_records(&self) -> usize {
        self.table.nrows()
    }

    /// Largest observed time index K.
    pub fn max_time(&self) -> usize {
        self.max_time
    }

    pub fn id(&self, subject: usize) -> &str {
        &self.ids[subject]
    }

    pub fn subject_rows(&self, subject: usize) -> Range<usize> {
        self.ranges[subject].clone()
    }

    pub fn subjects(&self) -> impl Iterator<Item = SubjectHistory<'_>> {
        self.ids.iter().zip(&self.ranges).map(|(id, r)| SubjectHistory {
            id,
            rows: r.clone(),
        })
    }

    pub fn time_column(&self) -> &[f64] {
        self.table.column(&self.schema.time).expect("time column")
    }

    pub fn outcome_column(&self) -> &[f64] {
        self.table.column(&self.schema.outcome).expect("outcome column")
    }

    pub fn compevent_column(&self) -> Option<&[f64]> {
        self.schema
            .compevent
            .as_ref()
            .map(|c| self.table.column(c).expect("compevent column"))
    }

    /// Rows at time `k` whose outcome is observed. With
    /// `include_zero_coded_censored` false, a subject's final record at
    /// `k < K` with outcome 0 and no competing event is treated as censored
    /// within the interval and left out.
    pub fn risk_set(&self, k: usize, include_zero_coded_censored: bool) -> Result<Vec<usize>> {
        if k > self.max_time {
            return Err(Error::Bounds {
                index: k,
                max: self.max_time,
            });
        }
        let y = self.outcome_column();
        let d = self.compevent_column();
        let mut out = Vec::new();
        for r in &self.ranges {
            if r.len() <= k {
                continue;
            }
            let row = r.start + k;
            if y[row].is_nan() {
                continue;
            }
            if !include_zero_coded_censored
                && row + 1 == r.end
                && k < self.max_time
                && y[row] == 0.0
                && d.map_or(true, |d| d[row] != 1.0)
            {
                continue;
            }
            out.push(row);
        }
        Ok(out)
    }

    /// `s` (new id, subject index) pairs with new ids 1..=s. With `rng` absent
    /// the identity mapping is returned, which requires `s = n`.
    pub fn resample_baseline(
        &self,
        s: usize,
        rng: Option<&mut StreamRng>,
    ) -> Result<Vec<(usize, usize)>> {
        if s == 0 {
            return Err(Error::Argument("nsimul must be at least 1".into()));
        }
        let n = self.n_subjects();
        match rng {
            None if s == n => Ok((0..n).map(|i| (i + 1, i)).collect()),
            None => Err(Error::Argument(format!(
                "identity baseline mapping needs s = n ({s} != {n})"
            ))),
            Some(rng) => Ok((1..=s).map(|v| (v, rng.random_range(0..n))).collect()),
        }
    }

    /// Dataset made of the picked subjects (with repetition), relabelled 1..=len.
    pub fn resample_subjects(&self, picks: &[usize]) -> PanelDataset {
        let mut rows = Vec::new();
        let mut ranges = Vec::with_capacity(picks.len());
        for &p in picks {
            let start = rows.len();
            rows.extend(self.ranges[p].clone());
            ranges.push(start..rows.len());
        }
        let max_time = picks
            .iter()
            .map(|&p| self.ranges[p].len() - 1)
            .max()
            .unwrap_or(0);
        PanelDataset {
            table: self.table.select_rows(&rows),
            schema: self.schema.clone(),
            levels: self.levels.clone(),
            ids: (1..=picks.len()).map(|i| i.to_string()).collect(),
            ranges,
            max_time,
        }
    }

    /// Writes the dataset back in the input format.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::WriterBuilder::new()
            .delimiter(self.schema.delimiter)
            .from_writer(w);
        let mut header = vec![self.schema.id.clone(), self.schema.time.clone()];
        header.push(self.schema.outcome.clone());
        header.extend(self.schema.compevent.iter().cloned());
        header.extend(self.schema.value_columns().map(|c| c.name.clone()));
        wr.write_record(&header).map_err(csv_err)?;
        let cols: Vec<(usize, Option<&Vec<String>>)> = header[1..]
            .iter()
            .map(|h| (self.table.index_of(h).expect("schema column"), self.levels.get(h)))
            .collect();
        for (id, r) in self.ids.iter().zip(&self.ranges) {
            for row in r.clone() {
                let mut rec = vec![id.clone()];
                for &(j, levels) in &cols {
                    let v = self.table.get(row, j);
                    rec.push(if v.is_nan() {
                        self.schema.missing.clone()
                    } else if let Some(levels) = levels {
                        levels[v as usize].clone()
                    } else {
                        format!("{v}")
                    });
                }
                wr.write_record(&rec).map_err(csv_err)?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Input(e.to_string())
}

struct RawRecord {
    time: usize,
    line: usize,
    cells: Vec<String>,
}

/// Reads delimited text with a header row and validates it against `schema`.
pub fn load_panel<R: Read>(source: R, schema: &Schema) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn {
                name: name.to_string(),
                available: header.join(", "),
            })
    };
    // Value columns in output order: outcome, compevent, covariates, baseline.
    let mut specs: Vec<ColumnSpec> = Vec::new();
    let outcome_type = match schema.outcome_kind {
        OutcomeKind::ContinuousEof => ColumnType::Continuous,
        _ => ColumnType::Binary,
    };
    specs.push(ColumnSpec::new(&schema.outcome, outcome_type));
    if let Some(d) = &schema.compevent {
        specs.push(ColumnSpec::new(d, ColumnType::Binary));
    }
    specs.extend(schema.value_columns().cloned());
    let mut seen = BTreeSet::new();
    for s in specs.iter().map(|s| &s.name).chain([&schema.id, &schema.time]) {
        if !seen.insert(s.clone()) {
            return Err(Error::Argument(format!("column `{s}` assigned two roles")));
        }
    }
    let id_col = find(&schema.id)?;
    let time_col = find(&schema.time)?;
    let value_cols = specs
        .iter()
        .map(|s| find(&s.name))
        .collect::<Result<Vec<_>>>()?;

    let is_missing = |c: &str| c.is_empty() || c == schema.missing;
    let mut groups: HashMap<String, Vec<RawRecord>> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        let id = rec.get(id_col).unwrap_or("").to_string();
        if is_missing(&id) {
            return Err(Error::Input(format!("line {line}: missing subject id")));
        }
        let t = rec.get(time_col).unwrap_or("");
        let time = parse_time(t).ok_or_else(|| {
            Error::Input(format!(
                "line {line}: time `{t}` is not a non-negative integer"
            ))
        })?;
        let cells = value_cols
            .iter()
            .map(|&c| rec.get(c).unwrap_or("").to_string())
            .collect();
        groups.entry(id).or_default().push(RawRecord { time, line, cells });
    }
    if groups.is_empty() {
        return Err(Error::Input("no data records".into()));
    }

    let mut ids: Vec<String> = groups.keys().cloned().collect();
    if ids.iter().all(|s| s.parse::<i64>().is_ok()) {
        ids.sort_by_key(|s| s.parse::<i64>().expect("checked integer"));
    } else {
        ids.sort();
    }

    let mut levels = LevelMap::new();
    for (j, s) in specs.iter().enumerate() {
        if s.kind == ColumnType::Categorical {
            let set: BTreeSet<&str> = groups
                .values()
                .flatten()
                .map(|r| r.cells[j].as_str())
                .filter(|c| !is_missing(c))
                .collect();
            levels.insert(s.name.clone(), set.into_iter().map(str::to_string).collect());
        }
    }

    let nrows: usize = groups.values().map(Vec::len).sum();
    let mut time = Vec::with_capacity(nrows);
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(nrows); specs.len()];
    let mut ranges = Vec::with_capacity(ids.len());
    let mut max_time = 0;
    for id in &ids {
        let recs = groups.get_mut(id).expect("grouped id");
        recs.sort_by_key(|r| r.time);
        for (expect, r) in recs.iter().enumerate() {
            if r.time != expect {
                let message = if r.time < expect {
                    format!("duplicate time index k={}", r.time)
                } else if expect == 0 {
                    format!("time index starts at k={} instead of 0", r.time)
                } else {
                    format!("time gap at k={expect}")
                };
                return Err(Error::Structure {
                    subject: id.clone(),
                    message,
                });
            }
        }
        max_time = max_time.max(recs.len() - 1);
        let start = time.len();
        for r in recs.iter() {
            time.push(r.time as f64);
            for (j, s) in specs.iter().enumerate() {
                let cell = &r.cells[j];
                let v = if is_missing(cell) {
                    f64::NAN
                } else if s.kind == ColumnType::Categorical {
                    let lv = &levels[&s.name];
                    lv.binary_search(cell).expect("observed level") as f64
                } else {
                    cell.parse::<f64>().map_err(|_| {
                        Error::Input(format!(
                            "line {}: column `{}`: cannot parse `{cell}` as a number",
                            r.line, s.name
                        ))
                    })?
                };
                values[j].push(v);
            }
        }
        ranges.push(start..time.len());
    }

    let mut table = Table::new(nrows);
    table.set_column(&schema.time, time)?;
    for (s, v) in specs.iter().zip(values) {
        table.set_column(&s.name, v)?;
    }
    let data = PanelDataset {
        table,
        schema: schema.clone(),
        levels,
        ids,
        ranges,
        max_time,
    };
    validate(&data, &specs)?;
    Ok(data)
}

fn parse_time(s: &str) -> Option<usize> {
    if let Ok(t) = s.parse::<usize>() {
        return Some(t);
    }
    let f = s.parse::<f64>().ok()?;
    (f >= 0.0 && f.fract() == 0.0 && f < 1e9).then_some(f as usize)
}

fn validate(data: &PanelDataset, specs: &[ColumnSpec]) -> Result<()> {
    let schema = &data.schema;
    let t = &data.table;
    for s in specs {
        let col = t.column(&s.name)?;
        let may_miss = s.name == schema.outcome;
        for (row, &v) in col.iter().enumerate() {
            if v.is_nan() {
                if !may_miss {
                    return Err(Error::Validation(format!(
                        "column `{}` has a missing value at row {} (only the outcome may be missing)",
                        s.name,
                        row + 1
                    )));
                }
            } else if s.kind == ColumnType::Binary && v != 0.0 && v != 1.0 {
                return Err(Error::Validation(format!(
                    "binary column `{}` has value {v} outside {{0, 1}}",
                    s.name
                )));
            }
        }
    }
    let y = data.outcome_column();
    let d = data.compevent_column();
    for (sid, r) in data.subjects().enumerate() {
        for b in &schema.baseline {
            let col = t.column(&b.name)?;
            let first = col[r.rows.start];
            if col[r.rows.clone()].iter().any(|&v| v != first) {
                return Err(Error::Validation(format!(
                    "baseline covariate `{}` varies within subject {}",
                    b.name,
                    data.id(sid)
                )));
            }
        }
        let last = r.rows.end - 1;
        for row in r.rows.clone() {
            let k = row - r.rows.start;
            if let Some(d) = d {
                if d[row] == 1.0 {
                    if !y[row].is_nan() {
                        return Err(Error::Validation(format!(
                            "subject {}: competing event at k={k} requires a missing outcome",
                            r.id
                        )));
                    }
                    if row != last {
                        return Err(Error::Validation(format!(
                            "subject {}: competing event at k={k} is not the last record",
                            r.id
                        )));
                    }
                }
            }
            if schema.outcome_kind == OutcomeKind::Survival && y[row] == 1.0 && row != last {
                return Err(Error::Validation(format!(
                    "subject {}: event at k={k} is not the last record",
                    r.id
                )));
            }
        }
    }
    Ok(())
}

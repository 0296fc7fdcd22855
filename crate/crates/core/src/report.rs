//! Result files: the text table, the JSON document, natural-course plot
//! data, and simulated-data dumps.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::analysis::{AnalysisResult, ResultRow};
use crate::error::{Error, Result};
use crate::inference::Interval;
use crate::panel::OutcomeKind;
use crate::table::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportOptions {
    /// Append the per-model RMSE section to the text table.
    pub rmses: bool,
    pub plot_data: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            rmses: false,
            plot_data: true,
        }
    }
}

/// Fixed seven-decimal rendering; missing values print as `NA`.
pub fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.7}"),
        Some(x) if x.is_nan() => "NA".into(),
        Some(x) => format!("{x}"),
        None => "NA".into(),
    }
}

fn full(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v}")
    }
}

fn ci_cells(ci: Option<Interval>) -> [String; 3] {
    match ci {
        Some(c) => [fmt_value(Some(c.se)), fmt_value(Some(c.lower)), fmt_value(Some(c.upper))],
        None => ["NA".into(), "NA".into(), "NA".into()],
    }
}

fn headers(kind: OutcomeKind, boot: bool) -> Vec<&'static str> {
    let eof = kind.is_eof();
    let mut h = vec!["k", "Interv."];
    if eof {
        h.extend(["NP mean", "g-form mean"]);
        if boot {
            h.extend(["Mean SE", "Mean lower 95% CI", "Mean upper 95% CI"]);
        }
        h.push("Mean ratio");
        if boot {
            h.extend(["MR SE", "MR lower 95% CI", "MR upper 95% CI"]);
        }
        h.push("Mean difference");
        if boot {
            h.extend(["MD SE", "MD lower 95% CI", "MD upper 95% CI"]);
        }
    } else {
        h.extend(["NP risk", "g-form risk"]);
        if boot {
            h.extend(["Risk SE", "Risk lower 95% CI", "Risk upper 95% CI"]);
        }
        h.push("Risk ratio");
        if boot {
            h.extend(["RR SE", "RR lower 95% CI", "RR upper 95% CI"]);
        }
        h.push("Risk difference");
        if boot {
            h.extend(["RD SE", "RD lower 95% CI", "RD upper 95% CI"]);
        }
    }
    h
}

fn cells(r: &ResultRow, boot: bool) -> Vec<String> {
    let mut c = vec![r.k.to_string(), r.intervention.to_string(), fmt_value(r.np), fmt_value(Some(r.estimate))];
    if boot {
        c.extend(ci_cells(r.estimate_ci));
    }
    c.push(fmt_value(r.ratio));
    if boot {
        c.extend(ci_cells(r.ratio_ci));
    }
    c.push(fmt_value(r.difference));
    if boot {
        c.extend(ci_cells(r.difference_ci));
    }
    c
}

fn aligned(rows: &[Vec<String>]) -> String {
    let ncol = rows[0].len();
    let widths: Vec<usize> = (0..ncol).map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
        out.push(' ');
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// The human-readable result table.
pub fn render_text(res: &AnalysisResult, opts: &ReportOptions) -> String {
    let m = &res.metadata;
    let mut s = String::new();
    s.push_str("PREDICTED RISK UNDER MULTIPLE INTERVENTIONS\n\n");
    s.push_str("Intervention \t Description\n");
    for iv in &res.interventions {
        let _ = writeln!(s, "{:<15}{}", iv.index, iv.label);
    }
    let _ = writeln!(s, "\nSample size = {}, Monte Carlo sample size = {}", m.n_subjects, m.nsimul);
    let _ = writeln!(s, "Number of bootstrap samples = {}", m.nsamples);
    let reference = if m.reference == 0 {
        "natural course".to_string()
    } else {
        res.interventions[m.reference].label.clone()
    };
    let _ = writeln!(s, "Reference intervention = {reference} ({})\n", m.reference);
    let boot = m.nsamples > 0;
    let last = res.results.iter().map(|r| r.k).max().unwrap_or(0);
    let mut rows = vec![headers(m.outcome_kind, boot).into_iter().map(String::from).collect::<Vec<_>>()];
    rows.extend(
        res.results
            .iter()
            .filter(|r| res.all_times || r.k == last)
            .map(|r| cells(r, boot)),
    );
    s.push_str(&aligned(&rows));
    if let Some(hr) = &res.hazard_ratio {
        let (a, b) = hr.interventions;
        let _ = write!(s, "\nHazard ratio ({a} vs {b}) = {}", fmt_value(hr.estimate));
        if let Some(ci) = hr.interval {
            let _ = write!(
                s,
                ", SE = {}, 95% CI = ({}, {})",
                fmt_value(Some(ci.se)),
                fmt_value(Some(ci.lower)),
                fmt_value(Some(ci.upper))
            );
        }
        s.push('\n');
    }
    if opts.rmses {
        s.push_str("\n RMSE Values\n");
        let mut rows = vec![vec!["Model".to_string(), "RMSE".to_string()]];
        rows.extend(res.models.iter().map(|m| vec![m.name.clone(), fmt_value(Some(m.rmse))]));
        s.push_str(&aligned(&rows));
    }
    s
}

pub fn render_json(res: &AnalysisResult) -> Result<String> {
    serde_json::to_string_pretty(res).map_err(|e| Error::Input(format!("cannot serialise results: {e}")))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Input(format!("cannot write CSV: {e}"))
}

/// `k,quantity,nonparametric,parametric` rows for the natural course.
pub fn render_plotdata(res: &AnalysisResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "quantity", "nonparametric", "parametric"]).map_err(csv_err)?;
    for r in &res.natural_course {
        let f = |v: Option<f64>| v.map_or("NA".to_string(), full);
        w.write_record([r.k.to_string(), r.quantity.clone(), f(r.nonparametric), f(r.parametric)])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

pub fn render_table_csv(t: &Table) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(t.names()).map_err(csv_err)?;
    for i in 0..t.nrows() {
        w.write_record((0..t.names().len()).map(|j| full(t.get(i, j)))).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

/// File-name-safe form of an intervention label.
pub fn slug(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect();
    let s = s.trim_matches('_').to_string();
    if s.is_empty() {
        "intervention".into()
    } else {
        s
    }
}

/// Writes `results.txt`, `results.json`, `natural_course_plotdata.csv` and
/// any `simdata.<label>.csv` files.
pub fn write_outputs(res: &AnalysisResult, dir: &Path, opts: &ReportOptions) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.txt"), render_text(res, opts))?;
    fs::write(dir.join("results.json"), render_json(res)?)?;
    if opts.plot_data {
        fs::write(dir.join("natural_course_plotdata.csv"), render_plotdata(res)?)?;
    }
    let mut used = std::collections::BTreeSet::new();
    for (i, (label, table)) in res.sim_data.iter().enumerate() {
        let mut name = slug(label);
        if !used.insert(name.clone()) {
            name = format!("{name}_{i}");
            used.insert(name.clone());
        }
        fs::write(dir.join(format!("simdata.{name}.csv")), render_table_csv(table)?)?;
    }
    Ok(())
}

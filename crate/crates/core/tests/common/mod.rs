#![allow(dead_code)]

use std::ops::Range;
use std::sync::Arc;

use gformula::covariate::{CovType, CovariateSpec};
use gformula::engine::{ModelSpec, Plugins};
use gformula::error::Result;
use gformula::formula::parse_formula;
use gformula::history::{HistoryKind, HistoryPlugin, HistorySpec};
use gformula::panel::{load_panel, ColumnType, OutcomeKind, PanelDataset, Schema};
use gformula::table::Table;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Coefficients of a discrete data-generating process with a binary
/// confounder `L`, binary treatment `A`, survival outcome `Y` and optional
/// competing event `D`.
#[derive(Debug, Clone)]
pub struct Dgp {
    pub n: usize,
    pub time_points: usize,
    pub l0: f64,
    /// L_k: intercept, lag L, lag A.
    pub l: [f64; 3],
    /// A_k: intercept, L_k, lag A.
    pub a: [f64; 3],
    /// Y_k: intercept, L_k, A_k.
    pub y: [f64; 3],
    /// D_k: intercept, L_k (None: no competing events).
    pub d: Option<[f64; 2]>,
    /// Probability of dropping out after an event-free interval.
    pub censor: f64,
}

impl Dgp {
    pub fn basic(n: usize, time_points: usize) -> Self {
        Self {
            n,
            time_points,
            l0: 0.4,
            l: [-0.8, 1.2, -0.7],
            a: [-0.5, 0.9, 1.5],
            y: [-2.2, 0.8, -0.6],
            d: None,
            censor: 0.0,
        }
    }

    /// Treatment is a fair coin independent of everything; Y ignores A.
    pub fn null(n: usize, time_points: usize) -> Self {
        Self {
            l: [-0.8, 1.2, 0.0],
            a: [0.0, 0.0, 0.0],
            y: [-2.0, 0.8, 0.0],
            ..Self::basic(n, time_points)
        }
    }

    pub fn csv(&self, seed: u64) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = String::from("id,t,L,A,Y");
        if self.d.is_some() {
            out.push_str(",D");
        }
        out.push('\n');
        for id in 1..=self.n {
            let (mut l, mut a) = (0.0, 0.0);
            for k in 0..self.time_points {
                if k == 0 {
                    l = rng.random_bool(self.l0) as u8 as f64;
                    a = rng.random_bool(expit(self.a[0] + self.a[1] * l)) as u8 as f64;
                } else {
                    let pl = expit(self.l[0] + self.l[1] * l + self.l[2] * a);
                    l = rng.random_bool(pl) as u8 as f64;
                    a = rng.random_bool(expit(self.a[0] + self.a[1] * l + self.a[2] * a)) as u8 as f64;
                }
                if let Some(d) = self.d {
                    if rng.random_bool(expit(d[0] + d[1] * l)) {
                        out.push_str(&format!("{id},{k},{l},{a},NA,1\n"));
                        break;
                    }
                }
                let y = rng.random_bool(expit(self.y[0] + self.y[1] * l + self.y[2] * a)) as u8;
                let tail = if self.d.is_some() { ",0" } else { "" };
                out.push_str(&format!("{id},{k},{l},{a},{y}{tail}\n"));
                if y == 1 || (k + 1 < self.time_points && rng.random_bool(self.censor)) {
                    break;
                }
            }
        }
        out
    }

    pub fn schema(&self) -> Schema {
        let mut s = Schema::new("id", "t", "Y", OutcomeKind::Survival)
            .covariate("L", ColumnType::Binary)
            .covariate("A", ColumnType::Binary);
        if self.d.is_some() {
            s = s.with_compevent("D");
        }
        s
    }

    pub fn panel(&self, seed: u64) -> PanelDataset {
        load_panel(self.csv(seed).as_bytes(), &self.schema()).expect("generated panel loads")
    }
}

/// Joint cell code of (variable, lag) pairs at each time, written to
/// `{prefix}_cell`. Lags before time 0 read as 0.
pub struct CellHistory {
    pub prefix: String,
    pub parts: Vec<(String, usize)>,
}

impl HistoryPlugin for CellHistory {
    fn prefix(&self) -> &str {
        &self.prefix
    }

    fn apply(&self, table: &mut Table, subjects: &[Range<usize>], _: &[String], _: &str, k: usize) -> Result<()> {
        let cols = self
            .parts
            .iter()
            .map(|(v, _)| table.index_of(v))
            .collect::<Result<Vec<_>>>()?;
        let out = table.ensure_column(&format!("{}_cell", self.prefix));
        for r in subjects {
            if r.len() <= k {
                continue;
            }
            let mut code = 0.0;
            for ((_, lag), &c) in self.parts.iter().zip(&cols) {
                let v = if k >= *lag { table.get(r.start + k - lag, c) } else { 0.0 };
                code = code * 8.0 + v;
            }
            table.set(r.start + k, out, code);
        }
        Ok(())
    }
}

fn parts(p: &[(&str, usize)]) -> Vec<(String, usize)> {
    p.iter().map(|(v, l)| (v.to_string(), *l)).collect()
}

/// Saturated models for the discrete system: every conditional law is a
/// factor of the full relevant history cell.
pub fn saturated(competing: bool) -> (ModelSpec, Plugins) {
    let mut plugins = Plugins::default();
    let mut histories = Vec::new();
    for (name, p) in [
        ("cl", parts(&[("L", 1), ("A", 1)])),
        ("ca", parts(&[("L", 0), ("L", 1), ("A", 1)])),
        ("cy", parts(&[("t", 0), ("L", 0), ("A", 0), ("L", 1), ("A", 1)])),
    ] {
        let id = plugins
            .histories
            .register(name, Arc::new(CellHistory { prefix: name.into(), parts: p }))
            .unwrap();
        histories.push(HistorySpec::new(HistoryKind::Custom(id), &["L", "A"], 0));
    }
    let covs = vec![
        CovariateSpec::new("L", CovType::Binary, Some(parse_formula("L ~ factor(cl_cell)").unwrap())),
        CovariateSpec::new("A", CovType::Binary, Some(parse_formula("A ~ factor(ca_cell)").unwrap())),
    ];
    let mut m = ModelSpec::new(covs, histories, parse_formula("Y ~ factor(cy_cell)").unwrap());
    if competing {
        m.compevent_model = Some(parse_formula("D ~ factor(cy_cell)").unwrap());
    } else {
        m.competing_as_censoring = true;
    }
    (m, plugins)
}

/// Main-effects models with lagged histories.
pub fn main_effects(competing: bool) -> ModelSpec {
    let covs = vec![
        CovariateSpec::new("L", CovType::Binary, Some(parse_formula("L ~ lag1_L + lag1_A").unwrap())),
        CovariateSpec::new("A", CovType::Binary, Some(parse_formula("A ~ L + lag1_A").unwrap())),
    ];
    let hist = vec![HistorySpec::new(HistoryKind::Lagged, &["L", "A"], 1)];
    let mut m = ModelSpec::new(covs, hist, parse_formula("Y ~ L + A + t").unwrap());
    if competing {
        m.compevent_model = Some(parse_formula("D ~ L + t").unwrap());
    } else {
        m.competing_as_censoring = true;
    }
    m
}

/// Panel exercising every covariate type: visit indicator `V` with linked
/// normal `W`, absorbing `H`, bounded `B` in [0, 10], zero-inflated `Z`,
/// truncated `T` (> 0), categorical `C`, `Q` carried forward once `H = 1`,
/// treatment `A`, survival outcome `Y`.
pub fn rich_csv(n: usize, time_points: usize, seed: u64) -> String {
    use rand_distr::{Distribution, Normal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).unwrap();
    let mut out = String::from("id,t,V,W,H,B,Z,T,C,Q,A,Y\n");
    for id in 1..=n {
        let (mut w, mut h, mut q, mut a) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let mut missed = 0;
        for k in 0..time_points {
            let mut z = || std.sample(&mut rng);
            let v = if k == 0 || missed >= 2 { 1.0 } else { (z() < 0.25) as u8 as f64 };
            missed = if v == 1.0 { 0 } else { missed + 1 };
            if k == 0 {
                w = z();
            } else if v == 1.0 {
                w = 0.5 * w + 0.3 * a + z();
            }
            h = if h == 1.0 { 1.0 } else { (z() < -1.0 + 0.2 * w) as u8 as f64 };
            let b = (5.0 + 0.8 * w + 2.0 * z()).clamp(0.0, 10.0);
            let zi = if z() < -0.25 { 0.0 } else { (2.0 + 0.3 * w + z()).abs() + 0.1 };
            let t = loop {
                let d = 1.0 + 0.2 * w + z();
                if d > 0.0 {
                    break d;
                }
            };
            let u = z();
            let c = if u < -0.5 + 0.5 * h { "a" } else if u < 0.6 { "b" } else { "c" };
            if k == 0 || h == 0.0 {
                q = 0.5 * q + z();
            }
            a = (z() < -0.3 + 0.3 * w + 1.2 * a) as u8 as f64;
            let y = (z() < -2.2 + 0.2 * w + 0.4 * h - 0.3 * a) as u8;
            out.push_str(&format!("{id},{k},{v},{w},{h},{b},{zi},{t},{c},{q},{a},{y}\n"));
            if y == 1 {
                break;
            }
        }
    }
    out
}

pub fn rich_schema() -> Schema {
    let mut s = Schema::new("id", "t", "Y", OutcomeKind::Survival);
    for (name, kind) in [
        ("V", ColumnType::Binary),
        ("W", ColumnType::Continuous),
        ("H", ColumnType::Binary),
        ("B", ColumnType::Continuous),
        ("Z", ColumnType::Continuous),
        ("T", ColumnType::Continuous),
        ("C", ColumnType::Categorical),
        ("Q", ColumnType::Continuous),
        ("A", ColumnType::Binary),
    ] {
        s = s.covariate(name, kind);
    }
    s
}

pub fn rich_model() -> ModelSpec {
    use gformula::covariate::{CmpOp, Condition, Otherwise, Restriction, VisitLink};
    use gformula::fitting::{Direction, Truncation};
    let f = |s: &str| Some(parse_formula(s).unwrap());
    let mut w = CovariateSpec::new("W", CovType::Normal, f("W ~ lag1_W + lag1_A"));
    w.visit = Some(VisitLink { visit: "V".into(), max_missed: 2 });
    let mut t = CovariateSpec::new("T", CovType::TruncatedNormal, f("T ~ W"));
    t.truncation = Some(Truncation { point: 0.0, direction: Direction::Left });
    let mut q = CovariateSpec::new("Q", CovType::Normal, f("Q ~ lag1_Q"));
    q.restriction = Some(Restriction {
        condition: Condition::new("H", CmpOp::Eq, 0.0),
        otherwise: Otherwise::CarryForward,
    });
    let covs = vec![
        CovariateSpec::new("V", CovType::Binary, f("V ~ lag1_W")),
        w,
        CovariateSpec::new("H", CovType::Absorbing, f("H ~ W")),
        CovariateSpec::new("B", CovType::BoundedNormal, f("B ~ W")),
        CovariateSpec::new("Z", CovType::ZeroInflatedNormal, f("Z ~ W")),
        t,
        CovariateSpec::new("C", CovType::Categorical, f("C ~ H")),
        q,
        CovariateSpec::new("A", CovType::Binary, f("A ~ W + lag1_A")),
    ];
    let hist = vec![HistorySpec::new(HistoryKind::Lagged, &["W", "A", "Q"], 1)];
    let mut m = ModelSpec::new(covs, hist, parse_formula("Y ~ W + H + A + factor(C)").unwrap());
    m.competing_as_censoring = true;
    m
}

pub fn rich_panel(n: usize, time_points: usize, seed: u64) -> PanelDataset {
    load_panel(rich_csv(n, time_points, seed).as_bytes(), &rich_schema()).expect("rich panel loads")
}

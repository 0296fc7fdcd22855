//! Derived history columns: lags, cumulative averages, lagged cumulative
//! averages, and user plugins.
//!
//! Subjects are given as contiguous row ranges whose i-th row is time i.
//! Observed tables may hold fewer rows for some subjects than simulated ones.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::table::Table;

const RESERVED: [&str; 3] = ["lag", "cumavg", "lag_cumavg"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HistoryKind {
    Lagged,
    CumAvg,
    LagAvg,
    /// A registered plugin, by id.
    Custom(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistorySpec {
    pub kind: HistoryKind,
    pub variables: Vec<String>,
    /// Number of lags `r` for lagged and lagged-average histories.
    pub max_lag: usize,
}

impl HistorySpec {
    pub fn new(kind: HistoryKind, variables: &[&str], max_lag: usize) -> Self {
        Self {
            kind,
            variables: variables.iter().map(|s| s.to_string()).collect(),
            max_lag,
        }
    }

    /// Column names this history writes for `var`.
    pub fn columns_for(&self, var: &str, registry: &HistoryRegistry) -> Vec<String> {
        match &self.kind {
            HistoryKind::Lagged => (1..=self.max_lag).map(|i| format!("lag{i}_{var}")).collect(),
            HistoryKind::CumAvg => vec![format!("cumavg_{var}")],
            HistoryKind::LagAvg => (1..=self.max_lag)
                .map(|i| format!("lag_cumavg{i}_{var}"))
                .collect(),
            HistoryKind::Custom(id) => registry
                .get(id)
                .map(|p| vec![format!("{}_{var}", p.prefix())])
                .unwrap_or_default(),
        }
    }
}

/// Largest `i` referenced as `lag{i}_{var}` (lagged) or `lag_cumavg{i}_{var}`
/// (lagged average) among `names`; 0 when none is.
pub fn infer_max_lag<'a>(kind: &HistoryKind, var: &str, names: impl IntoIterator<Item = &'a str>) -> usize {
    let head = match kind {
        HistoryKind::Lagged => "lag",
        HistoryKind::LagAvg => "lag_cumavg",
        _ => return 0,
    };
    let tail = format!("_{var}");
    names
        .into_iter()
        .filter_map(|n| n.strip_prefix(head)?.strip_suffix(tail.as_str())?.parse::<usize>().ok())
        .max()
        .unwrap_or(0)
}

/// A user-defined history. `apply` updates, in place, the rows at time `k`
/// of every subject that has one; it must only read rows at times `<= k`.
/// Every column it writes must be named `{prefix}_...`.
pub trait HistoryPlugin: Send + Sync {
    fn prefix(&self) -> &str;
    fn apply(
        &self,
        table: &mut Table,
        subjects: &[Range<usize>],
        variables: &[String],
        time_name: &str,
        k: usize,
    ) -> Result<()>;
}

#[derive(Clone, Default)]
pub struct HistoryRegistry {
    plugins: BTreeMap<String, Arc<dyn HistoryPlugin>>,
}

impl fmt::Debug for HistoryRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.plugins.keys()).finish()
    }
}

impl HistoryRegistry {
    /// Registers `plugin` under `id`, which is returned.
    pub fn register(&mut self, id: &str, plugin: Arc<dyn HistoryPlugin>) -> Result<String> {
        let prefix = plugin.prefix();
        if prefix.is_empty() || RESERVED.iter().any(|r| prefix.starts_with(r)) {
            return Err(Error::Plugin(format!(
                "history plugin prefix `{prefix}` collides with a reserved prefix (lag, cumavg, lag_cumavg)"
            )));
        }
        if self.plugins.contains_key(id) {
            return Err(Error::Plugin(format!("history plugin `{id}` already registered")));
        }
        self.plugins.insert(id.to_string(), plugin);
        Ok(id.to_string())
    }

    pub fn get(&self, id: &str) -> Option<&Arc<dyn HistoryPlugin>> {
        self.plugins.get(id)
    }
}

fn value_at(table: &Table, x: usize, r: &Range<usize>, t: usize) -> f64 {
    table.get(r.start + t, x)
}

fn cumavg(table: &Table, x: usize, r: &Range<usize>, through: usize) -> f64 {
    let s: f64 = (0..=through).map(|t| value_at(table, x, r, t)).sum();
    s / (through + 1) as f64
}

/// Updates the history columns of `spec` at time `k`. With `only` set, just
/// that variable's columns are refreshed.
pub fn apply_history(
    table: &mut Table,
    subjects: &[Range<usize>],
    spec: &HistorySpec,
    k: usize,
    time_name: &str,
    registry: &HistoryRegistry,
    only: Option<&str>,
) -> Result<()> {
    if let HistoryKind::Custom(id) = &spec.kind {
        let plugin = registry
            .get(id)
            .ok_or_else(|| Error::Plugin(format!("unknown history plugin `{id}`")))?;
        let before = table.names().len();
        plugin.apply(table, subjects, &spec.variables, time_name, k)?;
        let prefix = format!("{}_", plugin.prefix());
        if let Some(bad) = table.names()[before..].iter().find(|n| !n.starts_with(&prefix)) {
            return Err(Error::Plugin(format!(
                "history plugin `{id}` created column `{bad}` outside its prefix `{prefix}`"
            )));
        }
        return Ok(());
    }
    for var in &spec.variables {
        if only.is_some_and(|o| o != var) {
            continue;
        }
        let x = table.index_of(var)?;
        for (i, name) in spec.columns_for(var, registry).iter().enumerate() {
            let lag = i + 1;
            let out = table.ensure_column(name);
            for r in subjects {
                if r.len() <= k {
                    continue;
                }
                let v = match spec.kind {
                    HistoryKind::Lagged if k >= lag => value_at(table, x, r, k - lag),
                    HistoryKind::LagAvg if k >= lag => cumavg(table, x, r, k - lag),
                    HistoryKind::CumAvg => cumavg(table, x, r, k),
                    _ => 0.0,
                };
                table.set(r.start + k, out, v);
            }
        }
    }
    Ok(())
}

/// A history spec with its columns resolved against a table layout whose
/// history columns already exist.
pub struct BoundHistory {
    kind: HistoryKind,
    /// (source column, output columns) per variable.
    entries: Vec<(usize, Vec<usize>)>,
    plugin: Option<Arc<dyn HistoryPlugin>>,
    variables: Vec<String>,
}

impl BoundHistory {
    pub fn bind(spec: &HistorySpec, table: &Table, registry: &HistoryRegistry) -> Result<Self> {
        let plugin = match &spec.kind {
            HistoryKind::Custom(id) => Some(
                registry
                    .get(id)
                    .cloned()
                    .ok_or_else(|| Error::Plugin(format!("unknown history plugin `{id}`")))?,
            ),
            _ => None,
        };
        let mut entries = Vec::new();
        if plugin.is_none() {
            for var in &spec.variables {
                let outs = spec
                    .columns_for(var, registry)
                    .iter()
                    .map(|c| table.index_of(c))
                    .collect::<Result<Vec<_>>>()?;
                entries.push((table.index_of(var)?, outs));
            }
        }
        Ok(Self {
            kind: spec.kind.clone(),
            entries,
            plugin,
            variables: spec.variables.clone(),
        })
    }

    /// Whether this history reads column `col`.
    pub fn reads(&self, col: usize) -> bool {
        self.plugin.is_some() || self.entries.iter().any(|(x, _)| *x == col)
    }

    /// Updates the rows at time `k` of one subject; with `only` set, just the
    /// columns derived from that source column.
    pub fn apply(&self, table: &mut Table, subject: &Range<usize>, k: usize, time_name: &str, only: Option<usize>) -> Result<()> {
        if let Some(p) = &self.plugin {
            return p.apply(table, std::slice::from_ref(subject), &self.variables, time_name, k);
        }
        for (x, outs) in &self.entries {
            if only.is_some_and(|o| o != *x) {
                continue;
            }
            for (i, &out) in outs.iter().enumerate() {
                let lag = i + 1;
                let v = match self.kind {
                    HistoryKind::Lagged if k >= lag => value_at(table, *x, subject, k - lag),
                    HistoryKind::LagAvg if k >= lag => cumavg(table, *x, subject, k - lag),
                    HistoryKind::CumAvg => cumavg(table, *x, subject, k),
                    _ => 0.0,
                };
                table.set(subject.start + k, out, v);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
#[allow(clippy::single_range_in_vec_init)]
mod tests {
    use super::*;

    fn table(x: &[f64]) -> (Table, Vec<Range<usize>>) {
        let mut t = Table::new(x.len());
        t.set_column("X", x.to_vec()).unwrap();
        t.set_column("t", (0..x.len()).map(|i| i as f64).collect()).unwrap();
        (t, vec![0..x.len()])
    }

    fn run(spec: &HistorySpec, x: &[f64]) -> Table {
        let (mut t, g) = table(x);
        for k in 0..x.len() {
            apply_history(&mut t, &g, spec, k, "t", &HistoryRegistry::default(), None).unwrap();
        }
        t
    }

    #[test]
    fn builtin_histories() {
        let x = [2.0, 4.0, 6.0];
        let t = run(&HistorySpec::new(HistoryKind::CumAvg, &["X"], 0), &x);
        assert_eq!(t.column("cumavg_X").unwrap(), &[2.0, 3.0, 4.0]);
        let t = run(&HistorySpec::new(HistoryKind::Lagged, &["X"], 2), &x);
        assert_eq!(t.column("lag1_X").unwrap(), &[0.0, 2.0, 4.0]);
        assert_eq!(t.column("lag2_X").unwrap(), &[0.0, 0.0, 2.0]);
        let t = run(&HistorySpec::new(HistoryKind::LagAvg, &["X"], 1), &x);
        assert_eq!(t.column("lag_cumavg1_X").unwrap(), &[0.0, 2.0, 3.0]);
    }

    #[test]
    fn reapplication_is_idempotent() {
        let spec = HistorySpec::new(HistoryKind::CumAvg, &["X"], 0);
        let once = run(&spec, &[1.0, 5.0]);
        let mut twice = once.clone();
        apply_history(&mut twice, &[0..2], &spec, 1, "t", &HistoryRegistry::default(), None).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn infers_lags_from_names() {
        let names = ["lag2_X", "lag1_X", "lag3_Y", "lag_cumavg4_X", "cumavg_X"];
        assert_eq!(infer_max_lag(&HistoryKind::Lagged, "X", names), 2);
        assert_eq!(infer_max_lag(&HistoryKind::LagAvg, "X", names), 4);
        assert_eq!(infer_max_lag(&HistoryKind::Lagged, "Z", names), 0);
    }

    #[test]
    fn missing_variable_is_a_name_error() {
        let (mut t, g) = table(&[1.0]);
        let spec = HistorySpec::new(HistoryKind::CumAvg, &["nope"], 0);
        let e = apply_history(&mut t, &g, &spec, 0, "t", &HistoryRegistry::default(), None);
        assert!(matches!(e, Err(Error::UnknownColumn { .. })));
    }

    struct Bad;
    impl HistoryPlugin for Bad {
        fn prefix(&self) -> &str {
            "lagmax"
        }
        fn apply(&self, _: &mut Table, _: &[Range<usize>], _: &[String], _: &str, _: usize) -> Result<()> {
            Ok(())
        }
    }

    #[test]
    fn reserved_prefixes_are_rejected() {
        let mut reg = HistoryRegistry::default();
        assert!(matches!(reg.register("bad", Arc::new(Bad)), Err(Error::Plugin(_))));
    }
}

//! Columnar working table shared by observed data and simulated trajectories.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};

/// Ordered category labels per categorical column. Cells of a categorical
/// column store the level index as `f64`.
pub type LevelMap = BTreeMap<String, Vec<String>>;

#[derive(Debug, Clone, Default)]
pub struct Table {
    names: Vec<String>,
    index: HashMap<String, usize>,
    columns: Vec<Vec<f64>>,
    nrows: usize,
}

impl Table {
    pub fn new(nrows: usize) -> Self {
        Self {
            nrows,
            ..Self::default()
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn available(&self) -> String {
        self.names.join(", ")
    }

    /// Inserts or replaces a column; returns its index.
    pub fn set_column(&mut self, name: &str, values: Vec<f64>) -> Result<usize> {
        if values.len() != self.nrows {
            return Err(Error::Shape {
                expected: self.nrows,
                found: values.len(),
            });
        }
        Ok(match self.index.get(name) {
            Some(&j) => {
                self.columns[j] = values;
                j
            }
            None => {
                self.names.push(name.to_string());
                self.columns.push(values);
                let j = self.names.len() - 1;
                self.index.insert(name.to_string(), j);
                j
            }
        })
    }

    /// Index of `name`, creating a zero-filled column when absent.
    pub fn ensure_column(&mut self, name: &str) -> usize {
        if let Some(&j) = self.index.get(name) {
            return j;
        }
        self.set_column(name, vec![0.0; self.nrows])
            .expect("fresh column has table length")
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownColumn {
                name: name.to_string(),
                available: self.available(),
            })
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.index_of(name)?])
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.columns[j]
    }

    #[inline]
    pub fn get(&self, row: usize, j: usize) -> f64 {
        self.columns[j][row]
    }

    #[inline]
    pub fn set(&mut self, row: usize, j: usize, v: f64) {
        self.columns[j][row] = v;
    }

    /// New table holding the given rows (in the given order) of every column.
    pub fn select_rows(&self, rows: &[usize]) -> Table {
        let mut t = Table::new(rows.len());
        for (name, col) in self.names.iter().zip(&self.columns) {
            let values = rows.iter().map(|&r| col[r]).collect();
            t.set_column(name, values).expect("selected length");
        }
        t
    }
}

/// Bitwise cell equality, so missing (NaN) cells compare equal.
impl PartialEq for Table {
    fn eq(&self, other: &Self) -> bool {
        self.nrows == other.nrows
            && self.names == other.names
            && self.columns.iter().zip(&other.columns).all(|(a, b)| {
                a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_replace_and_lookup() {
        let mut t = Table::new(2);
        t.set_column("a", vec![1.0, 2.0]).unwrap();
        let j = t.set_column("a", vec![3.0, 4.0]).unwrap();
        assert_eq!(j, 0);
        assert_eq!(t.column("a").unwrap(), &[3.0, 4.0]);
        assert!(matches!(t.column("b"), Err(Error::UnknownColumn { .. })));
        assert!(t.set_column("c", vec![1.0]).is_err());
        let k = t.ensure_column("z");
        assert_eq!(t.col(k), &[0.0, 0.0]);
        assert_eq!(t.select_rows(&[1, 1]).column("a").unwrap(), &[4.0, 4.0]);
    }
}

use super::spline::rcs_fill;
use super::{ModelFormula, Term};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use crate::table::{LevelMap, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    pub column_names: Vec<String>,
    pub values: Matrix<T>,
    pub response: Vec<T>,
}

impl<T: Scalar> DesignMatrix<T> {
    pub fn new(column_names: Vec<String>, values: Matrix<T>, response: Vec<T>) -> Result<Self> {
        if values.cols() != column_names.len() {
            return Err(Error::Shape {
                expected: column_names.len(),
                found: values.cols(),
            });
        }
        if values.rows() != response.len() {
            return Err(Error::Shape {
                expected: values.rows(),
                found: response.len(),
            });
        }
        Ok(Self {
            column_names,
            values,
            response,
        })
    }

    pub fn nrows(&self) -> usize {
        self.values.rows()
    }

    pub fn ncols(&self) -> usize {
        self.values.cols()
    }

    /// Same design in another precision.
    pub fn cast<U: Scalar>(&self) -> DesignMatrix<U> {
        let conv = |x: &T| U::lit(x.as_f64());
        DesignMatrix {
            column_names: self.column_names.clone(),
            values: Matrix::from_vec(
                self.nrows(),
                self.ncols(),
                self.values.as_slice().iter().map(conv).collect(),
            ),
            response: self.response.iter().map(conv).collect(),
        }
    }
}

/// Table-independent description of a design: the formula plus the factor
/// levels captured from the fitting rows. Bind it to a table layout with
/// [`DesignSpec::bind`] to evaluate rows.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub formula: ModelFormula,
    pub column_names: Vec<String>,
    factor_levels: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
enum Piece {
    Var(usize),
    Power(usize, i32),
    Factor(usize, Vec<f64>),
    Spline(usize, Vec<f64>),
}

/// A [`DesignSpec`] with column indices resolved against one table layout.
#[derive(Debug, Clone)]
pub struct BoundDesign {
    pieces: Vec<Piece>,
    width: usize,
}

fn label(value: f64, labels: Option<&Vec<String>>) -> String {
    match labels {
        Some(l) => l[value as usize].clone(),
        None => format!("{value}"),
    }
}

impl DesignSpec {
    pub fn new(
        formula: &ModelFormula,
        table: &Table,
        rows: &[usize],
        levels: &LevelMap,
    ) -> Result<Self> {
        let mut names = vec!["(Intercept)".to_string()];
        let mut factor_levels = Vec::new();
        for term in &formula.terms {
            let v = term.variable();
            let col = table.column(v)?;
            let categorical = levels.get(v);
            if categorical.is_some() && !matches!(term, Term::Factor(_)) {
                return Err(Error::Type(format!(
                    "categorical variable `{v}` must be used as factor({v})"
                )));
            }
            match term {
                Term::Var(_) => names.push(v.to_string()),
                Term::Power(_, p) => names.push(format!("pow({v},{p})")),
                Term::Factor(_) => {
                    let mut lv: Vec<f64> = rows.iter().map(|&r| col[r]).filter(|x| !x.is_nan()).collect();
                    lv.sort_by(f64::total_cmp);
                    lv.dedup();
                    for &l in lv.iter().skip(1) {
                        names.push(format!("{v}={}", label(l, categorical)));
                    }
                    factor_levels.push(lv);
                }
                Term::Spline(_, knots) => {
                    for j in 1..knots.len() - 1 {
                        names.push(format!("{v}.rcs{j}"));
                    }
                }
            }
        }
        Ok(Self {
            formula: formula.clone(),
            column_names: names,
            factor_levels,
        })
    }

    pub fn width(&self) -> usize {
        self.column_names.len()
    }

    pub fn bind(&self, table: &Table) -> Result<BoundDesign> {
        let mut pieces = Vec::with_capacity(self.formula.terms.len());
        let mut factors = self.factor_levels.iter();
        for term in &self.formula.terms {
            let j = table.index_of(term.variable())?;
            pieces.push(match term {
                Term::Var(_) => Piece::Var(j),
                Term::Power(_, p) => Piece::Power(j, *p as i32),
                Term::Factor(_) => Piece::Factor(j, factors.next().expect("levels per factor").clone()),
                Term::Spline(_, k) => Piece::Spline(j, k.clone()),
            });
        }
        Ok(BoundDesign {
            pieces,
            width: self.width(),
        })
    }

    /// Design over `rows` of `table`, response taken from the formula.
    pub fn design(&self, table: &Table, rows: &[usize]) -> Result<DesignMatrix<f64>> {
        let bound = self.bind(table)?;
        let y = table.column(&self.formula.response)?;
        let p = self.width();
        let mut values = Matrix::zeros(rows.len(), p);
        for (i, &r) in rows.iter().enumerate() {
            bound.fill_row(table, r, values.row_mut(i))?;
        }
        let response = rows.iter().map(|&r| y[r]).collect();
        DesignMatrix::new(self.column_names.clone(), values, response)
    }
}

impl BoundDesign {
    pub fn width(&self) -> usize {
        self.width
    }

    /// Writes the design row for `row` into `out` (length = width).
    pub fn fill_row(&self, table: &Table, row: usize, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.width);
        out[0] = 1.0;
        let mut c = 1;
        for piece in &self.pieces {
            match piece {
                Piece::Var(j) => {
                    out[c] = table.get(row, *j);
                    c += 1;
                }
                Piece::Power(j, p) => {
                    out[c] = table.get(row, *j).powi(*p);
                    c += 1;
                }
                Piece::Factor(j, levels) => {
                    let v = table.get(row, *j);
                    let w = levels.len().saturating_sub(1);
                    out[c..c + w].iter_mut().for_each(|o| *o = 0.0);
                    match levels.iter().position(|&l| l == v) {
                        Some(0) => {}
                        Some(i) => out[c + i - 1] = 1.0,
                        None => {
                            return Err(Error::Type(format!(
                                "value {v} of factor column {} was not seen when the model was fit",
                                table.names()[*j]
                            )))
                        }
                    }
                    c += w;
                }
                Piece::Spline(j, knots) => {
                    let w = knots.len() - 2;
                    rcs_fill(table.get(row, *j), knots, &mut out[c..c + w]);
                    c += w;
                }
            }
        }
        Ok(())
    }
}

/// Builds the design matrix for `formula` over `rows` of `table`.
pub fn build_design(
    formula: &ModelFormula,
    table: &Table,
    rows: &[usize],
    levels: &LevelMap,
) -> Result<DesignMatrix<f64>> {
    DesignSpec::new(formula, table, rows, levels)?.design(table, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::{parse_formula, rcs_basis};

    fn table() -> Table {
        let mut t = Table::new(5);
        t.set_column("y", vec![0.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        t.set_column("x", vec![-1.0, 0.0, 0.5, 2.0, 1.0]).unwrap();
        t.set_column("k", vec![0.0, 1.0, 2.0, 3.0, 1.0]).unwrap();
        t.set_column("c", vec![1.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        t
    }

    fn levels() -> LevelMap {
        LevelMap::from([("c".to_string(), vec!["a".to_string(), "b".to_string()])])
    }

    #[test]
    fn intercept_only() {
        let d = build_design(&parse_formula("y ~ 1").unwrap(), &table(), &[0, 1, 2, 3, 4], &levels()).unwrap();
        assert_eq!(d.values, Matrix::from_vec(5, 1, vec![1.0; 5]));
        assert_eq!(d.response, vec![0.0, 1.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn expansions_and_names() {
        let f = parse_formula("y ~ x + pow(x, 2) + factor(k) + rcs(x, -1, 0, 1) + factor(c)").unwrap();
        let rows = [0, 1, 2, 3, 4];
        let d = build_design(&f, &table(), &rows, &levels()).unwrap();
        assert_eq!(
            d.column_names,
            vec!["(Intercept)", "x", "pow(x,2)", "k=1", "k=2", "k=3", "x.rcs1", "c=b"]
        );
        assert_eq!(d.values.row(3)[..6], [1.0, 2.0, 4.0, 0.0, 0.0, 1.0]);
        assert_eq!(d.values.row(3)[6], rcs_basis(2.0, &[-1.0, 0.0, 1.0]).unwrap()[0]);
        assert_eq!(d.values.row(0)[7], 1.0);
        assert_eq!(d.values.row(1)[7], 0.0);
    }

    #[test]
    fn errors() {
        let t = table();
        let e = build_design(&parse_formula("y ~ z").unwrap(), &t, &[0], &levels()).unwrap_err();
        assert!(matches!(e, Error::UnknownColumn { ref available, .. } if available.contains("x")));
        let e = build_design(&parse_formula("y ~ c").unwrap(), &t, &[0], &levels()).unwrap_err();
        assert!(matches!(e, Error::Type(_)));
        let spec = DesignSpec::new(&parse_formula("y ~ factor(k)").unwrap(), &t, &[0, 1], &levels()).unwrap();
        assert!(spec.design(&t, &[2]).is_err());
    }

    #[test]
    fn row_permutation_equivariance() {
        let f = parse_formula("y ~ x + factor(k) + rcs(x, -1, 0, 1)").unwrap();
        let t = table();
        let a = build_design(&f, &t, &[0, 1, 2, 3, 4], &levels()).unwrap();
        let b = build_design(&f, &t, &[4, 3, 2, 1, 0], &levels()).unwrap();
        for i in 0..5 {
            assert_eq!(a.values.row(i), b.values.row(4 - i));
        }
    }
}

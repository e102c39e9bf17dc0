//! Expanding categorical/numeric terms into a dense design matrix.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Column-oriented observations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Frame {
    pub factors: BTreeMap<String, Vec<String>>,
    pub numerics: BTreeMap<String, Vec<f64>>,
    /// Cluster identifiers, when cluster-robust errors are wanted.
    pub clusters: Option<Vec<String>>,
}

impl Frame {
    pub fn len(&self) -> usize {
        self.factors
            .values()
            .map(Vec::len)
            .chain(self.numerics.values().map(Vec::len))
            .next()
            .unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_factor(mut self, name: &str, values: Vec<String>) -> Self {
        self.factors.insert(name.to_string(), values);
        self
    }

    pub fn with_numeric(mut self, name: &str, values: Vec<f64>) -> Self {
        self.numerics.insert(name.to_string(), values);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NumericKind {
    Continuous,
    /// A 0/1 indicator; marginal effects use the 0→1 counterfactual.
    Binary,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Term {
    Numeric { name: String, kind: NumericKind },
    /// Interaction of factors: one dummy per observed level combination,
    /// less the omitted baselines.
    Factors {
        names: Vec<String>,
        /// Level combinations to leave out.
        omit: BTreeSet<Vec<String>>,
        /// Also leave out the first observed level combination.
        drop_first: bool,
    },
}

impl Term {
    pub fn continuous(name: &str) -> Self {
        Term::Numeric {
            name: name.to_string(),
            kind: NumericKind::Continuous,
        }
    }

    pub fn binary(name: &str) -> Self {
        Term::Numeric {
            name: name.to_string(),
            kind: NumericKind::Binary,
        }
    }

    pub fn factors(names: &[&str]) -> Self {
        Term::Factors {
            names: names.iter().map(|s| s.to_string()).collect(),
            omit: BTreeSet::new(),
            drop_first: false,
        }
    }

    /// Single factor with its first level as baseline.
    pub fn factor_drop_first(name: &str) -> Self {
        Term::Factors {
            names: vec![name.to_string()],
            omit: BTreeSet::new(),
            drop_first: true,
        }
    }

    pub fn omitting(mut self, levels: &[&str]) -> Self {
        if let Term::Factors { omit, .. } = &mut self {
            omit.insert(levels.iter().map(|s| s.to_string()).collect());
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DesignSpec {
    pub response: String,
    pub terms: Vec<Term>,
    pub intercept: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    Intercept,
    Numeric(NumericKind),
    /// A dummy for one level combination of factor term `term`.
    Level { term: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ColumnInfo {
    pub name: String,
    pub kind: ColumnKind,
}

/// Expanded design with rows in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub columns: Vec<ColumnInfo>,
    pub clusters: Option<Vec<String>>,
}

impl Design {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    /// Indices of the columns belonging to factor term `term`.
    pub fn term_columns(&self, term: usize) -> Vec<usize> {
        self.columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == ColumnKind::Level { term })
            .map(|(i, _)| i)
            .collect()
    }
}

fn level_name(names: &[String], levels: &[String]) -> String {
    names
        .iter()
        .zip(levels)
        .map(|(n, l)| format!("{n}={l}"))
        .collect::<Vec<_>>()
        .join(":")
}

/// Expands `spec` over `frame` and checks full column rank.
pub fn build_design(spec: &DesignSpec, frame: &Frame) -> Result<Design> {
    let n = frame.len();
    for (name, col) in frame.factors.iter().map(|(k, v)| (k, v.len())).chain(frame.numerics.iter().map(|(k, v)| (k, v.len()))) {
        if col != n {
            return Err(Error::Design(format!("column `{name}` has {col} rows, expected {n}")));
        }
    }
    let y = frame
        .numerics
        .get(&spec.response)
        .ok_or_else(|| Error::Design(format!("response `{}` not in data", spec.response)))?;

    let mut columns: Vec<ColumnInfo> = Vec::new();
    let mut data: Vec<Vec<f64>> = Vec::new();
    if spec.intercept {
        columns.push(ColumnInfo {
            name: "(Intercept)".into(),
            kind: ColumnKind::Intercept,
        });
        data.push(vec![1.0; n]);
    }
    for (t, term) in spec.terms.iter().enumerate() {
        match term {
            Term::Numeric { name, kind } => {
                let col = frame
                    .numerics
                    .get(name)
                    .ok_or_else(|| Error::Design(format!("numeric `{name}` not in data")))?;
                columns.push(ColumnInfo {
                    name: name.clone(),
                    kind: ColumnKind::Numeric(*kind),
                });
                data.push(col.clone());
            }
            Term::Factors {
                names,
                omit,
                drop_first,
            } => {
                let cols: Vec<&Vec<String>> = names
                    .iter()
                    .map(|nm| {
                        frame
                            .factors
                            .get(nm)
                            .ok_or_else(|| Error::Design(format!("factor `{nm}` not in data")))
                    })
                    .collect::<Result<_>>()?;
                let row_levels: Vec<Vec<String>> = (0..n)
                    .map(|i| cols.iter().map(|c| c[i].clone()).collect())
                    .collect();
                let mut levels: BTreeSet<Vec<String>> = row_levels.iter().cloned().collect();
                if *drop_first {
                    if let Some(first) = levels.iter().next().cloned() {
                        levels.remove(&first);
                    }
                }
                for lv in levels.iter().filter(|l| !omit.contains(*l)) {
                    columns.push(ColumnInfo {
                        name: level_name(names, lv),
                        kind: ColumnKind::Level { term: t },
                    });
                    data.push(row_levels.iter().map(|r| f64::from(u8::from(r == lv))).collect());
                }
            }
        }
    }
    if columns.is_empty() {
        return Err(Error::Design("design has no columns".into()));
    }

    // canonical row order makes every fit independent of input order
    let mut order: Vec<usize> = (0..n).collect();
    let row_key = |i: usize| -> (Vec<u64>, u64, Option<&str>) {
        (
            data.iter().map(|c| c[i].to_bits()).collect(),
            y[i].to_bits(),
            frame.clusters.as_ref().map(|c| c[i].as_str()),
        )
    };
    order.sort_by_cached_key(|&i| row_key(i));

    let k = columns.len();
    let x = DMatrix::from_fn(n, k, |r, c| data[c][order[r]]);
    let yv = DVector::from_iterator(n, order.iter().map(|&i| y[i]));
    let clusters = frame
        .clusters
        .as_ref()
        .map(|c| order.iter().map(|&i| c[i].clone()).collect());

    let aliased = collinear_columns(&x);
    if !aliased.is_empty() {
        return Err(Error::RankDeficient(
            aliased.into_iter().map(|j| columns[j].name.clone()).collect(),
        ));
    }
    if n < k {
        return Err(Error::Design(format!("{n} observations for {k} columns")));
    }
    Ok(Design {
        x,
        y: yv,
        columns,
        clusters,
    })
}

/// Columns that are (numerically) linear combinations of earlier ones,
/// found by Gram–Schmidt with reorthogonalisation.
pub fn collinear_columns(x: &DMatrix<f64>) -> Vec<usize> {
    const REL_TOL: f64 = 1e-9;
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut out = Vec::new();
    for j in 0..x.ncols() {
        let orig = x.column(j).into_owned();
        let norm0 = orig.norm();
        if norm0 == 0.0 {
            out.push(j);
            continue;
        }
        let mut v = orig;
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm <= REL_TOL * norm0 {
            out.push(j);
        } else {
            basis.push(v / norm);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn interaction_levels_and_baseline() {
        let frame = Frame::default()
            .with_factor("state", s(&["MH", "MH", "KA", "KA", "GJ", "GJ"]))
            .with_factor("sex", s(&["m", "f", "m", "f", "m", "f"]))
            .with_numeric("y", vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let spec = DesignSpec {
            response: "y".into(),
            terms: vec![Term::factors(&["state", "sex"]).omitting(&["MH", "m"])],
            intercept: false,
        };
        let d = build_design(&spec, &frame).unwrap();
        assert_eq!(d.k(), 5);
        assert!(!d.column_names().contains(&"state=MH:sex=m".to_string()));
        assert!(d.column_names().contains(&"state=MH:sex=f".to_string()));
    }

    #[test]
    fn collinear_dummies_are_named() {
        let frame = Frame::default()
            .with_factor("a", s(&["x", "y", "x", "y"]))
            .with_numeric("y", vec![1.0, 2.0, 3.0, 4.0]);
        let spec = DesignSpec {
            response: "y".into(),
            terms: vec![Term::factors(&["a"])],
            intercept: true,
        };
        match build_design(&spec, &frame) {
            Err(Error::RankDeficient(cols)) => assert_eq!(cols, vec!["a=y".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn row_order_is_canonical() {
        let a = Frame::default()
            .with_numeric("x", vec![3.0, 1.0, 2.0])
            .with_numeric("y", vec![6.0, 2.0, 4.0]);
        let b = Frame::default()
            .with_numeric("x", vec![1.0, 2.0, 3.0])
            .with_numeric("y", vec![2.0, 4.0, 6.0]);
        let spec = DesignSpec {
            response: "y".into(),
            terms: vec![Term::continuous("x")],
            intercept: false,
        };
        assert_eq!(build_design(&spec, &a).unwrap(), build_design(&spec, &b).unwrap());
    }
}

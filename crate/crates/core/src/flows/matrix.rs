use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::microdata::{Sex, YearQuarter};
use crate::panel::{LaborState, Transition};
use crate::table::{self, fmt_opt, RunMeta};

/// Origin rows: the seven observed states, then ALL.
pub const ROWS: usize = 8;
/// Destination columns: the seven observed states, attrit, then ALL.
pub const COLS: usize = 9;
const ALL_ROW: usize = ROWS - 1;
const ALL_COL: usize = COLS - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Period {
    Quarter(YearQuarter),
    Average,
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Period::Quarter(q) => write!(f, "{}:{}", q, q.next()),
            Period::Average => f.write_str("average"),
        }
    }
}

/// Population shares and transition probabilities, both in percent.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowMatrix {
    pub sex: Sex,
    pub period: Period,
    pub shares: [[f64; COLS]; ROWS],
    /// `None` where the origin state is empty.
    pub probabilities: [[Option<f64>; COLS]; ROWS],
    /// Person pairs behind the matrix; for averages, the sum over inputs.
    pub pairs: usize,
}

pub fn row_label(i: usize) -> &'static str {
    if i == ALL_ROW {
        "ALL"
    } else {
        LaborState::OBSERVED[i].label()
    }
}

pub fn col_label(j: usize) -> &'static str {
    if j == ALL_COL {
        "ALL"
    } else {
        LaborState::ALL[j].label()
    }
}

fn totals(mass: &mut [[f64; COLS]; ROWS]) {
    for row in mass.iter_mut().take(ALL_ROW) {
        row[ALL_COL] = row[..ALL_COL].iter().sum();
    }
    for j in 0..COLS {
        mass[ALL_ROW][j] = (0..ALL_ROW).map(|i| mass[i][j]).sum();
    }
}

fn probabilities_of(shares: &[[f64; COLS]; ROWS]) -> [[Option<f64>; COLS]; ROWS] {
    let mut p = [[None; COLS]; ROWS];
    for i in 0..ROWS {
        let occ = shares[i][ALL_COL];
        if occ > 0.0 {
            for j in 0..ALL_COL {
                p[i][j] = Some(100.0 * shares[i][j] / occ);
            }
            p[i][ALL_COL] = Some(100.0);
        }
    }
    p
}

/// Flow matrix for persons of `sex` observed at quarter `t`. Returns `None`
/// (and logs) when nobody qualifies.
pub fn flow_matrix(pairs: &[Transition<'_>], sex: Sex, t: YearQuarter) -> Option<FlowMatrix> {
    let mut mass = [[0.0; COLS]; ROWS];
    let mut n = 0;
    for p in pairs.iter().filter(|p| p.sex == sex && p.quarter() == t) {
        let i = p.from.state.index();
        debug_assert!(i < ALL_ROW, "origin is always observed");
        mass[i][p.destination().index()] += p.from.weight;
        n += 1;
    }
    totals(&mut mass);
    let total = mass[ALL_ROW][ALL_COL];
    if n == 0 || total <= 0.0 {
        log::warn!("no {} person pairs at {t}; flow matrix omitted", sex.label());
        return None;
    }
    let mut shares = mass;
    for row in shares.iter_mut() {
        for v in row.iter_mut() {
            *v = 100.0 * *v / total;
        }
    }
    Some(FlowMatrix {
        sex,
        period: Period::Quarter(t),
        probabilities: probabilities_of(&shares),
        shares,
        pairs: n,
    })
}

/// One matrix per (sex, quarter) present in `pairs`, ordered by sex then
/// quarter.
pub fn flow_matrices(pairs: &[Transition<'_>]) -> Vec<FlowMatrix> {
    let cells: BTreeMap<(Sex, YearQuarter), ()> =
        pairs.iter().map(|p| ((p.sex, p.quarter()), ())).collect();
    cells
        .keys()
        .filter_map(|(s, q)| flow_matrix(pairs, *s, *q))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Averaging {
    /// Plain element-wise mean of shares and of probabilities.
    #[default]
    Unweighted,
    /// Probabilities weighted by each quarter's origin-row occupancy.
    OccupancyWeighted,
}

/// Element-wise average over quarters. Probability entries that are
/// undefined in some quarters are averaged over the quarters defining them.
pub fn average_matrices(matrices: &[FlowMatrix], mode: Averaging) -> Result<FlowMatrix> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::MatrixMismatch("no matrices to average".into()))?;
    if let Some(m) = matrices.iter().find(|m| m.sex != first.sex) {
        return Err(Error::MatrixMismatch(format!(
            "mixed sexes {} and {}",
            first.sex.label(),
            m.sex.label()
        )));
    }
    let k = matrices.len() as f64;
    let mut shares = [[0.0; COLS]; ROWS];
    let mut probabilities = [[None; COLS]; ROWS];
    for i in 0..ROWS {
        for j in 0..COLS {
            shares[i][j] = matrices.iter().map(|m| m.shares[i][j]).sum::<f64>() / k;
            let (mut num, mut den) = (0.0, 0.0);
            for m in matrices {
                if let Some(p) = m.probabilities[i][j] {
                    let w = match mode {
                        Averaging::Unweighted => 1.0,
                        Averaging::OccupancyWeighted => m.shares[i][ALL_COL],
                    };
                    num += w * p;
                    den += w;
                }
            }
            if den > 0.0 {
                probabilities[i][j] = Some(num / den);
            }
        }
    }
    Ok(FlowMatrix {
        sex: first.sex,
        period: Period::Average,
        shares,
        probabilities,
        pairs: matrices.iter().map(|m| m.pairs).sum(),
    })
}

impl FlowMatrix {
    pub fn share(&self, from: LaborState, to: LaborState) -> f64 {
        self.shares[from.index()][to.index()]
    }

    pub fn probability(&self, from: LaborState, to: LaborState) -> Option<f64> {
        self.probabilities[from.index()][to.index()]
    }

    pub fn row_occupancy(&self, from: LaborState) -> f64 {
        self.shares[from.index()][ALL_COL]
    }

    pub fn grand_total(&self) -> f64 {
        self.shares[ALL_ROW][ALL_COL]
    }

    /// Sum of the destination probabilities of row `i`, ALL column excluded.
    pub fn probability_row_sum(&self, i: usize) -> Option<f64> {
        (0..ALL_COL).map(|j| self.probabilities[i][j]).sum()
    }
}

pub const MATRIX_HEADER: [&str; 13] = [
    "sex", "period", "kind", "origin", "slf-emp", "csl-emp", "sal-emp", "unemp", "nopart",
    "sck-emp", "nwrk", "attrit", "ALL",
];

/// Writes matrices as long-form rows: one line per (matrix, kind, origin).
pub fn write_matrices<W: Write>(out: W, meta: Option<&RunMeta>, matrices: &[FlowMatrix]) -> Result<()> {
    let mut rows = Vec::new();
    for m in matrices {
        for (kind, is_share) in [("share", true), ("probability", false)] {
            for i in 0..ROWS {
                let mut row = vec![
                    m.sex.label().to_string(),
                    m.period.to_string(),
                    kind.to_string(),
                    row_label(i).to_string(),
                ];
                row.extend((0..COLS).map(|j| {
                    if is_share {
                        fmt_opt(Some(m.shares[i][j]))
                    } else {
                        fmt_opt(m.probabilities[i][j])
                    }
                }));
                rows.push(row);
            }
        }
    }
    table::write_rows(out, meta, &MATRIX_HEADER, rows)
}

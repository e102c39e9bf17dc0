use std::io::Write;

use crate::error::Result;
use crate::panel::{LaborState, Transition};
use crate::table::{self, RunMeta};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum EcdfKind {
    SalariedToNotWorking,
    SelfEmployedToNotWorking,
}

impl EcdfKind {
    pub const ALL: [EcdfKind; 2] = [EcdfKind::SalariedToNotWorking, EcdfKind::SelfEmployedToNotWorking];

    pub fn origin(self) -> LaborState {
        match self {
            EcdfKind::SalariedToNotWorking => LaborState::Salaried,
            EcdfKind::SelfEmployedToNotWorking => LaborState::SelfEmployed,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EcdfKind::SalariedToNotWorking => "sal-emp->nwrk",
            EcdfKind::SelfEmployedToNotWorking => "slf-emp->nwrk",
        }
    }
}

/// Weighted empirical distribution of earnings after / earnings before.
#[derive(Clone, Debug, PartialEq)]
pub struct EcdfSeries {
    pub kind: EcdfKind,
    /// Distinct ratios, ascending.
    pub ratios: Vec<f64>,
    /// Weighted fraction of transitions with ratio at most `ratios[i]`.
    pub cumulative: Vec<f64>,
    pub transitions: usize,
}

impl EcdfSeries {
    pub fn eval(&self, x: f64) -> f64 {
        match self.ratios.partition_point(|r| *r <= x) {
            0 => 0.0,
            n => self.cumulative[n - 1],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EcdfSummary {
    pub series: Vec<EcdfSeries>,
    /// Transitions left out because earnings before were zero, per kind.
    pub zero_before: Vec<(EcdfKind, usize)>,
}

/// Builds one series per kind from transitions into `nwrk` with earnings
/// recorded in both quarters, weighted by the origin-quarter weight.
pub fn earnings_ratio_ecdf(pairs: &[Transition<'_>]) -> EcdfSummary {
    let mut series = Vec::new();
    let mut zero_before = Vec::new();
    for kind in EcdfKind::ALL {
        let mut points: Vec<(f64, f64)> = Vec::new();
        let mut zeros = 0;
        for p in pairs {
            let Some(to) = p.to else { continue };
            if p.from.state != kind.origin() || to.state != LaborState::NotWorking {
                continue;
            }
            let (Some(before), Some(after)) = (p.from.earnings, to.earnings) else {
                continue;
            };
            if before == 0.0 {
                zeros += 1;
                continue;
            }
            points.push((after / before, p.from.weight));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut ratios: Vec<f64> = Vec::new();
        let mut cum: Vec<f64> = Vec::new();
        let mut running = 0.0;
        for (r, w) in &points {
            running += w;
            if ratios.last() == Some(r) {
                *cum.last_mut().expect("parallel to ratios") = running;
            } else {
                ratios.push(*r);
                cum.push(running);
            }
        }
        let total = running;
        if total > 0.0 {
            for c in &mut cum {
                *c /= total;
            }
        }
        series.push(EcdfSeries {
            kind,
            ratios,
            cumulative: cum,
            transitions: points.len(),
        });
        zero_before.push((kind, zeros));
    }
    EcdfSummary { series, zero_before }
}

pub fn write_ecdf<W: Write>(out: W, meta: Option<&RunMeta>, summary: &EcdfSummary) -> Result<()> {
    let mut rows = Vec::new();
    for s in &summary.series {
        for (r, c) in s.ratios.iter().zip(&s.cumulative) {
            rows.push(vec![s.kind.label().to_string(), r.to_string(), c.to_string()]);
        }
    }
    table::write_rows(out, meta, &["transition", "ratio", "cumulative"], rows)
}

pub fn write_zero_tally<W: Write>(out: W, meta: Option<&RunMeta>, summary: &EcdfSummary) -> Result<()> {
    let rows = summary
        .zero_before
        .iter()
        .map(|(k, n)| vec![k.label().to_string(), n.to_string()]);
    table::write_rows(out, meta, &["transition", "excluded_zero_before"], rows)
}

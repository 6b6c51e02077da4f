//! Fine-tuning over a grid of schedule settings.

use rayon::prelude::*;

use crate::corpus::{SentencePair, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::model::ParameterStore;
use crate::schedule::{ScheduleKind, ScheduleSpec};

use super::{evaluate_params, finetune_on, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridPoint {
    pub alpha: ScheduleSpec,
    pub beta: ScheduleSpec,
}

impl GridPoint {
    pub fn new(alpha: ScheduleSpec, beta: ScheduleSpec) -> Self {
        GridPoint { alpha, beta }
    }

    /// Decay constant of α; 1 for a constant rate.
    pub fn k_alpha(&self) -> f64 {
        match self.alpha.kind {
            ScheduleKind::Constant => 1.0,
            _ => self.alpha.k,
        }
    }
}

/// One grid point per line: `ALPHA [BETA]`, β defaulting to `const:1`.
pub fn parse_grid(text: &str) -> Result<Vec<GridPoint>> {
    let mut grid = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| -> Result<ScheduleSpec> {
            s.parse().map_err(|e: Error| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        };
        let point = match fields.as_slice() {
            [a] => GridPoint::new(parse(a)?, ScheduleSpec::constant(1.0)),
            [a, b] => GridPoint::new(parse(a)?, parse(b)?),
            _ => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected ALPHA [BETA]".into(),
                })
            }
        };
        grid.push(point);
    }
    Ok(grid)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub row: usize,
    pub point: GridPoint,
    pub report: MetricReport,
}

pub const SWEEP_HEADER: &str = "row,alpha,beta,k_alpha,rouge1,rouge2,bleu2,avg";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.row,
            r.point.alpha,
            r.point.beta,
            r.point.k_alpha(),
            r.report.csv_row()
        ));
    }
    s
}

/// Fine-tunes `base` once per grid point with the configured preset and
/// scores the best checkpoint of each run on `test`. Rows keep grid order.
pub fn sweep(
    config: &TrainConfig,
    base: &ParameterStore,
    vocab: &Vocabulary,
    data: [&[SentencePair]; 3],
    grid: &[GridPoint],
) -> Result<Vec<SweepRow>> {
    let [train, val, test] = data;
    grid.par_iter()
        .enumerate()
        .map(|(i, point)| {
            let cfg = TrainConfig {
                alpha: Some(point.alpha),
                beta: Some(point.beta),
                ..config.clone()
            };
            let outcome = finetune_on(&cfg, base, vocab, train, val)?;
            let report = evaluate_params(&outcome.params, vocab, test, config.test_beam)?;
            Ok(SweepRow {
                row: i + 1,
                point: *point,
                report,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_file() {
        let g = parse_grid("const:0.5\n# note\n\nexp:0.9999 const:1\nexp:0.99999\n").unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g[0].k_alpha(), 1.0);
        assert_eq!(g[1].k_alpha(), 0.9999);
        assert!(matches!(parse_grid("exp:2"), Err(Error::Parse { line: 1, .. })));
        assert!(parse_grid("a b c").is_err());
    }

    #[test]
    fn empty_table_is_header_only() {
        assert_eq!(sweep_csv(&[]), format!("{SWEEP_HEADER}\n"));
    }

    #[test]
    fn row_layout() {
        let row = SweepRow {
            row: 2,
            point: GridPoint::new(ScheduleSpec::exp_decay(0.9999), ScheduleSpec::constant(1.0)),
            report: MetricReport::new(60.0, 40.0, 50.0),
        };
        let csv = sweep_csv(&[row]);
        assert_eq!(
            csv.lines().nth(1).unwrap(),
            "2,exp:0.9999,const:1,0.9999,60.00,40.00,50.00,50.00"
        );
    }
}

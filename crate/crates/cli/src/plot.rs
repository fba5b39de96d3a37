//! Pivots aggregates into `(x, mean, stderr)` series.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::experiment::{Aggregate, GridPoint, ResultTable, AGGREGATE_HEADER};
use crate::format::fmt_sig6;
use crate::CliError;

pub const PLOT_HEADER: &str = "curve,x,mean,stderr";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// One curve per critic ratio, `x = m`.
    M,
    /// One curve per rollout length, `x = p`.
    P,
}

impl FromStr for Axis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "m" => Ok(Axis::M),
            "p" => Ok(Axis::P),
            other => Err(CliError::Validation(format!(
                "unknown plot axis `{other}` (expected m or p)"
            ))),
        }
    }
}

/// When several cells share a curve and an `x` (e.g. different `M`), the one
/// with the lowest mean is kept.
pub fn emit_plot_data(table: &ResultTable, axis: Axis) -> Result<String, CliError> {
    let cells: Vec<(&GridPoint, &Aggregate)> = table
        .aggregate
        .iter()
        .filter(|a| a.runs > 0)
        .map(|a| (&table.grid[a.grid], a))
        .collect();
    if cells.is_empty() {
        return Err(CliError::Validation("no aggregated results to plot".into()));
    }
    // (curve order key, curve label, x, mean, stderr)
    let mut series: Vec<(f64, String, f64, f64, f64)> = Vec::new();
    for (point, agg) in cells {
        let (key, label, x) = match axis {
            Axis::M => {
                let label = if point.eval_states == 0 {
                    "dpi".to_string()
                } else {
                    format!("cbmpi p={}", fmt_sig6(point.p))
                };
                (point.p, label, point.m as f64)
            }
            Axis::P => (point.m as f64, format!("m={}", point.m), point.p),
        };
        match series.iter_mut().find(|s| s.1 == label && s.2 == x) {
            Some(slot) if agg.mean < slot.3 => {
                slot.3 = agg.mean;
                slot.4 = agg.stderr;
            }
            Some(_) => {}
            None => series.push((key, label, x, agg.mean, agg.stderr)),
        }
    }
    series.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.total_cmp(&b.2)));
    let mut out = format!("{PLOT_HEADER}\n");
    for (_, label, x, mean, stderr) in series {
        let _ = writeln!(out, "{label},{},{},{}", fmt_sig6(x), fmt_sig6(mean), fmt_sig6(stderr));
    }
    Ok(out)
}

/// Reads an aggregate CSV back into a table without raw rows.
pub fn parse_aggregate_csv(text: &str) -> Result<ResultTable, CliError> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(AGGREGATE_HEADER) {
        return Err(CliError::Validation(format!(
            "aggregate CSV must start with `{AGGREGATE_HEADER}`"
        )));
    }
    let mut grid = Vec::new();
    let mut aggregate = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |what: &str| CliError::Validation(format!("aggregate CSV row {}: {what}", i + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(bad("expected 11 columns"));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|_| bad("bad integer"));
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        grid.push(GridPoint {
            m: int(f[2])? as usize,
            samples: int(f[3])? as usize,
            greedy_states: int(f[4])? as usize,
            eval_states: int(f[5])? as usize,
            p: real(f[6])?,
            budget: int(f[7])?,
        });
        aggregate.push(Aggregate {
            grid: grid.len() - 1,
            runs: int(f[8])? as usize,
            mean: real(f[9])?,
            stderr: real(f[10])?,
        });
    }
    Ok(ResultTable {
        grid,
        rows: Vec::new(),
        aggregate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::RawRow;

    fn point(m: usize, samples: usize, p: f64) -> GridPoint {
        let n = if p == 0.0 { 0 } else { 1 };
        GridPoint {
            m,
            samples,
            greedy_states: 1,
            eval_states: n,
            budget: 0,
            p,
        }
    }

    fn fixture() -> ResultTable {
        let grid = vec![point(4, 1, 0.5), point(1, 1, 0.5), point(2, 1, 0.0)];
        let rows = vec![
            RawRow {
                grid: 0,
                run: 0,
                performance: 100.0,
            },
            RawRow {
                grid: 0,
                run: 1,
                performance: 110.0,
            },
            RawRow {
                grid: 1,
                run: 0,
                performance: 90.0,
            },
            RawRow {
                grid: 1,
                run: 1,
                performance: 96.0,
            },
            RawRow {
                grid: 2,
                run: 0,
                performance: 150.0,
            },
        ];
        ResultTable::new(grid, rows)
    }

    #[test]
    fn pivot_by_m() {
        let csv = emit_plot_data(&fixture(), Axis::M).unwrap();
        let expected = "curve,x,mean,stderr\n\
                        dpi,2,150,0\n\
                        cbmpi p=0.5,1,93,3\n\
                        cbmpi p=0.5,4,105,5\n";
        assert_eq!(csv, expected);
    }

    #[test]
    fn pivot_by_p() {
        let csv = emit_plot_data(&fixture(), Axis::P).unwrap();
        assert_eq!(csv, "curve,x,mean,stderr\nm=1,0.5,93,3\nm=2,0,150,0\nm=4,0.5,105,5\n");
    }

    #[test]
    fn single_point_single_row_and_best_of_collisions() {
        let table = ResultTable::new(
            vec![point(3, 1, 0.25), point(3, 2, 0.25)],
            vec![
                RawRow {
                    grid: 0,
                    run: 0,
                    performance: 7.0,
                },
                RawRow {
                    grid: 1,
                    run: 0,
                    performance: 5.0,
                },
            ],
        );
        let csv = emit_plot_data(&table, Axis::M).unwrap();
        assert_eq!(csv, "curve,x,mean,stderr\ncbmpi p=0.25,3,5,0\n");
        let empty = ResultTable::new(vec![], vec![]);
        assert!(emit_plot_data(&empty, Axis::M).is_err());
    }

    #[test]
    fn aggregate_csv_round_trip() {
        let table = fixture();
        let back = parse_aggregate_csv(&table.aggregate_csv()).unwrap();
        assert_eq!(back.grid, table.grid);
        assert_eq!(back.aggregate, table.aggregate);
        assert!(parse_aggregate_csv("nope\n").is_err());
    }
}

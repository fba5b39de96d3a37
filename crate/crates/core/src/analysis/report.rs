use std::fmt::Write as _;

use super::concentrability::{CoefficientProfile, ConcentrabilityInputs};
use super::diagnostics::check_lemma1;
use super::lp::{lp_from, LpBound};
use super::pointwise::{pointwise_from, Analysis, PointwiseBound, PointwiseMode, PointwiseOptions};
use super::{BoundVariant, Run};
use crate::error::Result;
use crate::mdp::TabularMdp;

pub const REPORT_HEADER: &str = "k,quantity,observed,bound,slack,mode";

/// One checked relation at one iteration; `slack = bound - observed`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundRow {
    pub k: usize,
    pub quantity: String,
    pub observed: f64,
    pub bound: f64,
    pub slack: f64,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditOptions {
    /// Loss norms to check; `inf` selects the sup-norm path.
    pub ps: Vec<f64>,
    pub q: f64,
    /// Defaults to uniform.
    pub rho: Option<Vec<f64>>,
    pub mu: Option<Vec<f64>>,
    pub depth: usize,
    pub sequence_cap: f64,
    pub tracked_max_k: usize,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            ps: vec![1.0, 2.0, f64::INFINITY],
            q: f64::INFINITY,
            rho: None,
            mu: None,
            depth: 500,
            sequence_cap: 1e6,
            tracked_max_k: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    pub pointwise: Vec<PointwiseBound>,
    pub lp: Vec<LpBound>,
}

impl BoundReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.k, r.quantity, r.observed, r.bound, r.slack, r.mode
            );
        }
        out
    }

    /// Rows whose slack is below `-tol`.
    pub fn violations(&self, tol: f64) -> Vec<&BoundRow> {
        self.rows.iter().filter(|r| !(r.slack >= -tol)).collect()
    }

    pub fn min_slack(&self) -> f64 {
        self.rows.iter().fold(f64::INFINITY, |m, r| m.min(r.slack))
    }
}

fn p_label(p: f64) -> String {
    if p.is_infinite() {
        "pinf".into()
    } else {
        format!("p{p}")
    }
}

/// Recomputes every diagnostic of `run` and checks all relations and bounds.
pub fn audit_run(
    mdp: &TabularMdp,
    run: &Run,
    m: usize,
    variant: BoundVariant,
    opts: &AuditOptions,
) -> Result<BoundReport> {
    let n = mdp.n_states();
    let analysis = Analysis::new(mdp, run, m, variant)?;
    let uniform = vec![1.0 / n as f64; n];
    let mut rows = Vec::new();

    let diag = &analysis.diagnostics;
    for step in check_lemma1(mdp, diag, &analysis.errors, &analysis.run, m)? {
        let k = step.k;
        let b_obs = diag.b[k][step.b_state];
        let d_obs = diag.d[k][step.d_state];
        rows.push(BoundRow {
            k,
            quantity: "recursion_b".into(),
            observed: b_obs,
            bound: b_obs + step.b_slack,
            slack: step.b_slack,
            mode: "componentwise".into(),
        });
        rows.push(BoundRow {
            k,
            quantity: "recursion_d".into(),
            observed: d_obs,
            bound: d_obs + step.d_slack,
            slack: step.d_slack,
            mode: "componentwise".into(),
        });
        rows.push(BoundRow {
            k,
            quantity: "recursion_s".into(),
            observed: step.s_residual,
            bound: 0.0,
            slack: -step.s_residual,
            mode: "equality".into(),
        });
        rows.push(BoundRow {
            k,
            quantity: "identity_l".into(),
            observed: step.identity_residual,
            bound: 0.0,
            slack: -step.identity_residual,
            mode: "equality".into(),
        });
    }

    let tracked = pointwise_from(
        mdp,
        &analysis,
        &PointwiseOptions {
            mode: PointwiseMode::Tracked,
            tracked_max_k: opts.tracked_max_k,
        },
    );
    let sup = pointwise_from(
        mdp,
        &analysis,
        &PointwiseOptions {
            mode: PointwiseMode::Sup,
            tracked_max_k: 0,
        },
    );
    for (quantity, bounds) in [("pointwise_tracked", &tracked), ("pointwise_sup", &sup)] {
        for b in bounds {
            if quantity == "pointwise_tracked" && b.fell_back {
                continue;
            }
            let (slack, s) = b.slack();
            rows.push(BoundRow {
                k: b.k,
                quantity: quantity.into(),
                observed: b.observed[s],
                bound: b.bound[s],
                slack,
                mode: b.mode.name().into(),
            });
        }
    }

    let mut lp = Vec::new();
    let mut profile: Option<CoefficientProfile> = None;
    for &p in &opts.ps {
        let mut inputs = ConcentrabilityInputs::new(
            opts.rho.clone().unwrap_or_else(|| uniform.clone()),
            opts.mu.clone().unwrap_or_else(|| uniform.clone()),
            p,
            opts.q,
        );
        inputs.depth = opts.depth;
        inputs.sequence_cap = opts.sequence_cap;
        inputs.validate(n)?;
        let bounds = if p.is_infinite() {
            super::lp::lp_loss_bound(mdp, run, m, variant, &inputs)?
        } else {
            // the coefficients do not depend on p
            let prof = match &profile {
                Some(prof) => prof,
                None => profile.insert(CoefficientProfile::compute(&inputs, mdp, m)?),
            };
            lp_from(mdp, &analysis, &inputs, prof)?
        };
        for b in &bounds {
            let mode = if b.exact_coefficients { "exact" } else { "upper_bound" };
            for (name, bound) in [("grouped", b.grouped), ("per_term", b.per_term)] {
                rows.push(BoundRow {
                    k: b.k,
                    quantity: format!("{name}_{}", p_label(p)),
                    observed: b.observed,
                    bound,
                    slack: bound - b.observed,
                    mode: mode.into(),
                });
            }
        }
        lp.extend(bounds);
    }
    rows.sort_by_key(|r| r.k);
    Ok(BoundReport {
        rows,
        pointwise: tracked,
        lp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{make_garnet, GarnetSpec};
    use crate::mdp::{apply_m_raw, greedy_raw};
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn noisy_value_iteration_passes_every_check() {
        let mdp = make_garnet(&GarnetSpec::new(5, 2, 2, 0.9, 31)).unwrap();
        let mut rng = stream(&[31]);
        let mut values = vec![vec![0.0; 5]];
        let mut policies = Vec::new();
        for _ in 0..8 {
            let v = values.last().unwrap();
            let pi = greedy_raw(&mdp, v);
            let mut next = apply_m_raw(&mdp, &pi, v, 3);
            next.iter_mut().for_each(|x| *x += rng.random_range(-0.5..0.5));
            policies.push(pi);
            values.push(next);
        }
        policies.push(greedy_raw(&mdp, values.last().unwrap()));
        let run = Run { values, policies };
        for variant in [BoundVariant::Ampi, BoundVariant::Cbmpi] {
            let report = audit_run(&mdp, &run, 3, variant, &AuditOptions::default()).unwrap();
            assert!(report.violations(1e-9).is_empty(), "{:?}", report.violations(1e-9));
            let csv = report.to_csv();
            assert!(csv.starts_with(REPORT_HEADER));
            for q in [
                "recursion_b",
                "recursion_d",
                "recursion_s",
                "identity_l",
                "pointwise_tracked",
                "pointwise_sup",
                "grouped_p1",
                "per_term_p2",
                "grouped_pinf",
            ] {
                assert!(csv.contains(&format!(",{q},")), "missing {q}");
            }
            // 4 recursion rows per iteration, 6 tracked, 8 sup, 3 norms x 2 bounds x 8
            assert_eq!(report.rows.len(), 8 * 4 + 6 + 8 + 48);
        }
    }

    #[test]
    fn violations_detect_negative_slack() {
        let report = BoundReport {
            rows: vec![
                BoundRow {
                    k: 1,
                    quantity: "x".into(),
                    observed: 1.0,
                    bound: 0.5,
                    slack: -0.5,
                    mode: "sup".into(),
                },
                BoundRow {
                    k: 1,
                    quantity: "y".into(),
                    observed: 0.0,
                    bound: 0.0,
                    slack: f64::NAN,
                    mode: "sup".into(),
                },
            ],
            pointwise: Vec::new(),
            lp: Vec::new(),
        };
        assert_eq!(report.violations(1e-9).len(), 2);
    }
}

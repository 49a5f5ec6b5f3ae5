//! Balance ratio diagnostics and the JSON report emitted by the CLI.

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::model::{self, DescriptorSolution, ProblemSpec, Violation};
use crate::oracle::ExactOutcome;
use crate::qubo::{Penalties, QuboModel};
use crate::solver::{Schedule, SolveResult};

/// How evenly tag `t` is spread over the clusters, in `[0, 1]`.
///
/// With per-cluster association counts `e_l`, this is
/// `(Σ e_l - max e_l) / ((k - 1) max e_l)`, i.e. `min/max` for two clusters.
/// Zero means the tag only touches one cluster; one means perfectly even.
pub fn balance_ratio(inst: &Instance, t: usize) -> Result<f64> {
    let degree = inst.tag_degree(t)?;
    if degree == 0 {
        return Err(Error::UndefinedBalanceRatio(inst.tag_names()[t].clone()));
    }
    let k = inst.k();
    if k == 1 {
        return Ok(0.0);
    }
    let mut counts = vec![0usize; k];
    for i in 0..inst.n_objects() {
        if inst.tags_of(i).binary_search(&t).is_ok() {
            counts[inst.cluster_of(i)] += 1;
        }
    }
    let max = *counts.iter().max().expect("k >= 2");
    let sum: usize = counts.iter().sum();
    Ok((sum - max) as f64 / ((k - 1) * max) as f64)
}

/// Mean balance ratio over the union of selected tags. Selected tags with no
/// associations have no ratio and are left out.
pub fn average_br(inst: &Instance, sol: &DescriptorSolution) -> Result<f64> {
    let ratios: Vec<f64> = sol
        .selected_tags()
        .into_iter()
        .filter(|&t| inst.tag_degrees()[t] > 0)
        .map(|t| balance_ratio(inst, t))
        .collect::<Result<_>>()?;
    if ratios.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// A real serialized with six significant digits; non-finite values become
/// `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Real {
    pub fn rounded(self) -> f64 {
        format!("{:.5e}", self.0).parse().expect("formatted float parses")
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.rounded())
        } else {
            s.serialize_none()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AverageBr {
    Value(Real),
    NotApplicable,
}

impl Serialize for AverageBr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AverageBr::Value(r) => r.serialize(s),
            AverageBr::NotApplicable => s.serialize_str("n/a"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpecSummary {
    pub objects: usize,
    pub tags: usize,
    pub clusters: usize,
    pub coverage_targets: Vec<usize>,
    #[serde(rename = "P")]
    pub modularity_weight: Real,
    pub penalties: Option<PenaltySummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PenaltySummary {
    #[serde(rename = "A")]
    pub a: Real,
    #[serde(rename = "B")]
    pub b: Real,
    #[serde(rename = "C")]
    pub c: Real,
}

impl From<Penalties> for PenaltySummary {
    fn from(p: Penalties) -> Self {
        PenaltySummary {
            a: Real(p.a),
            b: Real(p.b),
            c: Real(p.c),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterCoverage {
    /// 1-based.
    pub cluster: usize,
    pub size: usize,
    pub target: usize,
    pub covered: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObjectiveBreakdown {
    pub tag_count: usize,
    /// `null` when the instance has no associations.
    pub tag_modularity: Option<Real>,
    pub weighted_modularity: Real,
    pub total: Real,
}

#[derive(Debug, Clone, Serialize)]
pub struct TagBalance {
    pub tag: String,
    pub cluster: usize,
    pub balance_ratio: Option<Real>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceSummary {
    pub per_tag: Vec<TagBalance>,
    pub average: AverageBr,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationEntry {
    Overlap {
        tag: String,
        clusters: Vec<usize>,
        excess: usize,
    },
    Coverage {
        cluster: usize,
        covered: usize,
        required: usize,
        deficit: usize,
    },
}

impl ViolationEntry {
    fn from_violation(inst: &Instance, v: &Violation) -> Self {
        match v {
            Violation::Overlap { tag, clusters, excess } => ViolationEntry::Overlap {
                tag: inst.tag_names()[*tag].clone(),
                clusters: clusters.iter().map(|c| c + 1).collect(),
                excess: *excess,
            },
            Violation::Coverage { cluster, covered, required, deficit } => ViolationEntry::Coverage {
                cluster: cluster + 1,
                covered: *covered,
                required: *required,
                deficit: *deficit,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RestartSummary {
    pub best_energy: Real,
    pub accepted_flips: u64,
    pub offset_activations: u64,
    pub sweeps_run: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScheduleSummary {
    pub temp_initial: Real,
    pub temp_final: Real,
    pub sweeps: usize,
    pub offset_increment: Real,
}

impl From<Schedule> for ScheduleSummary {
    fn from(s: Schedule) -> Self {
        ScheduleSummary {
            temp_initial: Real(s.initial),
            temp_final: Real(s.fin),
            sweeps: s.sweeps,
            offset_increment: Real(s.offset_increment),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSummary {
    pub n_vars: usize,
    pub seed: u64,
    pub best_energy: Real,
    pub penalty_residual: Real,
    pub residuals_zero: bool,
    /// Objects whose coverage bit disagrees with their actual coverage.
    pub z_mismatch: Vec<String>,
    pub best_restart: usize,
    pub truncated: bool,
    pub schedule: ScheduleSummary,
    pub restarts: Vec<RestartSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactSummary {
    pub verdict: &'static str,
    pub unique_optimum: Option<bool>,
}

/// Wall-clock measurements. Kept apart so the rest of the report is
/// reproducible byte for byte.
#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub spec: SpecSummary,
    pub descriptors: Vec<Vec<String>>,
    pub coverage: Vec<ClusterCoverage>,
    pub objective: ObjectiveBreakdown,
    pub balance_ratio: BalanceSummary,
    pub feasible: bool,
    pub violations: Vec<ViolationEntry>,
    pub solver: Option<SolverSummary>,
    pub exact: Option<ExactSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Where the reported solution came from.
#[derive(Debug, Clone, Copy)]
pub enum ReportSource<'a> {
    Anneal {
        model: &'a QuboModel,
        result: &'a SolveResult,
        seed: u64,
    },
    Exact(&'a ExactOutcome),
    Evaluation,
}

impl ReportSource<'_> {
    fn solution(&self, k: usize) -> DescriptorSolution {
        match self {
            ReportSource::Anneal { result, .. } => result.decoded.solution.clone(),
            ReportSource::Exact(out) => out.solution().cloned().unwrap_or_else(|| DescriptorSolution::empty(k)),
            ReportSource::Evaluation => DescriptorSolution::empty(k),
        }
    }
}

/// Builds a report for the solution carried by `source`.
pub fn make_report(spec: &ProblemSpec, source: ReportSource<'_>) -> Report {
    let sol = source.solution(spec.k());
    report_for(spec, &sol, source)
}

/// Builds a report for an explicit solution. For [`ReportSource::Anneal`] and
/// [`ReportSource::Exact`] the solution should be the one they carry.
pub fn report_for(spec: &ProblemSpec, sol: &DescriptorSolution, source: ReportSource<'_>) -> Report {
    let inst = spec.instance();
    let p = spec.modularity_weight();

    let coverage = model::coverage(spec, sol)
        .into_iter()
        .enumerate()
        .map(|(c, covered)| ClusterCoverage {
            cluster: c + 1,
            size: inst.cluster_size(c),
            target: spec.coverage_targets()[c],
            covered,
        })
        .collect();

    let tm = model::tag_modularity(spec, sol).ok();
    let weighted = if p == 0.0 { 0.0 } else { p * tm.unwrap_or(0.0) };
    let tag_count = sol.tag_count();
    let objective = ObjectiveBreakdown {
        tag_count,
        tag_modularity: tm.map(Real),
        weighted_modularity: Real(weighted),
        total: Real(tag_count as f64 + weighted),
    };

    let per_tag = sol
        .descriptors()
        .iter()
        .enumerate()
        .flat_map(|(c, d)| {
            d.iter().map(move |&t| TagBalance {
                tag: inst.tag_names()[t].clone(),
                cluster: c + 1,
                balance_ratio: balance_ratio(inst, t).ok().map(Real),
            })
        })
        .collect();
    let average = match average_br(inst, sol) {
        Ok(v) => AverageBr::Value(Real(v)),
        Err(_) => AverageBr::NotApplicable,
    };

    let feas = model::is_feasible(spec, sol);
    let violations = feas
        .violations
        .iter()
        .map(|v| ViolationEntry::from_violation(inst, v))
        .collect();

    let (penalties, solver, exact) = match source {
        ReportSource::Anneal { model, result, seed } => {
            let r = &result.decoded.residuals;
            let summary = SolverSummary {
                n_vars: model.n_vars(),
                seed,
                best_energy: Real(result.best_energy),
                penalty_residual: Real(r.penalty),
                residuals_zero: r.is_zero(),
                z_mismatch: r.z_mismatch.iter().map(|&i| inst.object_ids()[i].clone()).collect(),
                best_restart: result.stats.best_restart,
                truncated: result.stats.truncated,
                schedule: result.stats.schedule.into(),
                restarts: result
                    .stats
                    .restarts
                    .iter()
                    .map(|s| RestartSummary {
                        best_energy: Real(s.best_energy),
                        accepted_flips: s.accepted_flips,
                        offset_activations: s.offset_activations,
                        sweeps_run: s.sweeps_run,
                    })
                    .collect(),
            };
            (Some(model.penalties().into()), Some(summary), None)
        }
        ReportSource::Exact(out) => {
            let summary = match out {
                ExactOutcome::Optimal { unique, .. } => ExactSummary {
                    verdict: "optimal",
                    unique_optimum: Some(*unique),
                },
                ExactOutcome::Infeasible => ExactSummary {
                    verdict: "infeasible",
                    unique_optimum: None,
                },
            };
            (None, None, Some(summary))
        }
        ReportSource::Evaluation => (None, None, None),
    };

    Report {
        spec: SpecSummary {
            objects: inst.n_objects(),
            tags: inst.n_tags(),
            clusters: inst.k(),
            coverage_targets: spec.coverage_targets().to_vec(),
            modularity_weight: Real(p),
            penalties,
        },
        descriptors: sol.names(inst),
        coverage,
        objective,
        balance_ratio: BalanceSummary { per_tag, average },
        feasible: feas.feasible,
        violations,
        solver,
        exact,
        timing: None,
    }
}

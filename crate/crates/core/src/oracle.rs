//! Ground truth for small instances and a greedy baseline.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{self, DescriptorSolution, ProblemSpec};
use crate::EPS;

/// Default cap on the number of tag assignments `(k+1)^|T|` enumerated.
pub const DEFAULT_ENUM_BUDGET: u64 = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub enum ExactOutcome {
    Optimal {
        solution: DescriptorSolution,
        objective: f64,
        /// No other assignment reaches the optimal objective.
        unique: bool,
    },
    Infeasible,
}

impl ExactOutcome {
    pub fn solution(&self) -> Option<&DescriptorSolution> {
        match self {
            ExactOutcome::Optimal { solution, .. } => Some(solution),
            ExactOutcome::Infeasible => None,
        }
    }

    pub fn objective(&self) -> Option<f64> {
        match self {
            ExactOutcome::Optimal { objective, .. } => Some(*objective),
            ExactOutcome::Infeasible => None,
        }
    }
}

/// Number of assignments `(k+1)^|T|`, or `None` on overflow.
pub fn assignment_count(spec: &ProblemSpec) -> Option<u64> {
    let base = spec.k() as u64 + 1;
    base.checked_pow(u32::try_from(spec.instance().n_tags()).ok()?)
}

/// Enumerates every assignment of each tag to "unused" or one cluster and
/// returns the feasible one with the smallest objective.
///
/// Ties are broken by fewer tags, then by the lexicographically smallest
/// descriptor vector.
pub fn exact_descriptors(spec: &ProblemSpec, budget: u64) -> Result<ExactOutcome> {
    let inst = spec.instance();
    let k = inst.k();
    let n_tags = inst.n_tags();
    match assignment_count(spec) {
        Some(n) if n <= budget => {}
        other => {
            return Err(Error::BudgetExceeded {
                required: match other {
                    Some(n) => format!("{}^{} = {n}", k + 1, n_tags),
                    None => format!("{}^{}", k + 1, n_tags),
                },
                budget,
            })
        }
    }
    let p = spec.modularity_weight();
    if p > 0.0 && inst.edge_count() == 0 {
        return Err(Error::DegenerateInstance);
    }
    let two_e = 2.0 * inst.edge_count() as f64;

    let mut tag_objects = vec![Vec::new(); n_tags];
    for i in 0..inst.n_objects() {
        for &t in inst.tags_of(i) {
            tag_objects[t].push(i);
        }
    }
    let degrees = inst.tag_degrees();
    let targets = spec.coverage_targets();

    // assign[t] = 0 for unused, c + 1 for cluster c
    let mut assign = vec![0usize; n_tags];
    let mut hits = vec![0usize; inst.n_objects()];
    let mut covered = vec![0usize; k];
    let mut degree_sum = vec![0usize; k];
    let mut used = 0usize;

    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    let mut ties = 0usize;

    let to_solution = |assign: &[usize]| {
        let mut d = vec![Vec::new(); k];
        for (t, &a) in assign.iter().enumerate() {
            if a > 0 {
                d[a - 1].push(t);
            }
        }
        DescriptorSolution::new(d)
    };

    loop {
        if covered.iter().zip(targets).all(|(c, m)| c >= m) {
            let obj = if p == 0.0 {
                used as f64
            } else {
                let tm: usize = degree_sum.iter().map(|s| s * s).sum();
                used as f64 + p * tm as f64 / two_e
            };
            let replace = match &best {
                None => {
                    ties = 1;
                    true
                }
                Some((b_obj, b_used, b_assign)) => {
                    if obj < b_obj - EPS {
                        ties = 1;
                        true
                    } else if (obj - b_obj).abs() <= EPS {
                        ties += 1;
                        used < *b_used
                            || (used == *b_used && to_solution(&assign) < to_solution(b_assign))
                    } else {
                        false
                    }
                }
            };
            if replace {
                best = Some((obj, used, assign.clone()));
            }
        }

        // odometer step
        let mut t = 0;
        loop {
            if t == n_tags {
                return Ok(finish(spec, best.map(|(_, _, a)| to_solution(&a)), ties));
            }
            let old = assign[t];
            let new = (old + 1) % (k + 1);
            assign[t] = new;
            for &i in &tag_objects[t] {
                let c = inst.cluster_of(i);
                if old == c + 1 {
                    hits[i] -= 1;
                    if hits[i] == 0 {
                        covered[c] -= 1;
                    }
                }
                if new == c + 1 {
                    hits[i] += 1;
                    if hits[i] == 1 {
                        covered[c] += 1;
                    }
                }
            }
            if old > 0 {
                degree_sum[old - 1] -= degrees[t];
                used -= 1;
            }
            if new > 0 {
                degree_sum[new - 1] += degrees[t];
                used += 1;
            }
            if new != 0 {
                break;
            }
            t += 1;
        }
    }
}

fn finish(spec: &ProblemSpec, best: Option<DescriptorSolution>, ties: usize) -> ExactOutcome {
    match best {
        None => ExactOutcome::Infeasible,
        Some(solution) => {
            debug_assert!(model::is_feasible(spec, &solution).feasible);
            let objective = model::objective(spec, &solution).expect("degenerate case rejected earlier");
            ExactOutcome::Optimal {
                solution,
                objective,
                unique: ties == 1,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnmetDeficit {
    pub cluster: usize,
    pub deficit: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome {
    pub solution: DescriptorSolution,
    pub unmet: Vec<UnmetDeficit>,
}

impl GreedyOutcome {
    pub fn reached_targets(&self) -> bool {
        self.unmet.is_empty()
    }
}

/// Greedy coverage: the cluster with the largest remaining deficit takes the
/// unassigned tag covering the most of its still-uncovered objects (ties go
/// to the smaller tag degree, then the lower tag index). A cluster that no
/// tag can help is skipped in favour of the next largest deficit. Always
/// disjoint.
pub fn greedy_baseline(spec: &ProblemSpec) -> GreedyOutcome {
    let inst = spec.instance();
    let k = inst.k();
    let n_tags = inst.n_tags();
    let degrees = inst.tag_degrees();

    let mut tag_objects = vec![Vec::new(); n_tags];
    for i in 0..inst.n_objects() {
        for &t in inst.tags_of(i) {
            tag_objects[t].push(i);
        }
    }

    let mut taken = vec![false; n_tags];
    let mut is_covered = vec![false; inst.n_objects()];
    let mut covered = vec![0usize; k];
    let mut solution = DescriptorSolution::empty(k);
    let deficit = |covered: &[usize], c: usize| spec.coverage_targets()[c].saturating_sub(covered[c]);

    'outer: loop {
        let mut order: Vec<usize> = (0..k).filter(|&c| deficit(&covered, c) > 0).collect();
        order.sort_by_key(|&c| (std::cmp::Reverse(deficit(&covered, c)), c));

        for c in order {
            let pick = (0..n_tags)
                .filter(|&t| !taken[t])
                .map(|t| {
                    let gain = tag_objects[t]
                        .iter()
                        .filter(|&&i| inst.cluster_of(i) == c && !is_covered[i])
                        .count();
                    (t, gain)
                })
                .filter(|&(_, gain)| gain > 0)
                .min_by_key(|&(t, gain)| (std::cmp::Reverse(gain), degrees[t], t));

            if let Some((t, _)) = pick {
                taken[t] = true;
                solution.insert(c, t);
                for &i in &tag_objects[t] {
                    if inst.cluster_of(i) == c && !is_covered[i] {
                        is_covered[i] = true;
                        covered[c] += 1;
                    }
                }
                continue 'outer;
            }
        }
        break;
    }

    let unmet = (0..k)
        .filter_map(|c| {
            let d = deficit(&covered, c);
            (d > 0).then_some(UnmetDeficit { cluster: c, deficit: d })
        })
        .collect();
    GreedyOutcome { solution, unmet }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{fig1_fixture, Instance, ObjectRecord};
    use crate::model::{coverage, is_feasible, objective};
    use proptest::prelude::*;

    fn fig1_spec(m: [usize; 2], p: f64) -> ProblemSpec {
        ProblemSpec::new(fig1_fixture(), m.to_vec(), p).unwrap()
    }

    fn opt() -> DescriptorSolution {
        DescriptorSolution::new(vec![vec![0], vec![2]])
    }

    // Straightforward enumeration through the model evaluators.
    fn naive_exact(spec: &ProblemSpec) -> Option<(DescriptorSolution, f64)> {
        let k = spec.k();
        let n_tags = spec.instance().n_tags();
        let total = (k as u64 + 1).pow(n_tags as u32);
        let mut best: Option<(DescriptorSolution, f64)> = None;
        for code in 0..total {
            let mut d = vec![Vec::new(); k];
            let mut rest = code;
            for t in 0..n_tags {
                let a = (rest % (k as u64 + 1)) as usize;
                rest /= k as u64 + 1;
                if a > 0 {
                    d[a - 1].push(t);
                }
            }
            let s = DescriptorSolution::new(d);
            if !is_feasible(spec, &s).feasible {
                continue;
            }
            let obj = objective(spec, &s).unwrap();
            let better = match &best {
                None => true,
                Some((bs, bo)) => {
                    obj < bo - EPS
                        || ((obj - bo).abs() <= EPS
                            && (s.tag_count(), &s) < (bs.tag_count(), bs))
                }
            };
            if better {
                best = Some((s, obj));
            }
        }
        best
    }

    #[test]
    fn fig1_exact() {
        match exact_descriptors(&fig1_spec([3, 3], 0.0), DEFAULT_ENUM_BUDGET).unwrap() {
            ExactOutcome::Optimal { solution, objective, unique } => {
                assert_eq!(solution, opt());
                assert_eq!(objective, 2.0);
                assert!(unique);
            }
            ExactOutcome::Infeasible => panic!("feasible"),
        }
        let out = exact_descriptors(&fig1_spec([3, 3], 1.0), DEFAULT_ENUM_BUDGET).unwrap();
        assert_eq!(out.solution(), Some(&opt()));
        assert!((out.objective().unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn uncoverable_object_is_infeasible() {
        let mut records = vec![
            ObjectRecord { id: "a".into(), cluster: 1, tags: vec!["t".into()] },
            ObjectRecord { id: "b".into(), cluster: 1, tags: vec![] },
        ];
        records.push(ObjectRecord { id: "c".into(), cluster: 2, tags: vec!["u".into()] });
        let inst = Instance::new(2, vec!["t".into(), "u".into()], records).unwrap().instance;
        let spec = ProblemSpec::new(inst, vec![2, 1], 0.0).unwrap();
        assert_eq!(exact_descriptors(&spec, DEFAULT_ENUM_BUDGET).unwrap(), ExactOutcome::Infeasible);
    }

    #[test]
    fn budget_exceeded() {
        let tags: Vec<String> = (0..20).map(|t| format!("t{t}")).collect();
        let records = (0..3)
            .map(|c| ObjectRecord { id: format!("o{c}"), cluster: c + 1, tags: tags.clone() })
            .collect();
        let inst = Instance::new(3, tags, records).unwrap().instance;
        let spec = ProblemSpec::new(inst, vec![1, 1, 1], 0.0).unwrap();
        assert_eq!(assignment_count(&spec), Some(4u64.pow(20)));
        let err = exact_descriptors(&spec, DEFAULT_ENUM_BUDGET).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { .. }));
        assert!(err.to_string().contains("TMCD_ENUM_BUDGET"));
    }

    #[test]
    fn greedy_fig1() {
        let g = greedy_baseline(&fig1_spec([3, 3], 0.0));
        assert_eq!(g.solution, opt());
        assert!(g.reached_targets());
    }

    #[test]
    fn greedy_zero_targets() {
        let g = greedy_baseline(&fig1_spec([0, 0], 0.0));
        assert_eq!(g.solution, DescriptorSolution::empty(2));
        assert!(g.reached_targets());
    }

    #[test]
    fn greedy_reports_unmet_deficit() {
        let inst = Instance::new(
            1,
            vec!["t".into()],
            vec![ObjectRecord { id: "a".into(), cluster: 1, tags: vec![] }],
        )
        .unwrap()
        .instance;
        let spec = ProblemSpec::new(inst, vec![1], 0.0).unwrap();
        let g = greedy_baseline(&spec);
        assert_eq!(g.solution, DescriptorSolution::empty(1));
        assert_eq!(g.unmet, vec![UnmetDeficit { cluster: 0, deficit: 1 }]);
    }

    fn arb_spec() -> impl Strategy<Value = ProblemSpec> {
        (1usize..4, 1usize..5, 0usize..5, 0usize..3).prop_flat_map(|(k, n_tags, extra, p_idx)| {
            (
                proptest::collection::vec((0..k, proptest::collection::vec(0..n_tags, 0..4)), k + extra),
                proptest::collection::vec(0usize..=100, k),
                Just((k, n_tags, [0.0, 0.5, 1.0][p_idx])),
            )
                .prop_map(|(objs, pct, (k, n_tags, p))| {
                    let tags = (0..n_tags).map(|t| format!("t{t}")).collect();
                    let records = objs
                        .into_iter()
                        .enumerate()
                        .map(|(i, (c, ts))| ObjectRecord {
                            id: format!("o{i}"),
                            cluster: if i < k { i + 1 } else { c + 1 },
                            tags: ts.into_iter().map(|t| format!("t{t}")).collect(),
                        })
                        .collect();
                    let inst = Instance::new(k, tags, records).unwrap().instance;
                    let p = if inst.edge_count() == 0 { 0.0 } else { p };
                    let targets = (0..k).map(|c| inst.cluster_size(c) * pct[c] / 100).collect();
                    ProblemSpec::new(inst, targets, p).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn exact_matches_naive(spec in arb_spec()) {
            let fast = exact_descriptors(&spec, DEFAULT_ENUM_BUDGET).unwrap();
            match (fast, naive_exact(&spec)) {
                (ExactOutcome::Infeasible, None) => {}
                (ExactOutcome::Optimal { solution, objective, .. }, Some((s, o))) => {
                    prop_assert_eq!(solution, s);
                    prop_assert!((objective - o).abs() < 1e-9);
                }
                (a, b) => prop_assert!(false, "mismatch: {:?} vs {:?}", a, b),
            }
        }

        #[test]
        fn exact_beats_greedy(spec in arb_spec()) {
            let g = greedy_baseline(&spec);
            let only_coverage = is_feasible(&spec, &g.solution)
                .violations
                .iter()
                .all(|v| matches!(v, model::Violation::Coverage { .. }));
            prop_assert!(only_coverage);
            let greedy_ok = is_feasible(&spec, &g.solution).feasible;
            prop_assert_eq!(greedy_ok, g.reached_targets());
            let cov = coverage(&spec, &g.solution);
            for u in &g.unmet {
                prop_assert_eq!(spec.coverage_targets()[u.cluster] - cov[u.cluster], u.deficit);
            }
            if let ExactOutcome::Optimal { solution, objective: best, .. } = exact_descriptors(&spec, DEFAULT_ENUM_BUDGET).unwrap() {
                prop_assert!(is_feasible(&spec, &solution).feasible);
                if greedy_ok {
                    prop_assert!(best <= objective(&spec, &g.solution).unwrap() + 1e-9);
                }
            } else {
                prop_assert!(!greedy_ok);
            }
        }
    }
}

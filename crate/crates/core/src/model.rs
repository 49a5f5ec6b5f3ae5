//! Direct semantics of the descriptor problems: coverage, feasibility and
//! the objective, evaluated straight from the incidence structure.

use std::collections::BTreeSet;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::Instance;

/// How per-cluster coverage targets are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum CoverageRule {
    /// Every object must be covered.
    Full,
    /// At least `ceil(p/100 * |C_l|)` objects per cluster.
    Percent(f64),
    Explicit(Vec<usize>),
}

impl CoverageRule {
    pub fn resolve(&self, inst: &Instance) -> Result<Vec<usize>> {
        match self {
            CoverageRule::Full => Ok(inst.cluster_sizes()),
            CoverageRule::Percent(p) => Ok(inst
                .cluster_sizes()
                .into_iter()
                .map(|size| percent_target(*p, size))
                .collect()),
            CoverageRule::Explicit(targets) => {
                if targets.len() != inst.k() {
                    return Err(Error::Validation(format!(
                        "{} coverage targets given for {} clusters",
                        targets.len(),
                        inst.k()
                    )));
                }
                Ok(targets.clone())
            }
        }
    }
}

// Rounds up, with a little slack so that 80% of 5 is 4 and not 5.
fn percent_target(p: f64, size: usize) -> usize {
    let raw = p * size as f64 / 100.0;
    (raw - 1e-9).ceil().max(0.0) as usize
}

impl FromStr for CoverageRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "full" {
            return Ok(CoverageRule::Full);
        }
        if let Some(p) = s.strip_prefix("pct:") {
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad coverage percentage `{p}`")))?;
            if !(0.0..=100.0).contains(&p) {
                return Err(Error::InvalidParameter(format!(
                    "coverage percentage {p} outside [0, 100]"
                )));
            }
            return Ok(CoverageRule::Percent(p));
        }
        s.split(',')
            .map(|m| {
                m.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad coverage target `{m}`")))
            })
            .collect::<Result<Vec<_>>>()
            .map(CoverageRule::Explicit)
    }
}

/// An instance plus coverage targets `M_l` and modularity weight `P`.
///
/// `P = 0` is the plain minimum constrained description problem; with
/// additionally `M_l = |C_l|` everywhere it is the fully covering one.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    instance: Instance,
    coverage_targets: Vec<usize>,
    modularity_weight: f64,
}

impl ProblemSpec {
    pub fn new(instance: Instance, coverage_targets: Vec<usize>, modularity_weight: f64) -> Result<Self> {
        if coverage_targets.len() != instance.k() {
            return Err(Error::Validation(format!(
                "{} coverage targets given for {} clusters",
                coverage_targets.len(),
                instance.k()
            )));
        }
        for (c, &m) in coverage_targets.iter().enumerate() {
            let size = instance.cluster_size(c);
            if m > size {
                return Err(Error::TargetExceedsCluster {
                    cluster: c + 1,
                    target: m,
                    size,
                });
            }
        }
        if !modularity_weight.is_finite() || modularity_weight < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "modularity weight must be finite and >= 0, got {modularity_weight}"
            )));
        }
        Ok(ProblemSpec {
            instance,
            coverage_targets,
            modularity_weight,
        })
    }

    pub fn with_rule(instance: Instance, rule: &CoverageRule, modularity_weight: f64) -> Result<Self> {
        let targets = rule.resolve(&instance)?;
        Self::new(instance, targets, modularity_weight)
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn coverage_targets(&self) -> &[usize] {
        &self.coverage_targets
    }

    pub fn modularity_weight(&self) -> f64 {
        self.modularity_weight
    }

    pub fn k(&self) -> usize {
        self.instance.k()
    }

    /// Same instance and targets, different `P`.
    pub fn with_modularity_weight(&self, p: f64) -> Result<Self> {
        Self::new(self.instance.clone(), self.coverage_targets.clone(), p)
    }

    /// Checks that `sol` has one descriptor per cluster and only valid tags.
    pub fn check_solution(&self, sol: &DescriptorSolution) -> Result<()> {
        if sol.k() != self.k() {
            return Err(Error::Validation(format!(
                "solution has {} descriptors, instance has {} clusters",
                sol.k(),
                self.k()
            )));
        }
        let n_tags = self.instance.n_tags();
        for d in sol.descriptors() {
            if let Some(&bad) = d.iter().find(|&&t| t >= n_tags) {
                return Err(Error::IndexOutOfRange {
                    what: "tag",
                    index: bad,
                    len: n_tags,
                });
            }
        }
        Ok(())
    }
}

/// One tag set per cluster. Overlapping descriptors are representable; they
/// just fail [`is_feasible`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DescriptorSolution {
    descriptors: Vec<Vec<usize>>,
}

impl DescriptorSolution {
    /// Tag indices inside each descriptor are sorted and deduplicated.
    pub fn new(mut descriptors: Vec<Vec<usize>>) -> Self {
        for d in &mut descriptors {
            d.sort_unstable();
            d.dedup();
        }
        DescriptorSolution { descriptors }
    }

    pub fn empty(k: usize) -> Self {
        DescriptorSolution {
            descriptors: vec![Vec::new(); k],
        }
    }

    pub fn from_names<S: AsRef<str>>(inst: &Instance, names: &[Vec<S>]) -> Result<Self> {
        let descriptors = names
            .iter()
            .map(|d| {
                d.iter()
                    .map(|name| {
                        inst.tag_index(name.as_ref())
                            .ok_or_else(|| Error::UnknownTag(name.as_ref().to_string()))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(descriptors))
    }

    pub fn names(&self, inst: &Instance) -> Vec<Vec<String>> {
        self.descriptors
            .iter()
            .map(|d| d.iter().map(|&t| inst.tag_names()[t].clone()).collect())
            .collect()
    }

    pub fn descriptors(&self) -> &[Vec<usize>] {
        &self.descriptors
    }

    pub fn descriptor(&self, c: usize) -> &[usize] {
        &self.descriptors[c]
    }

    pub fn k(&self) -> usize {
        self.descriptors.len()
    }

    /// Σ_l |T_l|, counting a tag once per descriptor it appears in.
    pub fn tag_count(&self) -> usize {
        self.descriptors.iter().map(Vec::len).sum()
    }

    /// Union of all descriptors.
    pub fn selected_tags(&self) -> BTreeSet<usize> {
        self.descriptors.iter().flatten().copied().collect()
    }

    /// Adds tag `t` to descriptor `c`.
    pub fn insert(&mut self, c: usize, t: usize) {
        let d = &mut self.descriptors[c];
        if let Err(pos) = d.binary_search(&t) {
            d.insert(pos, t);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// A tag sits in more than one descriptor; `excess` is the count above one.
    Overlap {
        tag: usize,
        clusters: Vec<usize>,
        excess: usize,
    },
    /// A cluster is covered below its target.
    Coverage {
        cluster: usize,
        covered: usize,
        required: usize,
        deficit: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

/// Number of objects of each cluster covered by that cluster's descriptor.
pub fn coverage(spec: &ProblemSpec, sol: &DescriptorSolution) -> Vec<usize> {
    let inst = spec.instance();
    (0..inst.k())
        .map(|c| {
            let desc = sol.descriptor(c);
            inst.members(c)
                .iter()
                .filter(|&&i| inst.tags_of(i).iter().any(|t| desc.binary_search(t).is_ok()))
                .count()
        })
        .collect()
}

/// Lists every violated disjointness and coverage constraint.
pub fn is_feasible(spec: &ProblemSpec, sol: &DescriptorSolution) -> Feasibility {
    let mut violations = Vec::new();

    let mut owners = vec![Vec::new(); spec.instance().n_tags()];
    for (c, d) in sol.descriptors().iter().enumerate() {
        for &t in d {
            owners[t].push(c);
        }
    }
    for (tag, clusters) in owners.into_iter().enumerate() {
        if clusters.len() > 1 {
            violations.push(Violation::Overlap {
                tag,
                excess: clusters.len() - 1,
                clusters,
            });
        }
    }

    for (cluster, (covered, &required)) in coverage(spec, sol)
        .into_iter()
        .zip(spec.coverage_targets())
        .enumerate()
    {
        if covered < required {
            violations.push(Violation::Coverage {
                cluster,
                covered,
                required,
                deficit: required - covered,
            });
        }
    }

    Feasibility {
        feasible: violations.is_empty(),
        violations,
    }
}

/// Σ_l Σ_{v,w ∈ T_l} k_v k_w / 2|E| over ordered pairs, diagonal included.
pub fn tag_modularity(spec: &ProblemSpec, sol: &DescriptorSolution) -> Result<f64> {
    let inst = spec.instance();
    let edges = inst.edge_count();
    if edges == 0 {
        return Err(Error::DegenerateInstance);
    }
    let degrees = inst.tag_degrees();
    let total: f64 = sol
        .descriptors()
        .iter()
        .map(|d| {
            let s: usize = d.iter().map(|&t| degrees[t]).sum();
            (s * s) as f64
        })
        .sum();
    Ok(total / (2 * edges) as f64)
}

/// Σ_l |T_l| + P·TM. With `P = 0` the modularity term is skipped entirely,
/// so instances without associations still evaluate.
pub fn objective(spec: &ProblemSpec, sol: &DescriptorSolution) -> Result<f64> {
    let count = sol.tag_count() as f64;
    let p = spec.modularity_weight();
    if p == 0.0 {
        return Ok(count);
    }
    Ok(count + p * tag_modularity(spec, sol)?)
}

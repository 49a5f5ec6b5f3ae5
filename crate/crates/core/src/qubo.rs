//! QUBO compilation of a [`ProblemSpec`].
//!
//! Variables are laid out as
//!
//! ```text
//! x[l][j]     k * |T|        tag j in descriptor l, block-major by l
//! z[i]        n              object i counted as covered
//! y1[i][b]    per object     slack of the cover-link constraint of object i
//! y2[l][b]    per cluster    slack of the coverage constraint of cluster l
//! y3[j]       |T|            slack of the disjointness constraint of tag j
//! ```
//!
//! and the energy is
//!
//! ```text
//! Σ x + P Σ_l Σ_{v,w} k_v k_w / 2|E| · x_l(v) x_l(w)
//!   + A Σ_i (z_i - Σ_{j∈t_i} x_{c(i)}(j) + slack1_i)^2
//!   + B Σ_l (M_l - Σ_{i∈C_l} z_i + slack2_l)^2
//!   + C Σ_j (Σ_l x_l(j) + y3_j - 1)^2
//! ```
//!
//! with every slack a binary expansion from [`slack_coefficients`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, Write};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DescriptorSolution, ProblemSpec};

/// Binary expansion covering every integer in `0..=range_max` exactly.
///
/// Uses `m = ceil(log2(R + 1))` bits: `1, 2, …, 2^(m-2)` followed by the
/// closing coefficient `R + 1 - 2^(m-1)`.
pub fn slack_coefficients(range_max: u64) -> Vec<u64> {
    let m = u64::BITS - range_max.leading_zeros();
    if m == 0 {
        return Vec::new();
    }
    let mut coeffs: Vec<u64> = (0..m - 1).map(|b| 1u64 << b).collect();
    coeffs.push(range_max + 1 - (1u64 << (m - 1)));
    coeffs
}

/// Bits selecting a subset of `coeffs` (as produced by
/// [`slack_coefficients`]) that sums to `value`, or `None` when out of range.
pub fn slack_bits(coeffs: &[u64], value: u64) -> Option<Vec<bool>> {
    let Some((&last, prefix)) = coeffs.split_last() else {
        return (value == 0).then(Vec::new);
    };
    let prefix_max: u64 = prefix.iter().sum();
    let mut bits = vec![false; coeffs.len()];
    let mut rest = value;
    if rest > prefix_max {
        rest = rest.checked_sub(last)?;
        bits[coeffs.len() - 1] = true;
    }
    if rest > prefix_max {
        return None;
    }
    for (b, bit) in bits.iter_mut().take(prefix.len()).enumerate() {
        *bit = rest >> b & 1 == 1;
    }
    Some(bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Penalties {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

impl Penalties {
    pub fn uniform(v: f64) -> Self {
        Penalties { a: v, b: v, c: v }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("A", self.a), ("B", self.b), ("C", self.c)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "penalty {name} must be finite and > 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// `A = B = C = 2 (1 + |T| + P |E| / 2)`.
///
/// `|T|` bounds the tag count and `|E|/2` bounds the tag modularity, so a
/// single unit of constraint violation outweighs any objective gain.
pub fn default_penalties(spec: &ProblemSpec) -> Penalties {
    let inst = spec.instance();
    let bound = 1.0
        + inst.n_tags() as f64
        + spec.modularity_weight() * inst.edge_count() as f64 / 2.0;
    Penalties::uniform(2.0 * bound)
}

/// A contiguous run of slack variables and their integer weights.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlackBlock {
    pub start: usize,
    pub coefficients: Vec<u64>,
}

impl SlackBlock {
    pub fn ids(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.coefficients.len()
    }

    fn value(&self, bits: &[bool]) -> i64 {
        self.ids()
            .zip(&self.coefficients)
            .filter(|(id, _)| bits[*id])
            .map(|(_, &c)| c as i64)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    X { cluster: usize, tag: usize },
    Z { object: usize },
    Slack1 { object: usize, bit: usize },
    Slack2 { cluster: usize, bit: usize },
    Slack3 { tag: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableIndex {
    k: usize,
    n_tags: usize,
    n_objects: usize,
    slack1: Vec<SlackBlock>,
    slack2: Vec<SlackBlock>,
    slack3_start: usize,
    total: usize,
}

impl VariableIndex {
    pub fn new(spec: &ProblemSpec) -> Self {
        let inst = spec.instance();
        let k = inst.k();
        let n_tags = inst.n_tags();
        let n_objects = inst.n_objects();

        let mut next = k * n_tags + n_objects;
        let slack1 = (0..n_objects)
            .map(|i| {
                let block = SlackBlock {
                    start: next,
                    coefficients: slack_coefficients(inst.tags_of(i).len() as u64),
                };
                next += block.coefficients.len();
                block
            })
            .collect();
        let slack2 = (0..k)
            .map(|c| {
                let range = inst.cluster_size(c) - spec.coverage_targets()[c];
                let block = SlackBlock {
                    start: next,
                    coefficients: slack_coefficients(range as u64),
                };
                next += block.coefficients.len();
                block
            })
            .collect();
        let slack3_start = next;

        VariableIndex {
            k,
            n_tags,
            n_objects,
            slack1,
            slack2,
            slack3_start,
            total: slack3_start + n_tags,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.total
    }

    pub fn x(&self, cluster: usize, tag: usize) -> usize {
        debug_assert!(cluster < self.k && tag < self.n_tags);
        cluster * self.n_tags + tag
    }

    pub fn z(&self, object: usize) -> usize {
        debug_assert!(object < self.n_objects);
        self.k * self.n_tags + object
    }

    pub fn slack1(&self, object: usize) -> &SlackBlock {
        &self.slack1[object]
    }

    pub fn slack2(&self, cluster: usize) -> &SlackBlock {
        &self.slack2[cluster]
    }

    pub fn slack3(&self, tag: usize) -> usize {
        debug_assert!(tag < self.n_tags);
        self.slack3_start + tag
    }

    pub fn kind(&self, id: usize) -> Option<VarKind> {
        if id >= self.total {
            return None;
        }
        let x_end = self.k * self.n_tags;
        let z_end = x_end + self.n_objects;
        Some(if id < x_end {
            VarKind::X {
                cluster: id / self.n_tags,
                tag: id % self.n_tags,
            }
        } else if id < z_end {
            VarKind::Z { object: id - x_end }
        } else if id >= self.slack3_start {
            VarKind::Slack3 {
                tag: id - self.slack3_start,
            }
        } else if let Some(object) = self.slack1.iter().position(|b| b.ids().contains(&id)) {
            VarKind::Slack1 {
                object,
                bit: id - self.slack1[object].start,
            }
        } else {
            let cluster = self
                .slack2
                .iter()
                .position(|b| b.ids().contains(&id))
                .expect("id inside the slack2 range");
            VarKind::Slack2 {
                cluster,
                bit: id - self.slack2[cluster].start,
            }
        })
    }
}

/// Accumulates an upper-triangular quadratic form.
#[derive(Debug, Clone)]
pub struct QuboBuilder {
    linear: Vec<f64>,
    quadratic: BTreeMap<(usize, usize), f64>,
    constant: f64,
}

impl QuboBuilder {
    pub fn new(n_vars: usize) -> Self {
        QuboBuilder {
            linear: vec![0.0; n_vars],
            quadratic: BTreeMap::new(),
            constant: 0.0,
        }
    }

    pub fn add_constant(&mut self, v: f64) {
        self.constant += v;
    }

    pub fn add_linear(&mut self, i: usize, v: f64) {
        self.linear[i] += v;
    }

    /// Adds `v · x_i · x_j`; `i == j` folds into the linear term.
    pub fn add_quadratic(&mut self, i: usize, j: usize, v: f64) {
        if i == j {
            self.add_linear(i, v);
        } else {
            assert!(i < self.linear.len() && j < self.linear.len(), "variable out of range");
            *self.quadratic.entry((i.min(j), i.max(j))).or_insert(0.0) += v;
        }
    }

    /// Adds `weight · (offset + Σ a_i x_i)^2`, expanded with `x^2 = x`.
    pub fn add_squared(&mut self, weight: f64, offset: f64, terms: &[(usize, f64)]) {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for &(i, a) in terms {
            *merged.entry(i).or_insert(0.0) += a;
        }
        let merged: Vec<(usize, f64)> = merged.into_iter().collect();

        self.add_constant(weight * offset * offset);
        for (n, &(i, a)) in merged.iter().enumerate() {
            self.add_linear(i, weight * (a * a + 2.0 * offset * a));
            for &(j, b) in &merged[n + 1..] {
                self.add_quadratic(i, j, weight * 2.0 * a * b);
            }
        }
    }

    pub fn build(self) -> Qubo {
        let n = self.linear.len();
        let quadratic: Vec<(usize, usize, f64)> = self
            .quadratic
            .into_iter()
            .filter(|&(_, v)| v != 0.0)
            .map(|((i, j), v)| (i, j, v))
            .collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j, v) in &quadratic {
            neighbors[i].push((j, v));
            neighbors[j].push((i, v));
        }
        Qubo {
            linear: self.linear,
            quadratic,
            neighbors,
            constant: self.constant,
        }
    }
}

/// A quadratic pseudo-boolean function `xᵀQx + constant` with `Q` upper
/// triangular. Diagonal entries act as linear coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Qubo {
    linear: Vec<f64>,
    quadratic: Vec<(usize, usize, f64)>,
    neighbors: Vec<Vec<(usize, f64)>>,
    constant: f64,
}

impl Qubo {
    pub fn n_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    /// Off-diagonal entries `(i, j, Q_ij)` with `i < j`, sorted.
    pub fn quadratic(&self) -> &[(usize, usize, f64)] {
        &self.quadratic
    }

    /// Off-diagonal couplings of variable `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    /// Looks up `Q_ij` for `i <= j`.
    pub fn coefficient(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.linear[i];
        }
        let key = (i.min(j), i.max(j));
        self.quadratic
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
            .map(|p| self.quadratic[p].2)
            .unwrap_or(0.0)
    }

    pub fn check_len(&self, bits: &[bool]) -> Result<()> {
        if bits.len() != self.n_vars() {
            return Err(Error::LengthMismatch {
                expected: self.n_vars(),
                found: bits.len(),
            });
        }
        Ok(())
    }

    /// `xᵀQx + constant`.
    pub fn energy(&self, bits: &[bool]) -> Result<f64> {
        self.check_len(bits)?;
        let lin: f64 = self
            .linear
            .iter()
            .zip(bits)
            .filter(|(_, &b)| b)
            .map(|(v, _)| v)
            .sum();
        let quad: f64 = self
            .quadratic
            .iter()
            .filter(|&&(i, j, _)| bits[i] && bits[j])
            .map(|&(_, _, v)| v)
            .sum();
        Ok(self.constant + lin + quad)
    }

    /// Sparse text form: a `n_vars constant` header, then `i j value` for
    /// every non-zero entry with `i <= j`, sorted.
    pub fn write_sparse<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{} {}", self.n_vars(), self.constant)?;
        let mut diag = self.linear.iter().enumerate().filter(|(_, &v)| v != 0.0).peekable();
        let mut off = self.quadratic.iter().peekable();
        loop {
            let take_diag = match (diag.peek(), off.peek()) {
                (None, None) => break,
                (Some(_), None) => true,
                (None, Some(_)) => false,
                (Some(&(i, _)), Some(&&(a, _, _))) => i <= a,
            };
            if take_diag {
                let (i, v) = diag.next().unwrap();
                writeln!(out, "{i} {i} {v}")?;
            } else {
                let &(i, j, v) = off.next().unwrap();
                writeln!(out, "{i} {j} {v}")?;
            }
        }
        Ok(())
    }

    pub fn to_sparse_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_sparse(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Parses the format written by [`Qubo::write_sparse`]. Repeated entries add up.
    pub fn parse_sparse(text: &str) -> Result<Qubo> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty QUBO file".into()))?;
        let mut hdr = header.split_whitespace();
        let n: usize = parse_field(hdr.next(), "n_vars")?;
        let constant: f64 = parse_field(hdr.next(), "constant")?;
        let mut builder = QuboBuilder::new(n);
        builder.add_constant(constant);
        for line in lines {
            let mut f = line.split_whitespace();
            let i: usize = parse_field(f.next(), "row")?;
            let j: usize = parse_field(f.next(), "column")?;
            let v: f64 = parse_field(f.next(), "value")?;
            if i > j || j >= n {
                return Err(Error::Parse(format!("bad entry `{line}`")));
            }
            builder.add_quadratic(i, j, v);
        }
        Ok(builder.build())
    }
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, what: &str) -> Result<T> {
    let s = field.ok_or_else(|| Error::Parse(format!("missing {what}")))?;
    s.parse()
        .map_err(|_| Error::Parse(format!("bad {what} `{s}`")))
}

/// A compiled problem: the quadratic form plus everything needed to map bit
/// vectors back to descriptors.
#[derive(Debug, Clone)]
pub struct QuboModel {
    qubo: Qubo,
    index: VariableIndex,
    penalties: Penalties,
    spec: ProblemSpec,
}

impl QuboModel {
    pub fn qubo(&self) -> &Qubo {
        &self.qubo
    }

    pub fn index(&self) -> &VariableIndex {
        &self.index
    }

    pub fn penalties(&self) -> Penalties {
        self.penalties
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn n_vars(&self) -> usize {
        self.qubo.n_vars()
    }

    pub fn energy(&self, bits: &[bool]) -> Result<f64> {
        self.qubo.energy(bits)
    }

    /// Human-readable variable label, e.g. `x[1,TAG3]` or `y1[s4,0]`.
    pub fn label(&self, id: usize) -> Option<String> {
        let inst = self.spec.instance();
        let kind = self.index.kind(id)?;
        let mut s = String::new();
        match kind {
            VarKind::X { cluster, tag } => write!(s, "x[{},{}]", cluster + 1, inst.tag_names()[tag]),
            VarKind::Z { object } => write!(s, "z[{}]", inst.object_ids()[object]),
            VarKind::Slack1 { object, bit } => write!(s, "y1[{},{bit}]", inst.object_ids()[object]),
            VarKind::Slack2 { cluster, bit } => write!(s, "y2[{},{bit}]", cluster + 1),
            VarKind::Slack3 { tag } => write!(s, "y3[{}]", inst.tag_names()[tag]),
        }
        .expect("write to string");
        Some(s)
    }

    /// Signed left-hand sides of every penalty constraint for `bits`.
    pub fn residuals(&self, bits: &[bool]) -> Result<ResidualReport> {
        self.qubo.check_len(bits)?;
        let inst = self.spec.instance();
        let idx = &self.index;
        let k = inst.k();

        let link: Vec<i64> = (0..inst.n_objects())
            .map(|i| {
                let c = inst.cluster_of(i);
                let selected = inst.tags_of(i).iter().filter(|&&t| bits[idx.x(c, t)]).count() as i64;
                bits[idx.z(i)] as i64 - selected + idx.slack1(i).value(bits)
            })
            .collect();

        let cluster: Vec<i64> = (0..k)
            .map(|c| {
                let counted = inst.members(c).iter().filter(|&&i| bits[idx.z(i)]).count() as i64;
                self.spec.coverage_targets()[c] as i64 - counted + idx.slack2(c).value(bits)
            })
            .collect();

        let disjoint: Vec<i64> = (0..inst.n_tags())
            .map(|t| {
                let used = (0..k).filter(|&c| bits[idx.x(c, t)]).count() as i64;
                used + bits[idx.slack3(t)] as i64 - 1
            })
            .collect();

        let sq = |v: &[i64]| v.iter().map(|r| (r * r) as f64).sum::<f64>();
        let penalty = self.penalties.a * sq(&link)
            + self.penalties.b * sq(&cluster)
            + self.penalties.c * sq(&disjoint);

        let sol = self.descriptors(bits);
        let z_mismatch = (0..inst.n_objects())
            .filter(|&i| {
                let desc = sol.descriptor(inst.cluster_of(i));
                let covered = inst.tags_of(i).iter().any(|t| desc.binary_search(t).is_ok());
                covered != bits[idx.z(i)]
            })
            .collect();

        Ok(ResidualReport {
            link,
            cluster,
            disjoint,
            penalty,
            z_mismatch,
        })
    }

    fn descriptors(&self, bits: &[bool]) -> DescriptorSolution {
        let inst = self.spec.instance();
        DescriptorSolution::new(
            (0..inst.k())
                .map(|c| {
                    (0..inst.n_tags())
                        .filter(|&t| bits[self.index.x(c, t)])
                        .collect()
                })
                .collect(),
        )
    }

    /// Reads descriptors from the `x` bits and reports residuals. Never
    /// rejects constraint-violating bits.
    pub fn decode(&self, bits: &[bool]) -> Result<Decoded> {
        let residuals = self.residuals(bits)?;
        Ok(Decoded {
            solution: self.descriptors(bits),
            residuals,
        })
    }

    /// Bit vector for `sol` with `z(i) = 1` iff object `i` is covered and
    /// every slack chosen to cancel its residual where possible. The result
    /// has zero penalty exactly when `sol` is feasible.
    pub fn encode(&self, sol: &DescriptorSolution) -> Result<Vec<bool>> {
        self.spec.check_solution(sol)?;
        let inst = self.spec.instance();
        let idx = &self.index;
        let mut bits = vec![false; self.n_vars()];

        for (c, d) in sol.descriptors().iter().enumerate() {
            for &t in d {
                bits[idx.x(c, t)] = true;
            }
        }
        let mut covered_per_cluster = vec![0u64; inst.k()];
        for i in 0..inst.n_objects() {
            let c = inst.cluster_of(i);
            let selected = inst
                .tags_of(i)
                .iter()
                .filter(|t| sol.descriptor(c).binary_search(t).is_ok())
                .count() as u64;
            let covered = selected > 0;
            bits[idx.z(i)] = covered;
            covered_per_cluster[c] += covered as u64;
            set_slack(&mut bits, idx.slack1(i), selected - covered as u64);
        }
        for (c, &covered) in covered_per_cluster.iter().enumerate() {
            let target = self.spec.coverage_targets()[c] as u64;
            set_slack(&mut bits, idx.slack2(c), covered.saturating_sub(target));
        }
        for t in 0..inst.n_tags() {
            let used = (0..inst.k()).filter(|&c| bits[idx.x(c, t)]).count();
            bits[idx.slack3(t)] = used == 0;
        }
        Ok(bits)
    }
}

// Writes the expansion of `value`, clamped to the representable range.
fn set_slack(bits: &mut [bool], block: &SlackBlock, value: u64) {
    let max: u64 = block.coefficients.iter().sum();
    let pattern = slack_bits(&block.coefficients, value.min(max)).expect("value within range");
    for (id, b) in block.ids().zip(pattern) {
        bits[id] = b;
    }
}

/// Constraint residuals of a bit vector. All zero iff the penalty is zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    /// Per object: `z_i - Σ x + slack1_i`.
    pub link: Vec<i64>,
    /// Per cluster: `M_l - Σ z + slack2_l`.
    pub cluster: Vec<i64>,
    /// Per tag: `Σ_l x_l(j) + y3_j - 1`.
    pub disjoint: Vec<i64>,
    /// Weighted sum of squared residuals.
    pub penalty: f64,
    /// Objects whose `z` bit disagrees with their actual coverage.
    pub z_mismatch: Vec<usize>,
}

impl ResidualReport {
    pub fn is_zero(&self) -> bool {
        self.link.iter().chain(&self.cluster).chain(&self.disjoint).all(|&r| r == 0)
    }
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub solution: DescriptorSolution,
    pub residuals: ResidualReport,
}

/// Compiles `spec` with the given penalty weights.
pub fn build_qubo(spec: &ProblemSpec, penalties: Penalties) -> Result<QuboModel> {
    penalties.validate()?;
    let inst = spec.instance();
    let p = spec.modularity_weight();
    let edges = inst.edge_count();
    if p > 0.0 && edges == 0 {
        return Err(Error::DegenerateInstance);
    }

    let index = VariableIndex::new(spec);
    let k = inst.k();
    let n_tags = inst.n_tags();
    let mut b = QuboBuilder::new(index.n_vars());

    // tag count
    for c in 0..k {
        for t in 0..n_tags {
            b.add_linear(index.x(c, t), 1.0);
        }
    }

    // tag modularity, ordered pairs with the diagonal folded into x^2 = x
    if p > 0.0 {
        let scale = p / (2 * edges) as f64;
        let degrees = inst.tag_degrees();
        for c in 0..k {
            for v in 0..n_tags {
                if degrees[v] == 0 {
                    continue;
                }
                let kv = degrees[v] as f64;
                b.add_linear(index.x(c, v), scale * kv * kv);
                for (w, &dw) in degrees.iter().enumerate().skip(v + 1) {
                    if dw == 0 {
                        continue;
                    }
                    let kw = dw as f64;
                    b.add_quadratic(index.x(c, v), index.x(c, w), 2.0 * scale * kv * kw);
                }
            }
        }
    }

    let mut terms = Vec::new();
    for i in 0..inst.n_objects() {
        let c = inst.cluster_of(i);
        terms.clear();
        terms.push((index.z(i), 1.0));
        terms.extend(inst.tags_of(i).iter().map(|&t| (index.x(c, t), -1.0)));
        push_slack(&mut terms, index.slack1(i));
        b.add_squared(penalties.a, 0.0, &terms);
    }

    for c in 0..k {
        terms.clear();
        terms.extend(inst.members(c).iter().map(|&i| (index.z(i), -1.0)));
        push_slack(&mut terms, index.slack2(c));
        b.add_squared(penalties.b, spec.coverage_targets()[c] as f64, &terms);
    }

    for t in 0..n_tags {
        terms.clear();
        terms.extend((0..k).map(|c| (index.x(c, t), 1.0)));
        terms.push((index.slack3(t), 1.0));
        b.add_squared(penalties.c, -1.0, &terms);
    }

    Ok(QuboModel {
        qubo: b.build(),
        index,
        penalties,
        spec: spec.clone(),
    })
}

fn push_slack(terms: &mut Vec<(usize, f64)>, block: &SlackBlock) {
    terms.extend(block.ids().zip(&block.coefficients).map(|(id, &c)| (id, c as f64)));
}

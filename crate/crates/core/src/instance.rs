//! Clustered objects and their tag associations.
//!
//! Identifiers are strings on the way in and out; everything internal uses
//! dense indices fixed by input order. Cluster indices are 1-based in files
//! and 0-based in memory.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstanceFormat {
    Json,
    EdgeCsv,
}

impl FromStr for InstanceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(InstanceFormat::Json),
            "csv" | "edge_csv" => Ok(InstanceFormat::EdgeCsv),
            other => Err(Error::Parse(format!("unknown instance format `{other}`"))),
        }
    }
}

/// One object as it appears in an input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub id: String,
    /// 1-based cluster index.
    pub cluster: usize,
    #[serde(default)]
    pub tags: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceDoc {
    k: usize,
    tags: Vec<String>,
    objects: Vec<ObjectRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    /// The object has no tags, so no descriptor can ever cover it.
    UncoverableObject(String),
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::UncoverableObject(id) => write!(f, "{id} uncoverable: empty tag set"),
        }
    }
}

/// A validated instance plus any non-fatal findings from loading it.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub instance: Instance,
    pub warnings: Vec<Warning>,
}

/// Objects, tags, a fixed k-way clustering of the objects and the
/// object-tag incidence. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    objects: Vec<String>,
    tags: Vec<String>,
    cluster_of: Vec<usize>,
    tags_of: Vec<Vec<usize>>,
    k: usize,
    members: Vec<Vec<usize>>,
    degrees: Vec<usize>,
}

impl Instance {
    /// Validates and builds an instance. Duplicate (object, tag) pairs
    /// collapse to a single association.
    #[allow(clippy::new_ret_no_self)]
    pub fn new(k: usize, tags: Vec<String>, records: Vec<ObjectRecord>) -> Result<Loaded> {
        if records.is_empty() {
            return Err(Error::Validation("instance has no objects".into()));
        }
        if k == 0 {
            return Err(Error::Validation("k must be at least 1".into()));
        }

        let mut tag_ids = HashMap::with_capacity(tags.len());
        for (idx, tag) in tags.iter().enumerate() {
            if tag_ids.insert(tag.as_str(), idx).is_some() {
                return Err(Error::Validation(format!("duplicate tag `{tag}`")));
            }
        }

        let mut seen = HashMap::with_capacity(records.len());
        let mut objects = Vec::with_capacity(records.len());
        let mut cluster_of = Vec::with_capacity(records.len());
        let mut tags_of = Vec::with_capacity(records.len());
        let mut warnings = Vec::new();

        for (idx, rec) in records.iter().enumerate() {
            if seen.insert(rec.id.as_str(), idx).is_some() {
                return Err(Error::Validation(format!("duplicate object id `{}`", rec.id)));
            }
            if rec.cluster == 0 || rec.cluster > k {
                return Err(Error::Validation(format!(
                    "object `{}` has cluster {} outside 1..={k}",
                    rec.id, rec.cluster
                )));
            }
            let mut set = BTreeSet::new();
            for name in &rec.tags {
                let Some(&t) = tag_ids.get(name.as_str()) else {
                    return Err(Error::Validation(format!(
                        "object `{}` references unknown tag `{name}`",
                        rec.id
                    )));
                };
                set.insert(t);
            }
            if set.is_empty() {
                warnings.push(Warning::UncoverableObject(rec.id.clone()));
            }
            objects.push(rec.id.clone());
            cluster_of.push(rec.cluster - 1);
            tags_of.push(set.into_iter().collect::<Vec<_>>());
        }

        let mut members = vec![Vec::new(); k];
        for (i, &c) in cluster_of.iter().enumerate() {
            members[c].push(i);
        }
        if let Some(empty) = members.iter().position(Vec::is_empty) {
            return Err(Error::Validation(format!(
                "cluster {} has no objects but k = {k}",
                empty + 1
            )));
        }

        let mut degrees = vec![0; tags.len()];
        for ts in &tags_of {
            for &t in ts {
                degrees[t] += 1;
            }
        }

        Ok(Loaded {
            instance: Instance {
                objects,
                tags,
                cluster_of,
                tags_of,
                k,
                members,
                degrees,
            },
            warnings,
        })
    }

    pub fn n_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn n_tags(&self) -> usize {
        self.tags.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn object_ids(&self) -> &[String] {
        &self.objects
    }

    pub fn tag_names(&self) -> &[String] {
        &self.tags
    }

    pub fn tag_index(&self, name: &str) -> Option<usize> {
        self.tags.iter().position(|t| t == name)
    }

    /// 0-based cluster of object `i`.
    pub fn cluster_of(&self, i: usize) -> usize {
        self.cluster_of[i]
    }

    /// Sorted tag indices of object `i`.
    pub fn tags_of(&self, i: usize) -> &[usize] {
        &self.tags_of[i]
    }

    /// Objects of 0-based cluster `c`, in input order.
    pub fn members(&self, c: usize) -> &[usize] {
        &self.members[c]
    }

    pub fn cluster_size(&self, c: usize) -> usize {
        self.members[c].len()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    /// Number of objects carrying tag `v`, over the whole instance.
    pub fn tag_degree(&self, v: usize) -> Result<usize> {
        self.degrees.get(v).copied().ok_or(Error::IndexOutOfRange {
            what: "tag",
            index: v,
            len: self.tags.len(),
        })
    }

    pub fn tag_degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// Number of object-tag associations, |E|.
    pub fn edge_count(&self) -> usize {
        self.tags_of.iter().map(Vec::len).sum()
    }

    /// Objects with an empty tag set.
    pub fn uncoverable_objects(&self) -> impl Iterator<Item = usize> + '_ {
        self.tags_of
            .iter()
            .enumerate()
            .filter(|(_, ts)| ts.is_empty())
            .map(|(i, _)| i)
    }

    fn records(&self) -> Vec<ObjectRecord> {
        (0..self.n_objects())
            .map(|i| ObjectRecord {
                id: self.objects[i].clone(),
                cluster: self.cluster_of[i] + 1,
                tags: self.tags_of[i].iter().map(|&t| self.tags[t].clone()).collect(),
            })
            .collect()
    }

    /// Canonical JSON form, readable by [`load_instance`].
    pub fn to_json(&self) -> String {
        let doc = InstanceDoc {
            k: self.k,
            tags: self.tags.clone(),
            objects: self.records(),
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("instance serializes");
        s.push('\n');
        s
    }

    /// Edge CSV form. Tags that no object carries are not representable and
    /// are dropped; the tag order becomes order of first appearance.
    pub fn to_edge_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["object", "cluster", "tag"]).expect("in-memory write");
        for rec in self.records() {
            let cluster = rec.cluster.to_string();
            if rec.tags.is_empty() {
                wtr.write_record([rec.id.as_str(), cluster.as_str(), ""])
                    .expect("in-memory write");
            }
            for tag in &rec.tags {
                wtr.write_record([rec.id.as_str(), cluster.as_str(), tag.as_str()])
                    .expect("in-memory write");
            }
        }
        String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

/// Reads and validates an instance.
pub fn load_instance<R: Read>(mut source: R, format: InstanceFormat) -> Result<Loaded> {
    match format {
        InstanceFormat::Json => {
            let mut buf = String::new();
            source.read_to_string(&mut buf)?;
            let doc: InstanceDoc = serde_json::from_str(&buf)?;
            Instance::new(doc.k, doc.tags, doc.objects)
        }
        InstanceFormat::EdgeCsv => load_edge_csv(source),
    }
}

fn load_edge_csv<R: Read>(source: R) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = rdr.headers()?.clone();
    if header.len() != 3 || &header[0] != "object" || &header[1] != "cluster" || &header[2] != "tag"
    {
        return Err(Error::Parse(format!(
            "expected header `object,cluster,tag`, found `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut tags: Vec<String> = Vec::new();
    let mut tag_seen = HashMap::new();
    let mut records: Vec<ObjectRecord> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();

    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        if row.len() != 3 {
            return Err(Error::Parse(format!(
                "row {}: expected 3 fields, found {}",
                line + 2,
                row.len()
            )));
        }
        let id = &row[0];
        let cluster: usize = row[1]
            .parse()
            .map_err(|_| Error::Parse(format!("row {}: bad cluster `{}`", line + 2, &row[1])))?;
        let tag = &row[2];

        let slot = match by_id.get(id) {
            Some(&slot) => {
                if records[slot].cluster != cluster {
                    return Err(Error::Validation(format!(
                        "object `{id}` listed in clusters {} and {cluster}",
                        records[slot].cluster
                    )));
                }
                slot
            }
            None => {
                by_id.insert(id.to_string(), records.len());
                records.push(ObjectRecord {
                    id: id.to_string(),
                    cluster,
                    tags: Vec::new(),
                });
                records.len() - 1
            }
        };
        if !tag.is_empty() {
            if !tag_seen.contains_key(tag) {
                tag_seen.insert(tag.to_string(), tags.len());
                tags.push(tag.to_string());
            }
            records[slot].tags.push(tag.to_string());
        }
    }

    let k = records.iter().map(|r| r.cluster).max().unwrap_or(0);
    Instance::new(k, tags, records)
}

/// The six-object, four-tag, two-cluster toy instance used throughout the
/// docs and acceptance tests.
pub fn fig1_fixture() -> Instance {
    let rec = |id: &str, cluster: usize, tags: &[&str]| ObjectRecord {
        id: id.to_string(),
        cluster,
        tags: tags.iter().map(|t| t.to_string()).collect(),
    };
    let tags = ["TAG1", "TAG2", "TAG3", "TAG4"].map(String::from).to_vec();
    let records = vec![
        rec("s1", 1, &["TAG1", "TAG2"]),
        rec("s2", 1, &["TAG1"]),
        rec("s3", 1, &["TAG1"]),
        rec("s4", 2, &["TAG2", "TAG3", "TAG4"]),
        rec("s5", 2, &["TAG3"]),
        rec("s6", 2, &["TAG3"]),
    ];
    Instance::new(2, tags, records)
        .expect("fixture is valid")
        .instance
}

//! The fixed registry of glomerular segmentation classes.
//!
//! Class order is the mask channel order everywhere in the crate: task
//! vectors, report rows and exported mask stacks all index by it.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{bail, Error, Result};

/// Number of canonical classes.
pub const CLASS_COUNT: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Region,
    Cell,
    Lesion,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Region => "region",
            Group::Cell => "cell",
            Group::Lesion => "lesion",
        }
    }
}

impl FromStr for Group {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "region" => Ok(Group::Region),
            "cell" => Ok(Group::Cell),
            "lesion" => Ok(Group::Lesion),
            other => bail!(Format, "unknown class group `{other}`"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Species {
    Rodent,
    Human,
}

impl Species {
    pub const ALL: [Species; 2] = [Species::Rodent, Species::Human];

    pub fn as_str(self) -> &'static str {
        match self {
            Species::Rodent => "rodent",
            Species::Human => "human",
        }
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Species {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rodent" | "mouse" => Ok(Species::Rodent),
            "human" => Ok(Species::Human),
            other => bail!(InvalidArgument, "unknown species `{other}` (expected rodent or human)"),
        }
    }
}

/// Species in which a class has annotations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SpeciesSet(u8);

impl SpeciesSet {
    pub const RODENT: SpeciesSet = SpeciesSet(1);
    pub const HUMAN: SpeciesSet = SpeciesSet(2);
    pub const BOTH: SpeciesSet = SpeciesSet(3);

    pub fn contains(self, species: Species) -> bool {
        let bit = match species {
            Species::Rodent => 1,
            Species::Human => 2,
        };
        self.0 & bit != 0
    }

    fn label(self) -> &'static str {
        match self.0 {
            1 => "rodent",
            2 => "human",
            3 => "rodent+human",
            _ => "none",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlomClass {
    pub index: usize,
    pub code: &'static str,
    pub name: &'static str,
    pub group: Group,
    pub species: SpeciesSet,
}

const fn class(
    index: usize,
    code: &'static str,
    name: &'static str,
    group: Group,
    species: SpeciesSet,
) -> GlomClass {
    GlomClass { index, code, name, group, species }
}

// Species columns follow the per-species annotation counts of the source
// dataset; "Prod" in the original tables is the podocyte class.
static CLASSES: [GlomClass; CLASS_COUNT] = [
    class(0, "Cap", "Bowman's capsule", Group::Region, SpeciesSet::BOTH),
    class(1, "Tuft", "glomerular tuft", Group::Region, SpeciesSet::RODENT),
    class(2, "Mes", "mesangium", Group::Region, SpeciesSet::RODENT),
    class(3, "Pod", "podocytes", Group::Cell, SpeciesSet::RODENT),
    class(4, "Mec", "mesangial cells", Group::Cell, SpeciesSet::RODENT),
    class(5, "AH", "adhesion", Group::Lesion, SpeciesSet::RODENT),
    class(6, "CD", "capsular drop", Group::Lesion, SpeciesSet::RODENT),
    class(7, "GS", "global sclerosis", Group::Lesion, SpeciesSet::BOTH),
    class(8, "HS", "hyalinosis", Group::Lesion, SpeciesSet::BOTH),
    class(9, "ME", "mesangial expansion", Group::Lesion, SpeciesSet::HUMAN),
    class(10, "ML", "mesangial lysis", Group::Lesion, SpeciesSet::RODENT),
    class(11, "MA", "microaneurysm", Group::Lesion, SpeciesSet::BOTH),
    class(12, "NS", "nodular sclerosis", Group::Lesion, SpeciesSet::BOTH),
    class(13, "SS", "segmental sclerosis", Group::Lesion, SpeciesSet::BOTH),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// Every pixel of the child lies inside the parent.
    Contains,
    /// The two regions share a substantial part of their area.
    Overlaps,
}

impl Relation {
    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Contains => "contains",
            Relation::Overlaps => "overlaps",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HierarchyRelation {
    pub parent: usize,
    pub child: usize,
    pub relation: Relation,
}

static RELATIONS: [HierarchyRelation; 3] = [
    HierarchyRelation { parent: 0, child: 1, relation: Relation::Contains },
    HierarchyRelation { parent: 1, child: 2, relation: Relation::Contains },
    HierarchyRelation { parent: 0, child: 7, relation: Relation::Overlaps },
];

/// A subset of class indices, stored as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ClassSet(u16);

impl ClassSet {
    pub const fn empty() -> Self {
        ClassSet(0)
    }

    pub const fn all() -> Self {
        ClassSet((1 << CLASS_COUNT) - 1)
    }

    pub fn of(indices: &[usize]) -> Self {
        let mut set = ClassSet::empty();
        for &i in indices {
            set.insert(i);
        }
        set
    }

    pub fn insert(&mut self, index: usize) {
        assert!(index < CLASS_COUNT, "class index {index} out of range");
        self.0 |= 1 << index;
    }

    pub fn contains(self, index: usize) -> bool {
        index < CLASS_COUNT && self.0 & (1 << index) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: ClassSet) -> ClassSet {
        ClassSet(self.0 | other.0)
    }

    pub fn intersection(self, other: ClassSet) -> ClassSet {
        ClassSet(self.0 & other.0)
    }

    pub fn is_subset(self, other: ClassSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// Indices in taxonomy order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        (0..CLASS_COUNT).filter(move |&i| self.contains(i))
    }
}

/// The m-dimensional one-hot task encoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskVector {
    entries: Vec<u8>,
    class_index: usize,
}

impl TaskVector {
    pub fn entries(&self) -> &[u8] {
        &self.entries
    }

    pub fn class_index(&self) -> usize {
        self.class_index
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One-hot encode `class_index` into a vector of length `m`.
pub fn encode_task(class_index: usize, m: usize) -> Result<TaskVector> {
    if m == 0 {
        bail!(InvalidArgument, "task dimension must be at least 1");
    }
    if class_index >= m {
        bail!(InvalidArgument, "class index {class_index} out of range: must be < {m}");
    }
    let mut entries = vec![0u8; m];
    entries[class_index] = 1;
    Ok(TaskVector { entries, class_index })
}

/// The canonical class registry.
#[derive(Debug, Clone, Copy)]
pub struct Taxonomy {
    classes: &'static [GlomClass],
    relations: &'static [HierarchyRelation],
}

static CANONICAL: Taxonomy = Taxonomy { classes: &CLASSES, relations: &RELATIONS };

impl Taxonomy {
    pub fn canonical() -> &'static Taxonomy {
        &CANONICAL
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn classes(&self) -> &[GlomClass] {
        self.classes
    }

    pub fn class(&self, index: usize) -> &GlomClass {
        &self.classes[index]
    }

    pub fn code(&self, index: usize) -> &'static str {
        self.classes[index].code
    }

    pub fn relations(&self) -> &[HierarchyRelation] {
        self.relations
    }

    /// Case-insensitive lookup by short code. `Prod` is accepted for `Pod`.
    pub fn lookup(&self, code: &str) -> Result<&GlomClass> {
        let code = code.trim();
        let wanted = if code.eq_ignore_ascii_case("prod") { "pod" } else { code };
        self.classes
            .iter()
            .find(|c| c.code.eq_ignore_ascii_case(wanted))
            .ok_or_else(|| Error::UnknownClass { code: code.to_string(), valid: self.valid_codes() })
    }

    pub fn index_of(&self, code: &str) -> Result<usize> {
        self.lookup(code).map(|c| c.index)
    }

    fn valid_codes(&self) -> String {
        self.classes.iter().map(|c| c.code).collect::<Vec<_>>().join(", ")
    }

    pub fn encode(&self, class_index: usize) -> Result<TaskVector> {
        encode_task(class_index, self.len())
    }

    pub fn group_set(&self, group: Group) -> ClassSet {
        let mut set = ClassSet::empty();
        for c in self.classes.iter().filter(|c| c.group == group) {
            set.insert(c.index);
        }
        set
    }

    /// Region and cell classes.
    pub fn tissue_set(&self) -> ClassSet {
        self.group_set(Group::Region).union(self.group_set(Group::Cell))
    }

    pub fn species_set(&self, species: Species) -> ClassSet {
        let mut set = ClassSet::empty();
        for c in self.classes.iter().filter(|c| c.species.contains(species)) {
            set.insert(c.index);
        }
        set
    }

    /// Parse a comma-separated class list; `all` selects every class.
    pub fn parse_set(&self, list: &str) -> Result<ClassSet> {
        let list = list.trim();
        if list.eq_ignore_ascii_case("all") || list.is_empty() {
            return Ok(ClassSet::all());
        }
        let mut set = ClassSet::empty();
        for code in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            set.insert(self.index_of(code)?);
        }
        Ok(set)
    }

    pub fn format_set(&self, set: ClassSet) -> String {
        set.iter().map(|i| self.code(i)).collect::<Vec<_>>().join(",")
    }

    /// All (ancestor, descendant) pairs implied by chains of `contains`.
    pub fn contains_closure(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        let mut reach = vec![vec![false; n]; n];
        for r in self.relations.iter().filter(|r| r.relation == Relation::Contains) {
            reach[r.parent][r.child] = true;
        }
        // Floyd–Warshall style transitive closure.
        for k in 0..n {
            for i in 0..n {
                if reach[i][k] {
                    for j in 0..n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        let mut out = Vec::new();
        for (i, row) in reach.iter().enumerate() {
            for (j, &r) in row.iter().enumerate() {
                if r {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn contains_is_acyclic(&self) -> bool {
        self.contains_closure().iter().all(|&(a, b)| a != b)
    }

    /// Plain-text registry manifest: one tab-separated line per class.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        for c in self.classes {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                c.index,
                c.code,
                c.group.as_str(),
                c.species.label()
            ));
        }
        out
    }

    /// Short digest of [`Taxonomy::manifest`], embedded in datasets and checkpoints.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.manifest().as_bytes());
        let mut hex = String::with_capacity(16);
        for b in &digest[..8] {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }

    pub fn check_fingerprint(&self, found: &str) -> Result<()> {
        let expected = self.fingerprint();
        if expected != found.trim() {
            return Err(Error::FingerprintMismatch { expected, found: found.trim().to_string() });
        }
        Ok(())
    }

    /// Check a registry manifest produced elsewhere against this registry.
    pub fn check_manifest(&self, text: &str) -> Result<()> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.len() != self.len() {
            bail!(Format, "registry manifest has {} classes, expected {}", lines.len(), self.len());
        }
        for (line, c) in lines.iter().zip(self.classes) {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                bail!(Format, "malformed registry line `{line}`");
            }
            let index: usize =
                fields[0].parse().map_err(|_| Error::Format(format!("bad index in `{line}`")))?;
            let group: Group = fields[2].parse()?;
            if index != c.index || fields[1] != c.code || group != c.group || fields[3] != c.species.label()
            {
                bail!(Format, "registry line `{line}` disagrees with class {} ({})", c.index, c.code);
            }
        }
        Ok(())
    }
}

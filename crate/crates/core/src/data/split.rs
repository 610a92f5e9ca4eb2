use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetManifest;
use crate::error::{bail, Result};
use crate::taxonomy::{Taxonomy, CLASS_COUNT};

pub const DEFAULT_RATIOS: [f64; 3] = [0.6, 0.1, 0.3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Realized sample counts of one class across the three splits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassSplit {
    pub task: usize,
    pub counts: [usize; 3],
}

impl ClassSplit {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn fractions(&self) -> [f64; 3] {
        let t = self.total().max(1) as f64;
        [self.counts[0] as f64 / t, self.counts[1] as f64 / t, self.counts[2] as f64 / t]
    }
}

/// Patient-disjoint train/val/test assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub train: BTreeSet<String>,
    pub val: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub ratios: [f64; 3],
    /// Per-class realized counts in registry order.
    pub realized: Vec<ClassSplit>,
    pub warnings: Vec<String>,
}

impl SplitAssignment {
    pub fn patients(&self, split: Split) -> &BTreeSet<String> {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_of(&self, patient: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|&s| self.patients(s).contains(patient))
    }

    /// Entries of `manifest` whose patient falls in `split`.
    pub fn select(&self, manifest: &DatasetManifest, split: Split) -> DatasetManifest {
        let ids = self.patients(split);
        manifest.filter(|e| ids.contains(&e.patient_id))
    }

    /// Plain-text report: patient lists, then per-class counts and fractions.
    pub fn to_text(&self) -> String {
        let tax = Taxonomy::canonical();
        let mut out = String::new();
        for s in Split::ALL {
            let ids: Vec<&str> = self.patients(s).iter().map(String::as_str).collect();
            out.push_str(&format!("{}\t{}\n", s.as_str(), ids.join(",")));
        }
        out.push_str("class\ttrain\tval\ttest\ttrain%\tval%\ttest%\n");
        for c in &self.realized {
            let f = c.fractions();
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.1}\t{:.1}\t{:.1}\n",
                tax.code(c.task),
                c.counts[0],
                c.counts[1],
                c.counts[2],
                100.0 * f[0],
                100.0 * f[1],
                100.0 * f[2]
            ));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning\t{w}\n"));
        }
        out
    }
}

/// Greedy patient-level stratified split.
///
/// Patients are visited in a seeded shuffle, largest first, and each goes to
/// the split with the largest class-weighted shortfall against the target
/// ratios. Ties go to the earlier split. Once the remaining patients are
/// only just enough, they go to splits with a positive ratio that are still
/// empty.
pub fn split_by_patient(manifest: &DatasetManifest, ratios: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    if manifest.is_empty() {
        bail!(InvalidArgument, "cannot split an empty manifest");
    }
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || libm::fabs(ratios.iter().sum::<f64>() - 1.0) > 1e-6 {
        bail!(InvalidArgument, "split ratios {ratios:?} must be nonnegative and sum to 1");
    }
    let mut per_patient: BTreeMap<&str, [usize; CLASS_COUNT]> = BTreeMap::new();
    let mut totals = [0usize; CLASS_COUNT];
    for (i, e) in manifest.entries.iter().enumerate() {
        if e.patient_id.is_empty() {
            bail!(InvalidArgument, "entry {i} has an empty patient id");
        }
        if e.task >= CLASS_COUNT {
            bail!(InvalidArgument, "entry {i} has task index {}", e.task);
        }
        per_patient.entry(e.patient_id.as_str()).or_insert([0; CLASS_COUNT])[e.task] += 1;
        totals[e.task] += 1;
    }

    let mut order: Vec<(&str, [usize; CLASS_COUNT])> = per_patient.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by_key(|(_, counts)| core::cmp::Reverse(counts.iter().sum::<usize>()));

    let mut assigned = [[0usize; CLASS_COUNT]; 3];
    let mut members: [BTreeSet<String>; 3] = Default::default();
    let n = order.len();
    for (k, (patient, counts)) in order.into_iter().enumerate() {
        let starved: Vec<usize> = (0..3).filter(|&s| ratios[s] > 0.0 && members[s].is_empty()).collect();
        let forced = n - k <= starved.len();
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for s in 0..3 {
            if forced && !starved.contains(&s) {
                continue;
            }
            let score: f64 = (0..CLASS_COUNT)
                .filter(|&c| counts[c] > 0)
                .map(|c| {
                    let deficit = ratios[s] * totals[c] as f64 - assigned[s][c] as f64;
                    counts[c] as f64 * deficit / totals[c] as f64
                })
                .sum();
            if score > best_score + 1e-12 {
                best = s;
                best_score = score;
            }
        }
        for c in 0..CLASS_COUNT {
            assigned[best][c] += counts[c];
        }
        members[best].insert(patient.into());
    }

    let tax = Taxonomy::canonical();
    let mut realized = Vec::new();
    let mut warnings = Vec::new();
    for c in (0..CLASS_COUNT).filter(|&c| totals[c] > 0) {
        realized.push(ClassSplit { task: c, counts: [assigned[0][c], assigned[1][c], assigned[2][c]] });
        let owners = manifest
            .entries
            .iter()
            .filter(|e| e.task == c)
            .map(|e| e.patient_id.as_str())
            .collect::<BTreeSet<_>>();
        if owners.len() == 1 {
            warnings.push(format!(
                "class {} comes from a single patient and cannot be stratified",
                tax.code(c)
            ));
        }
    }
    let [train, val, test] = members;
    Ok(SplitAssignment { train, val, test, ratios, realized, warnings })
}

/// Largest deviation, in fraction points, of any class from the target ratios.
pub fn max_ratio_deviation(assignment: &SplitAssignment) -> f64 {
    let mut worst: f64 = 0.0;
    for c in &assignment.realized {
        let f = c.fractions();
        for s in 0..3 {
            worst = worst.max(libm::fabs(f[s] - assignment.ratios[s]));
        }
    }
    worst
}

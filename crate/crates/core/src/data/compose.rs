use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use super::{DatasetManifest, PatchSample};
use crate::error::{bail, Error, Result};
use crate::taxonomy::{Group, Species, Taxonomy};

/// Training regimes for human lesion segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransferApproach {
    /// Human lesion data only.
    H2H,
    /// Rodent lesion data only, applied zero-shot to human data.
    R2H,
    /// Rodent and human lesion data.
    RH2H,
    /// Rodent and human lesion data plus region and cell data.
    RH2HT,
}

impl TransferApproach {
    pub const ALL: [TransferApproach; 4] =
        [TransferApproach::H2H, TransferApproach::R2H, TransferApproach::RH2H, TransferApproach::RH2HT];

    pub fn as_str(self) -> &'static str {
        match self {
            TransferApproach::H2H => "H2H",
            TransferApproach::R2H => "R2H",
            TransferApproach::RH2H => "RH2H",
            TransferApproach::RH2HT => "RH2H_T",
        }
    }

    /// Label as printed in report tables.
    pub fn label(self) -> &'static str {
        match self {
            TransferApproach::H2H => "H2H",
            TransferApproach::R2H => "R2H",
            TransferApproach::RH2H => "R&H2H",
            TransferApproach::RH2HT => "R&H2H+T",
        }
    }

    pub fn domains(self) -> &'static [Species] {
        match self {
            TransferApproach::H2H => &[Species::Human],
            TransferApproach::R2H => &[Species::Rodent],
            TransferApproach::RH2H | TransferApproach::RH2HT => &[Species::Rodent, Species::Human],
        }
    }

    pub fn uses_tissue(self) -> bool {
        self == TransferApproach::RH2HT
    }
}

impl fmt::Display for TransferApproach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransferApproach {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_uppercase();
        match key.as_str() {
            "H2H" => Ok(TransferApproach::H2H),
            "R2H" => Ok(TransferApproach::R2H),
            "RH2H" => Ok(TransferApproach::RH2H),
            "RH2HT" => Ok(TransferApproach::RH2HT),
            _ => bail!(InvalidArgument, "unknown approach `{s}` (expected H2H, R2H, RH2H or RH2H_T)"),
        }
    }
}

/// Training splits of each species domain.
#[derive(Debug, Clone, Default)]
pub struct DomainSplits {
    pub rodent: Option<DatasetManifest>,
    pub human: Option<DatasetManifest>,
}

impl DomainSplits {
    pub fn get(&self, species: Species) -> Option<&DatasetManifest> {
        match species {
            Species::Rodent => self.rodent.as_ref(),
            Species::Human => self.human.as_ref(),
        }
    }
}

/// Items of the approach's domains in its class groups, rodent first, then
/// for the tissue variant the region and cell items in the same domain order.
fn compose_by<T: Clone>(
    rodent: Option<&[T]>,
    human: Option<&[T]>,
    approach: TransferApproach,
    key: impl Fn(&T) -> (Species, usize),
) -> Result<Vec<T>> {
    let tax = Taxonomy::canonical();
    let lesions = tax.group_set(Group::Lesion);
    let tissue = tax.tissue_set();
    let source = |species: Species| match species {
        Species::Rodent => rodent,
        Species::Human => human,
    };
    let mut domains = Vec::new();
    for &species in approach.domains() {
        match source(species) {
            Some(items) if !items.is_empty() => domains.push((species, items)),
            _ => bail!(MissingDomain, "{approach} needs {species} training data"),
        }
    }
    let mut out = Vec::new();
    let mut groups = alloc::vec![lesions];
    if approach.uses_tissue() {
        groups.push(tissue);
    }
    for group in groups {
        for &(species, items) in &domains {
            out.extend(items.iter().filter(|x| {
                let (s, task) = key(x);
                s == species && group.contains(task)
            }).cloned());
        }
    }
    Ok(out)
}

/// Training manifest for `approach`: lesion entries of the required domains,
/// plus every region and cell entry for the tissue variant.
pub fn compose_training_set(splits: &DomainSplits, approach: TransferApproach) -> Result<DatasetManifest> {
    let tax = Taxonomy::canonical();
    for m in [&splits.rodent, &splits.human].into_iter().flatten() {
        tax.check_fingerprint(&m.taxonomy_fingerprint)?;
    }
    let entries = compose_by(
        splits.rodent.as_ref().map(|m| m.entries.as_slice()),
        splits.human.as_ref().map(|m| m.entries.as_slice()),
        approach,
        |e| (e.species, e.task),
    )?;
    Ok(DatasetManifest::new(entries))
}

/// [`compose_training_set`] over loaded samples.
pub fn compose_samples(
    rodent: Option<&[PatchSample]>,
    human: Option<&[PatchSample]>,
    approach: TransferApproach,
) -> Result<Vec<PatchSample>> {
    compose_by(rodent, human, approach, |s| (s.species, s.task))
}

use std::collections::BTreeMap;

use glomseg_core::data::{
    compose_training_set, interleave_by_class, load_samples, max_ratio_deviation, pool_feed, split_by_patient,
    DatasetManifest, DomainSplits, ImagePool, ManifestEntry, Mask, MemorySource, PatchSample, RgbImage, Split,
    TransferApproach, DEFAULT_RATIOS,
};
use glomseg_core::taxonomy::{ClassSet, Group, Species, Taxonomy};
use glomseg_core::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn entry(i: usize, task: usize, patient: &str, species: Species) -> ManifestEntry {
    ManifestEntry {
        image_path: format!("img/{i}.png"),
        mask_path: format!("img/{i}_mask.png"),
        task,
        patient_id: patient.to_string(),
        species,
        source_wsi: format!("wsi-{patient}"),
    }
}

/// `per_patient[p]` maps class index to sample count for patient `p`.
fn manifest_from(per_patient: &[Vec<(usize, usize)>]) -> DatasetManifest {
    let mut entries = Vec::new();
    for (p, classes) in per_patient.iter().enumerate() {
        for &(task, n) in classes {
            for _ in 0..n {
                let i = entries.len();
                entries.push(entry(i, task, &format!("P{p:03}"), Species::Rodent));
            }
        }
    }
    DatasetManifest::new(entries)
}

#[test]
fn ten_uniform_patients_split_six_one_three() {
    let m = manifest_from(&vec![vec![(0, 5)]; 10]);
    let a = split_by_patient(&m, DEFAULT_RATIOS, 7).unwrap();
    assert_eq!((a.train.len(), a.val.len(), a.test.len()), (6, 1, 3));
    let b = split_by_patient(&m, DEFAULT_RATIOS, 7).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_text(), b.to_text());
}

#[test]
fn split_rejects_bad_input() {
    assert!(matches!(split_by_patient(&DatasetManifest::default(), DEFAULT_RATIOS, 1), Err(Error::InvalidArgument(_))));
    let m = manifest_from(&vec![vec![(0, 1)]; 3]);
    assert!(split_by_patient(&m, [0.5, 0.1, 0.3], 1).is_err());
    let mut bad = m.clone();
    bad.entries[0].patient_id.clear();
    assert!(split_by_patient(&bad, DEFAULT_RATIOS, 1).is_err());
}

#[test]
fn single_patient_class_is_warned_about() {
    let mut pp = vec![vec![(0, 3)]; 6];
    pp[2].push((5, 4));
    let a = split_by_patient(&manifest_from(&pp), DEFAULT_RATIOS, 3).unwrap();
    assert_eq!(a.warnings.len(), 1);
    assert!(a.warnings[0].contains("AH"), "{:?}", a.warnings);
}

// Tissue totals of the split table are 12,410 / 2,393 / 6,206, about
// 59 / 11 / 30 percent. A cohort with many patients of uneven size should
// land every class within 10 points of the target ratios.
#[test]
fn realistic_cohort_stays_within_ten_points() {
    let tax = Taxonomy::canonical();
    let tissue: Vec<usize> = tax.tissue_set().iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    use rand::Rng;
    let per_patient: Vec<Vec<(usize, usize)>> = (0..80)
        .map(|_| {
            let mut classes = Vec::new();
            for &c in &tissue {
                if rng.random_bool(0.8) {
                    classes.push((c, rng.random_range(5..60)));
                }
            }
            classes
        })
        .collect();
    let m = manifest_from(&per_patient);
    let a = split_by_patient(&m, DEFAULT_RATIOS, 11).unwrap();
    let dev = max_ratio_deviation(&a);
    assert!(dev <= 0.10, "deviation {dev}\n{}", a.to_text());
    let reference = [12_410.0, 2_393.0, 6_206.0];
    let total: f64 = reference.iter().sum();
    let mut counts = [0usize; 3];
    for c in &a.realized {
        for s in 0..3 {
            counts[s] += c.counts[s];
        }
    }
    let n: usize = counts.iter().sum();
    for s in 0..3 {
        let got = counts[s] as f64 / n as f64;
        assert!((got - reference[s] / total).abs() <= 0.10, "split {s}: {got}");
    }
}

#[test]
fn select_returns_only_split_patients() {
    let m = manifest_from(&vec![vec![(0, 2), (7, 1)]; 10]);
    let a = split_by_patient(&m, DEFAULT_RATIOS, 5).unwrap();
    let mut seen = 0;
    for s in Split::ALL {
        let part = a.select(&m, s);
        assert!(part.entries.iter().all(|e| a.split_of(&e.patient_id) == Some(s)));
        seen += part.len();
    }
    assert_eq!(seen, m.len());
}

#[test]
fn manifest_text_round_trip() {
    let mut m = DatasetManifest::new(vec![
        entry(0, 0, "A", Species::Human),
        entry(1, 9, "B", Species::Human),
        ManifestEntry { source_wsi: String::new(), ..entry(2, 1, "C", Species::Rodent) },
    ]);
    m.normalization = Some(glomseg_core::data::Normalization { mean: [120.5, 80.0, 99.25], std: [30.0, 20.5, 10.0] });
    let back = DatasetManifest::from_text(&m.to_text()).unwrap();
    assert_eq!(back, m);
    back.validate().unwrap();
}

#[test]
fn manifest_rejects_species_inconsistency_and_stale_registry() {
    let m = DatasetManifest::new(vec![entry(0, 1, "A", Species::Human)]);
    assert!(matches!(m.validate(), Err(Error::InvalidSample(_))));
    let mut stale = DatasetManifest::new(vec![entry(0, 1, "A", Species::Rodent)]);
    stale.taxonomy_fingerprint = "deadbeefdeadbeef".into();
    assert!(matches!(stale.validate(), Err(Error::FingerprintMismatch { .. })));
    assert!(DatasetManifest::from_text("nonsense").is_err());
    let text = DatasetManifest::new(vec![entry(0, 0, "A", Species::Rodent)]).to_text().replace("\tCap\t", "\tBogus\t");
    assert!(matches!(DatasetManifest::from_text(&text), Err(Error::UnknownClass { .. })));
}

#[test]
fn load_samples_checks_shapes() {
    let m = DatasetManifest::new(vec![entry(0, 7, "A", Species::Human)]);
    let mut src = MemorySource::new();
    src.insert_image("img/0.png", RgbImage::new(8, 8));
    src.insert_mask("img/0_mask.png", Mask::from_fn(8, 8, |x, _| x < 3));
    let s = load_samples(&m, &src).unwrap();
    assert_eq!(s[0].mask.area(), 24);
    src.insert_mask("img/0_mask.png", Mask::new(4, 4));
    assert!(load_samples(&m, &src).is_err());
    src.remove_image("img/0.png");
    assert!(load_samples(&m, &src).is_err());
}

#[test]
fn sample_validation() {
    let ok = PatchSample {
        image: RgbImage::new(16, 16),
        mask: Mask::new(16, 16),
        task: 7,
        patient_id: "P".into(),
        species: Species::Human,
        source_wsi: String::new(),
    };
    ok.validate(Some(16)).unwrap();
    assert!(ok.validate(Some(32)).is_err());
    assert!(PatchSample { task: 2, ..ok.clone() }.validate(None).is_err());
    assert!(PatchSample { task: 14, ..ok.clone() }.validate(None).is_err());
    assert!(PatchSample { patient_id: String::new(), ..ok.clone() }.validate(None).is_err());
    assert!(PatchSample { mask: Mask::new(16, 8), ..ok }.validate(None).is_err());
}

fn domain_manifest(species: Species) -> DatasetManifest {
    let tax = Taxonomy::canonical();
    let entries = tax
        .species_set(species)
        .iter()
        .enumerate()
        .flat_map(|(i, c)| (0..2).map(move |k| entry(100 * i + k, c, &format!("{}{k}", species.as_str()), species)))
        .collect();
    DatasetManifest::new(entries)
}

#[test]
fn composition_per_approach() {
    let tax = Taxonomy::canonical();
    let lesions = tax.group_set(Group::Lesion);
    let splits = DomainSplits { rodent: Some(domain_manifest(Species::Rodent)), human: Some(domain_manifest(Species::Human)) };
    let lesion_count = |s: Species| splits.get(s).unwrap().entries.iter().filter(|e| lesions.contains(e.task)).count();

    let h2h = compose_training_set(&splits, TransferApproach::H2H).unwrap();
    assert!(h2h.entries.iter().all(|e| e.species == Species::Human && lesions.contains(e.task)));
    assert_eq!(h2h.len(), lesion_count(Species::Human));

    let r2h = compose_training_set(&splits, TransferApproach::R2H).unwrap();
    assert!(r2h.entries.iter().all(|e| e.species == Species::Rodent && lesions.contains(e.task)));

    let rh2h = compose_training_set(&splits, TransferApproach::RH2H).unwrap();
    assert_eq!(rh2h.len(), lesion_count(Species::Rodent) + lesion_count(Species::Human));
    assert!(rh2h.task_set().is_subset(lesions));

    let rh2ht = compose_training_set(&splits, TransferApproach::RH2HT).unwrap();
    assert!(tax.tissue_set().is_subset(rh2ht.task_set()));
    assert_eq!(&rh2ht.entries[..rh2h.len()], &rh2h.entries[..]);
    assert!(rh2ht.len() > rh2h.len());
}

#[test]
fn composition_requires_domains() {
    let rodent_only = DomainSplits { rodent: Some(domain_manifest(Species::Rodent)), human: None };
    assert!(matches!(compose_training_set(&rodent_only, TransferApproach::H2H), Err(Error::MissingDomain(_))));
    assert!(compose_training_set(&rodent_only, TransferApproach::RH2H).is_err());
    compose_training_set(&rodent_only, TransferApproach::R2H).unwrap();
    let mut stale = rodent_only.clone();
    stale.rodent.as_mut().unwrap().taxonomy_fingerprint = "x".into();
    assert!(compose_training_set(&stale, TransferApproach::R2H).is_err());
}

#[test]
fn approach_names() {
    for a in TransferApproach::ALL {
        assert_eq!(a.as_str().parse::<TransferApproach>().unwrap(), a);
        assert_eq!(a.label().parse::<TransferApproach>().unwrap(), a);
    }
    assert_eq!(TransferApproach::RH2HT.label(), "R&H2H+T");
    assert!("H2R".parse::<TransferApproach>().is_err());
}

#[test]
fn pool_examples() {
    let all = ClassSet::all();
    let mut pool = ImagePool::for_classes(all, 4, 1).unwrap();
    assert_eq!(pool.capacity(), 14);
    for i in 0..4 {
        assert!(pool.push(i, i).unwrap().is_none());
    }
    assert_eq!(pool.flush().unwrap().len(), 4);

    let mut pool = ImagePool::for_classes(all, 4, 9).unwrap();
    let batches = pool_feed(&mut pool, (0..56).map(|i| (i % 14, i))).unwrap();
    assert_eq!(batches.len(), 14);
    assert!(batches.iter().all(|b| b.len() == 4));
    let mut seen: Vec<usize> = batches.concat();
    seen.sort();
    assert_eq!(seen, (0..56).collect::<Vec<_>>());

    let mut pool = ImagePool::new(5, ClassSet::of(&[3]), 4, 0).unwrap();
    assert!(matches!(pool.push(4, 0), Err(Error::InvalidSample(_))));
    assert!(ImagePool::<u8>::new(4, all, 4, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pool_conserves_and_respects_occupancy(
        tasks in prop::collection::vec(0usize..14, 0..500),
        extra in 0usize..12,
        seed in any::<u64>(),
        drop_last in any::<bool>(),
    ) {
        let capacity = 5 + extra;
        let mut pool = ImagePool::new(capacity, ClassSet::all(), 4, seed).unwrap().with_drop_last(drop_last);
        let mut batches = Vec::new();
        for (i, &t) in tasks.iter().enumerate() {
            let before = pool.occupancy();
            let out = pool.push(t, i).unwrap();
            prop_assert!(pool.occupancy() <= capacity);
            match out {
                Some(b) => {
                    prop_assert_eq!(before + 1, 5);
                    prop_assert_eq!(b.len(), 4);
                    batches.push(b);
                }
                None => prop_assert!(before + 1 <= 4),
            }
        }
        let rest = pool.flush();
        prop_assert_eq!(pool.occupancy(), 0);
        let leftover = tasks.len() - 4 * batches.len();
        prop_assert!(leftover <= 4);
        match rest {
            Some(r) => { prop_assert!(!drop_last); prop_assert_eq!(r.len(), leftover); batches.push(r); }
            None => prop_assert!(drop_last || leftover == 0),
        }
        let mut all: Vec<usize> = batches.concat();
        all.sort();
        if drop_last {
            prop_assert_eq!(all.len(), tasks.len() - leftover);
            all.dedup();
            prop_assert_eq!(all.len(), tasks.len() - leftover);
        } else {
            prop_assert_eq!(all, (0..tasks.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn pool_is_deterministic(tasks in prop::collection::vec(0usize..14, 0..200), seed in any::<u64>()) {
        let run = || {
            let mut pool = ImagePool::for_classes(ClassSet::all(), 4, seed).unwrap();
            pool_feed(&mut pool, tasks.iter().copied().enumerate().map(|(i, t)| (t, i))).unwrap()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn interleave_is_a_permutation(tasks in prop::collection::vec(0usize..14, 0..200), seed in any::<u64>()) {
        let items: Vec<(usize, usize)> = tasks.iter().copied().enumerate().map(|(i, t)| (t, i)).collect();
        let out = interleave_by_class(items.clone(), &mut ChaCha8Rng::seed_from_u64(seed));
        let mut a = out.clone();
        a.sort();
        let mut b = items;
        b.sort();
        prop_assert_eq!(a, b);
        // round-robin: the first k items come from k distinct classes
        let distinct = tasks.iter().collect::<std::collections::BTreeSet<_>>().len();
        let head: std::collections::BTreeSet<usize> = out.iter().take(distinct).map(|x| x.0).collect();
        prop_assert_eq!(head.len(), distinct);
    }

    #[test]
    fn split_is_disjoint_total_and_deterministic(
        sizes in prop::collection::vec(prop::collection::vec((0usize..14, 1usize..6), 1..4), 3..30),
        seed in any::<u64>(),
    ) {
        let m = manifest_from(&sizes);
        let a = split_by_patient(&m, DEFAULT_RATIOS, seed).unwrap();
        prop_assert!(a.train.is_disjoint(&a.val));
        prop_assert!(a.train.is_disjoint(&a.test));
        prop_assert!(a.val.is_disjoint(&a.test));
        prop_assert_eq!(a.train.len() + a.val.len() + a.test.len(), sizes.len());
        prop_assert!(!a.train.is_empty() && !a.val.is_empty() && !a.test.is_empty());
        let again = split_by_patient(&m, DEFAULT_RATIOS, seed).unwrap();
        prop_assert_eq!(a.to_text(), again.to_text());
        let mut per_class: BTreeMap<usize, usize> = BTreeMap::new();
        for e in &m.entries { *per_class.entry(e.task).or_default() += 1; }
        for c in &a.realized {
            prop_assert_eq!(c.total(), per_class[&c.task]);
        }
    }

    #[test]
    fn manifest_round_trips(tasks in prop::collection::vec((0usize..14, 0u8..5), 0..40)) {
        let tax = Taxonomy::canonical();
        let entries = tasks.iter().enumerate().map(|(i, &(t, p))| {
            let species = if tax.class(t).species.contains(Species::Rodent) { Species::Rodent } else { Species::Human };
            entry(i, t, &format!("pt{p}"), species)
        }).collect();
        let m = DatasetManifest::new(entries);
        prop_assert_eq!(DatasetManifest::from_text(&m.to_text()).unwrap(), m);
    }
}

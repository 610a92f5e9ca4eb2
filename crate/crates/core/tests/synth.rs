use glomseg_core::data::Mask;
use glomseg_core::metrics::dice_score;
use glomseg_core::synth::{
    emit_partial_dataset, generate_phantom, label_all, lesion_classes, oracle_dice, ColorShift, PhantomSpec,
    TransferBenchmark,
};
use glomseg_core::taxonomy::{ClassSet, Relation, Species, Taxonomy, CLASS_COUNT};
use glomseg_core::Error;
use proptest::prelude::*;

const CAP: usize = 0;
const TUFT: usize = 1;
const MES: usize = 2;
const POD: usize = 3;
const MEC: usize = 4;
const GS: usize = 7;

fn mean_inside(image: &glomseg_core::data::RgbImage, mask: &Mask, inside: bool) -> [f64; 3] {
    let (mut sum, mut n) = ([0.0; 3], 0usize);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) == inside {
                let p = image.pixel(x, y);
                for c in 0..3 {
                    sum[c] += p[c] as f64;
                }
                n += 1;
            }
        }
    }
    sum.map(|s| s / n.max(1) as f64)
}

#[test]
fn seed_one_defaults() {
    let p = generate_phantom(&PhantomSpec::new(1, 512)).unwrap();
    assert!(p.mask(TUFT).area() < p.mask(CAP).area());
    assert!(p.mask(TUFT).is_subset_of(p.mask(CAP)));
    let cap = p.mask(CAP);
    let ratio = p.mask(GS).intersection_area(cap) as f64 / cap.area() as f64;
    assert!(ratio >= 0.90, "{ratio}");
    let again = generate_phantom(&PhantomSpec::new(1, 512)).unwrap();
    assert_eq!(p, again);
}

#[test]
fn infeasible_specs_are_rejected() {
    let mut spec = PhantomSpec::new(3, 64);
    spec.capsule.rx = 200.0;
    assert!(matches!(generate_phantom(&spec), Err(Error::InvalidSpec(_))));
    let mut spec = PhantomSpec::new(3, 64);
    spec.mes_scale = 0.0;
    assert!(generate_phantom(&spec).is_err());
    assert!(generate_phantom(&PhantomSpec::new(3, 8)).is_err());
}

#[test]
fn every_class_carries_image_signal() {
    for seed in 0..4 {
        let p = generate_phantom(&PhantomSpec::new(seed, 128)).unwrap();
        for c in 0..CLASS_COUNT {
            let a = mean_inside(&p.image, p.mask(c), true);
            let b = mean_inside(&p.image, p.mask(c), false);
            let dist = ((0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>()).sqrt();
            assert!(dist >= 15.0, "seed {seed} class {c}: colour gap {dist:.1}");
        }
    }
}

#[test]
fn cells_sit_in_their_regions() {
    for seed in 0..8 {
        let p = generate_phantom(&PhantomSpec::new(seed, 256)).unwrap();
        for (cell, region) in [(POD, TUFT), (MEC, MES)] {
            let inside = p.mask(cell).intersection_area(p.mask(region)) as f64 / p.mask(cell).area() as f64;
            assert!(inside >= 0.5, "seed {seed} cell {cell}: {inside}");
        }
    }
}

#[test]
fn colour_shift_changes_only_appearance() {
    let plain = generate_phantom(&PhantomSpec::new(5, 64)).unwrap();
    let shifted = generate_phantom(&PhantomSpec::new(5, 64).with_species(Species::Human, ColorShift::seeded(5, 0.35))).unwrap();
    assert_eq!(plain.masks, shifted.masks);
    assert_ne!(plain.image, shifted.image);
    assert_eq!(ColorShift::seeded(9, 0.0), ColorShift::default());
}

#[test]
fn emit_examples() {
    let specs: Vec<PhantomSpec> = (0..56).map(|s| PhantomSpec::new(s, 32)).collect();
    let d = emit_partial_dataset(&specs, ClassSet::all(), 10).unwrap();
    assert_eq!(d.manifest.len(), 56);
    assert_eq!(d.manifest.task_set(), ClassSet::all());
    assert_eq!(d.manifest.patients().len(), 10);
    d.manifest.validate().unwrap();
    for s in &d.samples {
        s.validate(Some(32)).unwrap();
        assert!(!s.mask.is_empty());
    }
    let src = d.source();
    assert_eq!(glomseg_core::data::load_samples(&d.manifest, &src).unwrap(), d.samples);

    let gs = emit_partial_dataset(&specs[..6], ClassSet::of(&[GS]), 3).unwrap();
    assert!(gs.manifest.entries.iter().all(|e| e.task == GS));
    assert!(matches!(emit_partial_dataset(&specs, ClassSet::all(), 2), Err(Error::InvalidArgument(_))));
    assert!(emit_partial_dataset(&specs, ClassSet::empty(), 5).is_err());
}

#[test]
fn label_all_respects_species() {
    let tax = Taxonomy::canonical();
    let human = generate_phantom(&PhantomSpec::new(2, 32).with_species(Species::Human, ColorShift::default())).unwrap();
    let labelled = label_all(&human, ClassSet::all(), "H1");
    assert_eq!(labelled.len(), 7);
    assert!(labelled.iter().all(|s| s.species == Species::Human && tax.class(s.task).species.contains(Species::Human)));
    let rodent = generate_phantom(&PhantomSpec::new(2, 32)).unwrap();
    assert_eq!(label_all(&rodent, ClassSet::all(), "R1").len(), 13);
}

#[test]
fn transfer_benchmark_shape() {
    let b = TransferBenchmark::new(4);
    let d = b.build().unwrap();
    let (r, h) = (d.rodent.as_ref().unwrap(), d.human.as_ref().unwrap());
    assert_eq!((r.train.len(), h.train.len()), (40, 8));
    assert!(r.train.iter().chain(&h.train).all(|s| lesion_classes().contains(s.task)));
    assert!(h.train.iter().all(|s| s.species == Species::Human));
    let common = d.evaluation_classes();
    assert_eq!(Taxonomy::canonical().format_set(common), "GS,HS,MA,NS,SS");
    assert_eq!(b.build().unwrap().human.unwrap().test, h.test);
}

fn mask_strategy(w: usize, h: usize) -> impl Strategy<Value = Mask> {
    prop::collection::vec(any::<bool>(), w * h).prop_map(move |bits| Mask::from_fn(w, h, |x, y| bits[y * w + x]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hierarchy_holds_for_every_phantom(seed in any::<u64>(), canvas in 32usize..96) {
        let p = generate_phantom(&PhantomSpec::new(seed, canvas)).unwrap();
        for r in Taxonomy::canonical().relations() {
            match r.relation {
                Relation::Contains => prop_assert!(p.mask(r.child).is_subset_of(p.mask(r.parent))),
                Relation::Overlaps => prop_assert!(p.mask(r.child).intersection_area(p.mask(r.parent)) > 0),
            }
        }
        let cap = p.mask(CAP);
        prop_assert!(p.mask(GS).intersection_area(cap) as f64 >= 0.9 * cap.area() as f64);
        prop_assert!(p.masks.iter().all(|m| !m.is_empty()));
    }
}

proptest! {
    #[test]
    fn oracle_is_symmetric_bounded_and_exact(a in mask_strategy(7, 5), b in mask_strategy(7, 5)) {
        let ab = oracle_dice(&a, &b).unwrap();
        prop_assert_eq!(ab, oracle_dice(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab == 1.0, a == b);
        prop_assert_eq!(ab, dice_score(&a, &b).unwrap());
    }
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! `ACCEPTANCE_ONLY=7,8` runs a subset.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use glomseg::export::parse_legend;
use glomseg::io::read_mask;
use glomseg::run::read_metrics;
use glomseg_core::data::{DatasetManifest, ImagePool, Mask, Normalization, PatchSample, TransferApproach};
use glomseg_core::evaluation::{
    evaluate, render_details, render_tsv, rodent_supervised_eval, run_transfer_suite, ConstantSegmenter, EvalKind,
    EvalOptions, EvalReport, ModelSegmenter,
};
use glomseg_core::loss::{loss_and_grad, LossKind};
use glomseg_core::metrics::dice_score;
use glomseg_core::network::{Checkpoint, DynamicHeadNet, DynamicKernels, NetConfig};
use glomseg_core::nn::FeatureMap;
use glomseg_core::optim::{Method, OptimizerConfig};
use glomseg_core::synth::{generate_phantom, label_all, PhantomSpec, TransferBenchmark};
use glomseg_core::taxonomy::{encode_task, ClassSet, Species, Taxonomy};
use glomseg_core::training::{train, KeepBest, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($arg:tt)*) => {
        if !$cond {
            return Err(format!($($arg)*));
        }
    };
}

fn adam(lr: f64) -> OptimizerConfig {
    OptimizerConfig { method: Method::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }, lr, weight_decay: 1e-4 }
}

fn random_map(seed: u64, c: usize, size: usize) -> FeatureMap<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FeatureMap::from_vec(c, size, size, (0..c * size * size).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Counting Dice: 2|A∩B| / (|A| + |B|), 1 when both are empty.
fn count_dice(a: &[bool], b: &[bool]) -> f64 {
    let (mut both, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
    }
    if na + nb == 0 {
        1.0
    } else {
        2.0 * both as f64 / (na + nb) as f64
    }
}

fn bits(m: &Mask) -> Vec<bool> {
    m.as_bytes().iter().map(|&v| v != 0).collect()
}

fn c1_task_encoding() -> Check {
    for i in 0..14 {
        let v = encode_task(i, 14).map_err(|e| e.to_string())?;
        ensure!(v.len() == 14, "length {} for class {i}", v.len());
        for (j, &e) in v.entries().iter().enumerate() {
            ensure!(e == (i == j) as u8, "class {i}: entry {j} is {e}");
        }
        ensure!(v.class_index() == i, "class {i} decodes to {}", v.class_index());
    }
    ensure!(encode_task(14, 14).is_err(), "index 14 accepted");
    Ok("14 one-hot vectors".into())
}

fn c2_head_arithmetic() -> Check {
    let cfg = NetConfig::default();
    let layout = cfg.head();
    let sum: usize = layout.layer_shapes().iter().map(|&(i, o)| i * o + o).sum();
    ensure!(layout.kernel_count() == sum, "layout {} vs shapes {sum}", layout.kernel_count());
    ensure!(sum == 162, "kernel count {sum}");
    ensure!(cfg.controller().kernel_budget == 162, "controller budget {}", cfg.controller().kernel_budget);
    let net = DynamicHeadNet::<f64>::new(NetConfig::reduced(16, &[8, 16]), 0).map_err(|e| e.to_string())?;
    let out = net.backbone_forward(&random_map(1, 3, 16)).map_err(|e| e.to_string())?;
    for t in 0..14 {
        let k = net.controller_forward(&out.bottleneck, &encode_task(t, 14).unwrap()).map_err(|e| e.to_string())?;
        ensure!(k.len() == 162, "controller emitted {} values", k.len());
    }
    Ok("controller output 162 = (8*8+8) + (8*8+8) + (8*2+2)".into())
}

fn c3_zero_kernel() -> Check {
    let net = DynamicHeadNet::<f64>::new(NetConfig::reduced(32, &[8, 16, 32]), 2).map_err(|e| e.to_string())?;
    let out = net.backbone_forward(&random_map(3, 3, 32)).map_err(|e| e.to_string())?;
    let pred = net.head_forward(&out.decoded, &DynamicKernels::zeros(net.head_layout())).map_err(|e| e.to_string())?;
    let worst = pred.foreground_probability().iter().map(|p| (p - 0.5).abs()).fold(0.0, f64::max);
    ensure!(worst <= 1e-7, "max |p - 0.5| = {worst:e}");
    Ok(format!("max |p - 0.5| = {worst:e}"))
}

fn objective(net: &DynamicHeadNet<f64>, x: &FeatureMap<f64>, task: usize, target: &[u8]) -> f64 {
    let p = net.forward(x, &encode_task(task, 14).unwrap()).unwrap();
    loss_and_grad(p.logits(), target, LossKind::DiceBce).unwrap().0.total(LossKind::DiceBce)
}

fn c4_gradient_check() -> Check {
    let net = DynamicHeadNet::<f64>::new(NetConfig::reduced(32, &[4, 8, 16]), 21).map_err(|e| e.to_string())?;
    ensure!(net.config().stages() == 3, "stages {}", net.config().stages());
    let phantom = generate_phantom(&PhantomSpec::new(8, 32)).map_err(|e| e.to_string())?;
    let task = Taxonomy::canonical().index_of("Tuft").unwrap();
    let x = phantom.image.to_input::<f64>(&Normalization::from_images([&phantom.image]));
    let target = phantom.mask(task).as_bytes().to_vec();
    let (pred, cache) = net.forward_train(&x, &encode_task(task, 14).unwrap()).map_err(|e| e.to_string())?;
    let (_, d) = loss_and_grad(pred.logits(), &target, LossKind::DiceBce).map_err(|e| e.to_string())?;
    let mut grads = vec![0.0; net.params().len()];
    net.backward(&cache, &d, &mut grads);
    let mut notes = Vec::new();
    for name in ["controller.weight", "controller.bias", "backbone.enc1.entry.conv.weight"] {
        let spec = net.layout().find(name).ok_or(format!("no tensor {name}"))?.clone();
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for idx in spec.offset..spec.offset + spec.len {
            let h = 1e-5;
            let mut plus = net.clone();
            plus.params_mut()[idx] += h;
            let mut minus = net.clone();
            minus.params_mut()[idx] -= h;
            let fd = (objective(&plus, &x, task, &target) - objective(&minus, &x, task, &target)) / (2.0 * h);
            num += (fd - grads[idx]).powi(2);
            den += fd.powi(2).max(grads[idx].powi(2));
        }
        ensure!(den > 0.0, "{name}: zero gradient");
        let rel = (num / den).sqrt();
        ensure!(rel <= 1e-3, "{name}: relative error {rel:e}");
        notes.push(format!("{name} {rel:.1e}"));
    }
    Ok(notes.join(", "))
}

fn c5_dice_oracle() -> Check {
    let grid = |code: u32| Mask::from_fn(3, 3, |x, y| code >> (y * 3 + x) & 1 == 1);
    let all: Vec<Mask> = (0..512).map(grid).collect();
    for a in &all {
        let ba = bits(a);
        for b in &all {
            let d = dice_score(a, b).map_err(|e| e.to_string())?;
            let o = count_dice(&ba, &bits(b));
            ensure!(d == o, "3x3 pair: {d} vs {o}");
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let (pa, pb) = (rng.random::<f64>(), rng.random::<f64>());
        let a = Mask::from_fn(16, 16, |_, _| rng.random_bool(pa));
        let b = Mask::from_fn(16, 16, |_, _| rng.random_bool(pb));
        let (d, o) = (dice_score(&a, &b).map_err(|e| e.to_string())?, count_dice(&bits(&a), &bits(&b)));
        ensure!(d == o, "16x16 pair: {d} vs {o}");
    }
    Ok("262144 exhaustive 3x3 pairs and 1000 random 16x16 pairs agree exactly".into())
}

fn c6_pool() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for stream_id in 0..10 {
        let n = rng.random_range(1..=500usize);
        let active = ClassSet::of(&(0..rng.random_range(1..=14usize)).collect::<Vec<_>>());
        let classes: Vec<usize> = active.iter().collect();
        let stream: Vec<(usize, usize)> = (0..n).map(|i| (classes[rng.random_range(0..classes.len())], i)).collect();
        let seed = rng.random::<u64>();
        let run = || -> Result<Vec<Vec<usize>>, String> {
            let mut pool = ImagePool::new(active.len().max(5), active, 4, seed).map_err(|e| e.to_string())?;
            let mut batches = Vec::new();
            for &(task, i) in &stream {
                let before = pool.occupancy();
                match pool.push(task, i).map_err(|e| e.to_string())? {
                    Some(b) => {
                        ensure!(before + 1 > 4, "stream {stream_id}: emitted at occupancy {}", before + 1);
                        ensure!(b.len() == 4, "stream {stream_id}: batch of {}", b.len());
                        batches.push(b);
                    }
                    None => ensure!(before + 1 <= 4, "stream {stream_id}: held {} samples", before + 1),
                }
            }
            if let Some(rest) = pool.flush() {
                ensure!(!rest.is_empty() && rest.len() <= 4, "stream {stream_id}: flush of {}", rest.len());
                batches.push(rest);
            }
            Ok(batches)
        };
        let batches = run()?;
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        ensure!(seen == (0..n).collect::<Vec<_>>(), "stream {stream_id}: samples lost or duplicated");
        ensure!(run()? == batches, "stream {stream_id}: not deterministic");
    }
    Ok("10 streams: conservation, batch size 4, no early emission, determinism".into())
}

fn phantom_set(seeds: std::ops::Range<u64>, canvas: usize) -> Vec<PatchSample> {
    let mut out = Vec::new();
    for s in seeds {
        let species = if s % 2 == 0 { Species::Rodent } else { Species::Human };
        let mut spec = PhantomSpec::new(s, canvas);
        spec.species = species;
        let p = generate_phantom(&spec).unwrap();
        out.extend(label_all(&p, ClassSet::all(), &format!("P{s}")));
    }
    out
}

fn c7_hierarchy_overfit() -> Check {
    let train_set = phantom_set(0..20, 64);
    let val = phantom_set(100..104, 64);
    let test = phantom_set(200..206, 64);
    let tasks = train_set.iter().fold(ClassSet::empty(), |mut s, x| {
        s.insert(x.task);
        s
    });
    ensure!(tasks == ClassSet::all(), "training phantoms cover {} classes", tasks.len());
    let tax = Taxonomy::canonical();
    for s in train_set.iter().filter(|s| s.task == tax.index_of("Tuft").unwrap()) {
        let cap = train_set.iter().find(|c| c.image == s.image && c.task == 0).ok_or("Tuft without Cap")?;
        ensure!(s.mask.is_subset_of(&cap.mask), "Tuft not inside Cap");
    }
    let mut model = DynamicHeadNet::<f32>::new(NetConfig::reduced(64, &[8, 16, 32]), 1).map_err(|e| e.to_string())?;
    let cfg = TrainConfig { epochs: 60, optimizer: adam(1e-3), seed: 1, ..Default::default() };
    let mut keep = KeepBest::default();
    let state = train(&mut model, &train_set, &val, &cfg, &mut keep).map_err(|e| e.to_string())?;
    keep.restore(&mut model);
    let seg = ModelSegmenter::new(&model, state.normalization);
    let tr = evaluate(&seg, &train_set, ClassSet::all(), EvalOptions::default()).map_err(|e| e.to_string())?;
    let te = evaluate(&seg, &test, ClassSet::all(), EvalOptions::default()).map_err(|e| e.to_string())?;
    let detail = format!(
        "{} epochs (best {}), train Dice {:.3}, held-out Dice {:.3}",
        cfg.epochs, state.best_epoch, tr.average, te.average
    );
    ensure!(tr.average >= 0.90 && te.average >= 0.80, "{detail}");
    Ok(detail)
}

struct TransferRuns {
    margins: Vec<f64>,
    r2h_seed0: Option<(String, String)>,
    detail: String,
}

fn transfer_config(seed: u64) -> TrainConfig {
    TrainConfig { epochs: 40, optimizer: adam(3e-3), seed, ..Default::default() }
}

fn transfer_runs() -> Result<TransferRuns, String> {
    let mut margins = Vec::new();
    let mut r2h_seed0 = None;
    let mut parts = Vec::new();
    for seed in 0..3u64 {
        let data = TransferBenchmark::new(seed).build().map_err(|e| e.to_string())?;
        let out = run_transfer_suite(
            &data,
            &[TransferApproach::R2H, TransferApproach::RH2H],
            &NetConfig::reduced(64, &[8, 16, 32]),
            &transfer_config(seed),
            seed,
        )
        .map_err(|e| e.to_string())?;
        let (r2h, rh2h) = (&out[0], &out[1]);
        if seed == 0 {
            r2h_seed0 = Some((render_details(&r2h.report), r2h.model.weight_digest()));
        }
        margins.push(100.0 * (rh2h.report.average - r2h.report.average));
        parts.push(format!("seed {seed}: R2H {:.1} RH2H {:.1}", 100.0 * r2h.report.average, 100.0 * rh2h.report.average));
    }
    Ok(TransferRuns { margins, r2h_seed0, detail: parts.join("; ") })
}

fn c8_transfer_ordering(runs: &Result<TransferRuns, String>) -> Check {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let mut m = runs.margins.clone();
    m.sort_by(f64::total_cmp);
    let median = m[m.len() / 2];
    let detail = format!("{}; median margin {median:.1} points", runs.detail);
    ensure!(median >= 2.0, "{detail}");
    Ok(detail)
}

fn c9_zero_shot_isolation(runs: &Result<TransferRuns, String>) -> Check {
    let runs = runs.as_ref().map_err(Clone::clone)?;
    let (details, digest) = runs.r2h_seed0.as_ref().ok_or("no seed-0 R2H run")?;
    let mut data = TransferBenchmark::new(0).build().map_err(|e| e.to_string())?;
    data.human.as_mut().ok_or("no human domain")?.train.clear();
    let out = run_transfer_suite(&data, &[TransferApproach::R2H], &NetConfig::reduced(64, &[8, 16, 32]), &transfer_config(0), 0)
        .map_err(|e| e.to_string())?;
    ensure!(&render_details(&out[0].report) == details, "R2H report changed without human training data");
    ensure!(&out[0].model.weight_digest() == digest, "R2H weights changed without human training data");
    ensure!(
        run_transfer_suite(&data, &[TransferApproach::RH2H], &NetConfig::reduced(64, &[8, 16, 32]), &transfer_config(0), 0)
            .is_err(),
        "RH2H ran without human training data"
    );
    Ok("report and weights byte-identical with the human training split deleted".into())
}

fn glomseg(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_glomseg")).args(args).output().map_err(|e| e.to_string())?;
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    ensure!(
        out.status.success(),
        "glomseg {} failed ({:?}): {}",
        args[0],
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(stdout)
}

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = walkdir::WalkDir::new(dir)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().strip_prefix(dir).unwrap().display().to_string(), fs::read(e.path()).unwrap()))
        .collect();
    out.retain(|(p, _)| p != "run.txt");
    out
}

fn c10_pipeline_round_trip() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path().join("data");
    let runs = tmp.path().join("runs");
    let sets: Vec<String> = [
        format!("data.root={}", root.display()),
        format!("run.out={}", runs.display()),
        "data.size=32".into(),
        "synth.canvas=32".into(),
        "synth.count=56".into(),
        "model.stages=8,16,32".into(),
        "model.blocks=1".into(),
        "model.norm_groups=4".into(),
        "train.epochs=3".into(),
        "train.optimizer=adam".into(),
        "train.lr=0.003".into(),
    ]
    .into();
    let run = |cmd: &str, extra: &[String]| {
        let mut args = vec![cmd.to_string(), "--seed".into(), "3".into()];
        for s in sets.iter().chain(extra) {
            args.push("--set".into());
            args.push(s.clone());
        }
        glomseg(&args.iter().map(String::as_str).collect::<Vec<_>>())
    };
    run("make-synthetic", &[])?;
    run("ingest", &[])?;
    run("train", &[])?;
    let ckpt = format!("eval.checkpoint={}", runs.join("train/best.ckpt").display());
    run("eval", &[ckpt.clone()])?;
    let input = format!("segment.input={}", root.display());
    run("segment", &[ckpt.clone(), input.clone(), "run.name=segment-a".into()])?;
    run("segment", &[ckpt, input, "run.name=segment-b".into()])?;

    let (a, b) = (files_under(&runs.join("segment-a")), files_under(&runs.join("segment-b")));
    ensure!(!a.is_empty() && a == b, "segment reruns differ");
    let legend = parse_legend(&fs::read_to_string(runs.join("segment-a/legend.tsv")).unwrap()).map_err(|e| e.to_string())?;
    ensure!(legend.len() == 14, "legend lists {} channels", legend.len());

    let manifest = DatasetManifest::from_text(&fs::read_to_string(root.join("manifest.tsv")).unwrap()).map_err(|e| e.to_string())?;
    let split = fs::read_to_string(runs.join("train/split.txt")).unwrap();
    let test_ids: Vec<String> = split
        .lines()
        .find_map(|l| l.strip_prefix("test\t"))
        .ok_or("split.txt has no test line")?
        .split(',')
        .map(str::to_string)
        .collect();
    let tax = Taxonomy::canonical();
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for e in manifest.entries.iter().filter(|e| test_ids.contains(&e.patient_id)) {
        let truth = read_mask(&root.join(&e.mask_path), Some(32)).map_err(|e| e.to_string())?;
        if truth.is_empty() {
            continue;
        }
        let stack_path = runs.join("segment-a/masks").join(&e.image_path);
        let stack = image::open(&stack_path).map_err(|err| format!("{}: {err}", stack_path.display()))?.to_luma8();
        ensure!(stack.dimensions() == (32, 32 * 14), "stack is {:?}", stack.dimensions());
        let channel = &stack.as_raw()[e.task * 32 * 32..(e.task + 1) * 32 * 32];
        let pred: Vec<bool> = channel.iter().map(|&v| v == 255).collect();
        let slot = sums.entry(e.task).or_default();
        slot.0 += count_dice(&pred, &bits(&truth));
        slot.1 += 1;
    }
    ensure!(!sums.is_empty(), "no scorable test samples");
    let metrics: BTreeMap<String, String> =
        read_metrics(&fs::read_to_string(runs.join("eval/run.txt")).unwrap()).into_iter().collect();
    let mut worst: f64 = 0.0;
    let mut avg = 0.0;
    for (&task, &(sum, n)) in &sums {
        let mine = sum / n as f64;
        avg += mine / sums.len() as f64;
        let key = format!("holistic.dice.{}", tax.code(task));
        let theirs: f64 = metrics.get(&key).ok_or(format!("eval has no {key}"))?.parse().unwrap();
        worst = worst.max((mine - theirs).abs());
    }
    let theirs_avg: f64 = metrics["holistic.average"].parse().unwrap();
    worst = worst.max((avg - theirs_avg).abs());
    let evaluated = metrics.keys().filter(|k| k.starts_with("holistic.dice.")).count();
    ensure!(evaluated == sums.len(), "eval scored {evaluated} classes, re-scoring {}", sums.len());
    ensure!(worst <= 1e-6, "largest difference {worst:e}");
    Ok(format!("{} classes re-scored, max difference {worst:e}; rerun bit-identical", sums.len()))
}

fn c11_checkpoint_round_trip() -> Check {
    let net = DynamicHeadNet::<f32>::new(NetConfig::reduced(32, &[8, 16]), 9).map_err(|e| e.to_string())?;
    let norm = Normalization { mean: [0.62, 0.48, 0.55], std: [0.21, 0.18, 0.2] };
    let bytes = Checkpoint::from_model(&net, norm).encode().map_err(|e| e.to_string())?;
    let back = Checkpoint::decode(&bytes).map_err(|e| e.to_string())?;
    ensure!(back.normalization == norm, "normalization changed");
    let model = back.to_model().map_err(|e| e.to_string())?;
    let x = random_map(10, 3, 32).cast::<f32>();
    for t in 0..14 {
        let task = encode_task(t, 14).unwrap();
        let (a, b) = (net.forward(&x, &task).unwrap(), model.forward(&x, &task).unwrap());
        ensure!(
            a.logits().data().iter().zip(b.logits().data()).all(|(p, q)| p.to_bits() == q.to_bits()),
            "task {t}: outputs differ"
        );
    }
    Ok(format!("{} bytes, 14 tasks bit-identical", bytes.len()))
}

fn fixture(name: &str) -> String {
    fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)).unwrap()
}

/// Registry indices of the class columns of a golden header.
fn fixture_classes(header: &str) -> Result<Vec<usize>, String> {
    let tax = Taxonomy::canonical();
    header
        .trim_end()
        .split('\t')
        .filter(|c| !["Method", "Approach", "Average"].contains(c))
        .map(|c| tax.index_of(c).map_err(|e| e.to_string()))
        .collect()
}

fn check_table(reports: &[EvalReport], golden: &str) -> Result<(), String> {
    let tsv = render_tsv(reports).map_err(|e| e.to_string())?;
    let mut lines = tsv.lines();
    let header: Vec<&str> = lines.next().unwrap().split('\t').collect();
    let gold: Vec<&str> = golden.trim_end().split('\t').collect();
    ensure!(header.len() == gold.len(), "{} columns vs {}", header.len(), gold.len());
    let tax = Taxonomy::canonical();
    let ours = fixture_classes(&header.join("\t"))?;
    ensure!(ours == fixture_classes(golden)?, "class columns {header:?} vs {gold:?}");
    for (h, g) in header.iter().zip(&gold) {
        let same = h == g || tax.index_of(h).ok().is_some_and(|i| tax.index_of(g).ok() == Some(i));
        ensure!(same, "column {h} vs {g}");
    }
    for (line, r) in lines.zip(reports) {
        let cells: Vec<&str> = line.split('\t').collect();
        let values: Vec<f64> = cells[cells.len() - 1 - r.rows.len()..cells.len() - 1].iter().map(|c| c.parse().unwrap()).collect();
        let mean = r.rows.iter().map(|x| x.dice).sum::<f64>() / r.rows.len() as f64;
        ensure!(cells.last().unwrap() == &format!("{:.1}", 100.0 * mean), "average cell {}", cells.last().unwrap());
        for (v, row) in values.iter().zip(&r.rows) {
            ensure!(*v == format!("{:.1}", 100.0 * row.dice).parse::<f64>().unwrap(), "cell {v}");
        }
    }
    Ok(())
}

fn c12_table_shapes() -> Check {
    let all = phantom_set(0..4, 32);
    let seg = ConstantSegmenter { foreground: true };
    let holistic = evaluate(&seg, &all, ClassSet::all(), EvalOptions::default()).map_err(|e| e.to_string())?;
    check_table(std::slice::from_ref(&holistic), &fixture("table3_header.tsv"))?;

    let mut bench = TransferBenchmark::new(0);
    bench.canvas = 32;
    let data = bench.build().map_err(|e| e.to_string())?;
    let classes = data.evaluation_classes();
    let human: Vec<PatchSample> = data.human.as_ref().unwrap().test.clone();
    let mut reports = Vec::new();
    for a in TransferApproach::ALL {
        let mut r = evaluate(&seg, &human, classes, EvalOptions::default()).map_err(|e| e.to_string())?;
        r.kind = EvalKind::Transfer(a);
        reports.push(r);
    }
    check_table(&reports, &fixture("table4_header.tsv"))?;
    let labels: Vec<String> = render_tsv(&reports)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap().to_string())
        .collect();
    ensure!(labels.join("\n") == fixture("table4_approaches.txt").trim_end(), "approach rows {labels:?}");

    let rodent: Vec<PatchSample> = all.iter().filter(|s| s.species == Species::Rodent).cloned().collect();
    let rodent_report = rodent_supervised_eval(&seg, &rodent).map_err(|e| e.to_string())?;
    check_table(std::slice::from_ref(&rodent_report), &fixture("table5_header.tsv"))?;
    Ok("14-class, 5-class x 4-approach and 8-class rodent tables match the golden headers".into())
}

fn main() {
    let only: Option<Vec<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    let mut transfer: Option<Result<TransferRuns, String>> = None;
    let mut failures = 0;
    let names = [
        "task encoding",
        "dynamic-head arithmetic",
        "zero-kernel head",
        "gradient check",
        "Dice oracle equivalence",
        "pool scheduler",
        "hierarchy overfit",
        "transfer ordering",
        "zero-shot isolation",
        "pipeline round-trip",
        "checkpoint round-trip",
        "table-shape fidelity",
    ];
    for (i, name) in names.iter().enumerate() {
        let n = i + 1;
        if !wanted(n) {
            continue;
        }
        let start = Instant::now();
        if (n == 8 || n == 9) && transfer.is_none() {
            transfer = Some(transfer_runs());
        }
        let result = catch_unwind(AssertUnwindSafe(|| match n {
            1 => c1_task_encoding(),
            2 => c2_head_arithmetic(),
            3 => c3_zero_kernel(),
            4 => c4_gradient_check(),
            5 => c5_dice_oracle(),
            6 => c6_pool(),
            7 => c7_hierarchy_overfit(),
            8 => c8_transfer_ordering(transfer.as_ref().unwrap()),
            9 => c9_zero_shot_isolation(transfer.as_ref().unwrap()),
            10 => c10_pipeline_round_trip(),
            11 => c11_checkpoint_round_trip(),
            _ => c12_table_shapes(),
        }))
        .unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {n:2} PASS  {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failures += 1;
                println!("criterion {n:2} FAIL  {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

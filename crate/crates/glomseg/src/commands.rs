//! One function per subcommand. Each returns the paths it wrote.

use std::fs;
use std::path::{Path, PathBuf};

use glomseg_core::data::{
    load_samples, split_by_patient, DatasetManifest, PatchSample, Split, SplitAssignment,
};
use glomseg_core::evaluation::{
    evaluate, render_details, render_table, render_tsv, rodent_supervised_eval, run_transfer_suite, DomainData,
    EvalReport, ModelSegmenter, Segmenter, TransferData,
};
use glomseg_core::network::{Checkpoint, DynamicHeadNet};
use glomseg_core::synth::{emit_partial_dataset, labeling_species, ColorShift, PhantomSpec, SyntheticDataset};
use glomseg_core::training::{train, EpochRecord, TrainObserver};
use glomseg_core::{ClassSet, Species, Taxonomy};
use walkdir::WalkDir;

use crate::config::RunConfig;
use crate::error::{PipelineError, Result};
use crate::export::{encode_overlay, encode_stack, legend};
use crate::ingest::{count_summary, is_mask, is_png, scan};
use crate::io::{atomic_write, encode_gray, encode_rgb, read_image, read_text, FileSource};
use crate::run::RunDir;

/// Text printed on stdout plus the files written.
#[derive(Debug, Default)]
pub struct Outcome {
    pub report: String,
    pub warnings: Vec<String>,
    pub paths: Vec<PathBuf>,
}

fn data_root(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.path("data.root").ok_or_else(|| PipelineError::Config("data.root is empty".into()))
}

fn load_manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    let path = cfg.manifest_path();
    let m = DatasetManifest::from_text(&read_text(&path)?)?;
    m.validate()?;
    Ok(m)
}

fn load_checkpoint(cfg: &RunConfig) -> Result<Checkpoint> {
    let path = cfg.path("eval.checkpoint").ok_or_else(|| PipelineError::Config("eval.checkpoint is empty".into()))?;
    let bytes = fs::read(&path).map_err(|e| PipelineError::io(&path, e))?;
    Ok(Checkpoint::decode(&bytes)?)
}

fn split_text(ratios: [f64; 3]) -> String {
    format!("{},{},{}", ratios[0], ratios[1], ratios[2])
}

pub fn ingest(cfg: &RunConfig) -> Result<Outcome> {
    let root = data_root(cfg)?;
    let ingested = scan(&root, Some(cfg.size()?))?;
    let out = cfg.manifest_path();
    atomic_write(&out, ingested.manifest.to_text().as_bytes())?;
    Ok(Outcome {
        report: format!("{} samples\n{}", ingested.manifest.len(), count_summary(&ingested.manifest)),
        warnings: ingested.warnings(),
        paths: vec![out],
    })
}

/// Phantom specs of a synthetic tree. In mixed mode the preferred species
/// alternates every full pass over the classes, so each class that both
/// species annotate gets samples from both.
fn synthetic_dataset(cfg: &RunConfig) -> Result<SyntheticDataset> {
    let seed = cfg.seed()?;
    let count: usize = cfg.parse("synth.count")?;
    let canvas: usize = cfg.parse("synth.canvas")?;
    let patients: usize = cfg.parse("synth.patients")?;
    let classes = cfg.classes("synth.classes")?;
    let strength: f32 = cfg.parse("synth.shift")?;
    let fixed = cfg.synth_species()?;
    let order: Vec<usize> = classes.iter().collect();
    if order.is_empty() {
        return Err(PipelineError::Config("synth.classes is empty".into()));
    }
    let specs: Vec<PhantomSpec> = (0..count)
        .map(|i| {
            let task = order[i % order.len()];
            let preferred = fixed.unwrap_or(if (i / order.len()) % 2 == 0 { Species::Rodent } else { Species::Human });
            let species = labeling_species(task, preferred);
            let shift = match species {
                Species::Human => ColorShift::seeded(seed, strength),
                Species::Rodent => ColorShift::default(),
            };
            PhantomSpec::new(seed.wrapping_mul(1_000_003).wrapping_add(i as u64), canvas).with_species(species, shift)
        })
        .collect();
    let mut ds = emit_partial_dataset(&specs, classes, patients)?;
    if fixed.is_none() {
        for s in &mut ds.samples {
            s.patient_id = format!("{}-{}", s.species.as_str(), s.patient_id);
        }
        ds = SyntheticDataset::from_samples(ds.samples);
    }
    Ok(ds)
}

pub fn make_synthetic(cfg: &RunConfig) -> Result<Outcome> {
    let mut run = RunDir::create(cfg, "make-synthetic")?;
    let root = data_root(cfg)?;
    let ds = synthetic_dataset(cfg)?;
    for (e, s) in ds.manifest.entries.iter().zip(&ds.samples) {
        atomic_write(&root.join(&e.image_path), &encode_rgb(&s.image)?)?;
        atomic_write(&root.join(&e.mask_path), &encode_gray(s.mask.width(), s.mask.height(), s.mask.to_gray())?)?;
    }
    run.record("tree", root.clone());
    run.metric("samples", ds.samples.len());
    run.metric("patients", ds.manifest.patients().len());
    let report = format!("{} samples under {}\n{}", ds.samples.len(), root.display(), count_summary(&ds.manifest));
    Ok(Outcome { report, warnings: Vec::new(), paths: run.finish(cfg)? })
}

/// Writes the best checkpoint whenever validation Dice improves.
struct CheckpointObserver {
    path: PathBuf,
    base: Checkpoint,
    normalization: glomseg_core::data::Normalization,
}

impl TrainObserver for CheckpointObserver {
    fn on_epoch(
        &mut self,
        record: &EpochRecord,
        model: &DynamicHeadNet<f32>,
        improved: bool,
    ) -> glomseg_core::Result<Option<String>> {
        if !improved {
            return Ok(None);
        }
        let mut ck = Checkpoint::from_model(model, self.normalization);
        ck.metadata = self.base.metadata.clone();
        ck.set_meta("epoch", record.epoch);
        ck.set_meta("val_dice", format!("{:?}", record.mean_val_dice));
        atomic_write(&self.path, &ck.encode()?).map_err(|e| glomseg_core::Error::Data(e.to_string()))?;
        Ok(Some(self.path.display().to_string()))
    }
}

fn split_samples(
    manifest: &DatasetManifest,
    split: &SplitAssignment,
    which: Split,
    source: &FileSource,
    classes: ClassSet,
) -> Result<Vec<PatchSample>> {
    let m = split.select(manifest, which).filter(|e| classes.contains(e.task));
    Ok(load_samples(&m, source)?)
}

pub fn train_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let mut run = RunDir::create(cfg, "train")?;
    let seed = cfg.seed()?;
    let manifest = load_manifest(cfg)?;
    let ratios = cfg.ratios()?;
    let split = split_by_patient(&manifest, ratios, seed)?;
    let classes = cfg.classes("data.classes")?;
    let net = cfg.net()?;
    let source = FileSource::new(data_root(cfg)?, Some(net.backbone.input_size));
    let train_set = split_samples(&manifest, &split, Split::Train, &source, classes)?;
    let val_set = split_samples(&manifest, &split, Split::Val, &source, classes)?;
    let config = cfg.train(manifest.normalization)?;
    let normalization = config
        .normalization
        .unwrap_or_else(|| glomseg_core::data::Normalization::from_images(train_set.iter().map(|s| &s.image)));

    run.write("split", "split.txt", split.to_text().as_bytes())?;
    let base = Checkpoint::from_model(&DynamicHeadNet::<f32>::new(net.clone(), seed)?, normalization)
        .with_meta("seed", seed)
        .with_meta("split_seed", seed)
        .with_meta("ratios", split_text(ratios))
        .with_meta("classes", Taxonomy::canonical().format_set(classes))
        .with_meta("optimizer", config.optimizer);
    let mut model = DynamicHeadNet::<f32>::new(net, seed)?;
    let best_path = run.join("best.ckpt");
    let mut observer = CheckpointObserver { path: best_path.clone(), base: base.clone(), normalization };
    let config = glomseg_core::training::TrainConfig { normalization: Some(normalization), ..config };
    let state = train(&mut model, &train_set, &val_set, &config, &mut observer)?;
    run.record("best_checkpoint", best_path);

    let mut last = Checkpoint::from_model(&model, normalization);
    last.metadata = base.metadata;
    last.set_meta("epoch", state.epoch);
    run.write("last_checkpoint", "last.ckpt", &last.encode()?)?;
    run.write("history", "history.tsv", state.history_table().as_bytes())?;
    run.metric("train_samples", train_set.len());
    run.metric("val_samples", val_set.len());
    run.metric("best_epoch", state.best_epoch);
    run.metric("best_val_dice", format!("{:?}", state.best_val_dice));
    let report = format!(
        "trained {} epochs on {} samples; best epoch {} (val Dice {:.4})\n",
        state.epoch,
        train_set.len(),
        state.best_epoch,
        state.best_val_dice
    );
    Ok(Outcome { report, warnings: split.warnings.clone(), paths: run.finish(cfg)? })
}

fn write_report(run: &mut RunDir, report: &EvalReport) -> Result<()> {
    let stem = report.file_stem();
    run.write(&format!("report_{stem}"), &format!("{stem}.tsv"), render_details(report).as_bytes())?;
    let prefix = report.kind.as_str();
    for r in &report.rows {
        run.metric(&format!("{prefix}.dice.{}", Taxonomy::canonical().code(r.task)), format!("{:?}", r.dice));
    }
    run.metric(&format!("{prefix}.average"), format!("{:?}", report.average));
    Ok(())
}

fn write_tables(run: &mut RunDir, reports: &[EvalReport]) -> Result<String> {
    let table = render_table(reports)?;
    run.write("table", "table.txt", table.as_bytes())?;
    run.write("table_tsv", "table.tsv", render_tsv(reports)?.as_bytes())?;
    Ok(table)
}

pub fn eval_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let mut run = RunDir::create(cfg, "eval")?;
    let ck = load_checkpoint(cfg)?;
    let model = ck.to_model()?;
    let manifest = load_manifest(cfg)?;
    let seed = match ck.meta("split_seed") {
        Some(s) => s.parse().map_err(|_| PipelineError::Data(format!("checkpoint split_seed `{s}`")))?,
        None => cfg.seed()?,
    };
    let ratios = match ck.meta("ratios") {
        Some(r) => {
            let mut c = cfg.clone();
            c.set("data.ratios", r)?;
            c.ratios()?
        }
        None => cfg.ratios()?,
    };
    let split = split_by_patient(&manifest, ratios, seed)?;
    let which = match cfg.get("eval.split") {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        other => return Err(PipelineError::Config(format!("eval.split = `{other}`"))),
    };
    let source = FileSource::new(data_root(cfg)?, Some(model.input_size()));
    let samples = split_samples(&manifest, &split, which, &source, cfg.classes("data.classes")?)?;
    let segmenter = ModelSegmenter::new(&model, ck.normalization);
    let mut report = match cfg.get("eval.kind") {
        "holistic" => {
            let present = samples.iter().fold(ClassSet::empty(), |mut s, x| {
                s.insert(x.task);
                s
            });
            let options = cfg.eval_options()?;
            let scorable = if options.include_empty {
                present
            } else {
                samples.iter().filter(|s| !s.mask.is_empty()).fold(ClassSet::empty(), |mut s, x| {
                    s.insert(x.task);
                    s
                })
            };
            evaluate(&segmenter, &samples, present.intersection(scorable), options)?
        }
        "rodent" => rodent_supervised_eval(&segmenter, &samples)?,
        other => return Err(PipelineError::Config(format!("eval.kind = `{other}` (expected holistic or rodent)"))),
    };
    report.method = cfg.get("eval.method").to_string();
    report.set_meta("checkpoint", &model.weight_digest()[..16]);
    report.set_meta("split", which.as_str());
    write_report(&mut run, &report)?;
    let table = write_tables(&mut run, std::slice::from_ref(&report))?;
    run.metric("samples", samples.len());
    Ok(Outcome { report: table, warnings: Vec::new(), paths: run.finish(cfg)? })
}

fn domain_data(
    manifest: &DatasetManifest,
    species: Species,
    ratios: [f64; 3],
    seed: u64,
    source: &FileSource,
) -> Result<Option<DomainData>> {
    let m = manifest.filter(|e| e.species == species);
    if m.is_empty() {
        return Ok(None);
    }
    let split = split_by_patient(&m, ratios, seed)?;
    let load = |which| Ok::<_, PipelineError>(load_samples(&split.select(&m, which), source)?);
    Ok(Some(DomainData { train: load(Split::Train)?, val: load(Split::Val)?, test: load(Split::Test)? }))
}

pub fn transfer_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let mut run = RunDir::create(cfg, "transfer")?;
    let seed = cfg.seed()?;
    let approaches = cfg.approaches()?;
    let manifest = load_manifest(cfg)?;
    let ratios = cfg.ratios()?;
    let net = cfg.net()?;
    let source = FileSource::new(data_root(cfg)?, Some(net.backbone.input_size));
    let data = TransferData {
        rodent: domain_data(&manifest, Species::Rodent, ratios, seed, &source)?,
        human: domain_data(&manifest, Species::Human, ratios, seed, &source)?,
    };
    let config = cfg.train(manifest.normalization)?;
    let outcomes = run_transfer_suite(&data, &approaches, &net, &config, seed)?;
    let mut reports = Vec::new();
    for o in outcomes {
        let mut report = o.report;
        report.method = cfg.get("eval.method").to_string();
        let name = o.approach.as_str();
        let ck = Checkpoint::from_model(&o.model, o.state.normalization)
            .with_meta("approach", name)
            .with_meta("seed", seed)
            .with_meta("epoch", o.state.best_epoch);
        run.write(&format!("checkpoint_{name}"), &format!("{name}.ckpt"), &ck.encode()?)?;
        run.write(&format!("history_{name}"), &format!("history_{name}.tsv"), o.state.history_table().as_bytes())?;
        run.metric(&format!("{name}.train_samples"), o.train_size);
        write_report(&mut run, &report)?;
        reports.push(report);
    }
    let table = write_tables(&mut run, &reports)?;
    Ok(Outcome { report: table, warnings: Vec::new(), paths: run.finish(cfg)? })
}

/// Patches under `dir`, sorted, masks excluded.
fn patch_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for item in WalkDir::new(dir).sort_by_file_name() {
        let item = item.map_err(|e| PipelineError::io(dir, e.into()))?;
        let p = item.path();
        if item.file_type().is_file() && is_png(p) && !is_mask(p) {
            out.push(p.strip_prefix(dir).expect("walk stays under dir").to_path_buf());
        }
    }
    Ok(out)
}

pub fn segment_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let mut run = RunDir::create(cfg, "segment")?;
    let ck = load_checkpoint(cfg)?;
    let model = ck.to_model()?;
    let input = cfg.path("segment.input").ok_or_else(|| PipelineError::Config("segment.input is empty".into()))?;
    if !input.is_dir() {
        return Err(PipelineError::Config(format!("segment.input {} is not a directory", input.display())));
    }
    let classes = cfg.classes("segment.classes")?;
    let tasks: Vec<usize> = classes.iter().collect();
    let files = patch_files(&input)?;
    let segmenter = ModelSegmenter::new(&model, ck.normalization);
    run.write("legend", "legend.tsv", legend(classes).as_bytes())?;
    let mut index = String::from("input\tstatus\tmasks\toverlay\tdetail\n");
    let mut warnings = Vec::new();
    let (mut done, mut failed) = (0usize, 0usize);
    for rel in &files {
        let rel_s = rel.to_string_lossy().replace('\\', "/");
        let stem = rel_s.trim_end_matches(".png").trim_end_matches(".PNG");
        let result = read_image(&input.join(rel), Some(model.input_size())).and_then(|img| {
            let masks = segmenter.segment(&img, &tasks)?;
            let m = format!("masks/{stem}.png");
            let o = format!("overlay/{stem}.png");
            atomic_write(&run.join(&m), &encode_stack(&masks)?)?;
            atomic_write(&run.join(&o), &encode_overlay(&img, classes, &masks)?)?;
            Ok((m, o))
        });
        match result {
            Ok((m, o)) => {
                index.push_str(&format!("{rel_s}\tok\t{m}\t{o}\t{}\n", tasks.len()));
                done += 1;
            }
            Err(e) => {
                let msg = e.to_string().replace(['\t', '\n'], " ");
                warnings.push(format!("{rel_s}: {msg}"));
                index.push_str(&format!("{rel_s}\terror\t-\t-\t{msg}\n"));
                failed += 1;
            }
        }
    }
    run.write("index", "index.tsv", index.as_bytes())?;
    run.record("masks", run.join("masks"));
    run.record("overlays", run.join("overlay"));
    run.metric("patches", files.len());
    run.metric("segmented", done);
    run.metric("failed", failed);
    run.metric("channels", tasks.len());
    let report = format!(
        "segmented {done} of {} patches into {} channels ({})\n",
        files.len(),
        tasks.len(),
        Taxonomy::canonical().format_set(classes)
    );
    Ok(Outcome { report, warnings, paths: run.finish(cfg)? })
}

/// Validate the configuration, then dispatch by subcommand name.
pub fn run(command: &str, cfg: &RunConfig) -> Result<Outcome> {
    cfg.validate()?;
    match command {
        "ingest" => ingest(cfg),
        "make-synthetic" => make_synthetic(cfg),
        "train" => train_cmd(cfg),
        "eval" => eval_cmd(cfg),
        "transfer" => transfer_cmd(cfg),
        "segment" => segment_cmd(cfg),
        other => Err(PipelineError::Config(format!("unknown command `{other}`"))),
    }
}

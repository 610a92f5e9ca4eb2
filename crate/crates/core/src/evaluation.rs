//! Per-class Dice evaluation and report tables.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use sha2::{Digest, Sha256};

use crate::data::{Mask, Normalization, PatchSample, RgbImage, TransferApproach};
use crate::error::{bail, Error, Result};
use crate::metrics::dice_score;
use crate::network::DynamicHeadNet;
use crate::taxonomy::{ClassSet, Group, Species, Taxonomy};

/// Anything that turns an image and a list of tasks into one mask per task.
pub trait Segmenter {
    fn segment(&self, image: &RgbImage, tasks: &[usize]) -> Result<Vec<Mask>>;
}

/// The trained network behind the [`Segmenter`] interface.
pub struct ModelSegmenter<'a> {
    model: &'a DynamicHeadNet<f32>,
    normalization: Normalization,
}

impl<'a> ModelSegmenter<'a> {
    pub fn new(model: &'a DynamicHeadNet<f32>, normalization: Normalization) -> Self {
        ModelSegmenter { model, normalization }
    }
}

impl Segmenter for ModelSegmenter<'_> {
    fn segment(&self, image: &RgbImage, tasks: &[usize]) -> Result<Vec<Mask>> {
        let tax = Taxonomy::canonical();
        let x = image.to_input::<f32>(&self.normalization);
        let vectors = tasks.iter().map(|&t| tax.encode(t)).collect::<Result<Vec<_>>>()?;
        Ok(self.model.forward_tasks(&x, &vectors)?.iter().map(|p| p.to_mask()).collect())
    }
}

/// Predicts the same constant mask for every task.
pub struct ConstantSegmenter {
    pub foreground: bool,
}

impl Segmenter for ConstantSegmenter {
    fn segment(&self, image: &RgbImage, tasks: &[usize]) -> Result<Vec<Mask>> {
        let m = Mask::from_fn(image.width(), image.height(), |_, _| self.foreground);
        Ok(tasks.iter().map(|_| m.clone()).collect())
    }
}

/// Returns the ground truth of the matching sample; an upper-bound stub.
pub struct LookupSegmenter<'a> {
    pub samples: &'a [PatchSample],
}

impl Segmenter for LookupSegmenter<'_> {
    fn segment(&self, image: &RgbImage, tasks: &[usize]) -> Result<Vec<Mask>> {
        tasks
            .iter()
            .map(|&t| {
                self.samples
                    .iter()
                    .find(|s| s.task == t && &s.image == image)
                    .map(|s| s.mask.clone())
                    .ok_or_else(|| Error::MissingClass(format!("no reference mask for task {t}")))
            })
            .collect()
    }
}

/// Which experiment a report belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalKind {
    Transfer(TransferApproach),
    Holistic,
    RodentSupervised,
}

impl EvalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalKind::Transfer(a) => a.as_str(),
            EvalKind::Holistic => "holistic",
            EvalKind::RodentSupervised => "rodent_supervised",
        }
    }
}

impl fmt::Display for EvalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Score samples whose ground truth is empty instead of skipping them.
    pub include_empty: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { include_empty: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub task: usize,
    /// Mean per-sample Dice as a fraction.
    pub dice: f64,
    pub scored: usize,
    pub skipped_empty: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub kind: EvalKind,
    pub method: String,
    /// Rows in registry order.
    pub rows: Vec<EvalRow>,
    /// Unweighted mean of the row values.
    pub average: f64,
    pub metadata: Vec<(String, String)>,
}

pub const DEFAULT_METHOD: &str = "DynamicHead";

impl EvalReport {
    pub fn classes(&self) -> ClassSet {
        let mut s = ClassSet::empty();
        for r in &self.rows {
            s.insert(r.task);
        }
        s
    }

    pub fn row(&self, task: usize) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.task == task)
    }

    pub fn recompute_average(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().map(|r| r.dice).sum::<f64>() / self.rows.len() as f64
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.metadata.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.metadata.push((key.to_string(), value)),
        }
    }

    /// `<kind>_<checkpoint>_<dataset>`, safe as a file stem.
    pub fn file_stem(&self) -> String {
        let clean = |s: &str| -> String {
            s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '-' }).collect()
        };
        format!(
            "{}_{}_{}",
            self.kind.as_str(),
            clean(self.meta("checkpoint").unwrap_or("none")),
            clean(self.meta("dataset").unwrap_or("none"))
        )
    }
}

/// Per-class mean Dice over `samples`, one network pass per distinct image.
pub fn evaluate(
    segmenter: &dyn Segmenter,
    samples: &[PatchSample],
    classes: ClassSet,
    options: EvalOptions,
) -> Result<EvalReport> {
    let tax = Taxonomy::canonical();
    let present = samples.iter().fold(ClassSet::empty(), |mut s, x| {
        s.insert(x.task);
        s
    });
    if let Some(missing) = classes.iter().find(|&c| !present.contains(c)) {
        bail!(MissingClass, "class {} has no samples in the evaluation set", tax.code(missing));
    }
    let mut sums = [0.0f64; crate::taxonomy::CLASS_COUNT];
    let mut scored = [0usize; crate::taxonomy::CLASS_COUNT];
    let mut skipped = [0usize; crate::taxonomy::CLASS_COUNT];
    let mut i = 0;
    while i < samples.len() {
        let mut j = i + 1;
        while j < samples.len() && samples[j].image == samples[i].image {
            j += 1;
        }
        let group: Vec<&PatchSample> = samples[i..j]
            .iter()
            .filter(|s| classes.contains(s.task))
            .filter(|s| {
                let keep = options.include_empty || !s.mask.is_empty();
                if !keep {
                    skipped[s.task] += 1;
                }
                keep
            })
            .collect();
        if !group.is_empty() {
            let tasks: Vec<usize> = group.iter().map(|s| s.task).collect();
            let preds = segmenter.segment(&samples[i].image, &tasks)?;
            if preds.len() != group.len() {
                bail!(Shape, "segmenter returned {} masks for {} tasks", preds.len(), group.len());
            }
            for (s, p) in group.iter().zip(&preds) {
                sums[s.task] += dice_score(p, &s.mask)?;
                scored[s.task] += 1;
            }
        }
        i = j;
    }
    let mut rows = Vec::new();
    for c in classes.iter() {
        if scored[c] == 0 {
            bail!(MissingClass, "class {} has no samples with nonempty ground truth", tax.code(c));
        }
        rows.push(EvalRow { task: c, dice: sums[c] / scored[c] as f64, scored: scored[c], skipped_empty: skipped[c] });
    }
    let mut report = EvalReport {
        kind: EvalKind::Holistic,
        method: DEFAULT_METHOD.into(),
        rows,
        average: 0.0,
        metadata: Vec::new(),
    };
    report.average = report.recompute_average();
    report.set_meta("metric", "dice_foreground");
    report.set_meta("class_mean", "per_sample");
    report.set_meta("empty_vs_empty", "1.0");
    report.set_meta("empty_ground_truth", if options.include_empty { "scored" } else { "excluded" });
    report.set_meta("dataset", dataset_fingerprint(samples));
    Ok(report)
}

/// Lesion classes annotated in rodent data: AH, CD, GS, HS, ML, MA, NS, SS.
pub fn rodent_lesion_classes() -> ClassSet {
    let tax = Taxonomy::canonical();
    tax.group_set(Group::Lesion).intersection(tax.species_set(Species::Rodent))
}

/// Rodent lesion evaluation on the rodent test split.
pub fn rodent_supervised_eval(segmenter: &dyn Segmenter, rodent_test: &[PatchSample]) -> Result<EvalReport> {
    let lesions: Vec<PatchSample> = rodent_test
        .iter()
        .filter(|s| s.species == Species::Rodent && rodent_lesion_classes().contains(s.task))
        .cloned()
        .collect();
    let mut report = evaluate(segmenter, &lesions, rodent_lesion_classes(), EvalOptions::default())?;
    report.kind = EvalKind::RodentSupervised;
    Ok(report)
}

/// Short digest over sample content, tasks and patients.
pub fn dataset_fingerprint(samples: &[PatchSample]) -> String {
    let mut h = Sha256::new();
    for s in samples {
        h.update((s.task as u32).to_le_bytes());
        h.update(s.patient_id.as_bytes());
        h.update([0]);
        h.update(s.image.as_raw());
        h.update(s.mask.as_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Column names of a report table over `classes`.
pub fn table_header(classes: ClassSet, with_approach: bool) -> Vec<String> {
    let tax = Taxonomy::canonical();
    let mut cols = alloc::vec![String::from("Method")];
    if with_approach {
        cols.push("Approach".into());
    }
    cols.extend(classes.iter().map(|c| tax.code(c).to_string()));
    cols.push("Average".into());
    cols
}

fn table_cells(reports: &[EvalReport]) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let first = reports.first().ok_or_else(|| Error::InvalidArgument("no reports to tabulate".into()))?;
    let classes = first.classes();
    if reports.iter().any(|r| r.classes() != classes) {
        bail!(InvalidArgument, "reports in one table must cover the same classes");
    }
    let with_approach = reports.iter().any(|r| matches!(r.kind, EvalKind::Transfer(_)));
    let header = table_header(classes, with_approach);
    let rows = reports
        .iter()
        .map(|r| {
            let mut cells = alloc::vec![r.method.clone()];
            if with_approach {
                cells.push(match r.kind {
                    EvalKind::Transfer(a) => a.label().to_string(),
                    other => other.as_str().to_string(),
                });
            }
            cells.extend(r.rows.iter().map(|row| format!("{:.1}", 100.0 * row.dice)));
            cells.push(format!("{:.1}", 100.0 * r.average));
            cells
        })
        .collect();
    Ok((header, rows))
}

/// Aligned text table, one line per report, Dice in percent.
pub fn render_table(reports: &[EvalReport]) -> Result<String> {
    let (header, rows) = table_cells(reports)?;
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[String]| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, &w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let mut s = parts.join(" | ");
        s.truncate(s.trim_end().len());
        s.push('\n');
        s
    };
    let mut out = line(&header);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&rule.join("-+-"));
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r));
    }
    Ok(out)
}

/// Tab-separated table with the same columns as [`render_table`].
pub fn render_tsv(reports: &[EvalReport]) -> Result<String> {
    let (header, rows) = table_cells(reports)?;
    let mut out = header.join("\t");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join("\t"));
        out.push('\n');
    }
    Ok(out)
}

/// Detail listing of one report: metadata, then per-class counts.
pub fn render_details(report: &EvalReport) -> String {
    let tax = Taxonomy::canonical();
    let mut out = format!("# kind {}\n# method {}\n", report.kind, report.method);
    for (k, v) in &report.metadata {
        out.push_str(&format!("# {k} {v}\n"));
    }
    out.push_str("class\tdice\tscored\tskipped_empty\n");
    for r in &report.rows {
        out.push_str(&format!("{}\t{:.6}\t{}\t{}\n", tax.code(r.task), r.dice, r.scored, r.skipped_empty));
    }
    out.push_str(&format!("average\t{:.6}\n", report.average));
    out
}

/// Train, validation and test samples of one species domain.
#[derive(Debug, Clone, Default)]
pub struct DomainData {
    pub train: Vec<PatchSample>,
    pub val: Vec<PatchSample>,
    pub test: Vec<PatchSample>,
}

#[derive(Debug, Clone, Default)]
pub struct TransferData {
    pub rodent: Option<DomainData>,
    pub human: Option<DomainData>,
}

impl TransferData {
    fn split(&self, species: Species, pick: fn(&DomainData) -> &Vec<PatchSample>) -> Option<&[PatchSample]> {
        let d = match species {
            Species::Rodent => self.rodent.as_ref(),
            Species::Human => self.human.as_ref(),
        };
        d.map(|d| pick(d).as_slice())
    }

    /// Lesion classes scored for every approach: those in the human test
    /// split that also appear in the rodent test split when one exists.
    pub fn evaluation_classes(&self) -> ClassSet {
        let lesions = Taxonomy::canonical().group_set(Group::Lesion);
        let tasks = |s: &[PatchSample], species: Species| {
            s.iter().filter(|x| x.species == species && lesions.contains(x.task)).fold(ClassSet::empty(), |mut c, x| {
                c.insert(x.task);
                c
            })
        };
        let human = self.split(Species::Human, |d| &d.test).map(|s| tasks(s, Species::Human)).unwrap_or_default();
        match self.split(Species::Rodent, |d| &d.test) {
            Some(r) if !r.is_empty() => human.intersection(tasks(r, Species::Rodent)),
            _ => human,
        }
    }
}

/// Result of one transfer approach.
#[derive(Debug, Clone)]
pub struct TransferOutcome {
    pub approach: TransferApproach,
    pub report: EvalReport,
    pub state: crate::training::TrainState,
    pub model: DynamicHeadNet<f32>,
    pub train_size: usize,
}

/// Human lesion test samples restricted to `classes`.
fn human_test(data: &TransferData, classes: ClassSet) -> Result<Vec<PatchSample>> {
    let test = data
        .split(Species::Human, |d| &d.test)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| Error::MissingDomain("transfer evaluation needs a human test split".into()))?;
    Ok(test.iter().filter(|s| s.species == Species::Human && classes.contains(s.task)).cloned().collect())
}

/// Train one fresh model per approach and score it on human lesions.
///
/// Training and validation sets are composed from the domains each approach
/// names, so R2H never reads human training or validation data. The best
/// validation epoch is restored before scoring.
pub fn run_transfer_suite(
    data: &TransferData,
    approaches: &[TransferApproach],
    net: &crate::network::NetConfig,
    config: &crate::training::TrainConfig,
    model_seed: u64,
) -> Result<Vec<TransferOutcome>> {
    use crate::data::compose_samples;
    use crate::training::{train, KeepBest};

    let classes = data.evaluation_classes();
    if classes.is_empty() {
        bail!(MissingClass, "no lesion class is shared by the evaluation splits");
    }
    let test = human_test(data, classes)?;
    let mut out = Vec::new();
    for &approach in approaches {
        let train_set = compose_samples(
            data.split(Species::Rodent, |d| &d.train),
            data.split(Species::Human, |d| &d.train),
            approach,
        )?;
        let val_set = compose_samples(
            data.split(Species::Rodent, |d| &d.val),
            data.split(Species::Human, |d| &d.val),
            approach,
        )?;
        let mut model = DynamicHeadNet::<f32>::new(net.clone(), model_seed)?;
        let mut keep = KeepBest::default();
        let state = train(&mut model, &train_set, &val_set, config, &mut keep)?;
        keep.restore(&mut model);
        let mut report = evaluate(&ModelSegmenter::new(&model, state.normalization), &test, classes, EvalOptions::default())?;
        report.kind = EvalKind::Transfer(approach);
        report.set_meta("checkpoint", &model.weight_digest()[..16]);
        report.set_meta("best_epoch", state.best_epoch);
        report.set_meta("train_samples", train_set.len());
        out.push(TransferOutcome { approach, report, state, model, train_size: train_set.len() });
    }
    Ok(out)
}

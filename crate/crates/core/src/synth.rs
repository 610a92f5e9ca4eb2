//! Seeded glomerulus phantoms with ground truth for every class.
//!
//! A phantom is a capsule ellipse holding a lobed tuft, which holds a lobed
//! mesangium. Cells are small disks; lesions are irregular blobs in
//! class-specific places with class-specific colours. Every pixel of every
//! mask is decided by the same membership tests used for rendering, so the
//! images carry exact signal for each class.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{DatasetManifest, ManifestEntry, Mask, MemorySource, PatchSample, RgbImage};
use crate::error::{bail, Result};
use crate::taxonomy::{ClassSet, Group, Species, Taxonomy, CLASS_COUNT};

pub const DEFAULT_CANVAS: usize = 512;

/// Fraction of the capsule ellipse covered by a global sclerosis mask.
pub const GS_SCALE: f64 = 0.97;

const CAP: usize = 0;
const TUFT: usize = 1;
const MES: usize = 2;
const POD: usize = 3;
const MEC: usize = 4;
const GS: usize = 7;
const LESION_OFFSET: usize = 5;
pub const LESION_COUNT: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub cx: f64,
    pub cy: f64,
    pub rx: f64,
    pub ry: f64,
    /// Rotation in radians.
    pub angle: f64,
}

impl Ellipse {
    /// Normalized radial coordinate and polar angle of `(x, y)` in the ellipse frame.
    fn polar(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = (libm::sin(self.angle), libm::cos(self.angle));
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = (dx * c + dy * s) / self.rx;
        let v = (-dx * s + dy * c) / self.ry;
        (libm::sqrt(u * u + v * v), libm::atan2(v, u))
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.polar(x, y).0 <= 1.0
    }

    pub fn scaled(&self, s: f64) -> Ellipse {
        Ellipse { rx: self.rx * s, ry: self.ry * s, ..*self }
    }

    /// Point at normalized radius `r` and polar angle `theta`.
    pub fn point(&self, r: f64, theta: f64) -> (f64, f64) {
        let (u, v) = (r * self.rx * libm::cos(theta), r * self.ry * libm::sin(theta));
        let (s, c) = (libm::sin(self.angle), libm::cos(self.angle));
        (self.cx + u * c - v * s, self.cy + u * s + v * c)
    }

    /// Half extents of the axis-aligned bounding box.
    pub fn half_extent(&self) -> (f64, f64) {
        let (s, c) = (libm::sin(self.angle), libm::cos(self.angle));
        (
            libm::sqrt(self.rx * self.rx * c * c + self.ry * self.ry * s * s),
            libm::sqrt(self.rx * self.rx * s * s + self.ry * self.ry * c * c),
        )
    }
}

/// Where a lesion blob is centred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    /// Almost the whole capsule.
    Global,
    /// Bridging the tuft edge and the capsule wall.
    BowmanSpace,
    /// On the inner capsule wall.
    CapsuleRim,
    /// Anywhere inside the tuft.
    Tuft,
    /// Straddling the tuft boundary.
    TuftBoundary,
    /// Inside the mesangium.
    Mesangium,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LesionParams {
    pub count: usize,
    /// Blob radius range as a fraction of the canvas side.
    pub radius: (f64, f64),
    pub placement: Placement,
}

/// Per-channel affine colour change `v * gain + offset` on the 0..255 scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorShift {
    pub gain: [f32; 3],
    pub offset: [f32; 3],
}

impl Default for ColorShift {
    fn default() -> Self {
        ColorShift { gain: [1.0; 3], offset: [0.0; 3] }
    }
}

impl ColorShift {
    /// Random shift whose gains deviate by up to `strength` and offsets by
    /// up to `strength * 255` per channel.
    pub fn seeded(seed: u64, strength: f32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x636f_6c6f_7572);
        let mut shift = ColorShift::default();
        for c in 0..3 {
            shift.gain[c] = 1.0 + strength * rng.random_range(-1.0f32..1.0);
            shift.offset[c] = 255.0 * strength * rng.random_range(-1.0f32..1.0);
        }
        shift
    }

    fn apply(&self, rgb: [f32; 3]) -> [f32; 3] {
        [
            rgb[0] * self.gain[0] + self.offset[0],
            rgb[1] * self.gain[1] + self.offset[1],
            rgb[2] * self.gain[2] + self.offset[2],
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub seed: u64,
    pub canvas: usize,
    pub capsule: Ellipse,
    pub tuft_scale: f64,
    pub mes_scale: f64,
    pub pod_count: usize,
    pub mec_count: usize,
    /// Cell radius as a fraction of the canvas side.
    pub cell_radius: f64,
    /// Lesion parameters in registry order: AH, CD, GS, HS, ME, ML, MA, NS, SS.
    pub lesions: [LesionParams; LESION_COUNT],
    pub species: Species,
    pub color_shift: ColorShift,
    /// Standard deviation of the additive Gaussian texture, 0..255 scale.
    pub noise_sigma: f32,
}

fn lesion(count: usize, lo: f64, hi: f64, placement: Placement) -> LesionParams {
    LesionParams { count, radius: (lo, hi), placement }
}

impl PhantomSpec {
    /// Default phantom with capsule geometry drawn from `seed`.
    pub fn new(seed: u64, canvas: usize) -> Self {
        let n = canvas as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6361_7073_756c_65);
        let rx = n * rng.random_range(0.36..0.42);
        let ry = n * rng.random_range(0.30..0.36);
        let capsule = Ellipse {
            cx: n * 0.5 + n * rng.random_range(-0.03..0.03),
            cy: n * 0.5 + n * rng.random_range(-0.03..0.03),
            rx,
            ry,
            angle: rng.random_range(0.0..PI),
        };
        PhantomSpec {
            seed,
            canvas,
            capsule,
            tuft_scale: 0.78,
            mes_scale: 0.5,
            pod_count: 5,
            mec_count: 2,
            cell_radius: 0.045,
            lesions: [
                lesion(1, 0.06, 0.08, Placement::BowmanSpace),
                lesion(1, 0.05, 0.07, Placement::CapsuleRim),
                lesion(1, 0.0, 0.0, Placement::Global),
                lesion(1, 0.05, 0.07, Placement::Tuft),
                lesion(1, 0.05, 0.065, Placement::Mesangium),
                lesion(1, 0.045, 0.055, Placement::Mesangium),
                lesion(1, 0.05, 0.07, Placement::Tuft),
                lesion(1, 0.045, 0.055, Placement::Mesangium),
                lesion(1, 0.06, 0.08, Placement::TuftBoundary),
            ],
            species: Species::Rodent,
            color_shift: ColorShift::default(),
            noise_sigma: 4.0,
        }
    }

    pub fn with_species(mut self, species: Species, shift: ColorShift) -> Self {
        self.species = species;
        self.color_shift = shift;
        self
    }

    /// Lesion parameters of registry class `index`, if it is a lesion.
    pub fn lesion(&self, index: usize) -> Option<&LesionParams> {
        index.checked_sub(LESION_OFFSET).and_then(|i| self.lesions.get(i))
    }

    pub fn lesion_mut(&mut self, index: usize) -> Option<&mut LesionParams> {
        index.checked_sub(LESION_OFFSET).and_then(move |i| self.lesions.get_mut(i))
    }

    /// Make sure class `index` is drawn.
    pub fn enable(&mut self, index: usize) {
        match index {
            POD => self.pod_count = self.pod_count.max(1),
            MEC => self.mec_count = self.mec_count.max(1),
            _ => {
                if let Some(l) = self.lesion_mut(index) {
                    l.count = l.count.max(1);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.canvas as f64;
        if self.canvas < 16 {
            bail!(InvalidSpec, "canvas {} is smaller than 16 pixels", self.canvas);
        }
        let e = &self.capsule;
        if !(e.rx > 0.0 && e.ry > 0.0) {
            bail!(InvalidSpec, "capsule axes must be positive");
        }
        let (hx, hy) = e.half_extent();
        if e.cx - hx < 0.0 || e.cy - hy < 0.0 || e.cx + hx > n || e.cy + hy > n {
            bail!(InvalidSpec, "capsule ellipse does not fit in a {}x{} canvas", self.canvas, self.canvas);
        }
        for (name, s) in [("tuft_scale", self.tuft_scale), ("mes_scale", self.mes_scale)] {
            if !(s > 0.0 && s < 1.0) {
                bail!(InvalidSpec, "{name} {s} must lie in (0, 1)");
            }
        }
        if !(self.cell_radius > 0.0 && self.cell_radius < 0.5) {
            bail!(InvalidSpec, "cell radius {} must lie in (0, 0.5)", self.cell_radius);
        }
        for l in &self.lesions {
            let (lo, hi) = l.radius;
            if l.placement != Placement::Global && !(lo > 0.0 && lo <= hi && hi < 0.5) {
                bail!(InvalidSpec, "lesion radius range ({lo}, {hi}) must satisfy 0 < min <= max < 0.5");
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            bail!(InvalidSpec, "noise sigma must be finite and nonnegative");
        }
        Ok(())
    }
}

/// Rendered phantom with one mask per registry class.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSample {
    pub image: RgbImage,
    pub masks: Vec<Mask>,
    pub spec: PhantomSpec,
}

impl PhantomSample {
    pub fn mask(&self, index: usize) -> &Mask {
        &self.masks[index]
    }
}

/// Base fills, then GS tint, cells and lesions as overlays.
const BACKGROUND: [f32; 3] = [240.0, 234.0, 238.0];
const BOWMAN: [f32; 3] = [248.0, 205.0, 220.0];
const RIM: [f32; 3] = [150.0, 80.0, 120.0];
const TUFT_FILL: [f32; 3] = [214.0, 120.0, 170.0];
const MES_FILL: [f32; 3] = [165.0, 55.0, 135.0];
const POD_FILL: [f32; 3] = [55.0, 40.0, 165.0];
const MEC_FILL: [f32; 3] = [35.0, 125.0, 60.0];
const GS_TINT: [f32; 3] = [130.0, 130.0, 125.0];
const GS_ALPHA: f32 = 0.45;
const LESION_ALPHA: f32 = 0.85;
const LESION_FILL: [[f32; 3]; LESION_COUNT] = [
    [245.0, 140.0, 35.0],
    [35.0, 205.0, 225.0],
    GS_TINT,
    [250.0, 240.0, 55.0],
    [115.0, 15.0, 55.0],
    [252.0, 252.0, 252.0],
    [205.0, 20.0, 20.0],
    [95.0, 60.0, 20.0],
    [240.0, 60.0, 220.0],
];

/// Shape with a radius that wobbles with angle, `r(θ) = r0 (1 + a sin(kθ + φ))`.
#[derive(Debug, Clone, Copy)]
struct Lobed {
    base: Ellipse,
    amplitude: f64,
    lobes: f64,
    phase: f64,
}

impl Lobed {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (r, theta) = self.base.polar(x, y);
        r <= 1.0 + self.amplitude * libm::sin(self.lobes * theta + self.phase)
    }
}

fn circle(cx: f64, cy: f64, r: f64) -> Ellipse {
    Ellipse { cx, cy, rx: r, ry: r, angle: 0.0 }
}

fn rasterize(n: usize, f: impl Fn(f64, f64) -> bool) -> Mask {
    Mask::from_fn(n, n, |x, y| f(x as f64 + 0.5, y as f64 + 0.5))
}

fn union_into(dst: &mut Mask, src: &Mask) {
    for y in 0..dst.height() {
        for x in 0..dst.width() {
            if src.get(x, y) {
                dst.set(x, y, true);
            }
        }
    }
}

fn intersect(a: &Mask, b: &Mask) -> Mask {
    Mask::from_fn(a.width(), a.height(), |x, y| a.get(x, y) && b.get(x, y))
}

/// Point inside `region` drawn by rejection from an ellipse, or its centre.
fn sample_inside(rng: &mut ChaCha8Rng, frame: &Ellipse, inner: f64, outer: f64, accept: impl Fn(f64, f64) -> bool) -> (f64, f64) {
    for _ in 0..256 {
        let r = libm::sqrt(rng.random_range(inner * inner..outer * outer));
        let (x, y) = frame.point(r, rng.random_range(0.0..TAU));
        if accept(x, y) {
            return (x, y);
        }
    }
    (frame.cx, frame.cy)
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<PhantomSample> {
    spec.validate()?;
    let n = spec.canvas;
    let nf = n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let capsule = spec.capsule;
    let tuft = Lobed {
        base: capsule.scaled(spec.tuft_scale),
        amplitude: 0.06,
        lobes: 5.0,
        phase: rng.random_range(0.0..TAU),
    };
    let mes = Lobed {
        base: capsule.scaled(spec.tuft_scale * spec.mes_scale),
        amplitude: 0.18,
        lobes: 3.0,
        phase: rng.random_range(0.0..TAU),
    };
    let mut masks: Vec<Mask> = (0..CLASS_COUNT).map(|_| Mask::new(n, n)).collect();
    masks[CAP] = rasterize(n, |x, y| capsule.contains(x, y));
    masks[TUFT] = intersect(&rasterize(n, |x, y| tuft.contains(x, y)), &masks[CAP]);
    masks[MES] = intersect(&rasterize(n, |x, y| mes.contains(x, y)), &masks[TUFT]);

    let cell_r = spec.cell_radius * nf;
    let mut pods = Vec::new();
    for _ in 0..spec.pod_count {
        pods.push(sample_inside(&mut rng, &tuft.base, spec.mes_scale * 1.2, 0.95, |x, y| {
            tuft.contains(x, y) && !mes.contains(x, y)
        }));
    }
    let mut mecs = Vec::new();
    for _ in 0..spec.mec_count {
        mecs.push(sample_inside(&mut rng, &mes.base, 0.0, 0.9, |x, y| mes.contains(x, y)));
    }
    for (class, centres) in [(POD, &pods), (MEC, &mecs)] {
        for &(cx, cy) in centres.iter() {
            let disk = circle(cx, cy, cell_r);
            let m = rasterize(n, |x, y| disk.contains(x, y));
            union_into(&mut masks[class], &m);
        }
    }

    // Lesion blobs; centres avoid cells and earlier blobs where the region allows.
    let mut placed: Vec<(f64, f64, f64)> = pods.iter().chain(&mecs).map(|&(x, y)| (x, y, cell_r)).collect();
    for (li, params) in spec.lesions.iter().enumerate() {
        let class = LESION_OFFSET + li;
        for _ in 0..params.count {
            if params.placement == Placement::Global {
                let gs = capsule.scaled(GS_SCALE);
                masks[class] = rasterize(n, |x, y| gs.contains(x, y));
                continue;
            }
            let r = nf * rng.random_range(params.radius.0..=params.radius.1);
            let mut best = (capsule.cx, capsule.cy);
            let mut best_gap = f64::NEG_INFINITY;
            for _ in 0..48 {
                let c = match params.placement {
                    Placement::BowmanSpace => {
                        let mid = (spec.tuft_scale + 1.0) * 0.5;
                        capsule.point(mid, rng.random_range(0.0..TAU))
                    }
                    Placement::CapsuleRim => capsule.point(0.97, rng.random_range(0.0..TAU)),
                    Placement::Tuft => sample_inside(&mut rng, &tuft.base, spec.mes_scale * 1.2, 0.8, |x, y| {
                        tuft.contains(x, y) && !mes.contains(x, y)
                    }),
                    Placement::TuftBoundary => tuft.base.point(1.0, rng.random_range(0.0..TAU)),
                    Placement::Mesangium => sample_inside(&mut rng, &mes.base, 0.0, 0.8, |x, y| mes.contains(x, y)),
                    Placement::Global => unreachable!(),
                };
                let gap = placed
                    .iter()
                    .map(|&(px, py, pr)| libm::hypot(c.0 - px, c.1 - py) - pr - r)
                    .fold(f64::INFINITY, f64::min);
                if gap > best_gap {
                    best = c;
                    best_gap = gap;
                }
                if gap >= 0.0 {
                    break;
                }
            }
            placed.push((best.0, best.1, r));
            let blob = Lobed { base: circle(best.0, best.1, r), amplitude: 0.2, lobes: 4.0, phase: rng.random_range(0.0..TAU) };
            let inside = match params.placement {
                Placement::BowmanSpace | Placement::CapsuleRim => CAP,
                _ => TUFT,
            };
            let m = intersect(&rasterize(n, |x, y| blob.contains(x, y)), &masks[inside]);
            union_into(&mut masks[class], &m);
        }
    }

    // Rendering.
    let rim = capsule.scaled(0.93);
    let mut pixels = vec![[0f32; 3]; n * n];
    for y in 0..n {
        for x in 0..n {
            let mut c = if masks[MES].get(x, y) {
                MES_FILL
            } else if masks[TUFT].get(x, y) {
                TUFT_FILL
            } else if masks[CAP].get(x, y) {
                if rim.contains(x as f64 + 0.5, y as f64 + 0.5) {
                    BOWMAN
                } else {
                    RIM
                }
            } else {
                BACKGROUND
            };
            if masks[GS].get(x, y) {
                c = blend(c, GS_TINT, GS_ALPHA);
            }
            if masks[POD].get(x, y) {
                c = POD_FILL;
            }
            if masks[MEC].get(x, y) {
                c = MEC_FILL;
            }
            for li in 0..LESION_COUNT {
                let class = LESION_OFFSET + li;
                if class != GS && masks[class].get(x, y) {
                    c = blend(c, LESION_FILL[li], LESION_ALPHA);
                }
            }
            pixels[y * n + x] = c;
        }
    }
    let noise = Normal::new(0.0f32, spec.noise_sigma.max(f32::MIN_POSITIVE)).expect("finite sigma");
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6e6f_6973_65);
    let mut image = RgbImage::new(n, n);
    for (i, px) in pixels.iter().enumerate() {
        let shifted = spec.color_shift.apply(*px);
        let mut out = [0u8; 3];
        for c in 0..3 {
            let v = shifted[c] + if spec.noise_sigma > 0.0 { noise.sample(&mut noise_rng) } else { 0.0 };
            out[c] = libm::roundf(v.clamp(0.0, 255.0)) as u8;
        }
        image.put_pixel(i % n, i / n, out);
    }
    Ok(PhantomSample { image, masks, spec: spec.clone() })
}

fn blend(a: [f32; 3], b: [f32; 3], alpha: f32) -> [f32; 3] {
    [a[0] + alpha * (b[0] - a[0]), a[1] + alpha * (b[1] - a[1]), a[2] + alpha * (b[2] - a[2])]
}

/// Dice by exhaustive pixel counting; two empty masks score 1.
pub fn oracle_dice(a: &Mask, b: &Mask) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        bail!(InvalidArgument, "mask shapes differ: {}x{} vs {}x{}", a.width(), a.height(), b.width(), b.height());
    }
    let (mut both, mut in_a, mut in_b) = (0usize, 0usize, 0usize);
    for y in 0..a.height() {
        for x in 0..a.width() {
            let (pa, pb) = (a.get(x, y), b.get(x, y));
            if pa {
                in_a += 1;
            }
            if pb {
                in_b += 1;
            }
            if pa && pb {
                both += 1;
            }
        }
    }
    if in_a + in_b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (in_a + in_b) as f64)
}

/// Species under which class `task` is labeled on a phantom of `preferred`
/// species: the preferred one when the class is annotated there, otherwise
/// the only species that annotates it.
pub fn labeling_species(task: usize, preferred: Species) -> Species {
    let class = Taxonomy::canonical().class(task);
    if class.species.contains(preferred) {
        preferred
    } else {
        Species::ALL.into_iter().find(|&s| class.species.contains(s)).unwrap_or(preferred)
    }
}

/// Single-class sample cut from a rendered phantom.
pub fn label_phantom(phantom: &PhantomSample, task: usize, patient_id: &str) -> PatchSample {
    PatchSample {
        image: phantom.image.clone(),
        mask: phantom.masks[task].clone(),
        task,
        patient_id: patient_id.to_string(),
        species: labeling_species(task, phantom.spec.species),
        source_wsi: format!("phantom-{}", phantom.spec.seed),
    }
}

/// Samples plus the manifest that names them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<PatchSample>,
}

impl SyntheticDataset {
    /// Manifest paths follow `<species>/<code>/<patient>/<sample>.png`.
    pub fn from_samples(samples: Vec<PatchSample>) -> Self {
        let tax = Taxonomy::canonical();
        let entries = samples
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let stem = format!("{}/{}/{}/s{i:05}", s.species.as_str(), tax.code(s.task), s.patient_id);
                ManifestEntry {
                    image_path: format!("{stem}.png"),
                    mask_path: format!("{stem}_mask.png"),
                    task: s.task,
                    patient_id: s.patient_id.clone(),
                    species: s.species,
                    source_wsi: s.source_wsi.clone(),
                }
            })
            .collect();
        SyntheticDataset { manifest: DatasetManifest::new(entries), samples }
    }

    pub fn source(&self) -> MemorySource {
        let mut src = MemorySource::new();
        for (e, s) in self.manifest.entries.iter().zip(&self.samples) {
            src.insert_image(e.image_path.clone(), s.image.clone());
            src.insert_mask(e.mask_path.clone(), s.mask.clone());
        }
        src
    }
}

pub fn patient_name(index: usize) -> String {
    format!("P{index:03}")
}

/// One single-class sample per spec. Tasks cycle through `classes` in
/// registry order and patients are assigned round-robin; the task's class is
/// forced on in its phantom.
pub fn emit_partial_dataset(specs: &[PhantomSpec], classes: ClassSet, patients: usize) -> Result<SyntheticDataset> {
    if classes.is_empty() {
        bail!(InvalidArgument, "no classes requested");
    }
    if patients < 3 {
        bail!(InvalidArgument, "need at least 3 patients for a train/val/test split, got {patients}");
    }
    let order: Vec<usize> = classes.iter().collect();
    let mut samples = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let task = order[i % order.len()];
        let mut spec = spec.clone();
        spec.enable(task);
        let phantom = generate_phantom(&spec)?;
        samples.push(label_phantom(&phantom, task, &patient_name(i % patients)));
    }
    Ok(SyntheticDataset::from_samples(samples))
}

/// Every class in `classes` that is annotated for the phantom's species,
/// as separate single-class samples.
pub fn label_all(phantom: &PhantomSample, classes: ClassSet, patient_id: &str) -> Vec<PatchSample> {
    let tax = Taxonomy::canonical();
    classes
        .iter()
        .filter(|&c| tax.class(c).species.contains(phantom.spec.species))
        .map(|c| label_phantom(phantom, c, patient_id))
        .collect()
}

/// Registry indices of the lesion classes, in order.
pub fn lesion_classes() -> ClassSet {
    Taxonomy::canonical().group_set(Group::Lesion)
}

/// Two-domain lesion benchmark: plain rodent phantoms and colour-shifted
/// human phantoms, one annotated class per phantom.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferBenchmark {
    pub seed: u64,
    pub canvas: usize,
    pub rodent_train: usize,
    pub human_train: usize,
    /// Samples per lesion class in each validation split.
    pub val_per_class: usize,
    /// Samples per lesion class in each test split.
    pub test_per_class: usize,
    /// Strength handed to [`ColorShift::seeded`] for the human domain.
    pub shift_strength: f32,
}

impl TransferBenchmark {
    pub fn new(seed: u64) -> Self {
        TransferBenchmark {
            seed,
            canvas: 64,
            rodent_train: 40,
            human_train: 8,
            val_per_class: 1,
            test_per_class: 2,
            shift_strength: 0.35,
        }
    }

    pub fn human_shift(&self) -> ColorShift {
        ColorShift::seeded(self.seed, self.shift_strength)
    }

    fn domain(&self, species: Species, split: u64, count: usize) -> Result<Vec<PatchSample>> {
        let tax = Taxonomy::canonical();
        let classes: Vec<usize> = lesion_classes().intersection(tax.species_set(species)).iter().collect();
        let shift = match species {
            Species::Rodent => ColorShift::default(),
            Species::Human => self.human_shift(),
        };
        let domain = match species {
            Species::Rodent => 0,
            Species::Human => 1,
        };
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let task = classes[i % classes.len()];
            let seed = self.seed.wrapping_mul(1_000_003) ^ (domain << 40) ^ (split << 32) ^ i as u64;
            let mut spec = PhantomSpec::new(seed, self.canvas).with_species(species, shift);
            spec.enable(task);
            let phantom = generate_phantom(&spec)?;
            let patient = format!("{}-{}-{}", species.as_str(), split, patient_name(i));
            out.push(label_phantom(&phantom, task, &patient));
        }
        Ok(out)
    }

    /// Per-domain lesion splits; each held-out split covers every lesion
    /// class of its species.
    pub fn build(&self) -> Result<crate::evaluation::TransferData> {
        use crate::evaluation::{DomainData, TransferData};
        let tax = Taxonomy::canonical();
        let make = |species: Species, train: usize| -> Result<DomainData> {
            let n = lesion_classes().intersection(tax.species_set(species)).len();
            Ok(DomainData {
                train: self.domain(species, 0, train)?,
                val: self.domain(species, 1, n * self.val_per_class)?,
                test: self.domain(species, 2, n * self.test_per_class)?,
            })
        };
        Ok(TransferData {
            rodent: Some(make(Species::Rodent, self.rodent_train)?),
            human: Some(make(Species::Human, self.human_train)?),
        })
    }
}

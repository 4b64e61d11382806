//! Experiment orchestration: dataset generation, training of the full and
//! corner-reduced classifiers, bound reports and gap tables.
//!
//! Output layout of one run directory:
//!
//! ```text
//! config.txt                       flat config used for the run
//! manifest.csv, maps.bin           dataset index and map containers
//! curves_{full,reduced}_seed{s}.csv
//! steps_{full,reduced}_seed{s}.csv per-step ‖ΔWᵢ‖_F
//! model_{full,reduced}_seed{s}.bin checkpoints
//! geb_seed{s}.txt, geb_report.csv  bound reports
//! gaps.csv, gaps_summary.csv       accuracy gap tables
//! ```

pub mod config;
pub mod container;

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use config::{DataConfig, ExperimentConfig, Preset, RunConfig, SPLIT_HEIGHTS};
pub use container::ContainerKind;

use crate::bound::{self, GebReport, LossSpec};
use crate::corners::{build_pcrd, PointCloudRD, CLOUD_LEN};
use crate::dataproc::{enhance, EnhancedMap, MapKind, MAP_SIZE};
use crate::nn::{self, Dataset, Metrics, MlpModel, Split, SplitKind, TrainTrace, N_CLASSES};
use crate::radar_sim::{simulate_echo, synth_trajectory, ActivityKind};
use crate::sigproc::{build_dtm, build_rtm, range_profiles};
use crate::{Error, Matrix, Result};

pub const FULL_DIM: usize = 2 * MAP_SIZE * MAP_SIZE;
pub const REDUCED_DIM: usize = CLOUD_LEN;

const MANIFEST_FILE: &str = "manifest.csv";
const MAPS_FILE: &str = "maps.bin";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Full,
    Reduced,
}

impl Variant {
    pub const BOTH: [Variant; 2] = [Variant::Full, Variant::Reduced];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Reduced => "reduced",
        }
    }

    pub fn input_dim(self) -> usize {
        match self {
            Variant::Full => FULL_DIM,
            Variant::Reduced => REDUCED_DIM,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "reduced" => Ok(Variant::Reduced),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}, expected full or reduced"))),
        }
    }
}

/// One manifest row. Offsets point into `maps.bin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: u64,
    pub split: String,
    pub activity: u8,
    pub height: f64,
    pub seed: u64,
    pub off_r2tm: u64,
    pub off_d2tm: u64,
    pub off_pcrd: u64,
    pub off_full: u64,
    pub off_reduced: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub dir: PathBuf,
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn maps_path(&self) -> PathBuf {
        self.dir.join(MAPS_FILE)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let records = csv::Reader::from_reader(file)
            .deserialize()
            .collect::<std::result::Result<Vec<SampleRecord>, _>>()?;
        let manifest = Self {
            dir: dir.to_path_buf(),
            records,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Unique ids, known split names and activity codes, and every offset
    /// inside the map file.
    pub fn validate(&self) -> Result<()> {
        let maps = self.maps_path();
        let len = fs::metadata(&maps).map_err(|e| Error::io(&maps, e))?.len();
        let bad = |reason: String| Error::Format {
            path: self.dir.join(MANIFEST_FILE),
            reason,
        };
        let mut ids = HashSet::new();
        for r in &self.records {
            if !ids.insert(r.id) {
                return Err(bad(format!("duplicate sample id {}", r.id)));
            }
            split_kind(&r.split).map_err(|_| bad(format!("unknown split {:?}", r.split)))?;
            ActivityKind::from_code(r.activity)?;
            let spans = [
                (r.off_r2tm, MAP_SIZE * MAP_SIZE),
                (r.off_d2tm, MAP_SIZE * MAP_SIZE),
                (r.off_pcrd, CLOUD_LEN),
                (r.off_full, FULL_DIM),
                (r.off_reduced, REDUCED_DIM),
            ];
            for (off, n) in spans {
                if off + container::encoded_len(1, n) as u64 > len {
                    return Err(bad(format!("sample {} offset {off} outside {}", r.id, maps.display())));
                }
            }
        }
        Ok(())
    }

    pub fn count(&self, kind: SplitKind) -> usize {
        self.records.iter().filter(|r| r.split == kind.name()).count()
    }
}

fn split_kind(name: &str) -> Result<SplitKind> {
    SplitKind::ALL
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown split {name:?}")))
}

/// SplitMix64 finalizer of `base + id`; per-sample seeds are independent
/// of generation order.
pub fn sample_seed(base: u64, id: u64) -> u64 {
    let mut z = base.wrapping_add(id.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Maps and features of one simulated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFeatures {
    pub r2tm: EnhancedMap,
    pub d2tm: EnhancedMap,
    pub pcrd: PointCloudRD,
}

impl SampleFeatures {
    /// R²TM flatten followed by D²TM flatten.
    pub fn full_feature(&self) -> Vec<f64> {
        let mut v = self.r2tm.flatten().to_vec();
        v.extend_from_slice(self.d2tm.flatten());
        v
    }

    /// Point cloud flatten, derived from the same two maps.
    pub fn reduced_feature(&self) -> Vec<f64> {
        self.pcrd.flatten()
    }
}

/// Echo simulation, range/Doppler processing, enhancement and corner
/// extraction for one activity instance.
pub fn process_sample(cfg: &ExperimentConfig, activity: ActivityKind, height: f64, seed: u64) -> Result<SampleFeatures> {
    let track = synth_trajectory(activity, height, &cfg.radar, seed)?;
    let echo = simulate_echo(&track, &cfg.radar, &cfg.wall, cfg.data.snr_db, seed ^ 0x0e_c0e_c0)?;
    let profiles = range_profiles(&echo)?;
    let rtm = build_rtm(&profiles, &cfg.radar);
    let dtm = build_dtm(&profiles, &cfg.stft, cfg.radar.prf)?;
    let r2tm = enhance(&rtm.data, MapKind::R2tm, &cfg.emd, &cfg.clahe)?;
    let d2tm = enhance(&dtm.data, MapKind::D2tm, &cfg.emd, &cfg.clahe)?;
    let pcrd = build_pcrd(&r2tm, &d2tm, &cfg.dog)?;
    Ok(SampleFeatures { r2tm, d2tm, pcrd })
}

/// Split, activity, height and seed of every sample, in id order.
/// Activities cycle through all 12 codes by id, so the whole dataset is
/// exactly balanced and every split is balanced to within one sample.
pub fn sample_plan(cfg: &ExperimentConfig) -> Vec<(u64, SplitKind, ActivityKind, f64, u64)> {
    let mut plan = Vec::with_capacity(cfg.data.total());
    let mut id = 0u64;
    for (s, kind) in SplitKind::ALL.into_iter().enumerate() {
        for _ in 0..cfg.data.counts()[s] {
            let activity = ActivityKind::ALL[id as usize % N_CLASSES];
            plan.push((id, kind, activity, SPLIT_HEIGHTS[s], sample_seed(cfg.data.seed, id)));
            id += 1;
        }
    }
    plan
}

fn worker_count(cfg: &DataConfig) -> usize {
    if cfg.threads > 0 {
        cfg.threads
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

fn process_parallel(
    cfg: &ExperimentConfig,
    jobs: &[(u64, SplitKind, ActivityKind, f64, u64)],
    threads: usize,
) -> Result<Vec<SampleFeatures>> {
    if threads <= 1 || jobs.len() < 2 {
        return jobs.iter().map(|j| process_sample(cfg, j.2, j.3, j.4)).collect();
    }
    let per = jobs.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .chunks(per)
            .map(|chunk| {
                scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|j| process_sample(cfg, j.2, j.3, j.4))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(jobs.len());
        for h in handles {
            out.extend(h.join().expect("sample worker panicked")?);
        }
        Ok(out)
    })
}

/// Simulates every sample of the configured splits and writes
/// `manifest.csv`, `maps.bin` and `config.txt` into `cfg.output_dir`.
pub fn gen_dataset(cfg: &ExperimentConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("config.txt"), cfg.to_flat_text()?.as_bytes())?;
    let maps_path = dir.join(MAPS_FILE);
    let file = File::create(&maps_path).map_err(|e| Error::io(&maps_path, e))?;
    let mut maps = BufWriter::new(file);
    let plan = sample_plan(cfg);
    let threads = worker_count(&cfg.data);
    let mut records = Vec::with_capacity(plan.len());
    let mut offset = 0u64;
    let io = |e| Error::io(&maps_path, e);
    for batch in plan.chunks(16 * threads) {
        let features = process_parallel(cfg, batch, threads)?;
        for (job, f) in batch.iter().zip(features) {
            let mut entry = |kind: ContainerKind, m: &Matrix, out: &mut BufWriter<File>| -> Result<u64> {
                let at = offset;
                container::write_map(out, kind, m).map_err(io)?;
                offset += container::encoded_len(m.rows(), m.cols()) as u64;
                Ok(at)
            };
            let full = Matrix::from_vec(1, FULL_DIM, f.full_feature())?;
            let reduced = Matrix::from_vec(1, REDUCED_DIM, f.reduced_feature())?;
            let off_r2tm = entry(ContainerKind::R2tm, &f.r2tm.data, &mut maps)?;
            let off_d2tm = entry(ContainerKind::D2tm, &f.d2tm.data, &mut maps)?;
            let off_pcrd = entry(ContainerKind::Pcrd, &f.pcrd.points, &mut maps)?;
            let off_full = entry(ContainerKind::FullFeature, &full, &mut maps)?;
            let off_reduced = entry(ContainerKind::ReducedFeature, &reduced, &mut maps)?;
            records.push(SampleRecord {
                id: job.0,
                split: job.1.name().to_string(),
                activity: job.2.code(),
                height: job.3,
                seed: job.4,
                off_r2tm,
                off_d2tm,
                off_pcrd,
                off_full,
                off_reduced,
            });
        }
    }
    maps.flush().map_err(io)?;
    drop(maps);
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut w = csv::Writer::from_path(&manifest_path)?;
    for r in &records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&manifest_path, e))?;
    let manifest = DatasetManifest {
        dir: dir.clone(),
        records,
    };
    manifest.validate()?;
    Ok(manifest)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads one container of the expected kind and shape at `offset`.
fn read_container(file: &mut File, path: &Path, offset: u64, kind: ContainerKind, shape: (usize, usize)) -> Result<Matrix> {
    file.seek(SeekFrom::Start(offset)).map_err(|e| Error::io(path, e))?;
    let mut buf = vec![0u8; container::encoded_len(shape.0, shape.1)];
    file.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    let (got, m) = container::read_map(&mut buf.as_slice())?;
    if got != kind || m.shape() != shape {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: format!("expected {kind:?} {shape:?} at offset {offset}, found {got:?} {:?}", m.shape()),
        });
    }
    Ok(m)
}

/// Stored maps of one sample.
pub fn load_sample(manifest: &DatasetManifest, record: &SampleRecord) -> Result<(Matrix, Matrix, Matrix)> {
    let path = manifest.maps_path();
    let mut file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let sq = (MAP_SIZE, MAP_SIZE);
    Ok((
        read_container(&mut file, &path, record.off_r2tm, ContainerKind::R2tm, sq)?,
        read_container(&mut file, &path, record.off_d2tm, ContainerKind::D2tm, sq)?,
        read_container(&mut file, &path, record.off_pcrd, ContainerKind::Pcrd, (crate::corners::CLOUD_ROWS, 3))?,
    ))
}

/// Feature matrices of one variant, split by the manifest's split column.
pub fn load_dataset(manifest: &DatasetManifest, variant: Variant) -> Result<Dataset> {
    let path = manifest.maps_path();
    let mut file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let dim = variant.input_dim();
    let mut splits = Vec::with_capacity(4);
    for (s, kind) in SplitKind::ALL.into_iter().enumerate() {
        let mut records: Vec<&SampleRecord> = manifest.records.iter().filter(|r| r.split == kind.name()).collect();
        records.sort_by_key(|r| r.id);
        let mut data = Vec::with_capacity(records.len() * dim);
        let mut labels = Vec::with_capacity(records.len());
        for r in &records {
            let (off, ck) = match variant {
                Variant::Full => (r.off_full, ContainerKind::FullFeature),
                Variant::Reduced => (r.off_reduced, ContainerKind::ReducedFeature),
            };
            let m = read_container(&mut file, &path, off, ck, (1, dim))?;
            data.extend_from_slice(m.as_slice());
            labels.push(r.activity as usize);
        }
        let height = records.first().map_or(SPLIT_HEIGHTS[s], |r| r.height);
        splits.push(Split::new(Matrix::from_vec(records.len(), dim, data)?, labels, height)?);
    }
    let mut it = splits.into_iter();
    Ok(Dataset {
        train: it.next().unwrap(),
        val: it.next().unwrap(),
        test1: it.next().unwrap(),
        test2: it.next().unwrap(),
    })
}

pub fn curves_path(dir: &Path, variant: Variant, seed: u64) -> PathBuf {
    dir.join(format!("curves_{variant}_seed{seed}.csv"))
}

pub fn steps_path(dir: &Path, variant: Variant, seed: u64) -> PathBuf {
    dir.join(format!("steps_{variant}_seed{seed}.csv"))
}

pub fn checkpoint_path(dir: &Path, variant: Variant, seed: u64) -> PathBuf {
    dir.join(format!("model_{variant}_seed{seed}.bin"))
}

fn write_curves(path: &Path, trace: &TrainTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "epoch", "split", "accuracy", "loss"])?;
    for rec in &trace.evals {
        for (kind, m) in SplitKind::ALL.iter().zip(&rec.metrics) {
            w.write_record([
                rec.step.to_string(),
                rec.epoch.to_string(),
                kind.name().to_string(),
                m.accuracy.to_string(),
                m.loss.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_steps(path: &Path, trace: &TrainTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "dw1_fro", "dw2_fro", "dw3_fro"])?;
    for (i, n) in trace.step_norms.iter().enumerate() {
        w.write_record([(i + 1).to_string(), n[0].to_string(), n[1].to_string(), n[2].to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Last recorded metrics per split from a curve file.
pub fn read_final_curves(path: &Path) -> Result<[Metrics; 4]> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut last = [None; 4];
    for row in csv::Reader::from_reader(file).records() {
        let row = row?;
        let field = |i: usize| row.get(i).unwrap_or("");
        let kind = split_kind(field(2)).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                reason: format!("bad number {s:?}"),
            })
        };
        let idx = SplitKind::ALL.iter().position(|k| *k == kind).unwrap();
        last[idx] = Some(Metrics {
            accuracy: parse(field(3))?,
            loss: parse(field(4))?,
        });
    }
    let mut out = [Metrics::default(); 4];
    for (o, l) in out.iter_mut().zip(last) {
        *o = l.ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            reason: "missing split in curve file".into(),
        })?;
    }
    Ok(out)
}

/// Trains one variant with the given seed and writes its curve, step and
/// checkpoint files into `dir`.
pub fn train_variant(dataset: &Dataset, variant: Variant, seed: u64, cfg: &ExperimentConfig, dir: &Path) -> Result<(MlpModel, TrainTrace)> {
    if dataset.input_dim() != variant.input_dim() {
        return Err(Error::dims(variant.input_dim(), dataset.input_dim()));
    }
    let train_cfg = nn::TrainConfig { seed, ..cfg.train };
    let init = MlpModel::init(variant.input_dim(), seed);
    let (model, trace) = nn::train(&init, dataset, &train_cfg)?;
    write_curves(&curves_path(dir, variant, seed), &trace)?;
    write_steps(&steps_path(dir, variant, seed), &trace)?;
    model.save(&checkpoint_path(dir, variant, seed))?;
    Ok((model, trace))
}

pub fn build_report(
    seed: u64,
    full: (&MlpModel, &TrainTrace),
    reduced: (&MlpModel, &TrainTrace),
    delta: f64,
) -> Result<GebReport> {
    let spec = LossSpec::default();
    let pf = bound::extract_params(full.0, full.1, &spec, delta)?;
    let pr = bound::extract_params(reduced.0, reduced.1, &spec, delta)?;
    GebReport::build(
        seed,
        pf,
        pr,
        bound::empirical_gap(full.1)?,
        bound::empirical_gap(reduced.1)?,
        (full.0.input_dim(), reduced.0.input_dim()),
    )
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub full: (MlpModel, TrainTrace),
    pub reduced: (MlpModel, TrainTrace),
    pub report: GebReport,
}

impl SeedRun {
    pub fn trace(&self, variant: Variant) -> &TrainTrace {
        match variant {
            Variant::Full => &self.full.1,
            Variant::Reduced => &self.reduced.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub runs: Vec<SeedRun>,
    pub gap_table: GapTable,
}

fn write_geb_reports(dir: &Path, reports: &[&GebReport]) -> Result<()> {
    let path = dir.join("geb_report.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(GebReport::csv_header())?;
    for r in reports {
        w.write_record(r.csv_row())?;
        write_file(&dir.join(format!("geb_seed{}.txt", r.seed)), r.text_block().as_bytes())?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Trains both variants for every configured seed on the manifest's data,
/// then writes bound reports and gap tables next to the dataset.
pub fn run_experiment(manifest: &DatasetManifest, cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    manifest.validate()?;
    for (kind, n) in SplitKind::ALL.into_iter().zip(cfg.data.counts()) {
        if manifest.count(kind) != n {
            return Err(Error::Format {
                path: manifest.dir.join(MANIFEST_FILE),
                reason: format!("{} split has {} samples, config expects {n}", kind.name(), manifest.count(kind)),
            });
        }
    }
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let full_data = load_dataset(manifest, Variant::Full)?;
    let reduced_data = load_dataset(manifest, Variant::Reduced)?;
    let mut runs = Vec::with_capacity(cfg.experiment.seeds.len());
    for &seed in &cfg.experiment.seeds {
        let full = train_variant(&full_data, Variant::Full, seed, cfg, dir)?;
        let reduced = train_variant(&reduced_data, Variant::Reduced, seed, cfg, dir)?;
        let report = build_report(seed, (&full.0, &full.1), (&reduced.0, &reduced.1), cfg.experiment.delta)?;
        runs.push(SeedRun {
            seed,
            full,
            reduced,
            report,
        });
    }
    write_geb_reports(dir, &runs.iter().map(|r| &r.report).collect::<Vec<_>>())?;
    let gap_table = report_gaps(&runs);
    gap_table.write(dir)?;
    Ok(RunArtifacts {
        dir: dir.clone(),
        runs,
        gap_table,
    })
}

/// Recomputes the bound report of one seed from its checkpoints; the
/// trace quantities come from evaluating both models on the dataset.
pub fn bound_from_checkpoints(manifest: &DatasetManifest, cfg: &ExperimentConfig, seed: u64) -> Result<GebReport> {
    let dir = &cfg.output_dir;
    let mut parts = Vec::with_capacity(2);
    for variant in Variant::BOTH {
        let model = MlpModel::load(&checkpoint_path(dir, variant, seed))?;
        let data = load_dataset(manifest, variant)?;
        let mut final_metrics = [Metrics::default(); 4];
        for (m, kind) in final_metrics.iter_mut().zip(SplitKind::ALL) {
            *m = nn::evaluate(&model, data.split(kind))?;
        }
        let trace = TrainTrace {
            evals: vec![nn::EvalRecord {
                step: cfg.train.rounds(data.train.len()),
                epoch: cfg.train.epochs - 1,
                metrics: final_metrics,
            }],
            step_norms: Vec::new(),
            n_rounds: cfg.train.rounds(data.train.len()),
            final_metrics,
            n_train: data.train.len(),
        };
        parts.push((model, trace));
    }
    build_report(seed, (&parts[0].0, &parts[0].1), (&parts[1].0, &parts[1].1), cfg.experiment.delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub seed: u64,
    pub variant: Variant,
    pub val_acc: f64,
    pub test1_acc: f64,
    pub test2_acc: f64,
    pub geb: f64,
    /// GEBᴵ / GEB of the seed, repeated on both rows.
    pub geb_ratio: f64,
}

impl GapRow {
    pub fn gap_test1(&self) -> f64 {
        self.val_acc - self.test1_acc
    }

    pub fn gap_test2(&self) -> f64 {
        self.val_acc - self.test2_acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapSummary {
    pub mean_gap_test1: f64,
    pub mean_gap_test2: f64,
    pub median_gap_test1: f64,
    pub median_gap_test2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapTable {
    pub rows: Vec<GapRow>,
}

/// Accuracy difference as a percentage with two decimals.
pub fn percent(gap: f64) -> String {
    format!("{:.2}", 100.0 * gap)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl GapTable {
    pub fn summary(&self, variant: Variant) -> GapSummary {
        let rows: Vec<&GapRow> = self.rows.iter().filter(|r| r.variant == variant).collect();
        let g1: Vec<f64> = rows.iter().map(|r| r.gap_test1()).collect();
        let g2: Vec<f64> = rows.iter().map(|r| r.gap_test2()).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        GapSummary {
            mean_gap_test1: mean(&g1),
            mean_gap_test2: mean(&g2),
            median_gap_test1: median(&g1),
            median_gap_test2: median(&g2),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join("gaps.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "seed",
            "model",
            "val_acc",
            "test1_acc",
            "test2_acc",
            "gap_val_test1_pct",
            "gap_val_test2_pct",
            "geb",
            "geb_ratio",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.seed.to_string(),
                r.variant.to_string(),
                r.val_acc.to_string(),
                r.test1_acc.to_string(),
                r.test2_acc.to_string(),
                percent(r.gap_test1()),
                percent(r.gap_test2()),
                r.geb.to_string(),
                r.geb_ratio.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let path = dir.join("gaps_summary.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "model",
            "mean_gap_val_test1_pct",
            "mean_gap_val_test2_pct",
            "median_gap_val_test1_pct",
            "median_gap_val_test2_pct",
        ])?;
        for v in Variant::BOTH {
            let s = self.summary(v);
            w.write_record([
                v.to_string(),
                percent(s.mean_gap_test1),
                percent(s.mean_gap_test2),
                percent(s.median_gap_test1),
                percent(s.median_gap_test2),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:>6} {:>8} {:>8} {:>8} {:>8} {:>10} {:>10} {:>12}\n",
            "seed", "model", "val", "test1", "test2", "val-t1 %", "val-t2 %", "GEB_I/GEB"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:>6} {:>8} {:>8.4} {:>8.4} {:>8.4} {:>10} {:>10} {:>12.4e}\n",
                r.seed,
                r.variant.name(),
                r.val_acc,
                r.test1_acc,
                r.test2_acc,
                percent(r.gap_test1()),
                percent(r.gap_test2()),
                r.geb_ratio
            ));
        }
        for v in Variant::BOTH {
            let sm = self.summary(v);
            s.push_str(&format!(
                "{:>8} mean gaps {}% / {}%, median {}% / {}%\n",
                v.name(),
                percent(sm.mean_gap_test1),
                percent(sm.mean_gap_test2),
                percent(sm.median_gap_test1),
                percent(sm.median_gap_test2)
            ));
        }
        s
    }
}

fn gap_row(seed: u64, variant: Variant, finals: &[Metrics; 4], report: &GebReport) -> GapRow {
    GapRow {
        seed,
        variant,
        val_acc: finals[1].accuracy,
        test1_acc: finals[2].accuracy,
        test2_acc: finals[3].accuracy,
        geb: match variant {
            Variant::Full => report.geb,
            Variant::Reduced => report.geb_improved,
        },
        geb_ratio: report.ratio,
    }
}

/// End-of-training validation minus test accuracy per model and seed.
pub fn report_gaps(runs: &[SeedRun]) -> GapTable {
    let mut rows = Vec::with_capacity(2 * runs.len());
    for run in runs {
        for v in Variant::BOTH {
            rows.push(gap_row(run.seed, v, &run.trace(v).final_metrics, &run.report));
        }
    }
    GapTable { rows }
}

/// Gap table rebuilt from the curve files and `geb_report.csv` of a run
/// directory.
pub fn report_gaps_from_dir(dir: &Path) -> Result<GapTable> {
    let path = dir.join("geb_report.csv");
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers()?.clone();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            reason: format!("missing column {name}"),
        })
    };
    let (c_seed, c_geb, c_gebi, c_ratio) = (col("seed")?, col("geb")?, col("geb_improved")?, col("ratio")?);
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                reason: format!("bad value in column {i}"),
            })
        };
        let seed = num(c_seed)? as u64;
        for v in Variant::BOTH {
            let finals = read_final_curves(&curves_path(dir, v, seed))?;
            rows.push(GapRow {
                seed,
                variant: v,
                val_acc: finals[1].accuracy,
                test1_acc: finals[2].accuracy,
                test2_acc: finals[3].accuracy,
                geb: num(if v == Variant::Full { c_geb } else { c_gebi })?,
                geb_ratio: num(c_ratio)?,
            });
        }
    }
    Ok(GapTable { rows })
}

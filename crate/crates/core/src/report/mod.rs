//! End-to-end pipeline: load or generate ratings, train the dimension grid,
//! audit availability for every (d, N), compare the ε-level set and write
//! every artifact plus a checksummed manifest.

mod config;
mod csv;

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checkpoint;
use crate::error::{Error, Result};
use crate::factorize::{train_grid, AlsParams, FactorModel, ModelGridEntry};
use crate::ingest::{self, DuplicatePolicy, RatingDataset};
use crate::multiplicity::{
    ambiguity_percentage, discrepancy_matrix, final_discrepancy, level_set,
    prediction_difference_matrix, threshold_report, CountMatrix, Denominator, LevelSet,
    MatrixMode, ThresholdReport,
};
use crate::reachability::{
    audit_many, recourse_difficulty, write_recourse_csv, AuditOptions, AvailabilitySet,
    RatingBounds, RecourseOptions,
};
use crate::synth;

pub use config::{DatasetFormat, ExperimentConfig};
pub use csv::{emit_matrix_csv, matrix_csv, parse_matrix_csv, CsvCell};

/// Name of the marker left in the output directory while a run is in
/// progress, or after it failed. Holds the name of the last stage started.
pub const PARTIAL_MARKER: &str = ".partial";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub d: usize,
    pub test_rmse: f64,
    pub in_level_set: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilitySummary {
    pub d: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub available: usize,
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguitySummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub percentage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancySummary {
    /// `fixed_N{N}` or `joint`.
    pub matrix: String,
    pub labels: Vec<String>,
    pub final_discrepancy: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub band_counts: Vec<usize>,
    pub at_or_above: Vec<usize>,
    pub undefined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    pub users: usize,
    pub evaluated_pairs: usize,
    pub feasible_fraction: f64,
    pub mean_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub epsilon: f64,
    pub baseline_rmse: f64,
    pub models: Vec<ModelSummary>,
    pub availability: Vec<AvailabilitySummary>,
    /// Absent unless the level set holds at least two models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambiguity: Option<Vec<AmbiguitySummary>>,
    pub discrepancy: Vec<DiscrepancySummary>,
    pub thresholds: Vec<f64>,
    pub denominator: Denominator,
    pub threshold_bands: Vec<BandSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recourse: Option<RecourseSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub data_seed: u64,
    pub split_seed: u64,
    pub training_seed: u64,
    pub dataset: DatasetShape,
    pub files: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetShape {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub train: usize,
    pub test: usize,
}

/// Everything a run produced, in memory.
#[derive(Debug)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub grid: Vec<ModelGridEntry>,
    pub level_set: LevelSet,
    pub availability: Vec<AvailabilitySet>,
    /// One per slate size with at least two level-set models, ascending N.
    pub fixed_n: Vec<(usize, CountMatrix)>,
    pub joint: Option<CountMatrix>,
    pub thresholds: Vec<(usize, ThresholdReport)>,
    pub summary: Summary,
    pub manifest: Manifest,
}

pub fn emit_summary_json(summary: &Summary, path: &Path) -> Result<()> {
    write_json(summary, path)
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(config: &ExperimentConfig) -> Result<RatingDataset> {
    let open = || -> Result<BufReader<File>> {
        let path = config.dataset_path.as_deref().expect("validated");
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(BufReader::new(file))
    };
    let ds = match config.dataset_format {
        DatasetFormat::Synthetic => synth::generate(&config.synthetic_spec())?,
        DatasetFormat::Explicit => {
            ingest::parse_explicit_ratings(open()?, &config.separator, DuplicatePolicy::Error)?
        }
        DatasetFormat::Plays => ingest::plays_to_ratings(&ingest::parse_play_counts(open()?)?)?,
        DatasetFormat::Canonical => ingest::read_canonical(open()?, None)?,
    };
    match config.item_filter {
        Some(k) => ingest::filter_top_items(&ds, k),
        None => Ok(ds),
    }
}

/// Collects written files for the manifest. Paths are relative to the
/// output directory with `/` separators.
struct Outputs {
    root: PathBuf,
    files: Vec<ManifestEntry>,
}

impl Outputs {
    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.record(rel, bytes);
        Ok(())
    }

    fn record(&mut self, rel: &str, bytes: &[u8]) {
        self.files.retain(|f| f.path != rel);
        self.files.push(ManifestEntry {
            path: rel.to_owned(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len() as u64,
        });
    }

    fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    fn stage(&self, name: &str) -> Result<()> {
        let path = self.root.join(PARTIAL_MARKER);
        fs::write(&path, format!("{name}\n")).map_err(|e| Error::io(&path, e))
    }
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    config.validate()?;
    #[cfg(feature = "parallel")]
    {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(w) = config.workers {
            builder = builder.num_threads(w);
        }
        let pool = builder
            .build()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
        pool.install(|| run_stages(config))
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_stages(config)
    }
}

fn run_stages(config: &ExperimentConfig) -> Result<RunReport> {
    let root = config.output_dir.clone();
    fs::create_dir_all(&root).map_err(|e| Error::stage("setup", Error::io(&root, e)))?;
    let mut out = Outputs { root: root.clone(), files: Vec::new() };

    out.stage("ingest")?;
    log::info!("loading {:?} dataset", config.dataset_format);
    let dataset = load_dataset(config).map_err(|e| Error::stage("ingest", e))?;
    let (train, test) = ingest::split_holdout(&dataset, config.test_fraction, config.seed)
        .map_err(|e| Error::stage("ingest", e))?;
    log::info!(
        "{} users, {} items, {} train / {} test ratings",
        dataset.n_users(),
        dataset.n_items(),
        train.len(),
        test.len()
    );

    out.stage("train")?;
    let base = AlsParams {
        d: config.d_list[0],
        lambda: config.lambda,
        max_sweeps: config.sweeps,
        tol: config.tol,
        seed: config.seed,
    };
    let grid = train_grid(&train, &test, &config.d_list, &base).map_err(|e| Error::stage("train", e))?;
    for entry in &grid {
        log::info!("d = {}: test RMSE {:.6}", entry.d, entry.test_rmse);
        let rel = format!("models/d{}.cfmf", entry.d);
        let bytes = checkpoint::encode(&entry.model);
        out.write(&rel, &bytes).map_err(|e| Error::stage("train", e))?;
        let meta = checkpoint::CheckpointMeta::of(&entry.model, Some(entry.test_rmse));
        out.json(&format!("models/d{}.json", entry.d), &meta)
            .map_err(|e| Error::stage("train", e))?;
    }

    out.stage("audit")?;
    let opts = AuditOptions { include_bias: config.include_bias };
    let mut availability = Vec::new();
    for entry in &grid {
        let sets = audit_many(&entry.model, &config.n_list, opts).map_err(|e| Error::stage("audit", e))?;
        for set in sets {
            out.json(&format!("availability/{}.json", set.key()), &set.to_record())
                .map_err(|e| Error::stage("audit", e))?;
            availability.push(set);
        }
    }
    availability.sort_by_key(|s| s.key());

    out.stage("multiplicity")?;
    let (summary_parts, fixed_n, joint, thresholds, level) =
        multiplicity_stage(config, &grid, &test, &availability, &mut out)
            .map_err(|e| Error::stage("multiplicity", e))?;

    let recourse = if config.recourse_users > 0 {
        out.stage("recourse")?;
        Some(recourse_stage(config, &grid, &level, &train, &mut out).map_err(|e| Error::stage("recourse", e))?)
    } else {
        None
    };

    out.stage("report")?;
    let summary = Summary {
        epsilon: config.epsilon,
        baseline_rmse: level.baseline_rmse,
        models: grid
            .iter()
            .enumerate()
            .map(|(k, e)| ModelSummary {
                d: e.d,
                test_rmse: e.test_rmse,
                in_level_set: level.grid_indices().contains(&k),
            })
            .collect(),
        availability: availability
            .iter()
            .map(|s| AvailabilitySummary {
                d: s.key().d,
                n: s.key().n,
                available: s.count(),
                percentage: s.percentage(),
            })
            .collect(),
        ambiguity: summary_parts.ambiguity,
        discrepancy: summary_parts.discrepancy,
        thresholds: config.thresholds.clone(),
        denominator: config.denominator,
        threshold_bands: summary_parts.bands,
        recourse,
    };
    out.json("summary.json", &summary).map_err(|e| Error::stage("report", e))?;

    out.files.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest {
        config: config.clone(),
        data_seed: config.seed,
        split_seed: config.seed,
        training_seed: config.seed,
        dataset: DatasetShape {
            users: dataset.n_users(),
            items: dataset.n_items(),
            ratings: dataset.len(),
            train: train.len(),
            test: test.len(),
        },
        files: out.files.clone(),
    };
    write_json(&manifest, &root.join(MANIFEST)).map_err(|e| Error::stage("report", e))?;
    let marker = root.join(PARTIAL_MARKER);
    fs::remove_file(&marker).map_err(|e| Error::stage("report", Error::io(&marker, e)))?;

    Ok(RunReport {
        output_dir: root,
        grid,
        level_set: level,
        availability,
        fixed_n,
        joint,
        thresholds,
        summary,
        manifest,
    })
}

struct MultiplicityParts {
    ambiguity: Option<Vec<AmbiguitySummary>>,
    discrepancy: Vec<DiscrepancySummary>,
    bands: Vec<BandSummary>,
}

type MultiplicityOutput = (
    MultiplicityParts,
    Vec<(usize, CountMatrix)>,
    Option<CountMatrix>,
    Vec<(usize, ThresholdReport)>,
    LevelSet,
);

fn multiplicity_stage(
    config: &ExperimentConfig,
    grid: &[ModelGridEntry],
    test: &RatingDataset,
    availability: &[AvailabilitySet],
    out: &mut Outputs,
) -> Result<MultiplicityOutput> {
    let level = level_set(grid, &config.n_list, config.epsilon)?;
    out.json("level_set.json", &level)?;
    let dims = level.dims();
    let in_level = |s: &&AvailabilitySet| dims.contains(&s.key().d);
    let m = grid[0].model.n_items();

    let mut n_sorted = config.n_list.clone();
    n_sorted.sort_unstable();
    n_sorted.dedup();

    let mut fixed_n = Vec::new();
    let mut discrepancy = Vec::new();
    let mut bands = Vec::new();
    let mut reports = Vec::new();
    let mut ambiguity = Vec::new();
    for &n in &n_sorted {
        let sets: Vec<AvailabilitySet> = availability
            .iter()
            .filter(in_level)
            .filter(|s| s.key().n == n)
            .cloned()
            .collect();
        if sets.len() < 2 {
            continue;
        }
        let matrix = discrepancy_matrix(&sets, MatrixMode::FixedN(n))?;
        out.write(&format!("matrices/fixed_N{n}.csv"), matrix_csv(&matrix).as_bytes())?;
        discrepancy.push(DiscrepancySummary {
            matrix: format!("fixed_N{n}"),
            labels: matrix.labels().to_vec(),
            final_discrepancy: final_discrepancy(&matrix),
        });
        ambiguity.push(AmbiguitySummary {
            n,
            percentage: ambiguity_percentage(&sets, m)?,
        });
        let report = threshold_report(&matrix, &sets, &config.thresholds, config.denominator)?;
        bands.push(BandSummary {
            n,
            band_counts: report.band_counts.clone(),
            at_or_above: report.at_or_above.clone(),
            undefined: report.undefined,
        });
        reports.push((n, report));
        fixed_n.push((n, matrix));
    }
    if !reports.is_empty() {
        let cells: Vec<&ThresholdReport> = reports.iter().map(|(_, r)| r).collect();
        out.json("threshold_report.json", &cells)?;
    }

    let joint_sets: Vec<AvailabilitySet> = availability.iter().filter(in_level).cloned().collect();
    let joint = if joint_sets.len() >= 2 {
        let matrix = discrepancy_matrix(&joint_sets, MatrixMode::Joint)?;
        out.write("matrices/joint.csv", matrix_csv(&matrix).as_bytes())?;
        discrepancy.push(DiscrepancySummary {
            matrix: "joint".into(),
            labels: matrix.labels().to_vec(),
            final_discrepancy: final_discrepancy(&matrix),
        });
        Some(matrix)
    } else {
        None
    };

    let level_models: Vec<(String, &FactorModel)> = level
        .grid_indices()
        .into_iter()
        .map(|k| (format!("d{}", grid[k].d), &grid[k].model))
        .collect();
    if level_models.len() >= 2 && !test.is_empty() {
        let matrix = prediction_difference_matrix(&level_models, test)?;
        out.write("matrices/prediction_difference.csv", matrix_csv(&matrix).as_bytes())?;
    }

    let parts = MultiplicityParts {
        ambiguity: (dims.len() >= 2).then_some(ambiguity),
        discrepancy,
        bands,
    };
    Ok((parts, fixed_n, joint, reports, level))
}

fn recourse_stage(
    config: &ExperimentConfig,
    grid: &[ModelGridEntry],
    level: &LevelSet,
    dataset: &RatingDataset,
    out: &mut Outputs,
) -> Result<RecourseSummary> {
    let best = grid
        .iter()
        .find(|e| e.test_rmse == level.baseline_rmse)
        .expect("baseline comes from the grid");
    let n = *config.n_list.iter().min().expect("validated");
    let users: Vec<usize> = (0..config.recourse_users.min(dataset.n_users())).collect();
    let items: Vec<usize> = (0..dataset.n_items()).collect();
    let (lo, hi) = dataset.scale();
    let opts = RecourseOptions {
        seed: config.seed,
        sample_box: (lo, hi),
        ..RecourseOptions::default()
    };
    let report = recourse_difficulty(
        &best.model,
        dataset,
        &users,
        &items,
        n,
        config.cost_mode,
        RatingBounds::Bounded { lo, hi },
        &opts,
    )?;
    let mut buf = Vec::new();
    write_recourse_csv(&report.rows, &mut buf).expect("in-memory write");
    out.write("recourse.csv", &buf)?;
    Ok(RecourseSummary {
        n,
        d: best.d,
        users: users.len(),
        evaluated_pairs: report.evaluated_pairs,
        feasible_fraction: report.feasible_fraction,
        mean_cost: report.mean_cost,
    })
}

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cfaudit::checkpoint::{self, CheckpointMeta};
use cfaudit::factorize::{train_grid, AlsParams};
use cfaudit::ingest::{self, split_holdout};
use cfaudit::multiplicity::{
    ambiguity_percentage, discrepancy_matrix, final_discrepancy, threshold_report, Denominator,
    MatrixMode,
};
use cfaudit::reachability::{
    audit_many, recourse_difficulty, write_recourse_csv, AuditOptions, AvailabilityRecord,
    AvailabilitySet, CostMode, RatingBounds, RecourseOptions,
};
use cfaudit::report::{
    emit_matrix_csv, load_dataset, run_experiment, DatasetFormat, ExperimentConfig, Manifest,
    Summary, MANIFEST,
};
use cfaudit::synth::{self, SyntheticSpec};
use cfaudit::{Error, ErrorKind, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cfaudit", version, about = "Availability and multiplicity audits for factorization recommenders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Write a synthetic dataset in the canonical u<TAB>i<TAB>r format.
    Synth {
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 100)]
        items: usize,
        #[arg(long, default_value_t = 2)]
        rank: usize,
        #[arg(long, default_value_t = 0.5)]
        density: f64,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per latent dimension and save checkpoints.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated latent dimensions.
        #[arg(long, value_delimiter = ',', default_value = "16,32,64")]
        d: Vec<usize>,
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        #[arg(long, default_value_t = 20)]
        sweeps: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aligned-reachability audit of a checkpoint.
    Audit {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,5,20,100")]
        n: Vec<usize>,
        #[arg(long)]
        include_bias: bool,
        /// Directory for N{N}_d{d}.json records.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recourse costs for (user, target) pairs of a checkpoint.
    Recourse {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_delimiter = ',')]
        users: Vec<usize>,
        /// Target items; every item when omitted.
        #[arg(long, value_delimiter = ',')]
        items: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value = "history-edits")]
        cost_mode: CostMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Discrepancy matrices and ambiguity from availability records.
    Multiplicity {
        /// Availability JSON records (from `audit` or `run`).
        #[arg(required = true)]
        records: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10")]
        thresholds: Vec<f64>,
        #[arg(long, default_value = "smaller-set")]
        denominator: Denominator,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify a run directory against its manifest and print its summary.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    /// explicit, plays or canonical
    #[arg(long, default_value = "explicit")]
    format: String,
    #[arg(long, default_value = "::")]
    sep: String,
    /// Keep only the k most-rated items.
    #[arg(long)]
    item_filter: Option<usize>,
}

impl DataArgs {
    fn load(&self) -> Result<ingest::RatingDataset> {
        let dataset_format = match self.format.as_str() {
            "explicit" => DatasetFormat::Explicit,
            "plays" => DatasetFormat::Plays,
            "canonical" => DatasetFormat::Canonical,
            other => return Err(Error::Config(format!("unknown dataset format {other:?}"))),
        };
        let config = ExperimentConfig {
            dataset_format,
            dataset_path: Some(self.data.clone()),
            separator: self.sep.clone(),
            item_filter: self.item_filter,
            ..ExperimentConfig::default()
        };
        config.validate()?;
        load_dataset(&config).map_err(|e| Error::stage("ingest", e))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            })
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, out, seed, workers } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if workers.is_some() {
                cfg.workers = workers;
            }
            let report = run_experiment(&cfg)?;
            print_summary(&report.summary);
            println!("wrote {} files to {}", report.manifest.files.len(), report.output_dir.display());
            Ok(())
        }
        Command::Synth { users, items, rank, density, noise, seed, out } => {
            let spec = SyntheticSpec { users, items, rank, density, noise, seed };
            let ds = synth::generate(&spec)?;
            let file = fs::File::create(&out).map_err(|e| Error::io(&out, e))?;
            ingest::write_canonical(&ds, io::BufWriter::new(file)).map_err(|e| Error::io(&out, e))?;
            println!("{} users, {} items, {} ratings", ds.n_users(), ds.n_items(), ds.len());
            Ok(())
        }
        Command::Train { data, d, lambda, sweeps, tol, seed, test_fraction, out } => {
            let ds = data.load()?;
            let (train, test) = split_holdout(&ds, test_fraction, seed)?;
            let first = *d.first().ok_or_else(|| Error::Config("empty --d list".into()))?;
            let base = AlsParams { d: first, lambda, max_sweeps: sweeps, tol, seed };
            let grid = train_grid(&train, &test, &d, &base).map_err(|e| Error::stage("train", e))?;
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            for entry in &grid {
                let path = out.join(format!("d{}.cfmf", entry.d));
                checkpoint::save(&entry.model, Some(entry.test_rmse), &path)?;
                println!("d = {:<4} test RMSE {:.6}  {}", entry.d, entry.test_rmse, path.display());
            }
            Ok(())
        }
        Command::Audit { model, n, include_bias, out } => {
            let (model, _) = checkpoint::load(&model)?;
            let sets = audit_many(&model, &n, AuditOptions { include_bias })
                .map_err(|e| Error::stage("audit", e))?;
            if let Some(dir) = &out {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            for set in &sets {
                println!("{}: {} of {} items ({:.2}%)", set.key(), set.count(), set.m(), set.percentage());
                if let Some(dir) = &out {
                    write_json(&set.to_record(), &dir.join(format!("{}.json", set.key())))?;
                }
            }
            Ok(())
        }
        Command::Recourse { model, data, users, items, n, cost_mode, seed, out } => {
            let (model, _) = checkpoint::load(&model)?;
            let ds = data.load()?;
            let items = if items.is_empty() { (0..ds.n_items()).collect() } else { items };
            let (lo, hi) = ds.scale();
            let opts = RecourseOptions { seed, sample_box: (lo, hi), ..RecourseOptions::default() };
            let report = recourse_difficulty(
                &model,
                &ds,
                &users,
                &items,
                n,
                cost_mode,
                RatingBounds::Bounded { lo, hi },
                &opts,
            )
            .map_err(|e| Error::stage("recourse", e))?;
            match &out {
                Some(path) => {
                    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
                    write_recourse_csv(&report.rows, io::BufWriter::new(file)).map_err(|e| Error::io(path, e))?;
                }
                None => write_recourse_csv(&report.rows, io::stdout().lock()).map_err(|e| Error::io("<stdout>", e))?,
            }
            let mean = report.mean_cost.map_or("n/a".to_string(), |c| format!("{c:.4}"));
            eprintln!(
                "{} of {} pairs feasible, mean cost {mean}",
                report.feasible_pairs, report.evaluated_pairs
            );
            Ok(())
        }
        Command::Multiplicity { records, thresholds, denominator, out } => {
            multiplicity(&records, &thresholds, denominator, &out)
        }
        Command::Report { run } => verify_run(&run),
    }
}

fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn multiplicity(records: &[PathBuf], thresholds: &[f64], denominator: Denominator, out: &Path) -> Result<()> {
    let mut sets = Vec::new();
    for path in records {
        let record: AvailabilityRecord = read_json(path)?;
        sets.push(AvailabilitySet::from_record(&record)?);
    }
    sets.sort_by_key(|s| s.key());
    let m = sets[0].m();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut slates: Vec<usize> = sets.iter().map(|s| s.key().n).collect();
    slates.dedup();
    for n in slates {
        let group: Vec<AvailabilitySet> = sets.iter().filter(|s| s.key().n == n).cloned().collect();
        if group.len() < 2 {
            continue;
        }
        let matrix = discrepancy_matrix(&group, MatrixMode::FixedN(n))?;
        emit_matrix_csv(&matrix, &out.join(format!("fixed_N{n}.csv")))?;
        let amb = ambiguity_percentage(&group, m)?;
        let report = threshold_report(&matrix, &group, thresholds, denominator)?;
        println!(
            "N = {n}: ambiguity {amb:.4}%, final discrepancy {:?}, bands {:?}",
            final_discrepancy(&matrix),
            report.band_counts
        );
        write_json(&report, &out.join(format!("thresholds_N{n}.json")))?;
    }
    if sets.len() >= 2 {
        let joint = discrepancy_matrix(&sets, MatrixMode::Joint)?;
        emit_matrix_csv(&joint, &out.join("joint.csv"))?;
        println!("joint: final discrepancy {:?}", final_discrepancy(&joint));
    }
    Ok(())
}

fn verify_run(dir: &Path) -> Result<()> {
    use sha2::{Digest, Sha256};
    let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
    let mut bad = 0;
    for f in &manifest.files {
        let path = dir.join(&f.path);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if hex::encode(Sha256::digest(&bytes)) != f.sha256 {
            eprintln!("checksum mismatch: {}", f.path);
            bad += 1;
        }
    }
    if bad > 0 {
        return Err(Error::InvalidDataset(format!("{bad} files do not match the manifest")));
    }
    println!(
        "{} files verified; {} users × {} items, seed {}",
        manifest.files.len(),
        manifest.dataset.users,
        manifest.dataset.items,
        manifest.config.seed
    );
    for entry in manifest.files.iter().filter(|f| f.path.starts_with("models/") && f.path.ends_with(".json")) {
        let meta: CheckpointMeta = read_json(&dir.join(&entry.path))?;
        if let Some(r) = meta.test_rmse {
            println!("  d = {:<4} test RMSE {r:.6}", meta.d);
        }
    }
    let summary: Summary = read_json(&dir.join("summary.json"))?;
    print_summary(&summary);
    Ok(())
}

fn print_summary(summary: &Summary) {
    let mut out = io::stdout().lock();
    let _ = writeln!(out, "baseline RMSE {:.6}, epsilon {}", summary.baseline_rmse, summary.epsilon);
    let level: Vec<usize> = summary.models.iter().filter(|m| m.in_level_set).map(|m| m.d).collect();
    let _ = writeln!(out, "level set d = {level:?}");
    for a in &summary.availability {
        let _ = writeln!(out, "  N{}_d{}: {} available ({:.2}%)", a.n, a.d, a.available, a.percentage);
    }
    if let Some(amb) = &summary.ambiguity {
        for a in amb {
            let _ = writeln!(out, "  ambiguity N = {}: {:.4}%", a.n, a.percentage);
        }
    }
    for d in &summary.discrepancy {
        let _ = writeln!(out, "  final discrepancy {}: {:?}", d.matrix, d.final_discrepancy);
    }
}

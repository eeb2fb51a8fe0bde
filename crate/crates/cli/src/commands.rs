use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use stconv_core::analysis::{
    analyze_activations, emit_reports, render_reports, save_activations, ActivationSet, AnalysisOptions, Distance,
    RidgeOptions,
};
use stconv_core::models::{count_macs, fuse_1d_to_2d, load_checkpoint, read_manifest, save_checkpoint, MANIFEST_FILE, TENSORS_FILE};
use stconv_core::signal::{band_label, band_powers, generate_synthetic, load_trialset, save_trialset, Scaler, SyntheticConfig, BANDS};
use stconv_core::training::{benchmark_epoch, init_seed, run_experiment, BenchOptions, ExperimentOptions, ExperimentReport};
use stconv_core::{DType, Error, Model, ModelKind, NdArray, Result, Scalar, TrialSet};

use crate::config::{preprocess, DataSource, ModelOverrides, Precision, RunConfig};
use crate::manifest::{create_dir, write_text, RunManifest};

fn parse_models(s: &str) -> Result<Vec<ModelKind>> {
    if s == "all" {
        return Ok(ModelKind::ALL.to_vec());
    }
    s.split(',').map(|m| m.trim().parse()).collect()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

// ---- gen-data -----------------------------------------------------------

#[derive(Args, Clone, Debug)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 22)]
    pub channels: usize,
    #[arg(long, default_value_t = 400)]
    pub trials: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Samples per trial.
    #[arg(long, default_value_t = 1000)]
    pub length: usize,
    #[arg(long, default_value_t = 250.0)]
    pub sfreq: f64,
    /// Amplitude of the planted 10-12 Hz component relative to the background.
    #[arg(long, default_value_t = 1.0)]
    pub effect: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

impl GenDataArgs {
    fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig {
            n_trials: self.trials,
            n_channels: self.channels,
            n_times: self.length,
            sfreq: self.sfreq,
            n_classes: self.classes,
            effect_strength: self.effect,
            seed: self.seed,
        }
    }
}

fn class_counts(set: &TrialSet) -> Vec<usize> {
    let mut counts = vec![0; set.n_classes()];
    set.labels().iter().for_each(|&y| counts[y] += 1);
    counts
}

pub fn gen_data(args: &GenDataArgs) -> Result<()> {
    let cfg = args.synthetic();
    write_synthetic(&cfg, &args.out)
}

fn write_synthetic(cfg: &SyntheticConfig, out: &Path) -> Result<()> {
    let set = generate_synthetic(cfg)?;
    save_trialset(&set, out)?;
    RunManifest::new("gen-data").seed("data", cfg.seed).write(out)?;
    println!(
        "wrote {}: N={} C={} T={} sfreq={} class counts {:?}",
        out.display(),
        set.n_trials(),
        set.n_channels(),
        set.n_times(),
        set.sfreq(),
        class_counts(&set)
    );
    Ok(())
}

// ---- train --------------------------------------------------------------

#[derive(Args, Clone, Debug, Default)]
pub struct TrainArgs {
    /// TrialSet directory; overrides the config's data source.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `all` or a comma-separated list of cnn1d, cnn2d, conf1d, conf2d.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    /// JSON run configuration; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load_or_default(self.config.as_deref())?;
        if let Some(d) = &self.data {
            cfg.data = Some(DataSource::Path(d.clone()));
        }
        if let Some(m) = &self.model {
            cfg.models = parse_models(m)?;
        }
        if let Some(v) = self.folds {
            cfg.folds = v;
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        if let Some(v) = self.max_epochs {
            cfg.train.max_epochs = v;
        }
        if let Some(v) = self.patience {
            cfg.train.patience_epochs = v;
        }
        if let Some(v) = self.lr {
            cfg.train.lr = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.precision {
            cfg.precision = v;
        }
        // Per-run seeds are derived from the top-level seed.
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        if cfg.out.is_none() {
            return Err(Error::Config("no output directory (use --out or set `out`)".into()));
        }
        Ok(cfg)
    }
}

fn summarize<T: Scalar>(report: &ExperimentReport<T>, kinds: &[ModelKind]) {
    for &k in kinds {
        if let Some(acc) = report.mean_accuracy(k) {
            let epochs: Vec<usize> = report.runs.iter().filter(|r| r.kind == k).map(|r| r.record.n_epochs()).collect();
            println!("{k}: mean test accuracy {acc:.4} over {} folds, epochs {epochs:?}", epochs.len());
        }
    }
    let base = report.baseline.iter().map(|b| b.accuracy).sum::<f64>() / report.baseline.len() as f64;
    println!("majority baseline: {base:.4}");
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let cfg = args.resolve()?;
    run_training(&cfg)
}

pub fn run_training(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out.clone().expect("resolved config has an output directory");
    let trials = cfg.load_trials()?;
    let models = cfg.model_configs(&trials)?;
    create_dir(&out)?;
    write_text(&out.join("config.json"), &cfg.to_json())?;
    let opts = ExperimentOptions {
        k_folds: cfg.folds,
        seed: cfg.seed,
        train: cfg.train.clone(),
        jobs: cfg.jobs,
        out_dir: Some(out.clone()),
    };
    match cfg.precision {
        Precision::F32 => summarize(&run_experiment::<f32>(&trials, &models, &opts)?, &cfg.models),
        Precision::F64 => summarize(&run_experiment::<f64>(&trials, &models, &opts)?, &cfg.models),
    }
    let mut manifest = RunManifest::new("train").seed("experiment", cfg.seed);
    for &k in &cfg.models {
        manifest.seeds.insert(format!("init_{k}"), init_seed(cfg.seed, k));
    }
    for f in cfg.data.as_ref().map(DataSource::input_files).unwrap_or_default() {
        manifest.input(&f)?;
    }
    manifest.write(&out)?;
    println!("wrote {}", out.display());
    Ok(())
}

// ---- bench --------------------------------------------------------------

fn parse_shape(s: &str) -> Result<(usize, usize)> {
    let err = || Error::Config(format!("--data-shape expects CxT (e.g. 22x1000), got `{s}`"));
    let (c, t) = s.split_once(['x', 'X']).ok_or_else(err)?;
    Ok((c.trim().parse().map_err(|_| err())?, t.trim().parse().map_err(|_| err())?))
}

#[derive(Args, Clone, Debug)]
pub struct BenchArgs {
    /// Input shape as CxT.
    #[arg(long, default_value = "22x1000")]
    pub data_shape: String,
    #[arg(long, default_value = "cnn1d,cnn2d")]
    pub models: String,
    /// Timed epochs per model.
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value_t = 128)]
    pub trials: usize,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 40)]
    pub kernels: usize,
    #[arg(long, default_value_t = 25)]
    pub kernel_len: usize,
    #[arg(long, default_value_t = 100)]
    pub pool_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
    /// Output directory for `bench.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

pub const BENCH_HEADER: &str =
    "model,n_channels,n_times,n_trials,batch_size,epochs,median_s,q1_s,q3_s,iqr_s,encoder_macs,mac_ratio,time_ratio";

pub fn bench(args: &BenchArgs) -> Result<()> {
    let (c, t) = parse_shape(&args.data_shape)?;
    let kinds = parse_models(&args.models)?;
    let overrides = ModelOverrides {
        n_kernels: Some(args.kernels),
        kernel_len: Some(args.kernel_len),
        pool_size: Some(args.pool_size),
        ..ModelOverrides::default()
    };
    let opts = BenchOptions {
        n_trials: args.trials,
        batch_size: args.batch_size,
        n_epochs: args.epochs,
        warmup: args.warmup,
        seed: args.seed,
    };
    // Timing runs one model at a time on one thread, whatever --jobs says elsewhere.
    let mut results = BTreeMap::new();
    for &k in &kinds {
        let cfg = overrides.build(k, c, t, args.classes);
        cfg.validate()?;
        let r = match args.precision {
            Precision::F32 => benchmark_epoch::<f32>(&cfg, &opts)?,
            Precision::F64 => benchmark_epoch::<f64>(&cfg, &opts)?,
        };
        eprintln!("{k}: median {:.4}s iqr {:.4}s", r.median, r.iqr);
        results.insert(k, (cfg, r));
    }
    let mut csv = String::from(BENCH_HEADER);
    csv.push('\n');
    for &k in &kinds {
        let (cfg, r) = &results[&k];
        let macs = count_macs(cfg);
        let own = if k.conv_mode() == stconv_core::models::ConvMode::Separate1d {
            macs.encoder_1d
        } else {
            macs.encoder_2d
        };
        let pair = (
            results.get(&ModelKind::from_parts(stconv_core::models::ConvMode::Separate1d, k.head())),
            results.get(&ModelKind::from_parts(stconv_core::models::ConvMode::Fused2d, k.head())),
        );
        let time_ratio = match pair {
            (Some((_, a)), Some((_, b))) => format!("{}", a.median / b.median),
            _ => String::new(),
        };
        csv.push_str(&format!(
            "{k},{c},{t},{},{},{},{},{},{},{},{own},{},{time_ratio}\n",
            r.n_trials,
            r.batch_size,
            r.samples.len(),
            r.median,
            r.q1,
            r.q3,
            r.iqr,
            macs.ratio_f64()
        ));
    }
    write_text(&args.out.join("bench.csv"), &csv)?;
    RunManifest::new("bench").seed("bench", args.seed).write(&args.out)?;
    print!("{csv}");
    Ok(())
}

// ---- fuse ---------------------------------------------------------------

#[derive(Args, Clone, Debug)]
pub struct FuseArgs {
    /// Checkpoint directory of a separate-1D model.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory for the fused checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Random inputs used to measure the logit deviation.
    #[arg(long, default_value_t = 200)]
    pub inputs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Maximum absolute and relative logit deviation between a model and its
/// fused image over standard-normal inputs.
pub fn logit_deviation<T: Scalar>(a: &Model<T>, b: &Model<T>, n: usize, seed: u64) -> Result<(f64, f64)> {
    let cfg = a.config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = NdArray::from_fn(&[n, 1, cfg.n_channels, cfg.n_times], |_| T::c(rng.sample::<f64, _>(StandardNormal)));
    let (la, lb) = (a.forward(&x)?, b.forward(&x)?);
    let dev = la.max_abs_diff(&lb).f64();
    let scale = la.data().iter().fold(0f64, |m, v| m.max(v.f64().abs()));
    Ok((dev, if scale > 0.0 { dev / scale } else { dev }))
}

fn fuse_typed<T: Scalar>(args: &FuseArgs) -> Result<(f64, f64)> {
    let (model, manifest) = load_checkpoint::<T>(&args.checkpoint)?;
    let fused = fuse_1d_to_2d(&model)?;
    let (dev, rel) = logit_deviation(&model, &fused, args.inputs, args.seed)?;
    let mut meta = manifest.metadata.clone();
    let src = meta.get("model_id").cloned().unwrap_or_else(|| dir_name(&args.checkpoint));
    meta.insert("model_id".into(), format!("{src}_fused"));
    meta.insert("fused_from".into(), args.checkpoint.display().to_string());
    meta.insert("max_logit_deviation".into(), format!("{dev:e}"));
    save_checkpoint(&fused, &args.out, &meta)?;
    Ok((dev, rel))
}

pub fn fuse(args: &FuseArgs) -> Result<()> {
    let manifest = read_manifest(&args.checkpoint)?;
    let (dev, rel) = match manifest.dtype {
        DType::F32 => fuse_typed::<f32>(args)?,
        DType::F64 => fuse_typed::<f64>(args)?,
    };
    let mut run = RunManifest::new("fuse").seed("inputs", args.seed);
    run.input(&args.checkpoint.join(MANIFEST_FILE))?;
    run.input(&args.checkpoint.join(TENSORS_FILE))?;
    run.write(&args.out)?;
    println!("max |logit deviation|: {dev:e} (relative {rel:e}) over {} inputs", args.inputs);
    println!("wrote {}", args.out.display());
    Ok(())
}

// ---- analyze ------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DistanceArg {
    Correlation,
    Euclidean,
}

#[derive(Args, Clone, Debug)]
pub struct AnalyzeArgs {
    /// Checkpoint directories, directories of checkpoints, or training output
    /// directories.
    #[arg(long, num_args = 1.., required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// TrialSet directory the activations are measured on.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Skip the 8-32 Hz bandpass (use only if training skipped it as well).
    #[arg(long)]
    pub no_bandpass: bool,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
    #[arg(long, default_value_t = 999)]
    pub permutations: usize,
    #[arg(long, value_enum, default_value_t = DistanceArg::Correlation)]
    pub distance: DistanceArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Performance table to include; defaults to a `results.csv` found next
    /// to the checkpoints.
    #[arg(long)]
    pub performance: Option<PathBuf>,
    /// Also dump each model's activations under `<out>/activations/`.
    #[arg(long)]
    pub save_activations: bool,
}

fn dir_name(p: &Path) -> String {
    p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn is_checkpoint(p: &Path) -> bool {
    p.join(MANIFEST_FILE).is_file() && p.join(TENSORS_FILE).is_file()
}

/// Expands the `--checkpoints` arguments into checkpoint directories and an
/// optional `results.csv` from a training run.
fn discover(paths: &[PathBuf]) -> Result<(Vec<PathBuf>, Option<PathBuf>)> {
    let mut found = Vec::new();
    let mut results = None;
    for p in paths {
        if is_checkpoint(p) {
            found.push(p.clone());
            continue;
        }
        let dir = if p.join("checkpoints").is_dir() {
            if p.join("results.csv").is_file() {
                results = Some(p.join("results.csv"));
            }
            p.join("checkpoints")
        } else {
            p.clone()
        };
        let entries = fs::read_dir(&dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
        let mut sub: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| is_checkpoint(p)).collect();
        if sub.is_empty() {
            return Err(Error::Data(format!("no checkpoints found under {}", dir.display())));
        }
        sub.sort();
        found.extend(sub);
    }
    Ok((found, results))
}

fn checkpoint_activations(dir: &Path, trials: &TrialSet) -> Result<ActivationSet> {
    let (model, manifest) = load_checkpoint::<f64>(dir)?;
    let cfg = model.config();
    if cfg.n_channels != trials.n_channels() || cfg.n_times != trials.n_times() {
        return Err(Error::Dimension {
            op: "analyze",
            detail: format!(
                "{} expects [{}x{}] trials, data is [{}x{}]",
                dir.display(),
                cfg.n_channels,
                cfg.n_times,
                trials.n_channels(),
                trials.n_times()
            ),
        });
    }
    let scaled = match manifest.metadata.get("scaler") {
        Some(json) => {
            let scaler: Scaler = serde_json::from_str(json)
                .map_err(|e| Error::Format {
                    path: dir.join(MANIFEST_FILE),
                    detail: format!("bad scaler metadata: {e}"),
                })?;
            scaler.apply(trials)?
        }
        None => {
            eprintln!("warning: {} has no scaler metadata; using unscaled data", dir.display());
            trials.clone()
        }
    };
    ActivationSet::extract(dir_name(dir), &model, &scaled.as_batch::<f64>())
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let (dirs, results_csv) = discover(&args.checkpoints)?;
    let raw = load_trialset(&args.data)?;
    let trials = preprocess(&raw, (!args.no_bandpass).then_some([8.0, 32.0]))?;
    let bands = band_powers(&trials)?;
    let mut sets = Vec::with_capacity(dirs.len());
    for d in &dirs {
        let set = checkpoint_activations(d, &trials)?;
        if args.save_activations {
            save_activations(&set, &args.out.join("activations").join(&set.model_id))?;
        }
        sets.push(set);
    }
    let opts = AnalysisOptions {
        ridge: RidgeOptions {
            lambda: args.lambda,
            folds: args.cv_folds,
            seed: args.seed,
        },
        distance: match args.distance {
            DistanceArg::Correlation => Distance::Correlation,
            DistanceArg::Euclidean => Distance::Euclidean,
        },
        permutations: args.permutations,
        seed: args.seed,
    };
    let labels: Vec<String> = BANDS.iter().map(|&b| band_label(b)).collect();
    let results = analyze_activations(&sets, &bands, trials.channel_names(), &labels, &opts)?;
    let perf_path = args.performance.clone().or(results_csv);
    let perf = perf_path.as_deref().map(read_text).transpose()?;
    let files = emit_reports(&results, &args.out, perf.as_deref())?;

    let mut manifest = RunManifest::new("analyze").seed("analysis", args.seed);
    manifest.input(&args.data.join("manifest.json"))?;
    manifest.input(&args.data.join("data.bin"))?;
    for d in &dirs {
        manifest.input(&d.join(MANIFEST_FILE))?;
        manifest.input(&d.join(TENSORS_FILE))?;
    }
    if let Some(p) = &perf_path {
        manifest.input(p)?;
    }
    manifest.write(&args.out)?;
    if let Some(t) = &results.contrast {
        println!(
            "RDM contrast: within {:.4}, between {:.4}, gap {:.4}, p = {:.4}",
            t.observed.within_type_mean, t.observed.between_type_mean, t.observed.gap, t.p_value
        );
    }
    println!("analyzed {} models; wrote {} files to {}", sets.len(), files.len(), args.out.display());
    Ok(())
}

// ---- report -------------------------------------------------------------

#[derive(Args, Clone, Debug)]
pub struct ReportArgs {
    /// Directory holding the CSV outputs of `analyze`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn report(args: &ReportArgs) -> Result<()> {
    let files = render_reports(&args.input, &args.out)?;
    let mut manifest = RunManifest::new("report");
    let entries = fs::read_dir(&args.input).map_err(|source| Error::Io {
        path: args.input.clone(),
        source,
    })?;
    let mut csvs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    for p in &csvs {
        manifest.input(p)?;
    }
    manifest.write(&args.out)?;
    for f in &files {
        println!("{}", f.display());
    }
    Ok(())
}

// ---- repro --------------------------------------------------------------

/// Desk-scale study used when `repro` is run without a config file.
pub const DESK_CONFIG: &str = include_str!("../desk.json");

#[derive(Args, Clone, Debug)]
pub struct ReproArgs {
    /// JSON run configuration; the built-in desk-scale study when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Timed epochs for the benchmark step.
    #[arg(long, default_value_t = 20)]
    pub bench_epochs: usize,
}

pub fn repro(args: &ReproArgs) -> Result<()> {
    let mut cfg: RunConfig = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => serde_json::from_str(DESK_CONFIG).map_err(|e| Error::Config(format!("built-in config: {e}")))?,
    };
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    cfg.train.seed = cfg.seed;
    let out = &args.out;
    create_dir(out)?;

    // 1. data
    let data_dir = match cfg.data.clone() {
        Some(DataSource::Synthetic(s)) => {
            let dir = out.join("data");
            write_synthetic(&s, &dir)?;
            dir
        }
        Some(DataSource::Path(p)) => p,
        Some(DataSource::Csv { .. }) => {
            let dir = out.join("data");
            save_trialset(&cfg.data.as_ref().expect("checked").load()?, &dir)?;
            dir
        }
        None => return Err(Error::Config("repro needs a data source in the config".into())),
    };
    cfg.data = Some(DataSource::Path(data_dir.clone()));

    // 2. train
    let train_dir = out.join("train");
    cfg.out = Some(train_dir.clone());
    cfg.validate()?;
    run_training(&cfg)?;

    // 3. bench
    let trials = load_trialset(&data_dir)?;
    let probe = cfg.model.build(ModelKind::Cnn1d, trials.n_channels(), trials.n_times(), trials.n_classes());
    bench(&BenchArgs {
        data_shape: format!("{}x{}", trials.n_channels(), trials.n_times()),
        models: cfg.models.iter().map(|k| k.name()).collect::<Vec<_>>().join(","),
        epochs: args.bench_epochs,
        warmup: 3,
        trials: cfg.train.batch_size,
        batch_size: cfg.train.batch_size,
        classes: trials.n_classes(),
        kernels: probe.n_kernels,
        kernel_len: probe.kernel_len,
        pool_size: probe.pool_size,
        seed: cfg.seed,
        precision: cfg.precision,
        out: out.join("bench"),
    })?;

    // 4. analyze, 5. report
    let analysis_dir = out.join("analysis");
    analyze(&AnalyzeArgs {
        checkpoints: vec![train_dir],
        data: data_dir,
        out: analysis_dir.clone(),
        no_bandpass: cfg.bandpass.is_none(),
        lambda: 1.0,
        cv_folds: 5,
        permutations: 999,
        distance: DistanceArg::Correlation,
        seed: cfg.seed,
        performance: None,
        save_activations: false,
    })?;
    report(&ReportArgs {
        input: analysis_dir,
        out: out.join("figures"),
    })?;
    write_text(&out.join("config.json"), &cfg.to_json())?;
    RunManifest::new("repro").seed("experiment", cfg.seed).write(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_desk_config_is_valid() {
        let cfg: RunConfig = serde_json::from_str(DESK_CONFIG).unwrap();
        cfg.validate().unwrap();
        let Some(DataSource::Synthetic(s)) = &cfg.data else {
            panic!("desk config should generate its data");
        };
        assert_eq!((s.n_channels, s.n_classes), (22, 4));
        for kind in &cfg.models {
            cfg.model.build(*kind, s.n_channels, s.n_times, s.n_classes).validate().unwrap();
        }
    }
}

//! The batch commands. Each writes its artifacts plus a
//! [`RunManifest`](crate::manifest::RunManifest) into one output
//! directory and refuses to overwrite existing artifacts unless forced.

use std::fs;
use std::path::{Path, PathBuf};

use steer_core::kv::KvMap;
use steer_core::mc::{self, binned_statistics, mean_uncertainty_error, uniform_edges, McEstimate};
use steer_core::pa::{run_closed_loop, RunStatus, SimOutcome};
use steer_core::report::{binned_report_tsv, eval_summary_tsv, step_records_tsv, train_logs_tsv, EvalSummary};
use steer_core::seed::{derive_seed, TAG_TRACK};
use steer_core::synth::{generate_track, load_dataset, save_dataset, split_indices, DatasetManifest, GeneratorConfig};
use steer_core::{
    DropoutKind, FusionConfig, HumanSource, McConfig, Network, NetworkConfig, ScriptedHuman, SimConfig, TrackConfig,
    TrainConfig, TrainLog,
};

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

pub const DATASET_FILE: &str = "dataset.bin";
pub const MODEL_FILE: &str = "model.ckpt";
pub const TRAIN_LOG_FILE: &str = "train_log.tsv";
pub const SUMMARY_FILE: &str = "summary.tsv";
pub const STEPS_FILE: &str = "steps.tsv";

pub fn read_config(path: Option<&Path>) -> CliResult<KvMap> {
    match path {
        None => Ok(KvMap::new()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            Ok(KvMap::parse(&text)?)
        }
    }
}

fn prepare_out(dir: &Path, artifacts: &[&str], force: bool) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    if !force {
        if let Some(p) = artifacts.iter().map(|a| dir.join(a)).find(|p| p.exists()) {
            return Err(CliError::Exists(p));
        }
    }
    Ok(())
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn load_net(path: &Path) -> CliResult<Network> {
    if !path.exists() {
        return Err(CliError::io(path, std::io::ErrorKind::NotFound.into()));
    }
    Ok(Network::load(path)?)
}

#[derive(Clone, Debug)]
pub struct DatasetOpts {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub force: bool,
}

/// Generates a dataset from a generator config (see
/// [`GeneratorConfig::from_kv`]).
pub fn cmd_dataset(o: &DatasetOpts) -> CliResult<(DatasetManifest, RunManifest)> {
    let mut kv = read_config(Some(&o.config))?;
    if let Some(s) = o.seed {
        kv.set("seed", s);
    }
    let gen = GeneratorConfig::from_kv(&kv)?;
    prepare_out(&o.out, &[DATASET_FILE], o.force)?;
    let ds = gen.generate()?;
    let path = o.out.join(DATASET_FILE);
    save_dataset(&path, &ds)?;

    let mut run = RunManifest::start("dataset");
    run.config_from(&gen.to_kv());
    run.seed("generator", gen.seed);
    run.input(&o.config)?;
    run.output(&path)?;
    Ok((ds.manifest, run.finish(&o.out)?))
}

#[derive(Clone, Debug, Default)]
pub struct TrainOpts {
    pub data: PathBuf,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub dropout: Option<DropoutKind>,
    /// Continue from this checkpoint instead of a fresh network.
    pub resume: Option<PathBuf>,
    pub force: bool,
}

/// Trains on a dataset file. The config may hold any [`TrainConfig`] or
/// [`NetworkConfig`] key plus `val_fraction` (default 0.2). The run seed
/// drives initialization, the train/validation split, shuffling and
/// dropout masks.
pub fn cmd_train(o: &TrainOpts) -> CliResult<(TrainLog, RunManifest)> {
    let mut kv = read_config(o.config.as_deref())?;
    if let Some(s) = o.seed {
        kv.set("seed", s);
    }
    if let Some(k) = o.dropout {
        kv.set("dropout", k);
    }
    let tc = TrainConfig::from_kv(&kv)?;
    let val_fraction: f64 = kv.parse_or("val_fraction", 0.2)?;
    let ds = load_dataset(&o.data)?;

    let mut net = match &o.resume {
        Some(p) => load_net(p)?,
        None => {
            let base = NetworkConfig {
                input: ds.manifest.image_shape,
                ..NetworkConfig::default()
            };
            let cfg = base.overlay_kv(&kv)?;
            let mut net = Network::build(cfg, tc.seed)?;
            net.camera = ds.manifest.image.clone();
            net
        }
    };
    if net.config.input != ds.manifest.image_shape {
        return Err(CliError::Config(format!(
            "network input {:?} does not match dataset frames {:?}",
            net.config.input, ds.manifest.image_shape
        )));
    }
    prepare_out(&o.out, &[MODEL_FILE, TRAIN_LOG_FILE], o.force)?;

    let (tr, va) = split_indices(ds.len(), val_fraction, tc.seed)?;
    let log = net.train(&ds.subset(&tr), &ds.subset(&va), &tc)?;
    let model = o.out.join(MODEL_FILE);
    net.save(&model)?;
    let log_path = o.out.join(TRAIN_LOG_FILE);
    write_text(&log_path, &train_logs_tsv(&[&log]))?;

    let mut resolved = KvMap::new();
    tc.to_kv(&mut resolved);
    net.config.to_kv(&mut resolved);
    resolved.set("val_fraction", val_fraction);
    let mut run = RunManifest::start("train");
    run.config_from(&resolved);
    run.seed("run", tc.seed);
    run.input(&o.data)?;
    if let Some(p) = o.config.as_deref() {
        run.input(p)?;
    }
    if let Some(p) = o.resume.as_deref() {
        run.input(p)?;
    }
    run.output(&model)?;
    run.output(&log_path)?;
    Ok((log, run.finish(&o.out)?))
}

#[derive(Clone, Debug, Default)]
pub struct EvalOpts {
    pub models: Vec<PathBuf>,
    pub data: PathBuf,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub passes: Option<usize>,
    pub seed: Option<u64>,
    pub force: bool,
}

pub fn bins_file(index: usize) -> String {
    format!("bins_m{index}.tsv")
}

/// MC-evaluates one or more checkpoints on a dataset. Config keys:
/// `passes` (20), `seed` (0), `variance_floor` (1e-6), and either
/// `bin_edges` or `bins`/`bin_lo`/`bin_hi` (8 bins over [-0.2, 0.2]).
///
/// Writes `summary.tsv` (one row per model: MUE and RMSE in curvature
/// units, mean variance in standardized units) and `bins_m<i>.tsv` (mean
/// curvature prediction and mean standardized variance per label bin).
pub fn cmd_eval(o: &EvalOpts) -> CliResult<(Vec<EvalSummary>, RunManifest)> {
    if o.models.is_empty() {
        return Err(CliError::Config("at least one --model is required".into()));
    }
    let mut kv = read_config(o.config.as_deref())?;
    if let Some(t) = o.passes {
        kv.set("passes", t);
    }
    if let Some(s) = o.seed {
        kv.set("seed", s);
    }
    let d = McConfig::default();
    let mc = McConfig {
        passes: kv.parse_or("passes", d.passes)?,
        seed: kv.parse_or("seed", d.seed)?,
        variance_floor: kv.parse_or("variance_floor", d.variance_floor)?,
    };
    let edges = if kv.contains("bin_edges") {
        kv.parse_list("bin_edges")?
    } else {
        let n: usize = kv.parse_or("bins", 8)?;
        if n == 0 {
            return Err(CliError::Config("bins must be at least 1".into()));
        }
        uniform_edges(kv.parse_or("bin_lo", -0.2)?, kv.parse_or("bin_hi", 0.2)?, n)
    };
    let ds = load_dataset(&o.data)?;
    let nets = o.models.iter().map(|p| load_net(p)).collect::<CliResult<Vec<_>>>()?;
    let names: Vec<String> = (0..nets.len()).map(|i| format!("m{i}")).collect();
    let mut artifacts = vec![SUMMARY_FILE.to_string()];
    artifacts.extend((0..nets.len()).map(bins_file));
    let artifact_refs: Vec<&str> = artifacts.iter().map(String::as_str).collect();
    prepare_out(&o.out, &artifact_refs, o.force)?;

    let mut summaries = Vec::new();
    let mut bin_paths = Vec::new();
    for (i, net) in nets.iter().enumerate() {
        if net.config.input != ds.manifest.image_shape {
            return Err(CliError::Config(format!(
                "{}: network input {:?} does not match dataset frames {:?}",
                o.models[i].display(),
                net.config.input,
                ds.manifest.image_shape
            )));
        }
        let mut truths = Vec::with_capacity(ds.len());
        let mut means = Vec::with_capacity(ds.len());
        let mut vars = Vec::with_capacity(ds.len());
        let mut records = Vec::with_capacity(ds.len());
        for f in &ds.frames {
            let est = mc::mc_estimate(net, &f.image, f.pose_id, &mc)?;
            truths.push(f.label);
            means.push(net.scaler.unscale(est.mean));
            vars.push(net.scaler.unscale_variance(est.variance));
            records.push((
                f.label,
                McEstimate {
                    mean: net.scaler.unscale(est.mean),
                    ..est
                },
            ));
        }
        let mue = mean_uncertainty_error(&truths, &means, &vars, mc.variance_floor)?;
        let n = truths.len() as f64;
        let rmse = (truths.iter().zip(&means).map(|(y, m)| (y - m).powi(2)).sum::<f64>() / n).sqrt();
        let mean_variance = records.iter().map(|r| r.1.variance).sum::<f64>() / n;
        summaries.push(EvalSummary {
            name: names[i].clone(),
            dropout: net.config.conv_dropout.to_string(),
            passes: mc.passes,
            count: truths.len(),
            mue,
            mean_variance,
            rmse,
        });
        let report = binned_statistics(&records, &edges)?;
        let path = o.out.join(bins_file(i));
        write_text(&path, &binned_report_tsv(&report))?;
        bin_paths.push(path);
    }
    let summary_path = o.out.join(SUMMARY_FILE);
    write_text(&summary_path, &eval_summary_tsv(&summaries))?;

    let mut resolved = KvMap::new();
    resolved.set("passes", mc.passes);
    resolved.set("seed", mc.seed);
    resolved.set("variance_floor", mc.variance_floor);
    resolved.set("bin_edges", steer_core::kv::join_list(&edges));
    for (name, p) in names.iter().zip(&o.models) {
        resolved.set(&format!("model.{name}"), p.display());
    }
    let mut run = RunManifest::start("eval");
    run.config_from(&resolved);
    run.seed("mc", mc.seed);
    run.input(&o.data)?;
    for p in &o.models {
        run.input(p)?;
    }
    run.output(&summary_path)?;
    for p in &bin_paths {
        run.output(p)?;
    }
    Ok((summaries, run.finish(&o.out)?))
}

/// `none`, `scripted:<name>` or a bare scripted name (`perfect`,
/// `corrective`, `constant=<u>`).
pub fn parse_human(spec: &str) -> CliResult<HumanSource> {
    let name = spec.strip_prefix("scripted:").unwrap_or(spec);
    if name == "none" {
        return Ok(HumanSource::None);
    }
    Ok(HumanSource::Scripted(ScriptedHuman::parse(name)?))
}

/// Settings shared by `simulate` and `serve`.
#[derive(Clone, Debug, PartialEq)]
pub struct SessionSettings {
    pub track_seed: u64,
    pub track: TrackConfig,
    pub fusion: FusionConfig,
    pub mc: McConfig,
    pub sim: SimConfig,
}

impl SessionSettings {
    /// Keys: `seed` (track seed, 0), track keys (see [`TrackConfig`]),
    /// `kappa` (1.0), `passes` (20), `mc_seed` (defaults to `seed`), `dt`,
    /// `speed`, `corridor`. The track's `kappa_max` also bounds commands.
    pub fn from_kv(kv: &KvMap) -> CliResult<Self> {
        let track = TrackConfig::read_kv(kv, "")?;
        track.validate()?;
        let track_seed: u64 = kv.parse_or("seed", 0)?;
        let fusion = FusionConfig::with_gain(kv.parse_or("kappa", 1.0)?);
        fusion.validate()?;
        let d = SimConfig::default();
        let sim = SimConfig {
            dt: kv.parse_or("dt", d.dt)?,
            speed: kv.parse_or("speed", d.speed)?,
            kappa_max: track.kappa_max,
            corridor: kv.parse_or("corridor", d.corridor)?,
        };
        if !(sim.dt > 0.0 && sim.speed > 0.0 && sim.corridor > 0.0) {
            return Err(CliError::Config("dt, speed and corridor must be positive".into()));
        }
        let mc = McConfig {
            passes: kv.parse_or("passes", McConfig::default().passes)?,
            seed: kv.parse_or("mc_seed", track_seed)?,
            ..McConfig::default()
        };
        Ok(Self {
            track_seed,
            track,
            fusion,
            mc,
            sim,
        })
    }

    pub fn to_kv(&self, kv: &mut KvMap) {
        self.track.write_kv(kv);
        kv.set("seed", self.track_seed);
        kv.set("kappa", self.fusion.gain);
        kv.set("passes", self.mc.passes);
        kv.set("mc_seed", self.mc.seed);
        kv.set("dt", self.sim.dt);
        kv.set("speed", self.sim.speed);
        kv.set("corridor", self.sim.corridor);
    }

    pub fn build_track(&self) -> CliResult<steer_core::Track> {
        Ok(generate_track(derive_seed(self.track_seed, &[TAG_TRACK, 0]), &self.track)?)
    }
}

#[derive(Clone, Debug, Default)]
pub struct SimulateOpts {
    pub model: PathBuf,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub kappa: Option<f64>,
    pub passes: Option<usize>,
    pub human: Option<String>,
    pub ticks: Option<u64>,
    pub force: bool,
}

/// Headless closed-loop run on a generated track. Besides the
/// [`SessionSettings`] keys the config takes `human` (`none`) and
/// `ticks` (600). Writes `steps.tsv`.
pub fn cmd_simulate(o: &SimulateOpts) -> CliResult<(SimOutcome, RunManifest)> {
    let mut kv = read_config(o.config.as_deref())?;
    if let Some(s) = o.seed {
        kv.set("seed", s);
    }
    if let Some(k) = o.kappa {
        kv.set("kappa", k);
    }
    if let Some(t) = o.passes {
        kv.set("passes", t);
    }
    if let Some(h) = &o.human {
        kv.set("human", h);
    }
    if let Some(t) = o.ticks {
        kv.set("ticks", t);
    }
    let settings = SessionSettings::from_kv(&kv)?;
    let human_spec = kv.get("human").unwrap_or("none").to_string();
    let human = parse_human(&human_spec)?;
    let ticks: u64 = kv.parse_or("ticks", 600)?;
    let net = load_net(&o.model)?;
    let track = settings.build_track()?;
    prepare_out(&o.out, &[STEPS_FILE], o.force)?;

    let outcome = run_closed_loop(
        &net,
        &track,
        &human,
        settings.fusion,
        settings.mc,
        settings.sim,
        net.camera.clone(),
        ticks,
    )?;
    let path = o.out.join(STEPS_FILE);
    write_text(&path, &step_records_tsv(&outcome.records))?;

    let mut resolved = KvMap::new();
    settings.to_kv(&mut resolved);
    resolved.set("human", &human_spec);
    resolved.set("ticks", ticks);
    resolved.set(
        "status",
        match outcome.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::LeftCorridor { tick } => format!("left_corridor@{tick}"),
            RunStatus::EndOfTrack { tick } => format!("end_of_track@{tick}"),
        },
    );
    let mut run = RunManifest::start("simulate");
    run.config_from(&resolved);
    run.seed("track", settings.track_seed);
    run.seed("mc", settings.mc.seed);
    run.input(&o.model)?;
    if let Some(p) = o.config.as_deref() {
        run.input(p)?;
    }
    run.output(&path)?;
    Ok((outcome, run.finish(&o.out)?))
}

//! Experiment matrix expansion, parallel execution and result files.
//!
//! A scenario is one (profile, algorithm, target) triple; each scenario runs
//! `runs_per_scenario` sessions with seeds `base_seed + run`. The seed picks
//! where in the profile the session starts, so runs of different scenarios
//! sharing a seed see the same network.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abr::{AbrTuning, Algorithm};
use crate::error::{Error, Result};
use crate::media::{default_ladder, StreamTimeline};
use crate::metrics::{aggregate, RunMetrics};
use crate::netmodel::{load_profile, LinkParams, NetworkProfile, ProfileShape};
use crate::player::{run_session, CatchupMode, PlayerConfig, SessionLog};
use crate::qoe::export_p1203;

pub const RUNS_CSV: &str = "runs.csv";
pub const AGGREGATE_CSV: &str = "aggregate.csv";

/// Player settings applied on top of the defaults for every session.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlayerOverrides {
    pub fast_switching: Option<bool>,
    pub fast_switch_buffer_segments: Option<f64>,
    pub throughput_window: Option<usize>,
    pub stable_buffer_time_s: Option<f64>,
    pub max_drift_s: Option<f64>,
    pub max_playback_rate_delta: Option<f64>,
    pub scheduler_timeout_s: Option<f64>,
    pub resume_buffer_s: Option<f64>,
    pub catchup: Option<CatchupMode>,
    pub catchup_gain: Option<f64>,
    pub catchup_deadband_s: Option<f64>,
    pub tuning: Option<AbrTuning>,
}

impl PlayerOverrides {
    pub fn apply(&self, c: &mut PlayerConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f.clone() { c.$f = v; } )* };
        }
        set!(
            fast_switching,
            fast_switch_buffer_segments,
            throughput_window,
            stable_buffer_time_s,
            max_drift_s,
            max_playback_rate_delta,
            scheduler_timeout_s,
            resume_buffer_s,
            catchup_gain,
            catchup_deadband_s,
            tuning
        );
        if self.catchup.is_some() {
            c.catchup = self.catchup;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithms: Vec<String>,
    pub targets_s: Vec<f64>,
    /// `A`..`D` for the built-in traces, anything else is a CSV path.
    pub profiles: Vec<String>,
    pub runs_per_scenario: usize,
    pub base_seed: u64,
    /// Stream length in segments.
    pub segments: usize,
    /// Upper bound of the per-run start offset into the profile.
    pub max_offset_s: f64,
    pub player: PlayerOverrides,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithms: vec!["dynamic".into(), "l2a_original".into(), "lolp".into()],
            targets_s: vec![3.0, 5.5, 8.0, 15.0],
            profiles: ProfileShape::ALL.iter().map(|s| s.to_string()).collect(),
            runs_per_scenario: 20,
            base_seed: 0,
            segments: 390,
            max_offset_s: 60.0,
            player: PlayerOverrides::default(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// One session of the matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionSpec {
    pub scenario_id: String,
    pub algorithm: Algorithm,
    pub profile: String,
    /// Index into the experiment's profile list.
    pub profile_index: usize,
    pub target_s: f64,
    pub run: usize,
    pub seed: u64,
    pub offset_s: f64,
    pub config: PlayerConfig,
    pub timeline: StreamTimeline,
}

pub fn scenario_id(algorithm: &str, profile: &str, target_s: f64) -> String {
    format!("{profile}_{algorithm}_{target_s}")
}

/// Label used in outputs: the shape letter, or the file stem of a CSV path.
pub fn profile_label(source: &str) -> String {
    match source.parse::<ProfileShape>() {
        Ok(shape) => shape.to_string(),
        Err(_) => Path::new(source)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| source.to_string()),
    }
}

/// Start offset into the profile for a given seed.
pub fn start_offset(seed: u64, max_offset_s: f64) -> f64 {
    if max_offset_s <= 0.0 {
        return 0.0;
    }
    ChaCha8Rng::seed_from_u64(seed).random_range(0.0..max_offset_s)
}

/// Cartesian product in profile, algorithm, target, run order. Every
/// scenario is validated before anything is returned.
pub fn expand(config: &ExperimentConfig) -> Result<Vec<SessionSpec>> {
    if config.runs_per_scenario == 0 {
        return Err(Error::Config("runs_per_scenario must be at least 1".into()));
    }
    if config.algorithms.is_empty() || config.targets_s.is_empty() || config.profiles.is_empty() {
        return Err(Error::Config(
            "algorithms, targets_s and profiles must be non-empty".into(),
        ));
    }
    if let Some(t) = config.targets_s.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::Config(format!("target {t} s is not positive")));
    }
    if !(config.max_offset_s >= 0.0) {
        return Err(Error::Config("max_offset_s must be non-negative".into()));
    }
    let timeline = StreamTimeline::new(4, 0.96, config.segments)?;
    let mut specs = Vec::new();
    for (pi, source) in config.profiles.iter().enumerate() {
        let label = profile_label(source);
        for alg_name in &config.algorithms {
            for &target in &config.targets_s {
                let id = scenario_id(alg_name, &label, target);
                let algorithm: Algorithm =
                    alg_name.parse().map_err(|e: Error| e.in_scenario(&id))?;
                let mut pc = PlayerConfig::new(algorithm, target);
                config.player.apply(&mut pc);
                pc.validate().map_err(|e| e.in_scenario(&id))?;
                for run in 0..config.runs_per_scenario {
                    let seed = config.base_seed + run as u64;
                    specs.push(SessionSpec {
                        scenario_id: id.clone(),
                        algorithm,
                        profile: label.clone(),
                        profile_index: pi,
                        target_s: target,
                        run,
                        seed,
                        offset_s: start_offset(seed, config.max_offset_s),
                        config: pc.clone(),
                        timeline,
                    });
                }
            }
        }
    }
    Ok(specs)
}

pub fn load_profiles(config: &ExperimentConfig) -> Result<Vec<NetworkProfile>> {
    config
        .profiles
        .iter()
        .map(|source| match source.parse::<ProfileShape>() {
            Ok(shape) => Ok(shape.builtin()),
            Err(_) => load_profile(source).map_err(|e| e.in_scenario(&profile_label(source))),
        })
        .collect()
}

/// One line of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub scenario_id: String,
    pub algorithm: String,
    pub profile: String,
    pub target_s: f64,
    pub seed: u64,
    pub mean_bitrate_kbps: f64,
    pub stall_count: usize,
    pub stall_s: f64,
    pub median_dev_s: f64,
    pub unique_segs: usize,
    pub total_segs: usize,
    pub rerequest_pct: f64,
    pub mos: f64,
}

impl RunRow {
    fn new(spec: &SessionSpec, m: &RunMetrics) -> Self {
        Self {
            scenario_id: spec.scenario_id.clone(),
            algorithm: spec.algorithm.id().to_string(),
            profile: spec.profile.clone(),
            target_s: spec.target_s,
            seed: spec.seed,
            mean_bitrate_kbps: m.mean_bitrate_kbps,
            stall_count: m.stall_count,
            stall_s: m.total_stall_s,
            median_dev_s: m.latency.median_abs_s,
            unique_segs: m.unique_segments,
            total_segs: m.total_segment_requests,
            rerequest_pct: m.rerequest_pct,
            mos: m.mos,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub spec: SessionSpec,
    pub row: RunRow,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub export_p1203: bool,
    pub emit_logs: bool,
    /// Worker threads; `None` uses every core.
    pub workers: Option<usize>,
}

/// Runs one session on its (unshifted) profile.
pub fn execute(spec: &SessionSpec, profile: &NetworkProfile) -> Result<SessionLog> {
    let shifted = profile.shifted(spec.offset_s);
    run_session(
        &spec.config,
        &shifted,
        &spec.timeline,
        &default_ladder(),
        LinkParams::default(),
        spec.seed,
    )
    .map_err(|e| e.in_scenario(&spec.scenario_id))
}

fn run_one(spec: &SessionSpec, profile: &NetworkProfile, opts: &RunOptions) -> Result<RunResult> {
    let log = execute(spec, profile)?;
    let ctx = |e: Error| e.in_scenario(&spec.scenario_id);
    let metrics = RunMetrics::from_log(&log).map_err(ctx)?;
    if let Some(dir) = &opts.out_dir {
        let stem = format!("{}_{}", spec.scenario_id, spec.seed);
        if opts.export_p1203 {
            export_p1203(&log, &dir.join("p1203").join(format!("{stem}.p1203.json")))
                .map_err(ctx)?;
        }
        if opts.emit_logs {
            let path = dir.join("logs").join(format!("{stem}.jsonl"));
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            log.write_jsonl(BufWriter::new(file)).map_err(ctx)?;
        }
    }
    Ok(RunResult {
        row: RunRow::new(spec, &metrics),
        spec: spec.clone(),
        metrics,
    })
}

/// Executes every spec; results come back in spec order. On failure the
/// successful results are still returned alongside the first error.
pub fn run_specs(
    specs: &[SessionSpec],
    profiles: &[NetworkProfile],
    opts: &RunOptions,
) -> (Vec<RunResult>, Option<Error>) {
    let work = || -> Vec<Result<RunResult>> {
        specs
            .par_iter()
            .map(|s| run_one(s, &profiles[s.profile_index], opts))
            .collect()
    };
    let outcomes = match opts.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
        {
            Ok(pool) => pool.install(work),
            Err(e) => return (Vec::new(), Some(Error::Config(format!("worker pool: {e}")))),
        },
        None => work(),
    };
    let mut ok = Vec::with_capacity(outcomes.len());
    let mut first_err = None;
    for o in outcomes {
        match o {
            Ok(r) => ok.push(r),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    (ok, first_err)
}

pub fn write_runs_csv(rows: &[RunRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// One line of `aggregate.csv`: a metric summarised over a scenario's runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario_id: String,
    pub algorithm: String,
    pub profile: String,
    pub target_s: f64,
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
}

pub const AGGREGATED_METRICS: [&str; 8] = [
    "mean_bitrate_kbps",
    "stall_count",
    "stall_s",
    "median_dev_s",
    "unique_segs",
    "total_segs",
    "rerequest_pct",
    "mos",
];

fn metric_value(r: &RunRow, metric: &str) -> f64 {
    match metric {
        "mean_bitrate_kbps" => r.mean_bitrate_kbps,
        "stall_count" => r.stall_count as f64,
        "stall_s" => r.stall_s,
        "median_dev_s" => r.median_dev_s,
        "unique_segs" => r.unique_segs as f64,
        "total_segs" => r.total_segs as f64,
        "rerequest_pct" => r.rerequest_pct,
        "mos" => r.mos,
        _ => unreachable!("unknown metric {metric}"),
    }
}

/// Scenarios in first-appearance order, one row per metric.
pub fn aggregate_rows(rows: &[RunRow]) -> Vec<AggregateRow> {
    let mut order: Vec<&str> = Vec::new();
    for r in rows {
        if !order.contains(&r.scenario_id.as_str()) {
            order.push(&r.scenario_id);
        }
    }
    let mut out = Vec::new();
    for id in order {
        let group: Vec<&RunRow> = rows.iter().filter(|r| r.scenario_id == id).collect();
        let first = group[0];
        for metric in AGGREGATED_METRICS {
            let values: Vec<f64> = group.iter().map(|r| metric_value(r, metric)).collect();
            let a = aggregate(&values).expect("group is non-empty");
            out.push(AggregateRow {
                scenario_id: id.to_string(),
                algorithm: first.algorithm.clone(),
                profile: first.profile.clone(),
                target_s: first.target_s,
                metric: metric.to_string(),
                n: a.n,
                mean: a.mean,
                median: a.median,
                p5: a.p5,
                p95: a.p95,
            });
        }
    }
    out
}

pub fn write_aggregate_csv(rows: &[AggregateRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Expands, executes and writes `runs.csv` and `aggregate.csv` into
/// `opts.out_dir`. Rows of finished sessions are written even when a later
/// session fails.
pub fn run_all(config: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<RunResult>> {
    let specs = expand(config)?;
    let profiles = load_profiles(config)?;
    let mut opts = opts.clone();
    if opts.out_dir.is_none() {
        opts.out_dir = config.output_dir.clone();
    }
    let dir = opts
        .out_dir
        .clone()
        .ok_or_else(|| Error::Config("no output directory given".into()))?;
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(&dir)?;
    if opts.export_p1203 {
        mkdir(&dir.join("p1203"))?;
    }
    if opts.emit_logs {
        mkdir(&dir.join("logs"))?;
    }
    let (results, err) = run_specs(&specs, &profiles, &opts);
    let rows: Vec<RunRow> = results.iter().map(|r| r.row.clone()).collect();
    write_runs_csv(&rows, &dir.join(RUNS_CSV))?;
    write_aggregate_csv(&aggregate_rows(&rows), &dir.join(AGGREGATE_CSV))?;
    match err {
        Some(e) => Err(e),
        None => Ok(results),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expand_counts() {
        let mut c = ExperimentConfig::default();
        assert_eq!(expand(&c).unwrap().len(), 960);
        c.profiles = vec!["A".into()];
        assert_eq!(expand(&c).unwrap().len(), 240);
        c.runs_per_scenario = 0;
        assert!(matches!(expand(&c), Err(Error::Config(_))));
    }

    #[test]
    fn expand_seeds_and_order() {
        let c = ExperimentConfig {
            runs_per_scenario: 3,
            base_seed: 100,
            ..Default::default()
        };
        let specs = expand(&c).unwrap();
        let seeds: Vec<u64> = specs.iter().take(4).map(|s| s.seed).collect();
        assert_eq!(seeds, [100, 101, 102, 100]);
        assert_eq!(specs[0].scenario_id, "A_dynamic_3");
        assert_eq!(specs[3].scenario_id, "A_dynamic_5.5");
        // Same seed, same offset, whatever the scenario.
        assert_eq!(specs[0].offset_s, specs[3].offset_s);
        assert!(specs.iter().all(|s| (0.0..60.0).contains(&s.offset_s)));
        assert_eq!(expand(&c).unwrap(), specs);
    }

    #[test]
    fn unknown_algorithm_names_scenario() {
        let c = ExperimentConfig {
            algorithms: vec!["dynamic".into(), "bogus".into()],
            profiles: vec!["B".into()],
            targets_s: vec![8.0],
            ..Default::default()
        };
        match expand(&c) {
            Err(Error::Scenario { scenario, .. }) => assert_eq!(scenario, "B_bogus_8"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overrides_apply() {
        let o = PlayerOverrides {
            fast_switching: Some(true),
            throughput_window: Some(5),
            ..Default::default()
        };
        let mut pc = PlayerConfig::default();
        o.apply(&mut pc);
        assert!(pc.fast_switching);
        assert_eq!(pc.throughput_window, 5);
        assert_eq!(pc.max_drift_s, 5.0);
    }

    #[test]
    fn config_json_defaults() {
        let c: ExperimentConfig = serde_json::from_str(r#"{"runs_per_scenario": 2}"#).unwrap();
        assert_eq!(c.runs_per_scenario, 2);
        assert_eq!(c.targets_s, [3.0, 5.5, 8.0, 15.0]);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"runs": 2}"#).is_err());
    }

    #[test]
    fn aggregate_rows_per_metric() {
        let row = |id: &str, br: f64| RunRow {
            scenario_id: id.into(),
            algorithm: "dynamic".into(),
            profile: "A".into(),
            target_s: 3.0,
            seed: 0,
            mean_bitrate_kbps: br,
            stall_count: 1,
            stall_s: 2.0,
            median_dev_s: 0.1,
            unique_segs: 390,
            total_segs: 390,
            rerequest_pct: 0.0,
            mos: 3.0,
        };
        let rows = vec![row("x", 100.0), row("x", 300.0), row("y", 50.0)];
        let agg = aggregate_rows(&rows);
        assert_eq!(agg.len(), 2 * AGGREGATED_METRICS.len());
        assert_eq!(agg[0].scenario_id, "x");
        assert_eq!(agg[0].metric, "mean_bitrate_kbps");
        assert_eq!((agg[0].n, agg[0].mean, agg[0].median), (2, 200.0, 200.0));
        assert_eq!(agg[8].scenario_id, "y");
    }
}

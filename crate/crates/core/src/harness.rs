//! Monte-Carlo experiment runners and result files.
//!
//! Every random quantity of a run is drawn from its own ChaCha stream derived
//! from the master seed, the trial index and a purpose tag, so adding methods
//! or sweep points never changes the draws of existing ones.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{generate_channel, ChannelSet};
use crate::config::Scenario;
use crate::error::{IsacError, Result};
use crate::hybrid::{fc_match, pc_match, MatchOptions};
use crate::optimizer::{
    design_precoder_given_selection, pc_equivalent_fd, run_alg1, run_tradeoff, Design, OptimizerOptions, OptimizerTrace,
    PowerModel,
};
use crate::radar::{calibrate_cfar, detect_scene, CfarCalibration};
use crate::selection::{
    brute_force_search, evaluate_hybrid, fc_candidate_sweep, greedy_search, random_selection, FcCandidate, MaskEvaluation,
};
use crate::system::{Architecture, HybridPrecoder, PrecoderSet, SelectionMask, SystemConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Proposed,
    Greedy,
    Brute,
    Random,
    AllOn,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Proposed, Method::Greedy, Method::Brute, Method::Random, Method::AllOn];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Greedy => "greedy",
            Method::Brute => "brute",
            Method::Random => "random",
            Method::AllOn => "all-on",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = IsacError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| IsacError::InvalidArgument(format!("unknown method '{s}' (proposed|greedy|brute|random|all-on)")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Rejects combinations without a meaningful search space. Under the
/// fully-connected architecture any `n` chains are equivalent, so only the
/// candidate sweep, all-on and random baselines are offered.
pub fn check_method(arch: Architecture, method: Method) -> Result<()> {
    if arch == Architecture::Fc && matches!(method, Method::Brute | Method::Greedy) {
        return Err(IsacError::InvalidArgument(format!("method '{method}' is not available for the FC architecture")));
    }
    Ok(())
}

/// What a derived seed is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Channel = 1,
    Sensing = 2,
    /// Randomized selection searches.
    Search = 3,
    Calibration = 4,
}

/// Counter-based split: stream `purpose`, word offset proportional to `trial`.
pub fn derive_seed(master: u64, trial: u64, purpose: Purpose) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(purpose as u64);
    rng.set_word_pos(2 * trial as u128);
    rng.next_u64()
}

pub fn channel_for_trial(scenario: &Scenario, cfg: &SystemConfig, master: u64, trial: u64) -> Result<ChannelSet> {
    generate_channel(cfg, &scenario.channel, derive_seed(master, trial, Purpose::Channel))
}

/// Result of one method on one channel draw.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    /// Fully-digital equivalent of the final precoder.
    pub effective: PrecoderSet,
    pub mask: SelectionMask,
    pub rate: f64,
    pub power: f64,
    pub ee: f64,
    pub hybrid: Option<HybridPrecoder>,
    pub trace: Option<OptimizerTrace>,
    pub mask_log: Vec<MaskEvaluation>,
    pub fc_candidates: Vec<FcCandidate>,
    /// Factorization residual relative to the reference precoder's norm.
    pub match_residual: Option<f64>,
}

impl MethodOutcome {
    fn from_design(d: Design, mask_log: Vec<MaskEvaluation>) -> Self {
        Self {
            effective: d.precoder,
            mask: d.mask,
            rate: d.rate,
            power: d.power,
            ee: d.ee,
            hybrid: None,
            trace: Some(d.trace),
            mask_log,
            fc_candidates: Vec::new(),
            match_residual: None,
        }
    }

    fn from_hybrid(hp: HybridPrecoder, residual: f64, cfg: &SystemConfig, h: &ChannelSet, base: Design, log: Vec<MaskEvaluation>) -> Result<Self> {
        let m = evaluate_hybrid(&hp, cfg, h)?;
        let reference = base.precoder.frob_sq().sqrt();
        let residual = if reference > 0.0 { residual / reference } else { residual };
        Ok(Self {
            effective: hp.effective(cfg.n_streams)?,
            mask: hp.mask().clone(),
            rate: m.rate,
            power: m.power,
            ee: m.ee,
            hybrid: Some(hp),
            trace: Some(base.trace),
            mask_log: log,
            fc_candidates: Vec::new(),
            match_residual: Some(residual),
        })
    }
}

fn fd_stage(method: Method, cfg: &SystemConfig, h: &ChannelSet, model: PowerModel, opts: &OptimizerOptions, seed: u64) -> Result<(Design, Vec<MaskEvaluation>)> {
    let n = model.mask_len(cfg);
    Ok(match method {
        Method::Proposed => match model {
            PowerModel::Fd => (run_alg1(cfg, h, opts)?, Vec::new()),
            PowerModel::PcEquivalent => (pc_equivalent_fd(cfg, h, opts)?, Vec::new()),
            PowerModel::FcEquivalent => unreachable!("FC proposals go through the candidate sweep"),
        },
        Method::Greedy => {
            let o = greedy_search(cfg, h, model, opts, seed)?;
            (o.design, o.evaluations)
        }
        Method::Brute => {
            let o = brute_force_search(cfg, h, model, opts)?;
            (o.design, o.evaluations)
        }
        Method::Random => {
            let o = random_selection(cfg, h, model, opts, seed)?;
            (o.design, o.evaluations)
        }
        Method::AllOn => (design_precoder_given_selection(&SelectionMask::all_on(n), cfg, h, model, opts)?, Vec::new()),
    })
}

/// Runs `method` for the architecture in `cfg`. `seed` drives the randomized
/// searches only.
pub fn run_method(cfg: &SystemConfig, h: &ChannelSet, method: Method, opts: &OptimizerOptions, seed: u64) -> Result<MethodOutcome> {
    check_method(cfg.architecture, method)?;
    let mopts = MatchOptions::default();
    match cfg.architecture {
        Architecture::Fd => {
            let (d, log) = fd_stage(method, cfg, h, PowerModel::Fd, opts, seed)?;
            Ok(MethodOutcome::from_design(d, log))
        }
        Architecture::Fc => {
            if method == Method::Proposed {
                let s = fc_candidate_sweep(cfg, h, opts, &mopts)?;
                let mut out = MethodOutcome::from_hybrid(s.hybrid, s.report.normalized_residual, cfg, h, s.reference, Vec::new())?;
                out.fc_candidates = s.candidates;
                return Ok(out);
            }
            let (d, log) = fd_stage(method, cfg, h, PowerModel::FcEquivalent, opts, seed)?;
            let (hp, rep) = fc_match(&d.precoder, d.mask.count(), cfg, &mopts)?;
            MethodOutcome::from_hybrid(hp, rep.normalized_residual, cfg, h, d, log)
        }
        Architecture::Pc => {
            let (d, log) = fd_stage(method, cfg, h, PowerModel::PcEquivalent, opts, seed)?;
            let (hp, rep) = pc_match(&d.precoder, cfg, &mopts)?;
            MethodOutcome::from_hybrid(hp, rep.normalized_residual, cfg, h, d, log)
        }
    }
}

/// One (method, P_th, trial) result as written to `runs/*.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub scenario: String,
    pub arch: String,
    pub n_rf: usize,
    pub method: Method,
    pub p_th: f64,
    pub trial: u64,
    pub seed: u64,
    pub feasible: bool,
    pub error: Option<String>,
    pub ee: Option<f64>,
    pub rate: Option<f64>,
    pub power: Option<f64>,
    pub n_active: Option<usize>,
    pub mask: Option<String>,
    pub match_residual: Option<f64>,
    pub runtime_s: f64,
    pub sensing_trials: usize,
    pub hits: Option<usize>,
    pub targets: Option<usize>,
    pub p_d: Option<f64>,
    pub p_fa: Option<f64>,
}

/// Everything a sweep needs besides the scenario.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub arch: Architecture,
    pub n_rf: Option<usize>,
    pub methods: Vec<Method>,
    pub p_th_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Radar trials per channel draw; zero skips sensing.
    pub sensing_trials: usize,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub records: Vec<RunRecord>,
    /// Traces of feasible runs, aligned with `records`.
    pub traces: Vec<Option<OptimizerTrace>>,
}

fn run_one(
    scenario: &Scenario,
    cfg: &SystemConfig,
    h: &ChannelSet,
    method: Method,
    trial: u64,
    seed: u64,
    sensing_trials: usize,
) -> Result<(RunRecord, Option<OptimizerTrace>)> {
    let mut rec = RunRecord {
        schema_version: SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        arch: cfg.architecture.to_string(),
        n_rf: cfg.n_rf,
        method,
        p_th: cfg.p_th,
        trial,
        seed,
        feasible: false,
        error: None,
        ee: None,
        rate: None,
        power: None,
        n_active: None,
        mask: None,
        match_residual: None,
        runtime_s: 0.0,
        sensing_trials: 0,
        hits: None,
        targets: None,
        p_d: None,
        p_fa: None,
    };
    let start = Instant::now();
    let run_seed = derive_seed(seed, trial, Purpose::Search);
    let out = match run_method(cfg, h, method, &scenario.optimizer, run_seed) {
        Ok(o) => o,
        Err(e) if e.is_infeasible() => {
            rec.runtime_s = start.elapsed().as_secs_f64();
            rec.error = Some(e.to_string());
            return Ok((rec, None));
        }
        Err(e) => return Err(e),
    };
    rec.runtime_s = start.elapsed().as_secs_f64();
    rec.feasible = true;
    rec.ee = Some(out.ee);
    rec.rate = Some(out.rate);
    rec.power = Some(out.power);
    rec.n_active = Some(out.mask.count());
    rec.mask = Some(out.mask.to_string());
    rec.match_residual = out.match_residual;
    if sensing_trials > 0 {
        let scene = scenario.scene(cfg.architecture)?;
        let s = detect_scene(
            &out.effective,
            &scene,
            &scenario.angle_grid()?,
            &scenario.cfar(cfg.p_fa)?,
            cfg,
            derive_seed(seed, trial, Purpose::Sensing),
            sensing_trials,
        )?;
        rec.sensing_trials = sensing_trials;
        rec.hits = Some(s.hits);
        rec.targets = Some(s.targets);
        rec.p_d = s.p_d;
        rec.p_fa = Some(s.p_fa);
    }
    Ok((rec, out.trace))
}

/// Runs every (P_th, method, trial) combination on common channel draws.
pub fn run_sweep(scenario: &Scenario, spec: &SweepSpec) -> Result<SweepResult> {
    if spec.trials == 0 || spec.methods.is_empty() || spec.p_th_grid.is_empty() {
        return Err(IsacError::InvalidArgument("a sweep needs trials, methods and P_th values".into()));
    }
    for &m in &spec.methods {
        check_method(spec.arch, m)?;
    }
    let base = scenario.system(spec.arch, spec.n_rf)?;
    let channels: Vec<ChannelSet> = (0..spec.trials as u64)
        .map(|t| channel_for_trial(scenario, &base, spec.seed, t))
        .collect::<Result<_>>()?;
    let mut records = Vec::new();
    let mut traces = Vec::new();
    for &p_th in &spec.p_th_grid {
        let cfg = base.with_p_th(p_th);
        cfg.validate()?;
        for &method in &spec.methods {
            let rows: Vec<(RunRecord, Option<OptimizerTrace>)> = channels
                .par_iter()
                .enumerate()
                .map(|(t, h)| run_one(scenario, &cfg, h, method, t as u64, spec.seed, spec.sensing_trials))
                .collect::<Result<_>>()?;
            log::info!("p_th {p_th} {method}: {} runs", rows.len());
            for (r, tr) in rows {
                records.push(r);
                traces.push(tr);
            }
        }
    }
    Ok(SweepResult { records, traces })
}

/// Per-(arch, method, P_th) summary row of the aggregate CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub schema_version: u32,
    pub scenario: String,
    pub arch: String,
    pub method: Method,
    pub p_th: f64,
    pub runs: usize,
    pub feasible: usize,
    pub mean_ee: Option<f64>,
    pub ci_ee: Option<f64>,
    pub mean_rate: Option<f64>,
    pub mean_power: Option<f64>,
    pub mean_n_active: Option<f64>,
    pub ci_n_active: Option<f64>,
    pub mean_p_d: Option<f64>,
    pub ci_p_d: Option<f64>,
    pub mean_p_fa: Option<f64>,
}

/// Mean and 95% normal-approximation half-width.
pub fn mean_ci(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, 1.96 * (var / n).sqrt()))
}

/// Groups records by (scenario, arch, method, P_th); rows sorted by that key.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<AggregateRow>> {
    if let Some(r) = records.iter().find(|r| r.schema_version != SCHEMA_VERSION) {
        return Err(IsacError::Config(format!(
            "run file schema {} does not match {SCHEMA_VERSION}",
            r.schema_version
        )));
    }
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.scenario, &a.arch, a.method)
            .cmp(&(&b.scenario, &b.arch, b.method))
            .then(a.p_th.total_cmp(&b.p_th))
            .then(a.trial.cmp(&b.trial))
    });
    let mut rows = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let head = sorted[i];
        let mut j = i;
        while j < sorted.len()
            && sorted[j].scenario == head.scenario
            && sorted[j].arch == head.arch
            && sorted[j].method == head.method
            && sorted[j].p_th.to_bits() == head.p_th.to_bits()
        {
            j += 1;
        }
        let group = &sorted[i..j];
        let ok: Vec<&&RunRecord> = group.iter().filter(|r| r.feasible).collect();
        let col = |f: &dyn Fn(&RunRecord) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
        let ee = mean_ci(&col(&|r| r.ee));
        let n_active = mean_ci(&col(&|r| r.n_active.map(|n| n as f64)));
        let p_d = mean_ci(&col(&|r| r.p_d));
        rows.push(AggregateRow {
            schema_version: SCHEMA_VERSION,
            scenario: head.scenario.clone(),
            arch: head.arch.clone(),
            method: head.method,
            p_th: head.p_th,
            runs: group.len(),
            feasible: ok.len(),
            mean_ee: ee.map(|x| x.0),
            ci_ee: ee.map(|x| x.1),
            mean_rate: mean_ci(&col(&|r| r.rate)).map(|x| x.0),
            mean_power: mean_ci(&col(&|r| r.power)).map(|x| x.0),
            mean_n_active: n_active.map(|x| x.0),
            ci_n_active: n_active.map(|x| x.1),
            mean_p_d: p_d.map(|x| x.0),
            ci_p_d: p_d.map(|x| x.1),
            mean_p_fa: mean_ci(&col(&|r| r.p_fa)).map(|x| x.0),
        });
        i = j;
    }
    Ok(rows)
}

pub fn write_csv<T: Serialize, W: std::io::Write>(rows: &[T], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

fn run_file_name(r: &RunRecord) -> String {
    format!("{}_{}_pth{:.6}_t{:05}.json", r.arch, r.method, r.p_th, r.trial)
}

/// Writes the scenario snapshot, per-run JSON, traces, aggregate and runtime CSVs.
pub fn write_sweep(dir: &Path, scenario: &Scenario, result: &SweepResult) -> Result<Vec<AggregateRow>> {
    fs::create_dir_all(dir.join("runs"))?;
    fs::create_dir_all(dir.join("traces"))?;
    fs::write(dir.join("scenario.toml"), scenario.to_toml_string()?)?;
    for (r, tr) in result.records.iter().zip(&result.traces) {
        let name = run_file_name(r);
        fs::write(dir.join("runs").join(&name), serde_json::to_string_pretty(r)?)?;
        if let Some(tr) = tr {
            let f = fs::File::create(dir.join("traces").join(name.replace(".json", ".jsonl")))?;
            tr.write_jsonl(std::io::BufWriter::new(f))?;
        }
    }
    let rows = aggregate(&result.records)?;
    write_csv(&rows, fs::File::create(dir.join("aggregate.csv"))?)?;
    write_runtime_csv(&result.records, &dir.join("runtime.csv"))?;
    Ok(rows)
}

#[derive(Serialize)]
struct RuntimeRow<'a> {
    arch: &'a str,
    method: Method,
    p_th: f64,
    runs: usize,
    mean_runtime_s: f64,
    max_runtime_s: f64,
}

fn write_runtime_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut rows: Vec<RuntimeRow> = Vec::new();
    for r in records {
        match rows.iter_mut().find(|x| x.arch == r.arch && x.method == r.method && x.p_th.to_bits() == r.p_th.to_bits()) {
            Some(x) => {
                x.mean_runtime_s += r.runtime_s;
                x.max_runtime_s = x.max_runtime_s.max(r.runtime_s);
                x.runs += 1;
            }
            None => rows.push(RuntimeRow { arch: &r.arch, method: r.method, p_th: r.p_th, runs: 1, mean_runtime_s: r.runtime_s, max_runtime_s: r.runtime_s }),
        }
    }
    for x in rows.iter_mut() {
        x.mean_runtime_s /= x.runs as f64;
    }
    write_csv(&rows, fs::File::create(path)?)
}

/// Reads every `runs/*.json` (or `*.json` directly inside `dir`) in name order.
pub fn load_runs(dir: &Path) -> Result<Vec<RunRecord>> {
    let runs = dir.join("runs");
    let base = if runs.is_dir() { runs } else { dir.to_path_buf() };
    let mut paths: Vec<PathBuf> = fs::read_dir(&base)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(IsacError::InvalidArgument(format!("no run files in {}", base.display())));
    }
    paths
        .iter()
        .map(|p| -> Result<RunRecord> {
            let text = fs::read_to_string(p)?;
            let v: serde_json::Value = serde_json::from_str(&text)?;
            match v.get("schema_version").and_then(|s| s.as_u64()) {
                Some(s) if s == SCHEMA_VERSION as u64 => Ok(serde_json::from_value(v)?),
                other => Err(IsacError::Config(format!("{}: unsupported schema {other:?}", p.display()))),
            }
        })
        .collect()
}

/// Re-aggregates a results directory, rewriting its `aggregate.csv`.
pub fn aggregate_dir(dir: &Path) -> Result<Vec<AggregateRow>> {
    let rows = aggregate(&load_runs(dir)?)?;
    write_csv(&rows, fs::File::create(dir.join("aggregate.csv"))?)?;
    Ok(rows)
}

/// Mean point of the rate-power frontier for one weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierRow {
    pub schema_version: u32,
    pub omega1: f64,
    pub omega2: f64,
    pub runs: usize,
    pub feasible: usize,
    pub mean_rate: Option<f64>,
    pub mean_power: Option<f64>,
    pub mean_ee: Option<f64>,
    pub mean_n_active: Option<f64>,
}

/// Fully-digital rate-power tradeoff with `omega1 = 1` and `omega2` from the
/// grid, rows sorted by increasing `omega2`.
pub fn run_frontier(scenario: &Scenario, omega2_grid: &[f64], trials: usize, seed: u64, p_th: Option<f64>) -> Result<Vec<FrontierRow>> {
    if trials == 0 || omega2_grid.is_empty() {
        return Err(IsacError::InvalidArgument("a frontier needs trials and weights".into()));
    }
    let mut grid = omega2_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut cfg = scenario.system(Architecture::Fd, None)?;
    if let Some(p) = p_th {
        cfg = cfg.with_p_th(p);
    }
    let channels: Vec<ChannelSet> = (0..trials as u64).map(|t| channel_for_trial(scenario, &cfg, seed, t)).collect::<Result<_>>()?;
    grid.iter()
        .map(|&w2| {
            let runs: Vec<Option<Design>> = channels
                .par_iter()
                .map(|h| match run_tradeoff(&cfg, h, 1.0, w2, &scenario.optimizer) {
                    Ok(d) => Ok(Some(d)),
                    Err(e) if e.is_infeasible() => Ok(None),
                    Err(e) => Err(e),
                })
                .collect::<Result<_>>()?;
            let ok: Vec<&Design> = runs.iter().flatten().collect();
            let mean = |f: &dyn Fn(&Design) -> f64| mean_ci(&ok.iter().map(|d| f(d)).collect::<Vec<_>>()).map(|x| x.0);
            Ok(FrontierRow {
                schema_version: SCHEMA_VERSION,
                omega1: 1.0,
                omega2: w2,
                runs: runs.len(),
                feasible: ok.len(),
                mean_rate: mean(&|d| d.rate),
                mean_power: mean(&|d| d.power),
                mean_ee: mean(&|d| d.ee),
                mean_n_active: mean(&|d| d.mask.count() as f64),
            })
        })
        .collect()
}

/// Threshold calibration plus an independent check of the calibrated scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub scenario: String,
    pub arch: String,
    pub p_fa: f64,
    pub calibration: CfarCalibration,
    pub check_cells: usize,
    pub check_false_alarms: usize,
    pub check_p_fa: f64,
    /// Three-sigma binomial half-width around `p_fa` for `check_cells`.
    pub ci_half_width: f64,
    pub within_ci: bool,
}

/// Calibrates the CFAR scale on `calibration_trials` noise-only radar trials
/// of the design from channel draw 0, then counts false alarms on
/// `check_trials` fresh trials.
pub fn calibrate_and_check(
    scenario: &Scenario,
    arch: Architecture,
    method: Method,
    calibration_trials: usize,
    check_trials: usize,
    seed: u64,
) -> Result<CalibrationReport> {
    let cfg = scenario.system(arch, None)?;
    let h = channel_for_trial(scenario, &cfg, seed, 0)?;
    let out = run_method(&cfg, &h, method, &scenario.optimizer, seed)?;
    let grid = scenario.angle_grid()?;
    let cfar = crate::radar::CfarConfig::new(scenario.sensing.n_train, scenario.sensing.n_guard, cfg.p_fa)?;
    let cal = calibrate_cfar(&out.effective, &grid, &cfar, &cfg, derive_seed(seed, 0, Purpose::Calibration), calibration_trials)?;
    let check = detect_scene(
        &out.effective,
        &crate::channel::TargetScene::new(Vec::new()),
        &grid,
        &cal.apply(&cfar)?,
        &cfg,
        derive_seed(seed, 1, Purpose::Calibration),
        check_trials,
    )?;
    let ci = 3.0 * (cfg.p_fa * (1.0 - cfg.p_fa) / check.noise_cells as f64).sqrt();
    Ok(CalibrationReport {
        scenario: scenario.name.clone(),
        arch: arch.to_string(),
        p_fa: cfg.p_fa,
        calibration: cal,
        check_cells: check.noise_cells,
        check_false_alarms: check.false_alarms,
        check_p_fa: check.p_fa,
        ci_half_width: ci,
        within_ci: (check.p_fa - cfg.p_fa).abs() <= ci,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_are_split_by_purpose_and_trial() {
        let a = derive_seed(7, 0, Purpose::Channel);
        assert_eq!(a, derive_seed(7, 0, Purpose::Channel));
        assert_ne!(a, derive_seed(7, 1, Purpose::Channel));
        assert_ne!(a, derive_seed(7, 0, Purpose::Sensing));
        assert_ne!(a, derive_seed(8, 0, Purpose::Channel));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("exhaustive".parse::<Method>().is_err());
        assert!(check_method(Architecture::Fc, Method::Brute).is_err());
        assert!(check_method(Architecture::Pc, Method::Brute).is_ok());
    }

    #[test]
    fn mean_ci_basics() {
        assert_eq!(mean_ci(&[]), None);
        assert_eq!(mean_ci(&[2.0]), Some((2.0, 0.0)));
        assert_eq!(mean_ci(&[3.0, 3.0]), Some((3.0, 0.0)));
        let (m, h) = mean_ci(&[1.0, 3.0]).unwrap();
        assert!((m - 2.0).abs() < 1e-15 && (h - 1.96).abs() < 1e-12);
    }
}

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isac_ee::config::Scenario;
use isac_ee::harness::{
    aggregate_dir, calibrate_and_check, channel_for_trial, derive_seed, run_frontier, run_method, run_sweep, write_csv,
    write_sweep, Method, Purpose, SweepSpec,
};
use isac_ee::radar::{detect_scene, trial_maps, write_rd_map};
use isac_ee::selection::write_mask_log;
use isac_ee::system::Architecture;
use isac_ee::{IsacError, Result};

#[derive(Parser)]
#[command(name = "isac-sim", version, about = "Energy-efficient ISAC precoding and RF-chain selection simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario TOML file; overrides --preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "setup1")]
    preset: String,
    #[arg(long, default_value = "fd")]
    arch: Architecture,
    /// RF chain count override (hybrid architectures).
    #[arg(long)]
    n_rf: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Sensing beam-power floor override.
    #[arg(long)]
    p_th: Option<f64>,
    /// Fixed CFAR threshold scale override.
    #[arg(long)]
    cfar_alpha: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        let mut sc = match &self.config {
            Some(p) => Scenario::load(p)?,
            None => Scenario::preset(&self.preset)?,
        };
        if let Some(p) = self.p_th {
            sc.system.p_th = p;
        }
        if let Some(a) = self.cfar_alpha {
            sc.sensing.cfar_alpha = Some(a);
        }
        sc.validate()?;
        Ok(sc)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Designs one precoder for a single channel draw.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "proposed")]
        method: Method,
        /// Channel draw index.
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Designs a precoder and estimates detection and false-alarm rates.
    Sense {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "proposed")]
        method: Method,
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Radar Monte-Carlo trials.
        #[arg(long, default_value_t = 200)]
        trials: usize,
        /// Writes the RD maps of the first radar trial into this directory.
        #[arg(long)]
        export_rd: Option<PathBuf>,
    },
    /// Monte-Carlo sweep over P_th and methods.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "proposed")]
        methods: Vec<Method>,
        /// Comma-separated P_th values; defaults to the scenario grid.
        #[arg(long, value_delimiter = ',')]
        pth_grid: Vec<f64>,
        /// Channel draws per point.
        #[arg(long, default_value_t = 50)]
        trials: usize,
        /// Radar trials per draw; defaults to the scenario value, 0 skips sensing.
        #[arg(long)]
        sense_trials: Option<usize>,
    },
    /// Rate-power frontier of the fully-digital design.
    Tradeoff {
        #[command(flatten)]
        common: Common,
        /// Comma-separated weights on power (the rate weight is 1).
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,1,2,4")]
        omega_grid: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Calibrates the CFAR threshold scale on noise-only maps and checks it.
    CalibrateCfar {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "proposed")]
        method: Method,
        /// Radar trials for the independent false-alarm check.
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        /// Radar trials for the calibration itself; ten times --trials by default.
        #[arg(long)]
        calibration_trials: Option<usize>,
    },
    /// Recomputes aggregate.csv from the run files of a results directory.
    Aggregate { dir: PathBuf },
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, v: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Optimize { common, method, trial } => {
            let sc = common.scenario()?;
            let cfg = sc.system(common.arch, common.n_rf)?;
            let h = channel_for_trial(&sc, &cfg, common.seed, trial)?;
            let start = std::time::Instant::now();
            let out = run_method(&cfg, &h, method, &sc.optimizer, derive_seed(common.seed, trial, Purpose::Search))?;
            let summary = serde_json::json!({
                "scenario": sc.name, "arch": cfg.architecture, "method": method, "trial": trial,
                "p_th": cfg.p_th, "ee": out.ee, "rate": out.rate, "power": out.power,
                "n_active": out.mask.count(), "mask": out.mask.to_string(),
                "match_residual": out.match_residual, "runtime_s": start.elapsed().as_secs_f64(),
                "fc_candidates": out.fc_candidates,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if let Some(dir) = &common.out {
                write_json(dir, "run.json", &summary)?;
                if let Some(tr) = &out.trace {
                    tr.write_jsonl(std::io::BufWriter::new(fs::File::create(dir.join("trace.jsonl"))?))?;
                }
                if !out.mask_log.is_empty() {
                    write_mask_log(&out.mask_log, fs::File::create(dir.join("masks.csv"))?)?;
                }
            }
        }
        Command::Sense { common, method, trial, trials, export_rd } => {
            let sc = common.scenario()?;
            let cfg = sc.system(common.arch, common.n_rf)?;
            let h = channel_for_trial(&sc, &cfg, common.seed, trial)?;
            let out = run_method(&cfg, &h, method, &sc.optimizer, derive_seed(common.seed, trial, Purpose::Search))?;
            let scene = sc.scene(common.arch)?;
            let grid = sc.angle_grid()?;
            let seed = derive_seed(common.seed, trial, Purpose::Sensing);
            let s = detect_scene(&out.effective, &scene, &grid, &sc.cfar(cfg.p_fa)?, &cfg, seed, trials)?;
            let summary = serde_json::json!({
                "scenario": sc.name, "arch": cfg.architecture, "method": method, "p_th": cfg.p_th,
                "ee": out.ee, "n_active": out.mask.count(), "radar_trials": trials,
                "p_d": s.p_d, "p_fa": s.p_fa, "hits": s.hits, "targets": s.targets,
                "false_alarms": s.false_alarms, "noise_cells": s.noise_cells,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if let Some(dir) = &common.out {
                write_json(dir, "sense.json", &summary)?;
                write_json(dir, "reports.json", &s.reports)?;
            }
            if let Some(dir) = export_rd {
                for (m, map) in trial_maps(&out.effective, &scene, &grid, &cfg, seed, 0)?.iter().enumerate() {
                    write_rd_map(map, &dir, &format!("rd_angle{m:03}"))?;
                }
            }
        }
        Command::Sweep { common, methods, pth_grid, trials, sense_trials } => {
            let sc = common.scenario()?;
            let grid = if pth_grid.is_empty() { sc.sensing.p_th_grid.clone() } else { pth_grid };
            let spec = SweepSpec {
                arch: common.arch,
                n_rf: common.n_rf,
                methods,
                p_th_grid: grid,
                trials,
                seed: common.seed,
                sensing_trials: sense_trials.unwrap_or(sc.sensing.trials_per_draw),
            };
            let result = run_sweep(&sc, &spec)?;
            let dir = common.out.unwrap_or_else(|| PathBuf::from("results"));
            let rows = write_sweep(&dir, &sc, &result)?;
            write_csv(&rows, std::io::stdout())?;
        }
        Command::Tradeoff { common, omega_grid, trials } => {
            let sc = common.scenario()?;
            if common.arch != Architecture::Fd {
                return Err(IsacError::InvalidArgument("the tradeoff runner covers the fd architecture".into()));
            }
            let rows = run_frontier(&sc, &omega_grid, trials, common.seed, None)?;
            if let Some(dir) = &common.out {
                fs::create_dir_all(dir)?;
                write_csv(&rows, fs::File::create(dir.join("frontier.csv"))?)?;
            }
            write_csv(&rows, std::io::stdout())?;
        }
        Command::CalibrateCfar { common, method, trials, calibration_trials } => {
            let sc = common.scenario()?;
            let cal_trials = calibration_trials.unwrap_or(10 * trials);
            let report = calibrate_and_check(&sc, common.arch, method, cal_trials, trials, common.seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(dir) = &common.out {
                write_json(dir, "calibration.json", &report)?;
            }
        }
        Command::Aggregate { dir } => {
            let rows = aggregate_dir(&dir)?;
            write_csv(&rows, std::io::stdout())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_infeasible() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

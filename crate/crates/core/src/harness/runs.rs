//! Run modes: single design, area heatmap, Monte Carlo, ρ tradeoff.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{Mode, ScenarioConfig, Scheme};
use super::output::{write_meta, write_outputs, ResultRecord, RunMeta};
use super::validate::{run_validate, ValidationReport};
use crate::channel::{ReflectionPhases, TargetPair};
use crate::error::{Error, Result};
use crate::geometry::Position3;
use crate::metrics::{fim_prefactor, probe_peb};
use crate::optimizer::{
    alternate_genie, alternate_robust, build_precoder_problem, initial_design, robust_grid, tradeoff_sweep,
    AlternatingReport, OptSettings, Scenario, TargetGrid, TradeoffTargets,
};

/// CLI subcommands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Heatmap,
    Tradeoff,
    Montecarlo,
    Validate,
}

impl Command {
    /// Mode a config runs in under this command. `solve` keeps a genie or
    /// robust config mode and otherwise follows `run.design`.
    pub fn mode_for(self, cfg: &ScenarioConfig) -> Mode {
        match self {
            Command::Solve => match (cfg.run.mode, cfg.run.design) {
                (Mode::Genie | Mode::Robust, _) => cfg.run.mode,
                (_, Scheme::Genie) => Mode::Genie,
                (_, Scheme::Robust) => Mode::Robust,
            },
            Command::Heatmap => Mode::Heatmap,
            Command::Tradeoff => Mode::Tradeoff,
            Command::Montecarlo => Mode::Montecarlo,
            Command::Validate => Mode::Validate,
        }
    }
}

/// Overrides and switches from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    /// Worker threads; `None` uses the machine parallelism.
    pub workers: Option<usize>,
    /// Also write the first precoder SDP as JSON.
    pub dump_sdp: bool,
    pub reoptimize_per_cell: bool,
}

#[derive(Debug)]
pub struct RunSummary {
    pub mode: Mode,
    pub config_hash: String,
    pub records: Vec<ResultRecord>,
    pub csv_path: Option<PathBuf>,
    pub meta_path: PathBuf,
    pub validation: Option<ValidationReport>,
}

/// Runs `cmd` with `cfg` (after overrides) and writes its outputs. The
/// config hash in the sidecar is that of the effective config.
pub fn execute(cfg: &ScenarioConfig, cmd: Command, opts: &RunOptions) -> Result<RunSummary> {
    let mut cfg = cfg.clone();
    if let Some(s) = opts.seed {
        cfg.run.seed = s;
    }
    if let Some(d) = &opts.out_dir {
        cfg.run.out_dir = d.to_string_lossy().into_owned();
    }
    cfg.run.mode = cmd.mode_for(&cfg);
    cfg.validate()?;
    let mode = cfg.run.mode;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidProblem(format!("worker pool: {e}")))?;
    let hash = cfg.hash();
    let out = PathBuf::from(&cfg.run.out_dir);
    let meta = |rows: usize| RunMeta {
        run_id: format!("{}-{}-{}", mode.as_str(), &hash[..12], cfg.run.seed),
        mode: mode.as_str().into(),
        config_hash: hash.clone(),
        seed: cfg.run.seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        rows,
    };

    if mode == Mode::Validate {
        let report = pool.install(|| run_validate(&cfg, 0.0));
        std::fs::create_dir_all(&out)?;
        std::fs::write(out.join("validate.txt"), report.table())?;
        let meta_path = out.join("validate.meta");
        write_meta(&meta_path, &meta(report.rows.len()))?;
        return Ok(RunSummary { mode, config_hash: hash, records: Vec::new(), csv_path: None, meta_path, validation: Some(report) });
    }

    if opts.dump_sdp {
        dump_precoder_sdp(&cfg, &out)?;
    }
    let records = pool.install(|| match mode {
        Mode::Genie | Mode::Robust => run_solve(&cfg),
        Mode::Heatmap => run_heatmap(&cfg, opts.reoptimize_per_cell),
        Mode::Montecarlo => Ok(run_montecarlo(&cfg)),
        Mode::Tradeoff => run_tradeoff(&cfg),
        Mode::Validate => unreachable!(),
    })?;
    let (csv_path, meta_path) = write_outputs(&out, mode.as_str(), &records, &meta(records.len()))?;
    Ok(RunSummary { mode, config_hash: hash, records, csv_path: Some(csv_path), meta_path, validation: None })
}

fn ms_since(t: Instant, record: bool) -> f64 {
    if record {
        t.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    }
}

/// Alternating design for `eta` (or regions around it) under `scheme`.
pub fn design(cfg: &ScenarioConfig, scn: &Scenario, eta: TargetPair, scheme: Scheme, rho: f64) -> Result<AlternatingReport> {
    let st = cfg.opt_settings();
    match scheme {
        Scheme::Genie => alternate_genie(scn, eta, rho, cfg.opt.r_th_bps, None, &st),
        Scheme::Robust => {
            let (ru, re) = cfg.regions(&eta)?;
            alternate_robust(scn, &ru, &re, rho, cfg.opt.r_th_bps, None, &st)
        }
    }
}

fn status_of(rep: &AlternatingReport) -> &'static str {
    if rep.converged {
        "converged"
    } else {
        "max_iters"
    }
}

fn error_status(e: &Error) -> String {
    match e {
        Error::InfeasibleSecrecy { .. } => "infeasible".into(),
        other => format!("error: {other}"),
    }
}

/// Row for a finished design; the PEB is the worst pair of its grid.
pub fn record_from_report(index: usize, position: Position3, rep: &AlternatingReport, rho: f64, n_e: usize) -> ResultRecord {
    ResultRecord {
        index,
        position,
        peb: rep.worst_peb(),
        rate_ue: rep.rate_ue,
        rate_eve: rep.rate_eve,
        secrecy_rate: rep.secrecy_rate(),
        rho,
        n_e,
        iterations: rep.n_iter(),
        status: status_of(rep).into(),
        rank1_defect: rep.rank1_defect,
        wall_ms: 0.0,
    }
}

/// One genie or robust design at the configured positions. Secrecy
/// infeasibility is an error here: the mode requires a design.
pub fn run_solve(cfg: &ScenarioConfig) -> Result<Vec<ResultRecord>> {
    let scheme = if cfg.run.mode == Mode::Robust { Scheme::Robust } else { Scheme::Genie };
    let scn = cfg.scenario(None, cfg.omega())?;
    let eta = cfg.eta();
    let t = Instant::now();
    let rep = design(cfg, &scn, eta, scheme, cfg.opt.rho)?;
    let mut r = record_from_report(0, eta.ue, &rep, cfg.opt.rho, cfg.array.n_e);
    r.wall_ms = ms_since(t, cfg.run.record_wall_time);
    Ok(vec![r])
}

/// Cell centers of the configured area, row-major with x fastest.
pub fn heatmap_cells(cfg: &ScenarioConfig) -> Vec<Position3> {
    let g = &cfg.geometry;
    let res = cfg.run.grid_resolution_m;
    let count = |r: [f64; 2]| ((r[1] - r[0]) / res + 1e-9).floor() as usize + 1;
    let (nx, ny) = (count(g.area_x_m), count(g.area_y_m));
    let mut cells = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            cells.push(Position3::new(g.area_x_m[0] + res * ix as f64, g.area_y_m[0] + res * iy as f64, g.target_z_m));
        }
    }
    cells
}

/// PEB of a probe target at every cell for a fixed optimized design.
///
/// Each row's `peb_total` is the probe's single-target PEB; the remaining
/// columns repeat the design's own figures (worst pair PEB, rates).
pub fn run_heatmap(cfg: &ScenarioConfig, reoptimize_per_cell: bool) -> Result<Vec<ResultRecord>> {
    let scn = cfg.scenario(None, cfg.omega())?;
    let rho = cfg.opt.rho;
    let n_e = cfg.array.n_e;
    let prefactor = fim_prefactor(&scn.constants, rho);
    let cells = heatmap_cells(cfg);
    let fixed = if reoptimize_per_cell { None } else { Some(design(cfg, &scn, cfg.eta(), cfg.run.design, rho)?) };
    let wall = cfg.run.record_wall_time;

    let rows = cells
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let t = Instant::now();
            let rep = match &fixed {
                Some(r) => r.clone(),
                None => match design(cfg, &scn, TargetPair::new(p, cfg.eta().eve), cfg.run.design, rho) {
                    Ok(r) => r,
                    Err(e) => return ResultRecord::failed(i, p, rho, n_e, error_status(&e)),
                },
            };
            let mut rec = record_from_report(i, p, &rep, rho, n_e);
            let d = &rep.design;
            match probe_peb(&d.f, &d.state.combiner, p, 0.0, scn.p_h, &scn.constants, &scn.layout, prefactor, scn.domain) {
                Ok(v) => rec.peb.total = v,
                Err(_) => {
                    rec.peb.total = f64::INFINITY;
                    rec.status = "degenerate".into();
                }
            }
            if reoptimize_per_cell || wall {
                rec.wall_ms = ms_since(t, wall);
            }
            rec
        })
        .collect();
    Ok(rows)
}

/// Random draw of one Monte Carlo trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialDraw {
    pub eta: TargetPair,
    pub omega: ReflectionPhases,
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..r[1])
    }
}

/// Trial `t` uses stream `t` of the ChaCha generator keyed by `seed`, so
/// draws do not depend on scheduling or on the number of trials.
pub fn draw_trial(cfg: &ScenarioConfig, seed: u64, t: usize) -> TrialDraw {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    let g = &cfg.geometry;
    let pos = |rng: &mut ChaCha8Rng| Position3::new(uniform(rng, g.area_x_m), uniform(rng, g.area_y_m), g.target_z_m);
    let ue = pos(&mut rng);
    let eve = pos(&mut rng);
    let tau = std::f64::consts::TAU;
    let omega = ReflectionPhases { ue: rng.random_range(0.0..tau), eve: rng.random_range(0.0..tau) };
    TrialDraw { eta: TargetPair::new(ue, eve), omega }
}

#[derive(Debug)]
pub struct TrialOutcome {
    pub index: usize,
    pub draw: TrialDraw,
    /// Scenario of the draw and its design.
    pub result: Result<(Scenario, AlternatingReport)>,
    pub wall_ms: f64,
}

/// All Monte Carlo trials, in index order.
pub fn montecarlo_trials(cfg: &ScenarioConfig) -> Vec<TrialOutcome> {
    (0..cfg.run.trials)
        .into_par_iter()
        .map(|t| {
            let draw = draw_trial(cfg, cfg.run.seed, t);
            let start = Instant::now();
            let result = cfg
                .scenario(None, draw.omega)
                .and_then(|scn| design(cfg, &scn, draw.eta, cfg.run.design, cfg.opt.rho).map(|rep| (scn, rep)));
            TrialOutcome { index: t, draw, result, wall_ms: ms_since(start, cfg.run.record_wall_time) }
        })
        .collect()
}

/// Failed trials are recorded with their status; the run continues.
pub fn run_montecarlo(cfg: &ScenarioConfig) -> Vec<ResultRecord> {
    montecarlo_trials(cfg)
        .into_iter()
        .map(|o| {
            let (rho, n_e) = (cfg.opt.rho, cfg.array.n_e);
            let mut rec = match &o.result {
                Ok((_, rep)) => record_from_report(o.index, o.draw.eta.ue, rep, rho, n_e),
                Err(e) => ResultRecord::failed(o.index, o.draw.eta.ue, rho, n_e, error_status(e)),
            };
            rec.wall_ms = o.wall_ms;
            rec
        })
        .collect()
}

/// One row per (N_E, scheme, ρ), in that nesting order. The status column
/// is prefixed with the scheme.
pub fn run_tradeoff(cfg: &ScenarioConfig) -> Result<Vec<ResultRecord>> {
    let st: OptSettings = cfg.opt_settings();
    let eta = cfg.eta();
    let (ru, re) = cfg.regions(&eta)?;
    let mut rows = Vec::new();
    for &n_e in &cfg.run.n_e_grid {
        let scn = cfg.scenario(Some(n_e), cfg.omega())?;
        for scheme in [Scheme::Genie, Scheme::Robust] {
            let targets = match scheme {
                Scheme::Genie => TradeoffTargets::Genie(eta),
                Scheme::Robust => TradeoffTargets::Robust { ue: ru.clone(), eve: re.clone() },
            };
            let t = Instant::now();
            let pts = tradeoff_sweep(&scn, &targets, &cfg.run.rho_grid, &st);
            let per_point = ms_since(t, cfg.run.record_wall_time) / pts.len().max(1) as f64;
            for p in pts {
                rows.push(ResultRecord {
                    index: rows.len(),
                    position: eta.ue,
                    peb: p.peb,
                    rate_ue: p.rate_ue,
                    rate_eve: p.rate_eve,
                    secrecy_rate: p.secrecy_rate,
                    rho: p.rho,
                    n_e,
                    iterations: p.iterations,
                    status: format!("{}:{}", scheme.as_str(), p.status),
                    rank1_defect: p.rank1_defect,
                    wall_ms: per_point,
                });
            }
        }
    }
    Ok(rows)
}

/// Writes the precoder SDP of the initial design to `precoder_sdp.json`.
pub fn dump_precoder_sdp(cfg: &ScenarioConfig, out: &std::path::Path) -> Result<PathBuf> {
    let scn = cfg.scenario(None, cfg.omega())?;
    let eta = cfg.eta();
    let robust = matches!(cfg.run.mode, Mode::Robust) || (cfg.run.mode != Mode::Genie && cfg.run.design == Scheme::Robust);
    let grid = if robust {
        let (ru, re) = cfg.regions(&eta)?;
        robust_grid(&scn, &ru, &re, &cfg.opt_settings())?
    } else {
        TargetGrid::genie(&scn, eta)?
    };
    let init = initial_design(&scn, &grid, cfg.opt.rho, eta.ue, eta.eve)?;
    let pp = build_precoder_problem(&scn, &grid, &init.state, cfg.opt.r_th_bps, &init.f)?;
    std::fs::create_dir_all(out)?;
    let path = out.join("precoder_sdp.json");
    std::fs::write(&path, pp.problem.to_json()?)?;
    Ok(path)
}

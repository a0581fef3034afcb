//! `qcoex` command-line front end.
//!
//! Every subcommand reads a [`RunConfig`], writes its tables and a JSON
//! report into the output directory and returns the paths written. Reports
//! carry the SHA-256 of the resolved config and no wall-clock data, so
//! identical inputs give byte-identical files.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{RunConfig, TABLE_ENV};
use crate::error::{Error, Result};
use crate::mcsim::{run_summary, simulate_events, Analyzer, ArmSim, McSummary, SimConfig};
use crate::network::ClassicalChannel;
use crate::planner::{classical_band_advisor, enumerate_plans, rank, CoexistencePlan, Routing};
use crate::raman::RamanGainTable;
use crate::rates::{delayed_window_accidentals, visibility_vs_ccr_sweep, RatePrediction};
use crate::scenario::Scenario;
use crate::source::ChannelPair;
use crate::tomo::{
    coexistence_epsilon, coexistence_state, dark_fiber_state, fidelity, mle_reconstruct, purity, simulate_counts, CountRecord,
    DensityMatrix, DensityMatrixJson, MeasurementSetting, MleOptions,
};

#[derive(Debug, Parser)]
#[command(name = "qcoex", version, about = "Raman noise, coincidence and fidelity modeling for O-band quantum channels sharing fiber with classical traffic")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Raman noise spectrum across the O-band for each configured pump.
    Spectrum(CommonArgs),
    /// Singles, coincidences, visibility and CAR per channel and power.
    Rates(CommonArgs),
    /// Visibility against coincidence rate over a μ grid.
    Sweep(CommonArgs),
    /// Choose channel pair, routing and μ.
    Plan(CommonArgs),
    /// Predicted and reconstructed two-photon states.
    Tomo(CommonArgs),
    /// Event-level Monte Carlo run checked against the analytic rates.
    Mc(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`, then `./out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Table format. JSON embeds the rows in the report instead of CSV files.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Raman gain table; overrides QCOEX_TABLE and the config.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

/// Everything a subcommand needs after config resolution.
struct Ctx {
    cfg: RunConfig,
    table: RamanGainTable,
    hash: String,
    out: PathBuf,
    seed: u64,
    format: Format,
    written: Vec<PathBuf>,
}

impl Ctx {
    fn new(args: &CommonArgs) -> Result<Self> {
        let cfg = RunConfig::from_path(&args.config)?;
        let table = cfg.resolve_table(args.table.as_deref(), std::env::var_os(TABLE_ENV))?;
        table.validate()?;
        let hash = cfg.hash(&table);
        let out = args.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&out)?;
        let seed = args.seed.unwrap_or(cfg.seed);
        Ok(Self { cfg, table, hash, out, seed, format: args.format, written: Vec::new() })
    }

    fn scenario(&self, dbm: f64) -> Scenario {
        self.cfg.scenario(&self.table, dbm)
    }

    fn write_csv<S: Serialize>(&mut self, name: &str, header: &[&str], rows: &[S]) -> Result<()> {
        let path = self.out.join(name);
        let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }

    /// Rows go to `name.csv` in CSV mode and into the report in JSON mode.
    fn table<S: Serialize>(&mut self, name: &str, header: &[&str], rows: &[S]) -> Result<Value> {
        match self.format {
            Format::Csv => {
                let file = format!("{name}.csv");
                self.write_csv(&file, header, rows)?;
                Ok(json!({ "file": file }))
            }
            Format::Json => Ok(json!({ "columns": header, "rows": rows })),
        }
    }

    fn report(&mut self, command: &str, body: Value) -> Result<()> {
        let report = json!({
            "command": command,
            "config_hash": self.hash,
            "seed": self.seed,
            "result": body,
        });
        let path = self.out.join(format!("{command}.json"));
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        self.written.push(path);
        Ok(())
    }
}

/// Power label used in file names, e.g. `18.1dBm`.
fn power_tag(dbm: f64) -> String {
    format!("{dbm:.1}dBm")
}

fn file_safe(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let (args, f): (&CommonArgs, fn(&mut Ctx) -> Result<()>) = match &cli.command {
        Command::Spectrum(a) => (a, cmd_spectrum),
        Command::Rates(a) => (a, cmd_rates),
        Command::Sweep(a) => (a, cmd_sweep),
        Command::Plan(a) => (a, cmd_plan),
        Command::Tomo(a) => (a, cmd_tomo),
        Command::Mc(a) => (a, cmd_mc),
    };
    let mut ctx = Ctx::new(args)?;
    f(&mut ctx)?;
    Ok(ctx.written)
}

/// Parse `args`, run, and map the outcome to a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("qcoex: {e}");
            e.exit_code()
        }
    }
}

#[derive(Serialize)]
struct SpectrumRow {
    pump_nm: f64,
    quantum_nm: f64,
    offset_thz: f64,
    rate_cps: f64,
}

fn cmd_spectrum(ctx: &mut Ctx) -> Result<()> {
    let s = ctx.cfg.spectrum.clone();
    let n = ((s.end_nm - s.start_nm) / s.step_nm + 1e-9).floor() as usize + 1;
    let mut rows = Vec::new();
    for &pump in &s.pumps_nm {
        let ch = ClassicalChannel { wavelength_nm: pump, launch_power_dbm: s.pump_power_dbm };
        for k in 0..n {
            let q = s.start_nm + k as f64 * s.step_nm;
            rows.push(SpectrumRow {
                pump_nm: pump,
                quantum_nm: q,
                offset_thz: crate::units::raman_offset_thz(pump, q),
                rate_cps: ctx.table.sprs_rate(&ch, q, s.bandwidth_ghz, &s.link, s.direction)?,
            });
        }
    }
    let t = ctx.table("spectrum", &["pump_nm", "quantum_nm", "offset_thz", "rate_cps"], &rows)?;
    ctx.report(
        "spectrum",
        json!({
            "pump_power_dbm": s.pump_power_dbm,
            "bandwidth_ghz": s.bandwidth_ghz,
            "link": s.link.name,
            "length_km": s.link.length_km,
            "table": t,
        }),
    )
}

#[derive(Serialize)]
struct RatesRow {
    launch_dbm: f64,
    signal_nm: f64,
    idler_nm: f64,
    routing: Routing,
    lit_nm: f64,
    mu: f64,
    noise_signal_cps: f64,
    noise_idler_cps: f64,
    singles_signal_cps: f64,
    singles_idler_cps: f64,
    true_ccps: f64,
    accidentals_ccps: f64,
    ccr_ccps: f64,
    car: f64,
    visibility: f64,
}

const RATES_HEADER: [&str; 15] = [
    "launch_dbm",
    "signal_nm",
    "idler_nm",
    "routing",
    "lit_nm",
    "mu",
    "noise_signal_cps",
    "noise_idler_cps",
    "singles_signal_cps",
    "singles_idler_cps",
    "true_ccps",
    "accidentals_ccps",
    "ccr_ccps",
    "car",
    "visibility",
];

fn cmd_rates(ctx: &mut Ctx) -> Result<()> {
    let cfg = &ctx.cfg;
    let pump = cfg.source.pump_nm;
    let signals = if cfg.rates.signal_nm.is_empty() { vec![cfg.channel_pair.signal_nm] } else { cfg.rates.signal_nm.clone() };
    let routings = if cfg.rates.routings.is_empty() { vec![cfg.routing] } else { cfg.rates.routings.clone() };
    let mut rows = Vec::new();
    for &p in &cfg.launch_powers_dbm {
        let sc = ctx.scenario(p);
        for &s in &signals {
            let pair = ChannelPair::from_signal(s, cfg.channel_pair.bandwidth_ghz, pump)?;
            for &r in &routings {
                let arms = sc.arms(&pair, r.switch())?;
                let mu = match cfg.rates.target_ccr_ccps {
                    Some(t) => sc.mu_for_ccr(&pair, r.switch(), t)?,
                    None => cfg.source.mu,
                };
                let pr = sc.predict_arms(&arms, mu)?;
                rows.push(RatesRow {
                    launch_dbm: p,
                    signal_nm: pair.signal.center_nm,
                    idler_nm: pair.idler.center_nm,
                    routing: r,
                    lit_nm: if r == Routing::SignalOnLit { pair.signal.center_nm } else { pair.idler.center_nm },
                    mu,
                    noise_signal_cps: arms.signal.noise_cps,
                    noise_idler_cps: arms.idler.noise_cps,
                    singles_signal_cps: pr.singles_signal,
                    singles_idler_cps: pr.singles_idler,
                    true_ccps: pr.true_coincidences,
                    accidentals_ccps: pr.accidentals,
                    ccr_ccps: pr.ccr,
                    car: pr.car,
                    visibility: pr.visibility_hv,
                });
            }
        }
    }
    let t = ctx.table("rates", &RATES_HEADER, &rows)?;
    ctx.report("rates", json!({ "table": t }))
}

#[derive(Serialize)]
struct SweepRow {
    mu: f64,
    ccr_ccps: f64,
    visibility: f64,
    car: f64,
    accidentals_ccps: f64,
}

fn cmd_sweep(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg.clone();
    let curves = if cfg.sweep.curves.is_empty() {
        vec![crate::config::CurveSpec {
            label: format!("{:.0}", cfg.channel_pair.signal_nm),
            signal_nm: cfg.channel_pair.signal_nm,
            routing: cfg.routing,
        }]
    } else {
        cfg.sweep.curves.clone()
    };
    let mus = cfg.sweep.mu_grid();
    let mut out = Vec::new();
    for &p in &cfg.launch_powers_dbm {
        let sc = ctx.scenario(p);
        for c in &curves {
            let pair = ChannelPair::from_signal(c.signal_nm, cfg.channel_pair.bandwidth_ghz, cfg.source.pump_nm)?;
            let arms = sc.arms(&pair, c.routing.switch())?;
            let pts = visibility_vs_ccr_sweep(&sc.source, sc.pair_weight, &arms.signal, &arms.idler, &sc.coincidence, &mus)?;
            let rows: Vec<SweepRow> = pts
                .iter()
                .map(|q| SweepRow { mu: q.mu, ccr_ccps: q.ccr_ccps, visibility: q.visibility, car: q.car, accidentals_ccps: q.accidentals_ccps })
                .collect();
            let name = format!("sweep_{}_{}", file_safe(&c.label), power_tag(p));
            let t = ctx.table(&name, &["mu", "ccr_ccps", "visibility", "car", "accidentals_ccps"], &rows)?;
            out.push(json!({ "label": c.label, "launch_dbm": p, "routing": c.routing, "signal_nm": pair.signal.center_nm, "idler_nm": pair.idler.center_nm, "table": t }));
        }
    }
    ctx.report("sweep", json!({ "curves": out }))
}

#[derive(Serialize)]
struct PlanSummary {
    signal_nm: f64,
    idler_nm: f64,
    routing: Routing,
    mu: f64,
    visibility: f64,
    ccr_ccps: f64,
    fidelity: f64,
    sprs_singles_cps: f64,
    score: f64,
}

fn summarize(p: &CoexistencePlan, objective: crate::planner::Objective) -> PlanSummary {
    PlanSummary {
        signal_nm: p.pair.signal.center_nm,
        idler_nm: p.pair.idler.center_nm,
        routing: p.routing,
        mu: p.mu,
        visibility: p.prediction.visibility_hv,
        ccr_ccps: p.prediction.ccr,
        fidelity: p.fidelity,
        sprs_singles_cps: p.sprs_singles_cps,
        score: p.score(objective),
    }
}

fn cmd_plan(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg.clone();
    let pc = &cfg.planner;
    let grid = pc.grid(cfg.source.pump_nm);
    let mut per_power = Vec::new();
    let mut first_err = None;
    for &p in &cfg.launch_powers_dbm {
        let sc = ctx.scenario(p);
        let plans = enumerate_plans(&grid, &sc, &pc.dark)?;
        match rank(&plans, &pc.constraints, pc.objective) {
            Ok(ranked) => {
                let best = &ranked[0];
                per_power.push(json!({
                    "launch_dbm": p,
                    "candidates": plans.len(),
                    "feasible": ranked.len(),
                    "chosen": summarize(best, pc.objective),
                    "prediction": best.prediction,
                    "runners_up": ranked.iter().skip(1).take(pc.runners_up).map(|x| summarize(x, pc.objective)).collect::<Vec<_>>(),
                }));
            }
            Err(Error::Infeasible { binding }) => {
                per_power.push(json!({ "launch_dbm": p, "candidates": plans.len(), "feasible": 0, "binding_constraints": binding }));
                first_err.get_or_insert(Error::Infeasible { binding });
            }
            Err(e) => return Err(e),
        }
    }
    let advisor = match &pc.advisor {
        Some(a) => {
            let link = cfg
                .network
                .classical_plan
                .as_ref()
                .and_then(|pl| pl.assignments.first())
                .and_then(|asg| cfg.network.link(&asg.link))
                .or_else(|| cfg.network.links.first().map(|l| &l.fiber))
                .ok_or_else(|| Error::Topology("no link for the band advisor".into()))?;
            let ranked = classical_band_advisor(&ctx.table, a.quantum_nm, &a.bands, link, a.bandwidth_ghz)?;
            json!({ "quantum_nm": a.quantum_nm, "link": link.name, "ranking": ranked })
        }
        None => Value::Null,
    };
    ctx.report(
        "plan",
        json!({
            "objective": pc.objective,
            "constraints": pc.constraints,
            "pairs": grid.pairs.len(),
            "mu_points": grid.mu_grid.len(),
            "plans": per_power,
            "advisor": advisor,
        }),
    )?;
    match first_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct CountRow {
    setting_label: String,
    counts: u64,
    seconds: f64,
}

/// Parse a `setting_label,counts,seconds` table.
pub fn read_counts_csv(path: &Path) -> Result<Vec<CountRecord>> {
    #[derive(Deserialize)]
    struct Row {
        setting_label: String,
        counts: u64,
        seconds: f64,
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<Row>()
        .map(|row| {
            let row = row?;
            Ok(CountRecord { setting: MeasurementSetting::parse(&row.setting_label)?, counts: row.counts, seconds: row.seconds })
        })
        .collect()
}

fn state_json(rho: &DensityMatrix) -> DensityMatrixJson {
    rho.to_json_value()
}

fn cmd_tomo(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg.clone();
    let tc = &cfg.tomo;
    let pair = cfg.channel_pair.resolve(cfg.source.pump_nm)?;
    let switch = cfg.routing.switch();
    let rho_dark = dark_fiber_state(tc.dark.model, tc.dark.fidelity)?;
    let phi = DensityMatrix::phi_plus();
    let settings = MeasurementSetting::complete_set(2);
    let opts = MleOptions { tolerance: tc.mle_tolerance, max_iterations: tc.mle_max_iterations };

    let mut entries = Vec::new();
    for (k, &p) in cfg.launch_powers_dbm.iter().enumerate() {
        let sc = ctx.scenario(p);
        let quiet = sc.without_classical();
        let mu = match tc.target_ccr_ccps {
            Some(t) => sc.mu_for_ccr(&pair, switch, t)?,
            None => cfg.source.mu,
        };
        let coex = sc.predict(&pair, switch, mu)?;
        let dark = quiet.predict(&pair, switch, mu)?;
        let eps = coexistence_epsilon(&coex, &dark)?;
        let rho = coexistence_state(&rho_dark, eps)?;
        let mut entry = json!({
            "launch_dbm": p,
            "mu": mu,
            "ccr_ccps": coex.ccr,
            "epsilon": eps,
            "fidelity_to_dark": fidelity(&rho_dark, &rho)?,
            "fidelity_to_phi_plus": fidelity(&phi, &rho)?,
            "purity": purity(&rho),
            "predicted_state": state_json(&rho),
        });
        if tc.counts_per_setting > 0.0 {
            let seed = ctx.seed.wrapping_add(k as u64);
            let counts = simulate_counts(&rho, &settings, tc.counts_per_setting, tc.noise_floor, tc.seconds_per_setting, seed)?;
            let rows: Vec<CountRow> =
                counts.iter().map(|c| CountRow { setting_label: c.setting.label(), counts: c.counts, seconds: c.seconds }).collect();
            let t = ctx.table(&format!("tomo_counts_{}", power_tag(p)), &["setting_label", "counts", "seconds"], &rows)?;
            let rec = mle_reconstruct(&counts, 4, opts)?;
            entry["counts"] = t;
            entry["reconstruction"] = json!({
                "iterations": rec.iterations,
                "log_likelihood": rec.log_likelihood,
                "fidelity_to_predicted": fidelity(&rho, &rec.state)?,
                "fidelity_to_dark": fidelity(&rho_dark, &rec.state)?,
                "purity": purity(&rec.state),
                "state": state_json(&rec.state),
            });
        }
        entries.push(entry);
    }
    ctx.report(
        "tomo",
        json!({
            "signal_nm": pair.signal.center_nm,
            "idler_nm": pair.idler.center_nm,
            "routing": cfg.routing,
            "dark_model": tc.dark,
            "dark_state": state_json(&rho_dark),
            "powers": entries,
        }),
    )
}

/// Monte Carlo arm matching an analytic arm.
fn arm_sim(arm: &crate::rates::ArmConfig) -> ArmSim {
    ArmSim {
        eta_total: arm.eta_total(),
        noise_cps: arm.noise_cps * arm.detector.efficiency,
        dark_cps: arm.detector.dark_rate_cps,
        jitter_fwhm_ps: arm.detector.jitter_fwhm_ps,
        analyzer: Analyzer::Open,
    }
}

/// Simulation config reproducing `scenario` for `pair` at the source's μ.
pub fn sim_config(scenario: &Scenario, pair: &ChannelPair, routing: Routing, mc: &crate::config::McConfig, seed: u64) -> Result<SimConfig> {
    let arms = scenario.arms(pair, routing.switch())?;
    Ok(SimConfig {
        n_pulses: mc.n_pulses,
        seed,
        rep_rate_hz: scenario.source.rep_rate_hz,
        mu: scenario.source.mu * scenario.pair_weight,
        statistics: mc.statistics,
        phase_rad: scenario.source.phase_rad,
        pulse_fwhm_ps: scenario.source.pulse_fwhm_ps,
        signal: arm_sim(&arms.signal),
        idler: arm_sim(&arms.idler),
        window_ps: scenario.coincidence.window_ps,
        block_pulses: mc.block_pulses,
    })
}

#[derive(Serialize)]
struct Check {
    quantity: &'static str,
    analytic: f64,
    simulated: f64,
    stderr: f64,
    z: f64,
}

fn check(quantity: &'static str, analytic: f64, simulated: f64, stderr: f64) -> Check {
    let z = if stderr > 0.0 { (simulated - analytic) / stderr } else if simulated == analytic { 0.0 } else { f64::INFINITY };
    Check { quantity, analytic, simulated, stderr, z }
}

fn cmd_mc(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg.clone();
    let p = cfg.mc.launch_dbm.or_else(|| cfg.launch_powers_dbm.first().copied());
    let sc = match p {
        Some(p) => ctx.scenario(p),
        None => ctx.scenario(0.0).without_classical(),
    };
    let pair = cfg.channel_pair.resolve(cfg.source.pump_nm)?;
    let sim = sim_config(&sc, &pair, cfg.routing, &cfg.mc, ctx.seed)?;
    let s: McSummary = run_summary(&sim)?;
    let a: RatePrediction = sc.predict(&pair, cfg.routing.switch(), cfg.source.mu)?;
    let arms = sc.arms(&pair, cfg.routing.switch())?;
    let delayed = delayed_window_accidentals(&sc.source, sc.pair_weight, &arms.signal, &arms.idler, &sc.coincidence)?;
    let t = s.duration_s;
    let checks = vec![
        check("singles_signal_cps", a.singles_signal, s.singles_signal_cps, (s.singles_signal_cps / t).sqrt()),
        check("singles_idler_cps", a.singles_idler, s.singles_idler_cps, (s.singles_idler_cps / t).sqrt()),
        check("ccr_ccps", a.ccr, s.ccr_ccps, s.ccr_stderr),
        check("accidentals_ccps", delayed, s.accidentals_ccps, s.accidentals_stderr),
        check("visibility", a.visibility_hv, s.visibility, s.visibility_stderr),
    ];
    if cfg.mc.write_events {
        let (es, ei) = simulate_events(&sim)?;
        let path = ctx.out.join("mc_events.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["arm", "t_ps", "tag"])?;
        es.write_csv(&mut w)?;
        ei.write_csv(&mut w)?;
        w.flush()?;
        ctx.written.push(path);
    }
    ctx.report(
        "mc",
        json!({
            "launch_dbm": p,
            "signal_nm": pair.signal.center_nm,
            "idler_nm": pair.idler.center_nm,
            "routing": cfg.routing,
            "simulation": sim,
            "summary": s,
            "checks": checks,
        }),
    )
}

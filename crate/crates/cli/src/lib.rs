//! Pipeline stages behind the `stackbess` binary. Each stage reads the
//! previous stage's files from the output directory.

pub mod bundle;
pub mod config;

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::info;
use stackbess::forecasting::{
    clear_sky_pv, gross_load_forecast, net_load_forecast, select_similar_days,
};
use stackbess::io::{read_history_dir, read_price_scenario, read_series_file, write_series_file};
use stackbess::reporting::realized_costs;
use stackbess::scheduler::solve_day_ahead;
use stackbess::simulator::{noisy_realization, run_closed_loop, SimConfig};
use stackbess::synthetic::{midnight, scenario_set};
use stackbess::{
    Error, ForecastTarget, ScenarioSet, Schedule, SimTrace, TariffBook, TimeGrid, TimeSeries, Unit,
};

pub use config::RunConfig;

pub const L_HAT_FILE: &str = "l_hat.csv";
pub const GROSS_HAT_FILE: &str = "gross_hat.csv";
pub const PV_HAT_FILE: &str = "pv_hat.csv";
pub const SCHEDULE_FILE: &str = "schedule.csv";
pub const SCHEDULE_SUMMARY_FILE: &str = "schedule_summary.txt";
pub const TRACE_FILE: &str = "trace.csv";
pub const TRACE_SUMMARY_FILE: &str = "trace_summary.txt";
pub const ALARMS_FILE: &str = "alarms.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const INTERVAL_ERRORS_FILE: &str = "interval_errors.csv";

/// Offset between the activation and load-noise seeds so the two streams
/// never coincide.
const NOISE_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Forecast,
    Schedule,
    Simulate,
    Report,
}

#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or input data.
    Config(anyhow::Error),
    /// The day-ahead program has no usable solution.
    Infeasible(anyhow::Error),
    /// Anything else, e.g. an output directory that cannot be written.
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Runtime(_) => 1,
            Failure::Config(_) => 2,
            Failure::Infeasible(_) => 3,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::Infeasible(e) | Failure::Runtime(e) => e,
        }
    }
}

type StageResult<T> = std::result::Result<T, Failure>;

trait Classify<T> {
    fn input(self, what: impl FnOnce() -> String) -> StageResult<T>;
    fn output(self, what: impl FnOnce() -> String) -> StageResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for std::result::Result<T, E> {
    fn input(self, what: impl FnOnce() -> String) -> StageResult<T> {
        self.map_err(|e| Failure::Config(e.into().context(what())))
    }

    fn output(self, what: impl FnOnce() -> String) -> StageResult<T> {
        self.map_err(|e| Failure::Runtime(e.into().context(what())))
    }
}

/// Run one stage, writing into `out`. Returns the files written.
pub fn run_pipeline(cfg: &RunConfig, stage: Stage, out: &Path) -> StageResult<Vec<PathBuf>> {
    fs::create_dir_all(out).output(|| format!("creating output directory {}", out.display()))?;
    match stage {
        Stage::Forecast => forecast(cfg, out),
        Stage::Schedule => schedule(cfg, out),
        Stage::Simulate => simulate(cfg, out),
        Stage::Report => report(cfg, out),
    }
}

fn day_grid(cfg: &RunConfig) -> TimeGrid {
    TimeGrid::day_ahead(midnight(cfg.date))
}

fn tariff_book(cfg: &RunConfig) -> StageResult<TariffBook> {
    let tariffs = cfg.tariffs().map_err(Failure::Config)?;
    TariffBook::time_of_use(day_grid(cfg), &tariffs.time_of_use())
        .input(|| "building the tariff book".into())
}

/// A 15-min input series that must cover the configured day.
fn read_day_series(cfg: &RunConfig, path: &Path, unit: Unit) -> StageResult<TimeSeries> {
    let s = read_series_file(path, unit).input(|| format!("reading {}", path.display()))?;
    if *s.grid() != day_grid(cfg) {
        return Err(Failure::Config(anyhow!(
            "{} covers {} steps of {} s from {}, expected the 96 quarter-hours of {}",
            path.display(),
            s.len(),
            s.grid().step_seconds(),
            s.grid().start(),
            cfg.date
        )));
    }
    Ok(s)
}

fn write_file(
    path: PathBuf,
    write: impl FnOnce(BufWriter<fs::File>) -> stackbess::Result<()>,
) -> StageResult<PathBuf> {
    let file = fs::File::create(&path).output(|| format!("creating {}", path.display()))?;
    write(BufWriter::new(file)).output(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn write_text(path: PathBuf, text: &str) -> StageResult<PathBuf> {
    fs::write(&path, text).output(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn forecast(cfg: &RunConfig, out: &Path) -> StageResult<Vec<PathBuf>> {
    let history = read_history_dir(&cfg.paths.history_dir)
        .input(|| format!("reading history from {}", cfg.paths.history_dir.display()))?;
    let target = ForecastTarget {
        date: cfg.date,
        day_type: cfg.day_type().map_err(Failure::Config)?,
        mean_irradiance: cfg.forecast.mean_irradiance_wm2,
        mean_temperature: cfg.forecast.mean_temperature_c,
    };
    let selected = select_similar_days(&history, &target, &cfg.forecast_config())
        .input(|| "selecting similar days".into())?;
    info!(
        "similar days: {}",
        selected
            .iter()
            .map(|d| d.date.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    let averaged = gross_load_forecast(&selected).input(|| "averaging similar days".into())?;
    let grid = day_grid(cfg);
    let gross = TimeSeries::new(grid, averaged.into_values(), Unit::Kw)
        .input(|| "history days are not 96 quarter-hours long".into())?;
    let pv = match &cfg.forecast.pv {
        config::PvSource::Replay { path } => read_day_series(cfg, path, Unit::Kw)?,
        config::PvSource::ClearSky {
            capacity_kw,
            sunrise_h,
            sunset_h,
        } => clear_sky_pv(grid, *capacity_kw, *sunrise_h, *sunset_h)
            .input(|| "clear-sky PV proxy".into())?,
    };
    let l_hat = net_load_forecast(&gross, &pv).input(|| "net-load forecast".into())?;
    info!("net-load forecast peaks at {:.2} kW", l_hat.max());
    let mut written = Vec::new();
    for (name, s) in [
        (L_HAT_FILE, &l_hat),
        (GROSS_HAT_FILE, &gross),
        (PV_HAT_FILE, &pv),
    ] {
        let path = out.join(name);
        write_series_file(&path, s).output(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

fn stage_input(out: &Path, name: &str, producer: &str) -> StageResult<PathBuf> {
    let path = out.join(name);
    if path.is_file() {
        Ok(path)
    } else {
        Err(Failure::Config(anyhow!(
            "{} not found; run `{producer}` with the same --out first",
            path.display()
        )))
    }
}

fn scenarios(cfg: &RunConfig, book: &TariffBook) -> StageResult<ScenarioSet> {
    if cfg.paths.scenarios.is_empty() {
        return Ok(ScenarioSet::none(book.grid().steps()));
    }
    let mut prices = Vec::new();
    for p in &cfg.paths.scenarios {
        let (up, down) =
            read_price_scenario(p).input(|| format!("reading scenario {}", p.display()))?;
        if *up.grid() != *book.grid() {
            return Err(Failure::Config(anyhow!(
                "scenario {} does not cover the 96 quarter-hours of {}",
                p.display(),
                cfg.date
            )));
        }
        prices.push((up, down));
    }
    scenario_set(&prices, book).input(|| "thresholding price scenarios".into())
}

fn schedule(cfg: &RunConfig, out: &Path) -> StageResult<Vec<PathBuf>> {
    let l_hat = read_day_series(cfg, &stage_input(out, L_HAT_FILE, "forecast")?, Unit::Kw)?;
    let book = tariff_book(cfg)?;
    let scen = scenarios(cfg, &book)?;
    let battery = cfg.battery().map_err(Failure::Config)?;
    let site = cfg.site().map_err(Failure::Config)?;
    let s = match solve_day_ahead(&l_hat, &battery, &site, &book, &scen) {
        Ok(s) => s,
        Err(e @ (Error::Infeasible(_) | Error::ResourceExhausted { .. })) => {
            return Err(Failure::Infeasible(
                anyhow::Error::new(e).context("day-ahead scheduling"),
            ))
        }
        Err(e) => {
            return Err(Failure::Runtime(
                anyhow::Error::new(e).context("day-ahead scheduling"),
            ))
        }
    };
    info!(
        "schedule: objective {:.2} CHF, peak {:.2} kW over {} scenarios",
        s.objective_chf,
        s.p_peak_shave,
        s.scenarios.len()
    );
    Ok(vec![
        write_file(out.join(SCHEDULE_FILE), |w| s.write_csv(w))?,
        write_text(out.join(SCHEDULE_SUMMARY_FILE), &s.summary())?,
    ])
}

fn read_schedule(out: &Path) -> StageResult<Schedule> {
    let csv = stage_input(out, SCHEDULE_FILE, "schedule")?;
    let summary_path = stage_input(out, SCHEDULE_SUMMARY_FILE, "schedule")?;
    let summary = fs::read_to_string(&summary_path)
        .input(|| format!("reading {}", summary_path.display()))?;
    let file = fs::File::open(&csv).input(|| format!("opening {}", csv.display()))?;
    Schedule::read_csv(std::io::BufReader::new(file), &summary)
        .input(|| format!("reading {}", csv.display()))
}

fn simulate(cfg: &RunConfig, out: &Path) -> StageResult<Vec<PathBuf>> {
    let schedule = read_schedule(out)?;
    if *schedule.l_hat.grid() != day_grid(cfg) {
        return Err(Failure::Config(anyhow!(
            "schedule in {} is not for {}",
            out.display(),
            cfg.date
        )));
    }
    let truth = match &cfg.paths.realization {
        Some(p) => read_day_series(cfg, p, Unit::Kw)?,
        None => schedule.l_hat.clone(),
    };
    let realization = noisy_realization(
        &truth,
        cfg.simulation.noise_kw,
        cfg.seed.wrapping_add(NOISE_SEED_OFFSET),
    )
    .input(|| "building the 30-s realization".into())?;
    let book = tariff_book(cfg)?;
    let sim = SimConfig {
        activation: cfg.into(),
        plant_eta: cfg.simulation.plant_eta,
    };
    let battery = cfg.battery().map_err(Failure::Config)?;
    let site = cfg.site().map_err(Failure::Config)?;
    let trace = run_closed_loop(&schedule, &realization, &book, &sim, &battery, &site)
        .map_err(|e| Failure::Runtime(anyhow::Error::new(e).context("closed-loop simulation")))?;
    info!(
        "simulated {} steps, {} clamp events, {} alarms",
        trace.len(),
        trace.clamp_events(),
        trace.alarms.len()
    );
    Ok(vec![
        write_file(out.join(TRACE_FILE), |w| trace.write_csv(w))?,
        write_text(out.join(TRACE_SUMMARY_FILE), &trace.summary())?,
        write_file(out.join(ALARMS_FILE), |w| trace.write_alarms(w))?,
    ])
}

fn read_trace(out: &Path) -> StageResult<SimTrace> {
    let csv = stage_input(out, TRACE_FILE, "simulate")?;
    let summary_path = stage_input(out, TRACE_SUMMARY_FILE, "simulate")?;
    let alarms_path = stage_input(out, ALARMS_FILE, "simulate")?;
    let summary = fs::read_to_string(&summary_path)
        .input(|| format!("reading {}", summary_path.display()))?;
    let file = fs::File::open(&csv).input(|| format!("opening {}", csv.display()))?;
    let mut trace = SimTrace::read_csv(std::io::BufReader::new(file), &summary)
        .input(|| format!("reading {}", csv.display()))?;
    let file =
        fs::File::open(&alarms_path).input(|| format!("opening {}", alarms_path.display()))?;
    trace.alarms = SimTrace::read_alarms(std::io::BufReader::new(file))
        .input(|| format!("reading {}", alarms_path.display()))?;
    Ok(trace)
}

fn report(cfg: &RunConfig, out: &Path) -> StageResult<Vec<PathBuf>> {
    let trace = read_trace(out)?;
    let book = tariff_book(cfg)?;
    let report =
        realized_costs(&trace, &book).input(|| "trace does not match the configured day".into())?;
    let text = format!("{}\n{report}\n", cfg.date);
    print!("{text}");
    Ok(vec![
        write_text(out.join(REPORT_FILE), &text)?,
        write_file(out.join(INTERVAL_ERRORS_FILE), |w| {
            report.write_interval_errors(w)
        })?,
    ])
}

impl Stage {
    pub fn all() -> [Stage; 4] {
        [
            Stage::Forecast,
            Stage::Schedule,
            Stage::Simulate,
            Stage::Report,
        ]
    }
}

/// Load the config and run one stage; `seed` and `out` override the file.
pub fn run(
    config: &Path,
    stage: Stage,
    seed: Option<u64>,
    out: Option<&Path>,
) -> StageResult<Vec<PathBuf>> {
    let mut cfg = RunConfig::load(config)
        .with_context(|| "invalid configuration".to_string())
        .map_err(Failure::Config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| cfg.paths.output_dir.clone());
    run_pipeline(&cfg, stage, &out)
}

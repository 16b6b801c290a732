//! Run configuration: one TOML file with a section per stage. Relative
//! paths resolve against the directory holding the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use serde::Deserialize;
use stackbess::markets::TimeOfUse;
use stackbess::simulator::ActivationConfig;
use stackbess::{BatteryParams, DayType, ForecastConfig, SiteParams};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Day to plan and simulate.
    pub date: NaiveDate,
    /// Defaults to the calendar rule (Mon-Fri working).
    #[serde(default)]
    pub day_type: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub paths: Paths,
    pub battery: BatterySection,
    pub site: SiteSection,
    pub forecast: ForecastSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub activation: ActivationSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub history_dir: PathBuf,
    pub tariffs: PathBuf,
    /// Raw aFRR price scenarios, equiprobable. Empty means no aFRR.
    #[serde(default)]
    pub scenarios: Vec<PathBuf>,
    /// Measured 15-min net load of the day. Without it the forecast is
    /// taken as the truth.
    #[serde(default)]
    pub realization: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatterySection {
    pub e_nom_kwh: f64,
    pub e_min_kwh: f64,
    pub e_max_kwh: f64,
    pub b_max_kw: f64,
    pub eta: f64,
    pub soe0_kwh: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSection {
    pub transformer_kw: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastSection {
    #[serde(default = "default_n_similar")]
    pub n_similar: usize,
    #[serde(default = "default_weights")]
    pub meteo_weights: [f64; 2],
    #[serde(default = "default_recency")]
    pub recency_window: usize,
    /// Expected weather of the target day.
    pub mean_irradiance_wm2: f64,
    pub mean_temperature_c: f64,
    pub pv: PvSource,
}

fn default_n_similar() -> usize {
    ForecastConfig::default().n_similar
}

fn default_weights() -> [f64; 2] {
    let (a, b) = ForecastConfig::default().meteo_weights;
    [a, b]
}

fn default_recency() -> usize {
    ForecastConfig::default().recency_window
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum PvSource {
    /// Replay a 15-min PV forecast file.
    Replay { path: PathBuf },
    ClearSky {
        capacity_kw: f64,
        sunrise_h: f64,
        sunset_h: f64,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    /// Half-width of the uniform 30-s load noise, kW.
    #[serde(default)]
    pub noise_kw: f64,
    /// Plant efficiency when it differs from the model's.
    #[serde(default)]
    pub plant_eta: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivationSection {
    pub p_up: f64,
    pub p_down: f64,
    pub price_low: f64,
    pub price_high: f64,
}

impl Default for ActivationSection {
    fn default() -> Self {
        let a = ActivationConfig::default();
        Self {
            p_up: a.p_up,
            p_down: a.p_down,
            price_low: a.price_low,
            price_high: a.price_high,
        }
    }
}

/// Tariff file contents.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffFile {
    pub peak_chf_per_kwh: f64,
    pub off_peak_chf_per_kwh: f64,
    pub peak_start_h: f64,
    pub peak_end_h: f64,
    pub feed_in_chf_per_kwh: f64,
    pub power_chf_per_kw_day: f64,
}

impl TariffFile {
    pub fn time_of_use(&self) -> TimeOfUse {
        TimeOfUse {
            peak: self.peak_chf_per_kwh,
            off_peak: self.off_peak_chf_per_kwh,
            peak_start_h: self.peak_start_h,
            peak_end_h: self.peak_end_h,
            feed_in: self.feed_in_chf_per_kwh,
            power_per_day: self.power_chf_per_kw_day,
        }
    }
}

impl RunConfig {
    /// Parse, resolve relative paths, and check the referenced inputs exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.history_dir);
        fix(&mut self.paths.tariffs);
        self.paths.scenarios.iter_mut().for_each(fix);
        if let Some(p) = self.paths.realization.as_mut() {
            fix(p);
        }
        fix(&mut self.paths.output_dir);
        if let PvSource::Replay { path } = &mut self.forecast.pv {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut inputs = vec![&self.paths.tariffs];
        inputs.extend(&self.paths.scenarios);
        inputs.extend(&self.paths.realization);
        if let PvSource::Replay { path } = &self.forecast.pv {
            inputs.push(path);
        }
        for p in inputs {
            if !p.is_file() {
                bail!("input file {} does not exist", p.display());
            }
        }
        if !self.paths.history_dir.is_dir() {
            bail!(
                "history directory {} does not exist",
                self.paths.history_dir.display()
            );
        }
        self.day_type()?;
        self.battery()?;
        self.site()?;
        self.forecast_config().validate()?;
        ActivationConfig::from(self).validate()?;
        if !(self.simulation.noise_kw >= 0.0 && self.simulation.noise_kw.is_finite()) {
            bail!("simulation.noise_kw must be finite and non-negative");
        }
        if let Some(eta) = self.simulation.plant_eta {
            if !(eta > 0.0 && eta <= 1.0) {
                bail!("simulation.plant_eta must lie in (0, 1]");
            }
        }
        Ok(())
    }

    pub fn day_type(&self) -> Result<DayType> {
        match &self.day_type {
            Some(s) => Ok(s.parse()?),
            None => Ok(DayType::of(self.date)),
        }
    }

    pub fn battery(&self) -> Result<BatteryParams> {
        let b = &self.battery;
        Ok(BatteryParams::new(
            b.e_nom_kwh,
            b.e_min_kwh,
            b.e_max_kwh,
            b.b_max_kw,
            b.eta,
            b.soe0_kwh,
        )?)
    }

    pub fn site(&self) -> Result<SiteParams> {
        Ok(SiteParams::new(
            self.site.transformer_kw,
            self.battery.b_max_kw,
        )?)
    }

    pub fn forecast_config(&self) -> ForecastConfig {
        let [a, b] = self.forecast.meteo_weights;
        ForecastConfig {
            n_similar: self.forecast.n_similar,
            meteo_weights: (a, b),
            recency_window: self.forecast.recency_window,
        }
    }

    pub fn tariffs(&self) -> Result<TariffFile> {
        let p = &self.paths.tariffs;
        let text = std::fs::read_to_string(p)
            .with_context(|| format!("reading tariffs {}", p.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing tariffs {}", p.display()))
    }
}

impl From<&RunConfig> for ActivationConfig {
    fn from(cfg: &RunConfig) -> Self {
        let a = &cfg.activation;
        ActivationConfig {
            p_up: a.p_up,
            p_down: a.p_down,
            price_low: a.price_low,
            price_high: a.price_high,
            seed: cfg.seed,
        }
    }
}

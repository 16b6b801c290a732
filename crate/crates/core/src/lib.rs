//! Scheduling and real-time control of a behind-the-meter battery that
//! stacks local services with secondary frequency regulation.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod forecasting;
pub mod io;
pub mod markets;
pub mod mpc;
pub mod reporting;
pub mod scheduler;
pub mod series;
pub mod simulator;
pub mod solver;
pub mod synthetic;

pub use error::{Error, Result};
pub use forecasting::{DayType, ForecastConfig, ForecastTarget, HistoryDay};
pub use markets::{Premium, Scenario, ScenarioSet, TariffBook, ThresholdedPremium};
pub use mpc::{MpcDecision, MpcState, MpcTerms};
pub use reporting::{DayReport, PeakMetrics};
pub use scheduler::{BatteryParams, Schedule};
pub use series::{SiteParams, TimeGrid, TimeSeries, Unit};
pub use simulator::{ActivationConfig, PlantState, SimConfig, SimTrace};
pub use solver::{LinearProgram, MilpOptions, Solution, Status};

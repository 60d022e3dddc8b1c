//! Residential EV charging coordination and transformer hosting-capacity
//! analysis.
//!
//! * [`model`]: time grid, tariff, transformers, charger/EV/coordination parameters.
//! * [`scenario`]: commuter PMF, SOC sampling, scenario assembly.
//! * [`coordinator`]: exact cost-optimal scheduling, independent verification,
//!   brute-force reference solver and the explicit integer program.
//! * [`hostcap`]: decrement-until-feasible search, Monte Carlo campaigns and
//!   summary statistics.
//! * [`io`]: CSV/JSON ingestion, synthetic load profiles and reports.

pub mod coordinator;
pub mod error;
pub mod hostcap;
pub mod io;
pub mod model;
pub mod scenario;
pub mod seeding;

pub use coordinator::{
    brute_force_oracle, build_ilp, solve, solve_for, verify_schedule, ChargingSchedule,
    CoordinationResult, Goal, SolveStatus, SwitchIndicators,
};
pub use error::{Error, Result};
pub use hostcap::{
    aggregate, max_supported_evs, run_campaign, AggregateStats, CampaignSpec, EvalStatus,
    EvaluationRecord,
};
pub use model::{
    desired_ev_count, ChargerSpec, CoordinationParams, EvSpec, LoadProfile, TimeGrid, TouTariff,
    Transformer,
};
pub use scenario::{EvSession, JointCommutePmf, Scenario, SocDistributions};

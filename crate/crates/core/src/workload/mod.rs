//! Embedded measurement tables and the arithmetic built on them.

pub mod ablation;
pub mod fixtures;
pub mod model;
pub mod regime;
pub mod verify;

pub use ablation::{best_static, compute_slowdowns, AblationRow};
pub use fixtures::{checksums, Fixtures};
pub use model::{fit_latency_model, predict_speedup, LatencyModel, LatencyTable, SweepPoint};
pub use regime::{analyze_mixed_regime, MixedRegimeReport, RegimeRecord};
pub use verify::{verify_fixtures, FixtureCheck};

//! Splitting, negative mining, optimization and the training schedule.

mod adam;
mod config;
mod mining;
mod split;
mod temporal;
mod trainer;

pub use adam::{Adam, AdamConfig, NonFiniteGradient};
pub use config::{parse_key_values, ConfigError, TrainConfig, TRAIN_KEYS};
pub use mining::{mine_negatives, top_quartile, CurriculumSchedule};
pub use split::{test_count, year_stratified_split, Split, SplitSpec};
pub use temporal::{temporal_window_runs, window_end_years, WindowData, WindowOutcome, MIN_WINDOW_TRAIN};
pub use trainer::{init_model, item_gradient, train_all, train_family, Bases, EpochStats, StopReason, TrainError, TrainRunReport, TRAIN_ORDER};

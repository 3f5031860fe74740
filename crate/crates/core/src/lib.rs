//! Derivative-free optimization by cyclic switching between two bounded
//! vector fields built from cost evaluations only. A single macro-step of
//! `4n` micro-steps approximates a gradient-descent step of length `h`.
//!
//! ```
//! use ncmap::{make_quadratic, pair_sincos, run, OptimizerConfig, StepMethod};
//!
//! let mut obj = make_quadratic(&[2.0], 6.0).unwrap();
//! let cfg = OptimizerConfig::new(StepMethod::Heun, pair_sincos(), 0.01, vec![0.5], 4000);
//! let traj = run(&mut obj, &cfg).unwrap();
//! assert!((traj.last_y()[0] - 2.0).abs() < 0.05);
//! ```

pub mod bench;
pub mod error;
pub mod fields;
pub mod objective;
pub mod optimizer;
pub mod oracle;
pub mod stepper;

pub use error::{NcmapError, Result};
pub use fields::{pair_by_id, pair_simple, pair_sincos, schedule, switched_field, GeneratingPair, PairRegistry, PairValidity, Phase, StepLabel, SwitchedField};
pub use objective::{
    make_constant, make_quadratic, make_scaled_quadratic, make_two_well, with_noise, Cost, NoisyObjective, Objective,
    RNG_ALGORITHM,
};
pub use optimizer::{run, FilterState, OptimizerConfig, Recording, StopReason, Trajectory};
pub use stepper::{euler_step, heun_step, macro_step, micro_step, MacroStepRecord, StepMethod};

//! The descending Gaussian recursion and the Parisi functionals built on it.

pub mod engine;
pub mod functional;
pub mod measure;

pub use engine::{EvalConfig, Engine, LevelRule};
pub use functional::{
    lipschitz_witness, local_parisi_f, parisi_p, path_value, phi_b, recursion_raw, recursion_x0,
};
pub use measure::{
    softplus, terminal_g, AprioriMeasure, ConstantProbe, FnTerminal, LinearProbe, MeasureSpec,
    SoftplusProbe, Terminal, TerminalCondition,
};

//! End-to-end simulated RL runs: configuration, the step loop and report
//! output.

mod config;
mod fsm;
mod plan;
mod report;
mod run;
mod tune;
mod verify;

pub use config::*;
pub use fsm::*;
pub use plan::*;
pub use report::*;
pub use run::*;
pub use tune::*;
pub use verify::*;

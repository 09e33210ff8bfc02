pub mod context;
pub mod drafter;
pub mod experiment;
pub mod mab;
pub mod rng;
pub mod rollout;
pub mod spec;
pub mod spot;
pub mod target;
pub mod token;

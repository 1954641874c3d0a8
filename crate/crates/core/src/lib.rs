//! G-methods for the causal effects of two time-varying binary treatments
//! under time-dependent confounding, plus the simulation machinery used to
//! compare them.

pub mod estimators;
pub mod eval;
pub mod glm;
pub mod longdata;
pub mod oracle;
pub mod rng;
pub mod simgen;
pub mod weights;

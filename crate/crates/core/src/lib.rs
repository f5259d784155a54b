pub mod acceptance;
pub mod curves;
pub mod diagnostics;
pub mod exec;
pub mod experiment;
pub mod kinetics;
pub mod model;
pub mod numerics;
pub mod riemann;
pub mod tracking;

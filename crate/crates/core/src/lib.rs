//! Max-min fair assignment of shared candidate services to concurrent
//! requests, with the LP machinery, baselines and brute-force oracle used to
//! check it.

pub mod baselines;
pub mod bench_metrics;
pub mod fass_engine;
pub mod lex_transform;
pub mod model;
pub mod oracle;
pub mod scenario_io;
pub mod simplex_lp;

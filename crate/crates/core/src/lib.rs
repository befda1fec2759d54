//! Preference-based HTN planning.
//!
//! Domains, problems and preferences are read by [`parser`]; [`search`] finds a
//! plan of minimal preference weight by best-first search over partial
//! decompositions, and [`oracle`] enumerates every plan for comparison.

pub mod bench;
pub mod decompose;
pub mod formula;
pub mod generator;
pub mod model;
pub mod oracle;
pub mod parser;
pub mod progression;
pub mod search;
pub mod semantics;
pub mod sexpr;
pub mod validate;

pub use formula::{Apf, Bdf, Gpf, Weight};
pub use model::{Domain, Event, Plan, Problem, State, Trace};
pub use parser::{load_problem, parse_domain, parse_preference, parse_problem, ParseError};

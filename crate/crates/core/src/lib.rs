//! Complete verification of piecewise-linear neural networks.
//!
//! A property over the outputs of a network on an input box is reduced to a
//! scalar network whose output is `<= 0` exactly at counterexamples
//! ([`canon`]). The reduced problem is decided by branch and bound over input
//! boxes or ReLU phases ([`bab`]) or by a big-M mixed-integer program
//! ([`mip`]), both built on a dense simplex ([`lp`]) and the bounds in
//! [`interval`] and [`relax`]. [`oracle`] enumerates activation patterns and
//! gives exact minima on small networks.
//!
//! ```
//! use plnn::canon::{canonicalize, PropertyClause};
//! use plnn::bab::{bab_verify, BabConfig, BabStatus};
//! use plnn::model::{toy_network, BoxDomain};
//!
//! let domain = BoxDomain::uniform(2, -2.0, 2.0);
//! let problem = canonicalize(&toy_network(), &PropertyClause::geq(vec![1.0], -5.0), &domain).unwrap();
//! let result = bab_verify(&problem, &BabConfig::default()).unwrap();
//! assert!(matches!(result.status, BabStatus::Unsat { .. }));
//! ```

pub mod bab;
pub mod canon;
pub mod error;
pub mod gensuite;
pub mod interval;
pub mod io;
pub mod lp;
pub mod mip;
pub mod model;
pub mod oracle;
pub mod relax;
pub mod runner;

pub use error::{Error, Result};

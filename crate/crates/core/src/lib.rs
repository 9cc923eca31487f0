//! Budget learning by bracketing.
//!
//! A high-accuracy "cloud" classifier `g` is sandwiched between two cheap local
//! models `h- <= g <= h+`. Wherever the two agree the prediction is made locally;
//! elsewhere the cloud is queried. The fraction of queries sent to the cloud is
//! the *usage* of the bracket.
//!
//! The crate is organised as:
//!
//! * [`datasets`]: empirical (g, mu) pairs, the synthetic quartic task, CSV ingestion.
//! * [`models`]: linear sigmoid scorers, surrogate losses and the minibatch SGD engine.
//! * [`oneside`]: Lagrangian one-sided learners (approximation from below / above).
//! * [`bracketing`]: brackets, usage, certified and empirical selection, gating transform.
//! * [`baselines`]: local thresholding, alternating minimisation, sum relaxation.
//! * [`combinatorics`]: exact finite-domain oracles, the two-phase PAC learner and
//!   the sparse / tensorised / rectangle constructions.
//! * [`geometry`]: inner and outer d-gon approximations of convex polygons.
//! * [`experiment`]: configuration, the train/select/evaluate pipeline and reports.
//! * [`verify`]: the exact and statistical verification suites.

pub mod baselines;
pub mod bracketing;
pub mod combinatorics;
pub mod datasets;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod models;
pub mod oneside;
pub mod verify;

pub use error::{Error, Result};

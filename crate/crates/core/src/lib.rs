//! Collaborative predictive blacklisting with private partner selection.
//!
//! Entities holding attack logs estimate the benefit of sharing with each
//! other through private set-cardinality protocols, form coalitions, merge
//! their logs under a chosen strategy, and measure how much an EWMA
//! blacklist predictor improves.

pub mod analyze;
pub mod crypto;
pub mod datamodel;
pub mod experiment;
pub mod merge;
pub mod netpeer;
pub mod predict;
pub mod selection;

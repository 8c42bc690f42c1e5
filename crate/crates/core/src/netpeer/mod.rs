//! Wire protocol and the two-process peer runner.

mod peer;
mod wire;

pub use peer::*;
pub use wire::*;

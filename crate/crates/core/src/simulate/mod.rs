//! Path sampling under band-admissible measures and pathwise QV tools.

mod ensemble;
mod qv;
mod scheme;

pub use ensemble::*;
pub use qv::*;
pub use scheme::*;

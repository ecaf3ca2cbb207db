pub mod bands;
pub mod error;
pub mod modes;
pub mod oracle;
pub mod limit;
pub mod radial;
pub mod roots;
pub mod selfcheck;
pub mod transversal;

pub use error::{Error, Result};

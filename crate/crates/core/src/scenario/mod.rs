pub mod config;
pub mod generate;
pub mod cdr;
pub mod run;

pub use config::*;
pub use generate::*;
pub use cdr::*;
pub use run::*;

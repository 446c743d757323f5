pub mod bench;
pub mod conic;
pub mod error;
pub mod exact_ao;
pub mod harness;
pub mod inexact_ao;
pub mod lowcx_ao;
pub mod metrics;
pub mod model;
pub mod report;
pub mod selftest;

pub use error::{Error, Result};

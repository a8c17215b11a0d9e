//! Experiment harness for the adjustable block size mechanism: config
//! files, order-book datasets, experiment designs and reports.

pub mod config;
pub mod dataset;
pub mod experiment;
pub mod report;

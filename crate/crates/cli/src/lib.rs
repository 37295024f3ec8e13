//! Command line and HTTP front end for the metricquad pipeline.

pub mod server;

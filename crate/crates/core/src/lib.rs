#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod adc;
pub mod bits;
pub mod config;
pub mod entropy;
pub mod error;
pub mod gaussian;
pub mod pipeline;
pub mod rayleigh;
pub mod service;
pub mod source;
pub mod stats;
pub mod uniform;

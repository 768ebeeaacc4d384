#![allow(dead_code)]

pub mod cli;
pub mod fixtures;
pub mod gradients;
pub mod props;
pub mod reference;

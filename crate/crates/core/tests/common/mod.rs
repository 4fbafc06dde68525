#![allow(dead_code)]

pub mod algebra;
pub mod checks;
pub mod jacobians;

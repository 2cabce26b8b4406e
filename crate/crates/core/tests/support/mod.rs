#![allow(dead_code)]

pub mod geweke;
pub mod gradcheck;
pub mod quadrature;

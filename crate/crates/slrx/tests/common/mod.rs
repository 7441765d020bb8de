#![allow(dead_code)]

pub mod golden;
pub mod http;
pub mod oracles;
pub mod synthetic;

#![allow(dead_code)]

pub mod addressing;
pub mod replay;

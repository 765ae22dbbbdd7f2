#![no_std]

extern crate alloc;

mod float;
pub mod audit;
pub mod geometry;
pub mod km;
pub mod linalg;
pub mod maps;
pub mod oracle;
pub mod resolvent;
pub mod retraction;
pub mod trace;

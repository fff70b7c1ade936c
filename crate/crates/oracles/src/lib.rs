//! Reference computations that share no code with `zonowalk`: brute-force
//! polygon geometry, numerical integration and finite differences. Plain
//! `[f64; 2]` points keep them independent of the library's types.

pub mod fd;
pub mod geom;
pub mod ode;

pub type P2 = [f64; 2];

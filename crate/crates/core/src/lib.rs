pub mod adversary;
pub mod dynamics;
pub mod game;
pub mod harness;
pub mod numerics;
pub mod quadratic;
pub mod strategy;

pub mod config;
pub mod env;
pub mod gq;
pub mod harness;
pub mod horde;
pub mod io;
pub mod oracles;
pub mod shaping;
pub mod stats;
pub mod tiles;
pub mod verify;
pub mod voting;

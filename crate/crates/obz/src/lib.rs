pub mod blob;
pub mod csvio;
pub mod error;
pub mod pgm;
pub mod records;
pub mod storage;
pub mod store;
pub mod api;
pub mod wire;
pub mod client;
pub mod config;
pub mod imageio;
pub mod cli;

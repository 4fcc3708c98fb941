pub mod banded;
pub mod boundary_layer;
pub mod cli;
pub mod dynamics;
pub mod elliptic;
pub mod error;
pub mod fields;
pub mod grid;
pub mod harness;
pub mod initial_data;
pub mod rates;
pub mod snapshot;
pub mod verify;

pub mod capacity;
pub mod cli;
pub mod dimension;
pub mod hashing;
pub mod lattice;
pub mod oracle;
pub mod percolation;
pub mod stats;
pub mod walk;

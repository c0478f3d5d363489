pub mod error;
pub mod jacobian;
pub mod matrix;
pub mod msf;
pub mod network;
pub mod oscillator;
pub mod probe;

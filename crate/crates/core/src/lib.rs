//! Scott–Vogelius finite elements on triangular meshes: vertex classification,
//! discrete spaces, a constructive right inverse of the divergence and inf-sup
//! verification.

pub mod config;
pub mod error;
pub mod fields;
pub mod linalg;
pub mod mesh;
pub mod polyspace;
pub mod rightinverse;
pub mod spaces;
pub mod topology;
pub mod verify;

pub use error::{Result, SvError};

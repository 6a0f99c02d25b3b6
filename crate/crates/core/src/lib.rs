pub mod grid;
pub mod implicit;
pub mod linalg;
pub mod state;
pub mod stencil;
pub mod ball;
pub mod concentration;
pub mod diagnostics;
pub mod dynamics;
pub mod galerkin;
pub mod scenario;
pub mod weakform;
pub mod acceptance;
pub mod cli;

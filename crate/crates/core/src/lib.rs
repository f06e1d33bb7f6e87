pub mod batch;
pub mod eigen;
pub mod error;
pub mod harness;
pub mod kernel;
pub mod linalg;
pub mod online_sir;
pub mod pipeline;
pub mod simgen;
pub mod truncated_lasso;

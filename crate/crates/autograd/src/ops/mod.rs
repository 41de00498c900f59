mod conv;
mod elementwise;
pub(crate) mod linalg;
pub(crate) mod quat;
mod shape;

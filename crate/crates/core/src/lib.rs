pub mod catalog;
pub mod geodesy;
pub mod pipeline;
pub mod projection;
pub mod raster;
pub mod stitcher;
pub mod synth;

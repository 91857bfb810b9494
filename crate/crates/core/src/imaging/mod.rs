//! Rasters: masks from graphs, ROI crops, peak extraction and the
//! synthetic-world renderer.

mod peaks;
pub mod raster;
pub mod synth;
mod tile;

pub use peaks::{extract_peaks, Peak, DEFAULT_NMS_RADIUS, DEFAULT_PEAK_THRESHOLD};
pub use raster::{
    bresenham, crop_roi, rasterize_disks, rasterize_graph, rasterize_graph_window,
    squared_distance_transform, RoiSpec, DEFAULT_ROI_SIDE,
};
pub use synth::{
    cast_graph, ground_truth_masks, render_synthetic_world, SynthError, SyntheticWorld, WorldStyle,
};
pub use tile::{Tile, TileError};

//! Software z-buffer rasterizer for depth, instance-id and shaded gray images.
//!
//! A pixel is covered when its center lies inside the projected triangle
//! (top-left rule on shared edges). Depth is the perspective-correct
//! interpolated z at the pixel center, rounded to whole millimeters. Back
//! faces are not culled. At equal quantized depth the lower instance id wins.

mod image;
mod raster;

pub use image::{DepthImage, GrayImage, Image, InstanceMap, Mask, Rect};
pub use raster::{
    render_scene, render_single, render_single_window, visibility_mask, RenderConfig,
    RenderInstance, SceneRender, WindowRender,
};

//! Scene description, CPU rendering (neural and oracle paths), image
//! utilities and material editing.

pub mod image;
pub mod renderer;
pub mod scene;

pub use image::{error_map, image_mse, FloatImage};
pub use renderer::{
    footprint_from_hit, render, trace, EditPath, Hit, LatentCache, MaterialEdit, RenderMode,
    RenderStats, MAP_RESOLUTION,
};
pub use scene::{single_cloth_scene, Camera, Light, Primitive, Scene, SceneMaterial, SceneObject};

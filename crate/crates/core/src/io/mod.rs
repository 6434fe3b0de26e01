//! File formats: rig JSON, PFM and millimeter PNG depth, grayscale PNG
//! images and masks, PLY point clouds, and the dataset directory layout.

mod layout;
mod ply;
mod raster;
mod rig_file;

pub use layout::{frame_name, image_path, list_files, load_frame, DatasetLayout};
pub use ply::{decode_ply, depth_to_points, encode_ply, read_ply, write_ply, PlyFormat, PlyPoint};
pub use raster::{
    decode_pfm, depth_to_mm, encode_pfm, mm_to_depth, read_depth_pfm, read_depth_png_mm, read_gray_png, read_mask_png,
    read_pfm, write_depth_pfm, write_depth_png_mm, write_gray_png, write_mask_png, write_pfm, PNG_MM_MAX_M,
};
pub use rig_file::{
    read_rig, rig_from_json, rig_to_json, write_rig, CameraEntry, ModelEntry, PoseEntry, RigFile, RIG_FILE_VERSION,
};

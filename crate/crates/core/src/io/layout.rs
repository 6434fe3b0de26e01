//! Directory layout shared by the command-line tools:
//!
//! ```text
//! <root>/rig.json
//! <root>/images/<camera>/<frame>.png
//! <root>/depth/<camera>/<frame>.pfm
//! ```
//!
//! Frames are zero-padded to six digits.

use std::path::{Path, PathBuf};

use super::raster::read_gray_png;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::rig::RigCalibration;

pub fn frame_name(frame: usize, ext: &str) -> String {
    format!("{frame:06}.{ext}")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetLayout {
    pub root: PathBuf,
}

impl DatasetLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn rig_path(&self) -> PathBuf {
        self.root.join("rig.json")
    }

    pub fn image_dir(&self) -> PathBuf {
        self.root.join("images")
    }

    pub fn depth_dir(&self) -> PathBuf {
        self.root.join("depth")
    }

    pub fn image_path(&self, camera: &str, frame: usize) -> PathBuf {
        image_path(&self.image_dir(), camera, frame)
    }

    pub fn depth_path(&self, camera: &str, frame: usize) -> PathBuf {
        self.depth_dir().join(camera).join(frame_name(frame, "pfm"))
    }
}

/// `<dir>/<camera>/<frame>.png`
pub fn image_path(dir: &Path, camera: &str, frame: usize) -> PathBuf {
    dir.join(camera).join(frame_name(frame, "png"))
}

/// Loads the image of every rig camera at `frame` from an image directory,
/// checking its size against the camera model.
pub fn load_frame(dir: &Path, rig: &RigCalibration, frame: usize) -> Result<Vec<Grid<f32>>> {
    rig.cameras
        .iter()
        .map(|cam| {
            let path = image_path(dir, &cam.id, frame);
            if !path.exists() {
                return Err(Error::NotFound(path.display().to_string()));
            }
            let img = read_gray_png(&path)?;
            if img.dims() != (cam.model.width(), cam.model.height()) {
                return Err(Error::SizeMismatch(format!(
                    "{} is {}x{}, camera {} expects {}x{}",
                    path.display(),
                    img.width(),
                    img.height(),
                    cam.id,
                    cam.model.width(),
                    cam.model.height()
                )));
            }
            Ok(img)
        })
        .collect()
}

/// Relative paths of all files with extension `ext` below `dir`, sorted.
pub fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    fn walk(base: &Path, dir: &Path, ext: &str, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(base, &path, ext, out)?;
            } else if path.extension().is_some_and(|e| e == ext) {
                out.push(path.strip_prefix(base).expect("below base").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, ext, &mut out)?;
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::write_gray_png;
    use crate::synth::{PresetOptions, RigPreset};

    #[test]
    fn paths_follow_layout() {
        let l = DatasetLayout::new("/data");
        assert_eq!(l.image_path("cam1", 3), PathBuf::from("/data/images/cam1/000003.png"));
        assert_eq!(l.depth_path("cam1", 12), PathBuf::from("/data/depth/cam1/000012.pfm"));
    }

    #[test]
    fn load_checks_presence_and_size() {
        let dir = tempfile::tempdir().unwrap();
        let rig = RigPreset::Ring6Pinhole
            .build(&PresetOptions {
                frames: 1,
                size: Some((16, 8)),
                ..Default::default()
            })
            .unwrap()
            .rig;
        assert!(matches!(load_frame(dir.path(), &rig, 0), Err(Error::NotFound(_))));
        for cam in &rig.cameras {
            std::fs::create_dir_all(dir.path().join(&cam.id)).unwrap();
            write_gray_png(&image_path(dir.path(), &cam.id, 0), &Grid::new(16, 8, 9.0)).unwrap();
        }
        assert_eq!(load_frame(dir.path(), &rig, 0).unwrap().len(), 6);
        write_gray_png(&image_path(dir.path(), "cam2", 0), &Grid::new(15, 8, 9.0)).unwrap();
        assert!(matches!(load_frame(dir.path(), &rig, 0), Err(Error::SizeMismatch(_))));
        assert_eq!(list_files(dir.path(), "png").unwrap().len(), 6);
    }
}

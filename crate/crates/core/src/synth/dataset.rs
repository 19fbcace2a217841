//! Dataset directory layout: scene_%05d/{rgb.ppm, depth.f32, seg.pgm}.
//!
//! seg.pgm stores object ids directly as byte values; ids are recovered
//! exactly on load.

use crate::error::{Error, Result};
use crate::imaging::ScalarMap;
use crate::synth::formats::{read_f32raw, read_ppm, write_f32raw, write_ppm};
use crate::synth::scene::SceneTriplet;
use crate::synth::{parse_pgm, pgm_bytes};
use std::fs;
use std::path::{Path, PathBuf};

pub fn scene_dir_name(index: usize) -> String {
    format!("scene_{index:05}")
}

/// Write one scene under `root`. Object ids must fit a byte.
pub fn write_scene_dir(root: &Path, index: usize, scene: &SceneTriplet) -> Result<()> {
    let dir = root.join(scene_dir_name(index));
    fs::create_dir_all(&dir)?;
    write_ppm(&dir.join("rgb.ppm"), &scene.rgb)?;
    write_f32raw(&dir.join("depth.f32"), &scene.depth)?;

    let seg = &scene.seg;
    if seg.values().iter().any(|&v| !(0.0..=255.0).contains(&v)) {
        return Err(Error::ConfigInvalid {
            context: "segmentation ids must fit in a byte".into(),
        });
    }
    let scaled = ScalarMap::from_values(
        seg.height(),
        seg.width(),
        seg.values().iter().map(|&v| v / 255.0).collect(),
    )?;
    fs::write(dir.join("seg.pgm"), pgm_bytes(&scaled))?;
    Ok(())
}

/// Load the scene stored in one scene_%05d directory.
pub fn read_scene_at(dir: &Path) -> Result<SceneTriplet> {
    if !dir.is_dir() {
        return Err(Error::DataMissing {
            path: dir.display().to_string(),
        });
    }
    let rgb = read_ppm(&dir.join("rgb.ppm"))?;
    let depth = read_f32raw(&dir.join("depth.f32"))?;
    let seg_scaled = parse_pgm(&fs::read(dir.join("seg.pgm"))?)?;
    let seg = ScalarMap::from_values(
        seg_scaled.height(),
        seg_scaled.width(),
        seg_scaled
            .values()
            .iter()
            .map(|&v| (v * 255.0).round())
            .collect(),
    )?;
    Ok(SceneTriplet { rgb, depth, seg })
}

/// Load one scene from `root`.
pub fn read_scene_dir(root: &Path, index: usize) -> Result<SceneTriplet> {
    read_scene_at(&root.join(scene_dir_name(index)))
}

/// Scene directories under `root`, sorted by name.
pub fn list_scene_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if !root.is_dir() {
        return Err(Error::DataMissing {
            path: root.display().to_string(),
        });
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.is_dir()
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("scene_"))
        })
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Load every scene under `root`, in directory order.
pub fn read_dataset(root: &Path) -> Result<Vec<SceneTriplet>> {
    let dirs = list_scene_dirs(root)?;
    if dirs.is_empty() {
        return Err(Error::DataMissing {
            path: root.display().to_string(),
        });
    }
    dirs.iter().map(|dir| read_scene_at(dir)).collect()
}

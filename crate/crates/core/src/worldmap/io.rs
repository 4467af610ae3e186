//! Grayscale bitmap + `key: value` metadata, the layout common to ROS-style
//! map servers:
//!
//! ```text
//! image: cross.pgm
//! resolution: 0.05
//! origin: [0.0, 0.0, 0.0]
//! occupied_thresh: 0.65
//! free_thresh: 0.196
//! negate: 0
//! ```
//!
//! A pixel's occupancy probability is `(255 - v) / 255` (or `v / 255` when
//! `negate` is set); above `occupied_thresh` it is occupied, below
//! `free_thresh` free, otherwise unknown.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};

use super::{MapError, Occupancy, OccupancyGrid};
use crate::geometry::Pose2;

#[derive(Debug, Clone, PartialEq)]
pub struct MapMeta {
    pub image: Option<String>,
    pub resolution: f64,
    pub origin: Pose2,
    pub occupied_thresh: f64,
    pub free_thresh: f64,
    pub negate: bool,
}

impl Default for MapMeta {
    fn default() -> Self {
        Self {
            image: None,
            resolution: super::DEFAULT_RESOLUTION,
            origin: Pose2::new(0.0, 0.0, 0.0),
            occupied_thresh: 0.65,
            free_thresh: 0.196,
            negate: false,
        }
    }
}

impl MapMeta {
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let mut meta = MapMeta::default();
        let mut have_resolution = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| {
                MapError::Meta(format!("line {}: expected `key: value`", lineno + 1))
            })?;
            let value = value.trim();
            let num = |v: &str| -> Result<f64, MapError> {
                v.trim().parse::<f64>().map_err(|_| {
                    MapError::Meta(format!(
                        "line {}: `{}` is not a number",
                        lineno + 1,
                        v.trim()
                    ))
                })
            };
            match key.trim() {
                "image" => {
                    meta.image = Some(value.trim_matches(|c| c == '"' || c == '\'').to_string())
                }
                "resolution" => {
                    meta.resolution = num(value)?;
                    have_resolution = true;
                }
                "origin" => {
                    let inner = value.trim_start_matches('[').trim_end_matches(']');
                    let parts = inner.split(',').map(num).collect::<Result<Vec<_>, _>>()?;
                    if parts.len() != 3 {
                        return Err(MapError::Meta(format!(
                            "line {}: origin needs [x, y, yaw]",
                            lineno + 1
                        )));
                    }
                    meta.origin = Pose2::new(parts[0], parts[1], parts[2]);
                }
                "occupied_thresh" => meta.occupied_thresh = num(value)?,
                "free_thresh" => meta.free_thresh = num(value)?,
                "negate" => meta.negate = num(value)? != 0.0,
                _ => {}
            }
        }
        if !have_resolution {
            return Err(MapError::Meta("missing `resolution`".into()));
        }
        if !(meta.resolution > 0.0) {
            return Err(MapError::BadResolution(meta.resolution));
        }
        Ok(meta)
    }

    pub fn to_text(&self) -> String {
        format!(
            "image: {}\nresolution: {}\norigin: [{}, {}, {}]\noccupied_thresh: {}\nfree_thresh: {}\nnegate: {}\n",
            self.image.as_deref().unwrap_or("map.pgm"),
            self.resolution,
            self.origin.x,
            self.origin.y,
            self.origin.theta,
            self.occupied_thresh,
            self.free_thresh,
            u8::from(self.negate),
        )
    }
}

/// Thresholds a grayscale bitmap; image row 0 becomes the top grid row.
pub fn load_map(image: &GrayImage, meta: &MapMeta) -> Result<OccupancyGrid, MapError> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mut cells = Vec::with_capacity(w * h);
    for row in 0..h {
        let img_row = (h - 1 - row) as u32;
        for col in 0..w {
            let v = image.get_pixel(col as u32, img_row).0[0] as f64;
            let p = if meta.negate {
                v / 255.0
            } else {
                (255.0 - v) / 255.0
            };
            cells.push(if p > meta.occupied_thresh {
                Occupancy::Occupied
            } else if p < meta.free_thresh {
                Occupancy::Free
            } else {
                Occupancy::Unknown
            });
        }
    }
    OccupancyGrid::new(w, h, meta.resolution, meta.origin, cells)
}

/// Loads a metadata file and the bitmap it names (relative to the metadata).
pub fn load_map_files(meta_path: &Path) -> Result<OccupancyGrid, MapError> {
    let meta = MapMeta::parse(&fs::read_to_string(meta_path)?)?;
    let image_name = meta
        .image
        .clone()
        .ok_or_else(|| MapError::Meta("missing `image`".into()))?;
    let image_path = resolve(meta_path, &image_name);
    let img = image::open(&image_path).map_err(|e| MapError::Image {
        path: image_path.display().to_string(),
        message: e.to_string(),
    })?;
    load_map(&img.to_luma8(), &meta)
}

fn resolve(meta_path: &Path, image: &str) -> PathBuf {
    let p = Path::new(image);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        meta_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Writes `<stem>.pgm` and `<stem>.yaml` into `dir`; returns the metadata path.
pub fn save_map(grid: &OccupancyGrid, dir: &Path, stem: &str) -> Result<PathBuf, MapError> {
    fs::create_dir_all(dir)?;
    let (w, h) = (grid.width() as u32, grid.height() as u32);
    let mut img = GrayImage::new(w, h);
    for row in 0..grid.height() {
        for col in 0..grid.width() {
            let v = match grid.cells()[row * grid.width() + col] {
                Occupancy::Free => 254,
                Occupancy::Occupied => 0,
                Occupancy::Unknown => 205,
            };
            img.put_pixel(col as u32, h - 1 - row as u32, Luma([v]));
        }
    }
    let image_name = format!("{stem}.pgm");
    let image_path = dir.join(&image_name);
    img.save_with_format(&image_path, image::ImageFormat::Pnm)
        .map_err(|e| MapError::Image {
            path: image_path.display().to_string(),
            message: e.to_string(),
        })?;
    let meta = MapMeta {
        image: Some(image_name),
        resolution: grid.resolution(),
        origin: grid.origin(),
        ..MapMeta::default()
    };
    let meta_path = dir.join(format!("{stem}.yaml"));
    fs::write(&meta_path, meta.to_text())?;
    Ok(meta_path)
}

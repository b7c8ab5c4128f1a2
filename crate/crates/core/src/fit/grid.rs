use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::{Camera, CameraJson};
use crate::io::{read_json, write_json};
use crate::render::Image;
use crate::{Error, Real, Result};

/// `V × T` frames of one clip: row `v` is a fixed camera, column `t` a
/// fixed instant.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameGrid<T> {
    pub views: usize,
    pub frames: usize,
    /// RGB, index `v * frames + t`.
    pub images: Vec<Image<T>>,
    /// Single-channel foreground masks, same indexing.
    pub masks: Option<Vec<Image<T>>>,
    pub cameras: Vec<Camera<T>>,
    pub view0_index: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GridJson {
    views: usize,
    frames: usize,
    view0_index: usize,
    width: usize,
    height: usize,
}

pub fn frame_name(v: usize, t: usize) -> String {
    format!("frame_v{v:03}_t{t:03}.png")
}

pub fn mask_name(v: usize, t: usize) -> String {
    format!("mask_v{v:03}_t{t:03}.png")
}

impl<T: Real> FrameGrid<T> {
    #[inline]
    pub fn index(&self, v: usize, t: usize) -> usize {
        v * self.frames + t
    }

    pub fn image(&self, v: usize, t: usize) -> &Image<T> {
        &self.images[self.index(v, t)]
    }

    pub fn mask(&self, v: usize, t: usize) -> Option<&Image<T>> {
        self.masks.as_ref().map(|m| &m[self.index(v, t)])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.views * self.frames;
        if n == 0 {
            return Err(Error::InvalidArgument("frame grid is empty".into()));
        }
        if self.images.len() != n || self.cameras.len() != self.views {
            return Err(Error::Shape(format!(
                "grid {}×{} has {} images and {} cameras",
                self.views,
                self.frames,
                self.images.len(),
                self.cameras.len()
            )));
        }
        if self.view0_index >= self.views {
            return Err(Error::InvalidArgument(format!("canonical view {} out of range", self.view0_index)));
        }
        let (w, h) = (self.images[0].width, self.images[0].height);
        for (i, img) in self.images.iter().enumerate() {
            if (img.width, img.height, img.channels) != (w, h, 3) {
                return Err(Error::Shape(format!("frame {i} is not {w}×{h} RGB")));
            }
        }
        if let Some(m) = &self.masks {
            if m.len() != n || m.iter().any(|m| (m.width, m.height, m.channels) != (w, h, 1)) {
                return Err(Error::Shape("masks do not match frames".into()));
            }
        }
        if self.cameras.iter().any(|c| (c.width, c.height) != (w, h)) {
            return Err(Error::Shape("camera resolution differs from frames".into()));
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        self.validate()?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for v in 0..self.views {
            for t in 0..self.frames {
                self.image(v, t).save_png(&dir.join(frame_name(v, t)))?;
                if let Some(m) = self.mask(v, t) {
                    m.save_png(&dir.join(mask_name(v, t)))?;
                }
            }
        }
        let cams: Vec<CameraJson> = self.cameras.iter().map(Camera::to_json).collect();
        write_json(&dir.join("cameras.json"), &cams)?;
        let meta = GridJson {
            views: self.views,
            frames: self.frames,
            view0_index: self.view0_index,
            width: self.images[0].width,
            height: self.images[0].height,
        };
        write_json(&dir.join("grid.json"), &meta)
    }

    /// Reads a grid directory; masks are loaded when every mask file exists.
    pub fn load(dir: &Path) -> Result<Self> {
        let meta: GridJson = read_json(&dir.join("grid.json"))?;
        let cams: Vec<CameraJson> = read_json(&dir.join("cameras.json"))?;
        let mut images = Vec::with_capacity(meta.views * meta.frames);
        let mut masks = Vec::new();
        let mut have_masks = true;
        for v in 0..meta.views {
            for t in 0..meta.frames {
                images.push(Image::load_png(&dir.join(frame_name(v, t)), 3)?);
                let mp = dir.join(mask_name(v, t));
                if have_masks && mp.exists() {
                    masks.push(Image::load_png(&mp, 1)?);
                } else {
                    have_masks = false;
                }
            }
        }
        let grid = Self {
            views: meta.views,
            frames: meta.frames,
            images,
            masks: have_masks.then_some(masks),
            cameras: cams.iter().map(Camera::from_json).collect(),
            view0_index: meta.view0_index,
        };
        grid.validate()?;
        Ok(grid)
    }
}

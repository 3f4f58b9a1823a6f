//! Warping placed images onto a shared canvas and blending the overlaps.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::IntensityImage;
use crate::registration::{Point, RigidTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlendMode {
    /// Weight each source by its distance to its own border.
    #[default]
    Feather,
    /// Later placements replace earlier ones.
    Overwrite,
}

impl FromStr for BlendMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "feather" => Ok(Self::Feather),
            "overwrite" => Ok(Self::Overwrite),
            other => Err(Error::config(format!("unknown blend mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resample {
    #[default]
    Bilinear,
    Nearest,
}

impl FromStr for Resample {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bilinear" => Ok(Self::Bilinear),
            "nearest" => Ok(Self::Nearest),
            other => Err(Error::config(format!("unknown resampling mode {other:?}"))),
        }
    }
}

/// Where an image lands: `transform` maps its `(x, y)` pixel coordinates into
/// the reference frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub image_id: String,
    pub transform: RigidTransform,
}

/// Canvas size and position. A canvas pixel `(cx, cy)` sits at
/// `(cx + dx, cy + dy)` in the reference frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanvasExtents {
    pub width: usize,
    pub height: usize,
    pub origin_offset: (i64, i64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Canvas {
    pub extents: CanvasExtents,
    pub pixels: Vec<f64>,
    /// Accumulated raw blend weight; zero where nothing was drawn.
    pub weightmap: Vec<f64>,
}

impl Canvas {
    pub fn width(&self) -> usize {
        self.extents.width
    }

    pub fn height(&self) -> usize {
        self.extents.height
    }

    pub fn to_image(&self, id: impl Into<String>) -> IntensityImage {
        IntensityImage::new(id, self.extents.height, self.extents.width, self.pixels.clone())
            .expect("canvas dimensions are positive")
    }
}

const EDGE_EPS: f64 = 1e-9;

fn corners(nr: usize, nc: usize) -> [Point; 4] {
    let (w, h) = ((nc - 1) as f64, (nr - 1) as f64);
    [[0.0, 0.0], [w, 0.0], [0.0, h], [w, h]]
}

/// Integer bounding box of every placed image's corner pixels.
pub fn compute_canvas(placements: &[Placement], dims: &[(usize, usize)]) -> Result<CanvasExtents> {
    if placements.is_empty() {
        return Err(Error::config("no placements to composite"));
    }
    if placements.len() != dims.len() {
        return Err(Error::Contract(format!(
            "{} placements but {} image sizes",
            placements.len(),
            dims.len()
        )));
    }
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (p, &(nr, nc)) in placements.iter().zip(dims) {
        for c in corners(nr, nc) {
            let q = p.transform.apply(c);
            x0 = x0.min(q[0]);
            y0 = y0.min(q[1]);
            x1 = x1.max(q[0]);
            y1 = y1.max(q[1]);
        }
    }
    let (x0, y0) = ((x0 + EDGE_EPS).floor() as i64, (y0 + EDGE_EPS).floor() as i64);
    let (x1, y1) = ((x1 - EDGE_EPS).ceil() as i64, (y1 - EDGE_EPS).ceil() as i64);
    Ok(CanvasExtents {
        width: (x1 - x0 + 1) as usize,
        height: (y1 - y0 + 1) as usize,
        origin_offset: (x0, y0),
    })
}

fn sample(img: &IntensityImage, x: f64, y: f64, mode: Resample) -> f64 {
    let (nr, nc) = (img.nr(), img.nc());
    match mode {
        Resample::Nearest => {
            let c = (x.round().max(0.0) as usize).min(nc - 1);
            let r = (y.round().max(0.0) as usize).min(nr - 1);
            img.get(r, c)
        }
        Resample::Bilinear => {
            let x = x.clamp(0.0, (nc - 1) as f64);
            let y = y.clamp(0.0, (nr - 1) as f64);
            let (c0, r0) = (x.floor() as usize, y.floor() as usize);
            let (fx, fy) = (x - c0 as f64, y - r0 as f64);
            let (c1, r1) = ((c0 + 1).min(nc - 1), (r0 + 1).min(nr - 1));
            if fx == 0.0 && fy == 0.0 {
                return img.get(r0, c0);
            }
            let top = img.get(r0, c0) * (1.0 - fx) + img.get(r0, c1) * fx;
            let bottom = img.get(r1, c0) * (1.0 - fx) + img.get(r1, c1) * fx;
            top * (1.0 - fy) + bottom * fy
        }
    }
}

/// One source's share of a canvas pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub image: usize,
    /// Normalized over all contributions to the pixel.
    pub weight: f64,
    pub raw_weight: f64,
    pub value: f64,
}

/// Inverse-mapping sampler shared by compositing and its tests.
pub struct Warper<'a> {
    images: &'a [&'a IntensityImage],
    inverse: Vec<RigidTransform>,
    /// Canvas bounding box of each image, inclusive: (x0, y0, x1, y1).
    bounds: Vec<(i64, i64, i64, i64)>,
    extents: CanvasExtents,
    blend: BlendMode,
    resample: Resample,
}

impl<'a> Warper<'a> {
    pub fn new(
        images: &'a [&'a IntensityImage],
        placements: &[Placement],
        extents: CanvasExtents,
        blend: BlendMode,
        resample: Resample,
    ) -> Result<Self> {
        if images.len() != placements.len() {
            return Err(Error::Contract(format!(
                "{} images but {} placements",
                images.len(),
                placements.len()
            )));
        }
        let (ox, oy) = extents.origin_offset;
        let bounds = images
            .iter()
            .zip(placements)
            .map(|(img, p)| {
                let qs = corners(img.nr(), img.nc()).map(|c| p.transform.apply(c));
                let fold = |f: fn(f64, f64) -> f64, k: usize, init: f64| qs.iter().map(|q| q[k]).fold(init, f);
                (
                    fold(f64::min, 0, f64::INFINITY).floor() as i64 - ox - 1,
                    fold(f64::min, 1, f64::INFINITY).floor() as i64 - oy - 1,
                    fold(f64::max, 0, f64::NEG_INFINITY).ceil() as i64 - ox + 1,
                    fold(f64::max, 1, f64::NEG_INFINITY).ceil() as i64 - oy + 1,
                )
            })
            .collect();
        Ok(Self {
            images,
            inverse: placements.iter().map(|p| p.transform.inverse()).collect(),
            bounds,
            extents,
            blend,
            resample,
        })
    }

    /// Sources covering canvas pixel `(cx, cy)` with their normalized weights.
    pub fn contributions(&self, cx: usize, cy: usize, out: &mut Vec<Contribution>) {
        out.clear();
        let (ox, oy) = self.extents.origin_offset;
        let world = [(cx as i64 + ox) as f64, (cy as i64 + oy) as f64];
        for (k, img) in self.images.iter().enumerate() {
            let (bx0, by0, bx1, by1) = self.bounds[k];
            let (icx, icy) = (cx as i64, cy as i64);
            if icx < bx0 || icx > bx1 || icy < by0 || icy > by1 {
                continue;
            }
            let [x, y] = self.inverse[k].apply(world);
            let (w, h) = ((img.nc() - 1) as f64, (img.nr() - 1) as f64);
            if x < -EDGE_EPS || y < -EDGE_EPS || x > w + EDGE_EPS || y > h + EDGE_EPS {
                continue;
            }
            let weight = match self.blend {
                BlendMode::Feather => (x + 1.0).min(w + 1.0 - x).min(y + 1.0).min(h + 1.0 - y).max(EDGE_EPS),
                BlendMode::Overwrite => 1.0,
            };
            let value = sample(img, x, y, self.resample);
            if self.blend == BlendMode::Overwrite {
                out.clear();
            }
            out.push(Contribution {
                image: k,
                weight,
                raw_weight: weight,
                value,
            });
        }
        let total: f64 = out.iter().map(|c| c.weight).sum();
        out.iter_mut().for_each(|c| c.weight /= total);
    }
}

/// Inverse-maps every canvas pixel into each placed image and blends.
/// Uncovered pixels are 0.
pub fn warp_and_blend(
    images: &[&IntensityImage],
    placements: &[Placement],
    extents: CanvasExtents,
    blend: BlendMode,
    resample: Resample,
) -> Result<Canvas> {
    let warper = Warper::new(images, placements, extents, blend, resample)?;
    let (width, height) = (extents.width, extents.height);
    let mut pixels = vec![0.0; width * height];
    let mut weightmap = vec![0.0; width * height];
    pixels
        .par_chunks_mut(width)
        .zip(weightmap.par_chunks_mut(width))
        .enumerate()
        .for_each(|(cy, (row, wrow))| {
            let mut contrib = Vec::with_capacity(images.len());
            for cx in 0..width {
                warper.contributions(cx, cy, &mut contrib);
                row[cx] = match contrib.as_slice() {
                    [] => 0.0,
                    [only] => only.value,
                    many => many.iter().map(|c| c.weight * c.value).sum(),
                };
                wrow[cx] = contrib.iter().map(|c| c.raw_weight).sum();
            }
        });
    Ok(Canvas {
        extents,
        pixels,
        weightmap,
    })
}

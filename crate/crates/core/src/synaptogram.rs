//! Synaptogram panels: one row per channel's foreground probability plus a
//! result row, one column per consecutive slice, centered on a detection.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{physical_to_voxel, Detection, Dims, ProbabilityVolume, Stage};

pub const RESULT_ROW: &str = "result";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynaptogramRequest {
    pub center_um: [f64; 3],
    pub half_window_um: f64,
    pub slices: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    pub row: usize,
    pub column: usize,
    /// Values in `[0, 1]`, row-major, `width × height`.
    pub pixels: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynaptogramLayout {
    pub rows: Vec<String>,
    /// Slice index of each column; may fall outside the volume when clamped.
    pub columns: Vec<isize>,
    pub panel_width: usize,
    pub panel_height: usize,
    /// Panel origin in voxels (x, y), possibly negative.
    pub origin: [isize; 2],
    /// True when part of the requested window lies outside the volume; those
    /// pixels are zero.
    pub clamped: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synaptogram {
    pub layout: SynaptogramLayout,
    /// Row-major: `panels[row * columns + column]`.
    pub panels: Vec<Panel>,
}

/// Builds the panel grid. `channels` are foreground probability volumes in
/// row order; the result row shows `detection`'s voxels as 1.
pub fn build_synaptogram(
    channels: &[(String, &ProbabilityVolume)],
    detection: Option<&Detection>,
    dims: Dims,
    req: &SynaptogramRequest,
) -> Result<Synaptogram> {
    if req.slices == 0 || !(req.half_window_um >= 0.0) {
        return Err(Error::InvalidParameter(
            "synaptogram needs at least one slice and a non-negative window".into(),
        ));
    }
    let geometry = match channels.first() {
        Some((_, v)) => v.geometry,
        None => {
            return Err(Error::InvalidParameter(
                "synaptogram needs at least one channel".into(),
            ))
        }
    };
    for (name, v) in channels {
        v.expect_stage(Stage::Foreground)?;
        if v.dims != dims {
            return Err(Error::GeometryMismatch(format!("channel '{name}'")));
        }
    }

    let mut clamped = false;
    let center = match physical_to_voxel(req.center_um, &geometry, dims) {
        Ok(c) => c.map(|v| v as isize),
        Err(_) => {
            clamped = true;
            let s = geometry.spacing_um();
            std::array::from_fn(|a| (req.center_um[a] / s[a]).floor() as isize)
        }
    };
    let half = (req.half_window_um / geometry.spacing_um()[0]).round() as isize;
    let side = (2 * half + 1) as usize;
    let origin = [center[0] - half, center[1] - half];
    let first_slice = center[2] - (req.slices as isize - 1) / 2;
    let columns: Vec<isize> = (0..req.slices as isize).map(|k| first_slice + k).collect();

    clamped |= origin[0] < 0
        || origin[1] < 0
        || origin[0] + side as isize > dims.x as isize
        || origin[1] + side as isize > dims.y as isize
        || columns[0] < 0
        || *columns.last().unwrap() >= dims.z as isize;

    let members: HashSet<[usize; 3]> = detection
        .map(|d| d.voxels.iter().copied().collect())
        .unwrap_or_default();

    let sample = |z: isize, f: &dyn Fn(usize, usize, usize) -> f32| -> Vec<f32> {
        let mut px = vec![0f32; side * side];
        for py in 0..side {
            for pxx in 0..side {
                let x = origin[0] + pxx as isize;
                let y = origin[1] + py as isize;
                if dims.contains(x, y, z) {
                    px[py * side + pxx] = f(x as usize, y as usize, z as usize);
                }
            }
        }
        px
    };

    let mut rows: Vec<String> = channels.iter().map(|(n, _)| n.clone()).collect();
    rows.push(RESULT_ROW.to_string());
    let mut panels = Vec::with_capacity(rows.len() * columns.len());
    for (r, (_, v)) in channels.iter().enumerate() {
        for (c, &z) in columns.iter().enumerate() {
            panels.push(Panel {
                row: r,
                column: c,
                pixels: sample(z, &|x, y, z| v.get(x, y, z)),
            });
        }
    }
    let result_row = channels.len();
    for (c, &z) in columns.iter().enumerate() {
        panels.push(Panel {
            row: result_row,
            column: c,
            pixels: sample(z, &|x, y, z| {
                if members.contains(&[x, y, z]) {
                    1.0
                } else {
                    0.0
                }
            }),
        });
    }

    Ok(Synaptogram {
        layout: SynaptogramLayout {
            rows,
            columns,
            panel_width: side,
            panel_height: side,
            origin,
            clamped,
        },
        panels,
    })
}

/// Scales `[0, 1]` values to 8-bit gray.
pub fn to_gray8(pixels: &[f32]) -> Vec<u8> {
    pixels
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

//! Thresholding a synapse probability volume into discrete detections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{voxel_center_um, Detection, Dims, ProbabilityVolume};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Connectivity {
    /// Face neighbors only.
    #[serde(rename = "6")]
    Six,
    /// Face, edge and corner neighbors.
    #[serde(rename = "26")]
    TwentySix,
}

impl Connectivity {
    fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::new();
        for dz in -1..=1isize {
            for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

impl std::str::FromStr for Connectivity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "6" => Ok(Connectivity::Six),
            "26" => Ok(Connectivity::TwentySix),
            other => Err(Error::InvalidParameter(format!(
                "connectivity must be 6 or 26, got '{other}'"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    pub threshold: f64,
    pub min_voxels: usize,
    pub connectivity: Connectivity,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            threshold: 0.5,
            min_voxels: 2,
            connectivity: Connectivity::TwentySix,
        }
    }
}

impl DetectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.min_voxels == 0 {
            return Err(Error::InvalidParameter("min_voxels must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_threshold(self, threshold: f64) -> Self {
        DetectionParams { threshold, ..self }
    }
}

/// Groups voxels with `p ≥ threshold` into connected components.
///
/// Components smaller than `min_voxels` are dropped. Detections are sorted
/// by descending peak probability (ties by first voxel in scan order) and
/// numbered from 1 in that order.
pub fn extract_detections(p: &ProbabilityVolume, params: &DetectionParams) -> Result<Vec<Detection>> {
    params.validate()?;
    Ok(extract_unchecked(p, params))
}

// Used by sweeps, which may probe thresholds at the closed ends of (0, 1).
pub(crate) fn extract_unchecked(p: &ProbabilityVolume, params: &DetectionParams) -> Vec<Detection> {
    let dims = p.dims;
    let data = p.data();
    let threshold = params.threshold;
    let above = |i: usize| data[i] as f64 >= threshold;
    let offsets = params.connectivity.offsets();

    let mut visited = vec![false; dims.len()];
    let mut stack = Vec::new();
    let mut found: Vec<(usize, Detection)> = Vec::new();

    for seed in 0..dims.len() {
        if visited[seed] || !above(seed) {
            continue;
        }
        visited[seed] = true;
        stack.push(seed);
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(i);
            let [x, y, z] = dims.coords(i);
            for o in &offsets {
                let (nx, ny, nz) = (x as isize + o[0], y as isize + o[1], z as isize + o[2]);
                if !dims.contains(nx, ny, nz) {
                    continue;
                }
                let j = dims.index(nx as usize, ny as usize, nz as usize);
                if !visited[j] && above(j) {
                    visited[j] = true;
                    stack.push(j);
                }
            }
        }
        if members.len() < params.min_voxels {
            continue;
        }
        members.sort_unstable();
        found.push((seed, summarize(p, dims, members)));
    }

    found.sort_by(|(sa, a), (sb, b)| {
        b.peak_probability
            .total_cmp(&a.peak_probability)
            .then(sa.cmp(sb))
    });
    found
        .into_iter()
        .enumerate()
        .map(|(k, (_, mut d))| {
            d.id = k + 1;
            d
        })
        .collect()
}

fn summarize(p: &ProbabilityVolume, dims: Dims, members: Vec<usize>) -> Detection {
    let mut weight = 0.0f64;
    let mut moment = [0.0f64; 3];
    let mut peak = f64::NEG_INFINITY;
    let mut voxels = Vec::with_capacity(members.len());
    for &i in &members {
        let v = p.data()[i] as f64;
        let idx = dims.coords(i);
        let c = voxel_center_um(idx, &p.geometry);
        for a in 0..3 {
            moment[a] += v * c[a];
        }
        weight += v;
        peak = peak.max(v);
        voxels.push(idx);
    }
    let n = members.len() as f64;
    Detection {
        id: 0,
        centroid_um: moment.map(|m| m / weight),
        peak_probability: peak,
        mean_probability: (weight / n).min(peak),
        volume_um3: n * p.geometry.voxel_volume_um3(),
        voxels,
    }
}

/// A boolean region of interest over a volume's voxels, such as an
/// externally supplied layer mask.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelMask {
    pub dims: Dims,
    pub inside: Vec<bool>,
}

impl VoxelMask {
    pub fn new(dims: Dims, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != dims.len() {
            return Err(Error::InvalidVolume(format!(
                "mask has {} entries for {} voxels",
                inside.len(),
                dims.len()
            )));
        }
        Ok(VoxelMask { dims, inside })
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    /// Detections whose centroid voxel is inside the mask.
    pub fn count_detections(&self, dets: &[Detection], g: &crate::model::VoxelGeometry) -> usize {
        dets.iter()
            .filter(|d| {
                crate::model::physical_to_voxel(d.centroid_um, g, self.dims)
                    .map(|[x, y, z]| self.inside[self.dims.index(x, y, z)])
                    .unwrap_or(false)
            })
            .count()
    }
}

/// Detections per µm³. With a mask, only detections whose centroid voxel is
/// inside the mask are counted and the mask's own volume is the divisor.
pub fn density(
    dets: &[Detection],
    volume_um3: f64,
    mask: Option<(&VoxelMask, &crate::model::VoxelGeometry)>,
) -> Result<f64> {
    match mask {
        None => {
            if !(volume_um3 > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "density needs a positive volume, got {volume_um3}"
                )));
            }
            Ok(dets.len() as f64 / volume_um3)
        }
        Some((mask, g)) => {
            let mask_volume = mask.count() as f64 * g.voxel_volume_um3();
            if mask_volume <= 0.0 {
                return Err(Error::InvalidParameter("mask selects no voxels".into()));
            }
            Ok(mask.count_detections(dets, g) as f64 / mask_volume)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityPoint {
    pub threshold: f64,
    pub count: usize,
    pub density: f64,
}

/// Detection count and density at each threshold. `params.threshold` is
/// ignored. With a mask, counts and volume follow [`density`].
pub fn density_sweep(
    p: &ProbabilityVolume,
    thresholds: &[f64],
    params: &DetectionParams,
    mask: Option<&VoxelMask>,
) -> Result<Vec<DensityPoint>> {
    validate_thresholds(thresholds)?;
    if let Some(m) = mask {
        if m.dims != p.dims {
            return Err(Error::GeometryMismatch("mask dims differ from volume".into()));
        }
    }
    let volume = p.dims.len() as f64 * p.geometry.voxel_volume_um3();
    thresholds
        .iter()
        .map(|&t| {
            let dets = extract_unchecked(p, &params.with_threshold(t));
            let density = density(&dets, volume, mask.map(|m| (m, &p.geometry)))?;
            let count = mask.map_or(dets.len(), |m| m.count_detections(&dets, &p.geometry));
            Ok(DensityPoint {
                threshold: t,
                count,
                density,
            })
        })
        .collect()
}

/// Non-empty, inside `[0, 1]` and strictly increasing.
pub fn validate_thresholds(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() {
        return Err(Error::InvalidParameter("threshold grid is empty".into()));
    }
    if thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidParameter(
            "thresholds must lie in [0, 1]".into(),
        ));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "thresholds must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Evenly spaced thresholds `lo, lo + step, …` up to and including `hi`,
/// rounded to 1e-9 so that printed values stay short.
pub fn threshold_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n)
        .map(|k| ((lo + k as f64 * step) * 1e9).round() / 1e9)
        .collect()
}

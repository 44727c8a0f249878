//! Shared data types, voxel indexing conventions and unit conversions.
//!
//! Geometry is stored in nanometers (as microscopes report it); physical
//! positions and punctum extents are in micrometers. Voxels are indexed
//! zero-based with `x` varying fastest, then `y`, then `z`. Voxel `i` covers
//! the half-open physical interval `[i·s, (i+1)·s)` on each axis and its
//! center sits at `(i + 0.5)·s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound applied to every stage probability so that logarithms stay
/// finite (`ln 1e-12 ≈ -27.6`).
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Relative slack used when snapping a physical coordinate onto a lattice
/// boundary, so `0.35 µm / 70 nm` lands on slice 5 and not 4.
const LATTICE_SNAP: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoxelGeometry {
    /// Nanometers per pixel in x and y.
    pub pixel_size_xy: f64,
    /// Nanometers per slice in z.
    pub slice_thickness_z: f64,
}

impl VoxelGeometry {
    pub fn new(pixel_size_xy: f64, slice_thickness_z: f64) -> Result<Self> {
        let g = VoxelGeometry {
            pixel_size_xy,
            slice_thickness_z,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.pixel_size_xy) || !ok(self.slice_thickness_z) {
            return Err(Error::InvalidParameter(format!(
                "voxel geometry must be strictly positive, got {} x {} nm",
                self.pixel_size_xy, self.slice_thickness_z
            )));
        }
        Ok(())
    }

    /// Voxel edge lengths in micrometers, `[x, y, z]`.
    pub fn spacing_um(&self) -> [f64; 3] {
        let xy = self.pixel_size_xy / 1000.0;
        [xy, xy, self.slice_thickness_z / 1000.0]
    }

    pub fn voxel_volume_um3(&self) -> f64 {
        let [sx, sy, sz] = self.spacing_um();
        sx * sy * sz
    }
}

/// Voxel counts along x, y and z. Serialized as `[X, Y, Z]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Dims {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl From<[usize; 3]> for Dims {
    fn from([x, y, z]: [usize; 3]) -> Self {
        Dims { x, y, z }
    }
}

impl From<Dims> for [usize; 3] {
    fn from(d: Dims) -> Self {
        [d.x, d.y, d.z]
    }
}

impl Dims {
    pub const fn new(x: usize, y: usize, z: usize) -> Self {
        Dims { x, y, z }
    }

    pub fn len(&self) -> usize {
        self.x * self.y * self.z
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice_len(&self) -> usize {
        self.x * self.y
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.y + y) * self.x + x
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 3] {
        let x = i % self.x;
        let y = (i / self.x) % self.y;
        let z = i / self.slice_len();
        [x, y, z]
    }

    pub fn contains(&self, x: isize, y: isize, z: isize) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.x
            && (y as usize) < self.y
            && (z as usize) < self.z
    }

    pub fn as_array(&self) -> [usize; 3] {
        (*self).into()
    }

    fn validate(&self) -> Result<()> {
        if self.x == 0 || self.y == 0 || self.z == 0 {
            return Err(Error::InvalidVolume(format!(
                "dimensions must be at least 1 on every axis, got {}x{}x{}",
                self.x, self.y, self.z
            )));
        }
        Ok(())
    }
}

/// One antibody channel: a scalar intensity per voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelVolume {
    pub name: String,
    pub dims: Dims,
    pub geometry: VoxelGeometry,
    data: Vec<f32>,
}

impl ChannelVolume {
    pub fn new(
        name: impl Into<String>,
        dims: Dims,
        geometry: VoxelGeometry,
        data: Vec<f32>,
    ) -> Result<Self> {
        let name = name.into();
        dims.validate()?;
        geometry.validate()?;
        if data.len() != dims.len() {
            return Err(Error::InvalidVolume(format!(
                "channel '{name}': {} values for {} voxels",
                data.len(),
                dims.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidVolume(format!(
                "channel '{name}': voxel {bad} has intensity {}",
                data[bad]
            )));
        }
        Ok(ChannelVolume {
            name,
            dims,
            geometry,
            data,
        })
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn slice(&self, z: usize) -> &[f32] {
        let n = self.dims.slice_len();
        &self.data[z * n..(z + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.dims.index(x, y, z)]
    }
}

/// Which pipeline stage produced a probability volume.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Foreground,
    Puncta2D,
    Puncta3D,
    Synapse,
}

/// A per-voxel probability field tagged with the stage that produced it.
///
/// Single-channel stages hold values in `[PROBABILITY_FLOOR, 1]`. A
/// [`Stage::Synapse`] volume is a product of per-marker factors and may go as
/// low as `PROBABILITY_FLOOR.powi(markers)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVolume {
    pub stage: Stage,
    pub dims: Dims,
    pub geometry: VoxelGeometry,
    data: Vec<f32>,
}

impl ProbabilityVolume {
    pub fn new(stage: Stage, dims: Dims, geometry: VoxelGeometry, data: Vec<f32>) -> Result<Self> {
        dims.validate()?;
        geometry.validate()?;
        if data.len() != dims.len() {
            return Err(Error::InvalidVolume(format!(
                "{} probabilities for {} voxels",
                data.len(),
                dims.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidVolume(format!(
                "voxel {bad} holds {} which is not a probability",
                data[bad]
            )));
        }
        Ok(ProbabilityVolume {
            stage,
            dims,
            geometry,
            data,
        })
    }

    /// Constant-valued volume; handy for tests and neutral factors.
    pub fn filled(stage: Stage, dims: Dims, geometry: VoxelGeometry, value: f32) -> Result<Self> {
        Self::new(stage, dims, geometry, vec![value; dims.len()])
    }

    pub(crate) fn from_parts_unchecked(
        stage: Stage,
        dims: Dims,
        geometry: VoxelGeometry,
        data: Vec<f32>,
    ) -> Self {
        debug_assert_eq!(data.len(), dims.len());
        ProbabilityVolume {
            stage,
            dims,
            geometry,
            data,
        }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.dims.index(x, y, z)]
    }

    pub fn slice(&self, z: usize) -> &[f32] {
        let n = self.dims.slice_len();
        &self.data[z * n..(z + 1) * n]
    }

    pub fn with_stage(mut self, stage: Stage) -> Self {
        self.stage = stage;
        self
    }

    pub(crate) fn expect_stage(&self, stage: Stage) -> Result<()> {
        if self.stage != stage {
            return Err(Error::InvalidVolume(format!(
                "expected a {stage:?} volume, got {:?}",
                self.stage
            )));
        }
        Ok(())
    }
}

/// Expected physical size of a punctum for one marker.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PunctaSize {
    /// Lateral diameter in micrometers.
    pub xy_um: f64,
    /// Axial span in micrometers.
    pub z_um: f64,
}

impl PunctaSize {
    pub fn new(xy_um: f64, z_um: f64) -> Result<Self> {
        let s = PunctaSize { xy_um, z_um };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xy_um.is_finite() && self.xy_um > 0.0 && self.z_um.is_finite() && self.z_um > 0.0)
        {
            return Err(Error::InvalidParameter(format!(
                "punctum size must be positive, got {} x {} µm",
                self.xy_um, self.z_um
            )));
        }
        Ok(())
    }

    pub fn window_halfwidth(&self, g: &VoxelGeometry) -> usize {
        window_halfwidth(self.xy_um, g)
    }

    pub fn slice_span(&self, g: &VoxelGeometry) -> usize {
        slice_span(self.z_um, g)
    }
}

/// How a marker is searched for relative to the anchor voxel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// One subregion centered on the anchor (K = 1).
    Colocalized,
    /// 3 × 3 × 3 subregions around the anchor (K = 3).
    GridSearch,
}

impl SearchMode {
    pub fn subregions_per_axis(self) -> usize {
        match self {
            SearchMode::Colocalized => 1,
            SearchMode::GridSearch => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerQuery {
    #[serde(rename = "channel")]
    pub channel_name: String,
    pub size: PunctaSize,
    pub search_mode: SearchMode,
}

impl MarkerQuery {
    pub fn new(channel_name: impl Into<String>, size: PunctaSize, search_mode: SearchMode) -> Self {
        MarkerQuery {
            channel_name: channel_name.into(),
            size,
            search_mode,
        }
    }
}

/// Synapse class carried by ground truth and, optionally, by a query.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Excitatory,
    Inhibitory,
    Other,
}

/// A synapse subtype: which markers to look for on each side and how big
/// their puncta are expected to be.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub name: String,
    pub presynaptic: Vec<MarkerQuery>,
    pub postsynaptic: Vec<MarkerQuery>,
    /// Ground-truth class this query is meant to find, used when scoring.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

impl QuerySpec {
    /// Builds a query using the default search modes: presynaptic markers are
    /// grid-searched, postsynaptic markers co-localized.
    pub fn new(
        name: impl Into<String>,
        presynaptic: Vec<(String, PunctaSize)>,
        postsynaptic: Vec<(String, PunctaSize)>,
    ) -> Result<Self> {
        let q = QuerySpec {
            name: name.into(),
            presynaptic: presynaptic
                .into_iter()
                .map(|(c, s)| MarkerQuery::new(c, s, SearchMode::GridSearch))
                .collect(),
            postsynaptic: postsynaptic
                .into_iter()
                .map(|(c, s)| MarkerQuery::new(c, s, SearchMode::Colocalized))
                .collect(),
            label: None,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = Some(label);
        self
    }

    /// The marker whose voxel lattice is the reference frame of the output.
    pub fn anchor(&self) -> &MarkerQuery {
        &self.postsynaptic[0]
    }

    pub fn markers(&self) -> impl Iterator<Item = &MarkerQuery> {
        self.presynaptic.iter().chain(self.postsynaptic.iter())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidQuery {
                name: self.name.clone(),
                reason,
            })
        };
        if self.presynaptic.is_empty() {
            return fail("needs at least one presynaptic marker".into());
        }
        if self.postsynaptic.is_empty() {
            return fail("needs at least one postsynaptic marker".into());
        }
        let mut seen = std::collections::HashSet::new();
        for m in self.markers() {
            if !seen.insert(m.channel_name.as_str()) {
                return fail(format!("channel '{}' listed twice", m.channel_name));
            }
            if let Err(e) = m.size.validate() {
                return fail(format!("channel '{}': {e}", m.channel_name));
            }
        }
        Ok(())
    }
}

/// One connected cluster of above-threshold voxels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub id: usize,
    pub voxels: Vec<[usize; 3]>,
    pub centroid_um: [f64; 3],
    pub peak_probability: f64,
    pub mean_probability: f64,
    pub volume_um3: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthAnnotation {
    pub id: i64,
    pub label: Label,
    pub centroid_um: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voxels: Option<Vec<[usize; 3]>>,
}

/// Maps a physical point (µm) to the voxel that contains it.
pub fn physical_to_voxel(p_um: [f64; 3], g: &VoxelGeometry, dims: Dims) -> Result<[usize; 3]> {
    const AXES: [&str; 3] = ["x", "y", "z"];
    let spacing = g.spacing_um();
    let limits = dims.as_array();
    let mut out = [0usize; 3];
    for a in 0..3 {
        let t = p_um[a] / spacing[a];
        let snapped = snap_floor(t);
        if !t.is_finite() || snapped < 0.0 || snapped >= limits[a] as f64 {
            return Err(Error::OutOfBounds {
                axis: AXES[a],
                value: p_um[a],
                limit: limits[a] as f64 * spacing[a],
            });
        }
        out[a] = snapped as usize;
    }
    Ok(out)
}

fn snap_floor(t: f64) -> f64 {
    let r = t.round();
    if (t - r).abs() <= LATTICE_SNAP * r.abs().max(1.0) {
        r
    } else {
        t.floor()
    }
}

/// Physical position (µm) of a voxel's center.
pub fn voxel_center_um(idx: [usize; 3], g: &VoxelGeometry) -> [f64; 3] {
    let s = g.spacing_um();
    [
        (idx[0] as f64 + 0.5) * s[0],
        (idx[1] as f64 + 0.5) * s[1],
        (idx[2] as f64 + 0.5) * s[2],
    ]
}

/// Half-width `W` of the in-slice window for a punctum of lateral diameter
/// `xy_um`; the window is `2W + 1` pixels on a side.
///
/// `W = round(xy_um / (2 · pixel))`, ties rounded up.
pub fn window_halfwidth(xy_um: f64, g: &VoxelGeometry) -> usize {
    let ratio = xy_um * 1000.0 / (2.0 * g.pixel_size_xy);
    snap_round(ratio).max(0.0) as usize
}

/// Number of slices a punctum of axial span `z_um` covers, at least 1.
pub fn slice_span(z_um: f64, g: &VoxelGeometry) -> usize {
    let ratio = z_um * 1000.0 / g.slice_thickness_z;
    (snap_round(ratio) as usize).max(1)
}

// Rounds half away from zero, treating values within LATTICE_SNAP of x.5 as x.5.
fn snap_round(t: f64) -> f64 {
    let half = t.floor() + 0.5;
    if (t - half).abs() <= LATTICE_SNAP * half.abs().max(1.0) {
        half.ceil()
    } else {
        t.round()
    }
}

/// The z-offsets whose 2D puncta probability is compared against the center
/// slice.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SliceNeighborhood {
    /// Odd spans: `±1 … ±(s-1)/2`. Empty for `s = 1`.
    Symmetric(Vec<isize>),
    /// Even spans: two mirrored one-sided sets; the larger resulting factor
    /// wins.
    BestOf(Vec<isize>, Vec<isize>),
}

impl SliceNeighborhood {
    pub fn from_span(span: usize) -> Self {
        let s = span.max(1) as isize;
        if s % 2 == 1 {
            let h = (s - 1) / 2;
            SliceNeighborhood::Symmetric((-h..=h).filter(|&j| j != 0).collect())
        } else {
            let before = s / 2;
            let after = (s - 1) / 2;
            let a = (-before..=after).filter(|&j| j != 0).collect();
            let b = (-after..=before).filter(|&j| j != 0).collect();
            SliceNeighborhood::BestOf(a, b)
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, SliceNeighborhood::Symmetric(v) if v.is_empty())
    }
}

//! Synthetic multi-channel volumes with planted, annotated synapses.
//!
//! Each synapse puts a postsynaptic punctum at its center in every
//! postsynaptic marker channel and a presynaptic punctum, shifted by the
//! cleft offset along a random axis-aligned direction, in every presynaptic
//! marker channel. Puncta are anisotropic Gaussian blobs limited to
//! `z_span` slices. Lone decoy puncta appear on one side only and are not
//! annotated.
//!
//! Randomness is drawn from ChaCha streams keyed by the seed plus a stream
//! id (placement, or channel and slice for noise), so output is identical
//! for any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChannelVolume, Dims, GroundTruthAnnotation, Label, VoxelGeometry};
use crate::postprocess::VoxelMask;

const PLACEMENT_STREAM: u64 = u64::MAX;
const MAX_PLACEMENT_ATTEMPTS: usize = 100_000;
/// Blobs are rendered out to this many standard deviations laterally.
const PSF_TRUNCATION: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub mean: f64,
    pub sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub label: Label,
    pub count: usize,
    pub pre_markers: Vec<String>,
    pub post_markers: Vec<String>,
    /// Peak blob intensity above the background mean.
    pub amplitude: f64,
    #[serde(default = "default_cleft_offset")]
    pub cleft_offset_um: f64,
    pub z_span: usize,
}

fn default_cleft_offset() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dims: Dims,
    pub geometry: VoxelGeometry,
    pub background: Background,
    pub psf_sigma_xy_um: f64,
    pub psf_sigma_z_um: f64,
    pub populations: Vec<Population>,
    /// Presynaptic-only puncta per µm³.
    #[serde(default)]
    pub lone_pre_per_um3: f64,
    /// Postsynaptic-only puncta per µm³.
    #[serde(default)]
    pub lone_post_per_um3: f64,
    pub rng_seed: u64,
    /// Planted centers keep at least this far from every face, per axis.
    pub border_margin_um: [f64; 3],
    #[serde(default = "default_min_separation")]
    pub min_separation_um: f64,
    /// Minimum distance from a decoy to any other planted punctum.
    #[serde(default = "default_decoy_separation")]
    pub decoy_separation_um: f64,
}

fn default_min_separation() -> f64 {
    0.5
}

fn default_decoy_separation() -> f64 {
    1.0
}

impl SynthSpec {
    /// A spec with one population and the defaults used throughout the test
    /// suite: 100 nm pixels, 70 nm slices, background 100 ± 10, PSF σ of
    /// 0.1 µm laterally and 0.07 µm axially.
    pub fn single_population(dims: Dims, population: Population, seed: u64) -> Self {
        SynthSpec {
            dims,
            geometry: VoxelGeometry {
                pixel_size_xy: 100.0,
                slice_thickness_z: 70.0,
            },
            background: Background {
                mean: 100.0,
                sigma: 10.0,
            },
            psf_sigma_xy_um: 0.1,
            psf_sigma_z_um: 0.07,
            populations: vec![population],
            lone_pre_per_um3: 0.0,
            lone_post_per_um3: 0.0,
            rng_seed: seed,
            border_margin_um: [0.5, 0.5, 0.35],
            min_separation_um: default_min_separation(),
            decoy_separation_um: default_decoy_separation(),
        }
    }

    pub fn volume_um3(&self) -> f64 {
        self.dims.len() as f64 * self.geometry.voxel_volume_um3()
    }

    /// Voxels whose centers lie inside the planting region, i.e. at least the
    /// border margin away from every face.
    pub fn planting_mask(&self) -> VoxelMask {
        let s = self.geometry.spacing_um();
        let n = self.dims.as_array();
        let inside_axis = |a: usize| -> Vec<bool> {
            let extent = n[a] as f64 * s[a];
            (0..n[a])
                .map(|i| {
                    let c = (i as f64 + 0.5) * s[a];
                    c >= self.border_margin_um[a] && c <= extent - self.border_margin_um[a]
                })
                .collect()
        };
        let (ix, iy, iz) = (inside_axis(0), inside_axis(1), inside_axis(2));
        let mut inside = Vec::with_capacity(self.dims.len());
        for z in 0..n[2] {
            for y in 0..n[1] {
                for x in 0..n[0] {
                    inside.push(ix[x] && iy[y] && iz[z]);
                }
            }
        }
        VoxelMask::new(self.dims, inside).expect("mask matches dims")
    }

    /// Peak amplitude over background σ for a population.
    pub fn snr(&self, population: usize) -> f64 {
        self.populations[population].amplitude / self.background.sigma
    }

    /// Marker channels in first-mention order.
    pub fn channel_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for p in &self.populations {
            for m in p.pre_markers.iter().chain(&p.post_markers) {
                if !names.contains(m) {
                    names.push(m.clone());
                }
            }
        }
        names
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Synth(m));
        self.geometry.validate()?;
        if self.dims.is_empty() {
            return fail("dims must be positive".into());
        }
        if !(self.background.sigma >= 0.0 && self.background.mean >= 0.0) {
            return fail("background mean and sigma must be non-negative".into());
        }
        if !(self.psf_sigma_xy_um > 0.0 && self.psf_sigma_z_um > 0.0) {
            return fail("PSF sigmas must be positive".into());
        }
        if self.populations.is_empty() {
            return fail("at least one population is required".into());
        }
        for (k, p) in self.populations.iter().enumerate() {
            if !(p.amplitude > 0.0) {
                return fail(format!("population {k}: amplitude must be positive"));
            }
            if p.pre_markers.is_empty() || p.post_markers.is_empty() {
                return fail(format!("population {k}: needs pre and post markers"));
            }
            if p.z_span == 0 {
                return fail(format!("population {k}: z_span must be at least 1"));
            }
            if p.cleft_offset_um < 0.0 {
                return fail(format!("population {k}: cleft offset must be non-negative"));
            }
        }
        if self.lone_pre_per_um3 < 0.0 || self.lone_post_per_um3 < 0.0 {
            return fail("decoy rates must be non-negative".into());
        }
        let extent = self.extent_um();
        for a in 0..3 {
            if self.border_margin_um[a] < 0.0 || 2.0 * self.border_margin_um[a] >= extent[a] {
                return fail(format!(
                    "border margin {} µm leaves no room on axis {a} ({} µm)",
                    self.border_margin_um[a], extent[a]
                ));
            }
        }
        Ok(())
    }

    fn extent_um(&self) -> [f64; 3] {
        let s = self.geometry.spacing_um();
        [
            self.dims.x as f64 * s[0],
            self.dims.y as f64 * s[1],
            self.dims.z as f64 * s[2],
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Pre,
    Post,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedSynapse {
    pub population: usize,
    pub label: Label,
    pub post_center_um: [f64; 3],
    pub pre_center_um: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoy {
    pub population: usize,
    pub side: Side,
    pub center_um: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct SynthDataset {
    pub channels: Vec<ChannelVolume>,
    /// One record per planted synapse, centered on its postsynaptic punctum.
    pub annotations: Vec<GroundTruthAnnotation>,
    pub synapses: Vec<PlantedSynapse>,
    pub decoys: Vec<Decoy>,
}

struct Blob {
    center_um: [f64; 3],
    amplitude: f64,
    z_span: usize,
}

/// Renders the spec into noisy channel volumes plus ground truth.
pub fn generate(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    rng.set_stream(PLACEMENT_STREAM);

    let extent = spec.extent_um();
    let margin = spec.border_margin_um;
    let sample_center = |rng: &mut ChaCha8Rng| -> [f64; 3] {
        std::array::from_fn(|a| rng.gen_range(margin[a]..extent[a] - margin[a]))
    };
    let dist = |a: [f64; 3], b: [f64; 3]| {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    };

    let mut synapses: Vec<PlantedSynapse> = Vec::new();
    for (pi, pop) in spec.populations.iter().enumerate() {
        for _ in 0..pop.count {
            let mut placed = false;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let post = sample_center(&mut rng);
                let axis = rng.gen_range(0..3usize);
                let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                let mut pre = post;
                pre[axis] += sign * pop.cleft_offset_um;
                if pre[axis] < margin[axis] || pre[axis] > extent[axis] - margin[axis] {
                    continue;
                }
                if synapses
                    .iter()
                    .any(|s| dist(s.post_center_um, post) < spec.min_separation_um)
                {
                    continue;
                }
                synapses.push(PlantedSynapse {
                    population: pi,
                    label: pop.label,
                    post_center_um: post,
                    pre_center_um: pre,
                });
                placed = true;
                break;
            }
            if !placed {
                return Err(Error::Synth(format!(
                    "could not place {} synapses {} µm apart in {:.1} µm³",
                    spec.populations.iter().map(|p| p.count).sum::<usize>(),
                    spec.min_separation_um,
                    spec.volume_um3()
                )));
            }
        }
    }

    let volume = spec.volume_um3();
    let expected_decoys = |rate: f64| (rate * volume).round() as usize;
    let total_count: usize = spec.populations.iter().map(|p| p.count.max(1)).sum();
    let mut decoys: Vec<Decoy> = Vec::new();
    for (side, rate) in [
        (Side::Pre, spec.lone_pre_per_um3),
        (Side::Post, spec.lone_post_per_um3),
    ] {
        for _ in 0..expected_decoys(rate) {
            // population chosen in proportion to its synapse count
            let mut pick = rng.gen_range(0..total_count);
            let population = spec
                .populations
                .iter()
                .position(|p| {
                    let c = p.count.max(1);
                    if pick < c {
                        true
                    } else {
                        pick -= c;
                        false
                    }
                })
                .unwrap_or(0);
            let mut placed = false;
            for _ in 0..MAX_PLACEMENT_ATTEMPTS {
                let c = sample_center(&mut rng);
                let clear = synapses.iter().all(|s| {
                    dist(s.post_center_um, c) >= spec.decoy_separation_um
                        && dist(s.pre_center_um, c) >= spec.decoy_separation_um
                }) && decoys
                    .iter()
                    .all(|d| dist(d.center_um, c) >= spec.decoy_separation_um);
                if clear {
                    decoys.push(Decoy {
                        population,
                        side,
                        center_um: c,
                    });
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::Synth("no room left for decoy puncta".into()));
            }
        }
    }

    let names = spec.channel_names();
    let channels = names
        .par_iter()
        .enumerate()
        .map(|(ci, name)| {
            let mut blobs = Vec::new();
            for s in &synapses {
                let pop = &spec.populations[s.population];
                let blob = |center_um| Blob {
                    center_um,
                    amplitude: pop.amplitude,
                    z_span: pop.z_span,
                };
                if pop.post_markers.contains(name) {
                    blobs.push(blob(s.post_center_um));
                }
                if pop.pre_markers.contains(name) {
                    blobs.push(blob(s.pre_center_um));
                }
            }
            for d in &decoys {
                let pop = &spec.populations[d.population];
                let markers = match d.side {
                    Side::Pre => &pop.pre_markers,
                    Side::Post => &pop.post_markers,
                };
                if markers.contains(name) {
                    blobs.push(Blob {
                        center_um: d.center_um,
                        amplitude: pop.amplitude,
                        z_span: pop.z_span,
                    });
                }
            }
            render_channel(spec, ci as u64, name, &blobs)
        })
        .collect::<Result<Vec<_>>>()?;

    let annotations = synapses
        .iter()
        .enumerate()
        .map(|(k, s)| GroundTruthAnnotation {
            id: k as i64 + 1,
            label: s.label,
            centroid_um: s.post_center_um,
            voxels: None,
        })
        .collect();

    Ok(SynthDataset {
        channels,
        annotations,
        synapses,
        decoys,
    })
}

fn render_channel(spec: &SynthSpec, channel: u64, name: &str, blobs: &[Blob]) -> Result<ChannelVolume> {
    let dims = spec.dims;
    let s = spec.geometry.spacing_um();
    let mut signal = vec![0f64; dims.len()];

    let rxy = PSF_TRUNCATION * spec.psf_sigma_xy_um;
    let inv_xy = 1.0 / (2.0 * spec.psf_sigma_xy_um.powi(2));
    let inv_z = 1.0 / (2.0 * spec.psf_sigma_z_um.powi(2));
    for b in blobs {
        let c = b.center_um;
        let cz = (c[2] / s[2]).floor() as isize;
        let below = (b.z_span as isize - 1) / 2;
        let above = b.z_span as isize / 2;
        let x_range = voxel_range(c[0] - rxy, c[0] + rxy, s[0], dims.x);
        let y_range = voxel_range(c[1] - rxy, c[1] + rxy, s[1], dims.y);
        for z in (cz - below)..=(cz + above) {
            if z < 0 || z >= dims.z as isize {
                continue;
            }
            let z = z as usize;
            let dz = (z as f64 + 0.5) * s[2] - c[2];
            let wz = (-dz * dz * inv_z).exp();
            for y in y_range.clone() {
                let dy = (y as f64 + 0.5) * s[1] - c[1];
                for x in x_range.clone() {
                    let dx = (x as f64 + 0.5) * s[0] - c[0];
                    signal[dims.index(x, y, z)] +=
                        b.amplitude * wz * (-(dx * dx + dy * dy) * inv_xy).exp();
                }
            }
        }
    }

    let n = dims.slice_len();
    let bg = spec.background;
    let mut data = vec![0f32; dims.len()];
    data.par_chunks_mut(n)
        .zip(signal.par_chunks(n))
        .enumerate()
        .for_each(|(z, (dst, sig))| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
            rng.set_stream((channel << 32) | z as u64);
            for (d, &v) in dst.iter_mut().zip(sig) {
                let noise: f64 = StandardNormal.sample(&mut rng);
                *d = (bg.mean + v + bg.sigma * noise).max(0.0) as f32;
            }
        });
    ChannelVolume::new(name, dims, spec.geometry, data)
}

fn voxel_range(lo_um: f64, hi_um: f64, spacing: f64, n: usize) -> std::ops::Range<usize> {
    let lo = (lo_um / spacing).floor().max(0.0) as usize;
    let hi = ((hi_um / spacing).ceil().max(0.0) as usize).min(n);
    lo.min(hi)..hi
}

//! Pre/postsynaptic adjacency and full query execution.
//!
//! For each anchor voxel, a marker's evidence is the best geometric mean of
//! its 3D puncta probability over the subregions of a grid centered on that
//! voxel. Presynaptic markers use a 3 × 3 × 3 grid so a punctum sitting next
//! to the postsynaptic one is still found; postsynaptic markers use a single
//! centered subregion. The synapse probability is the product of all marker
//! evidences.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{
    ChannelVolume, Dims, MarkerQuery, ProbabilityVolume, QuerySpec, SearchMode, Stage,
    VoxelGeometry, PROBABILITY_FLOOR,
};
use crate::pipeline::{run_channel, BackgroundFit, ChannelStages};

/// A `K × K × K` arrangement of equal subregions around an anchor voxel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    /// Subregions per axis, 1 or 3.
    pub per_axis: usize,
    /// Subregion size in voxels, `[x, y, z]`.
    pub extent: [usize; 3],
}

impl GridSpec {
    pub fn new(per_axis: usize, extent: [usize; 3]) -> Result<Self> {
        if per_axis != 1 && per_axis != 3 {
            return Err(Error::InvalidParameter(format!(
                "grid must have 1 or 3 subregions per axis, got {per_axis}"
            )));
        }
        if extent.iter().any(|&e| e == 0) {
            return Err(Error::InvalidParameter(format!(
                "subregion extent must be at least 1 voxel, got {extent:?}"
            )));
        }
        Ok(GridSpec { per_axis, extent })
    }

    /// Subregions sized by the marker's own window (`2W+1` pixels, `s`
    /// slices).
    pub fn for_marker(m: &MarkerQuery, g: &VoxelGeometry) -> Self {
        let w = 2 * m.size.window_halfwidth(g) + 1;
        GridSpec {
            per_axis: m.search_mode.subregions_per_axis(),
            extent: [w, w, m.size.slice_span(g)],
        }
    }

    /// Offsets of the subregion centers along one axis.
    fn shifts(&self, axis: usize) -> impl Iterator<Item = isize> {
        let half = (self.per_axis as isize - 1) / 2;
        let w = self.extent[axis] as isize;
        (-half..=half).map(move |k| k * w)
    }

    /// Inclusive voxel offsets `[lo, hi]` of one subregion around its center.
    fn span(&self, axis: usize) -> (isize, isize) {
        let w = self.extent[axis] as isize;
        let lo = -(w - 1) / 2;
        (lo, lo + w - 1)
    }

    fn reach(&self, axis: usize) -> usize {
        (self.per_axis - 1) / 2 * self.extent[axis]
    }

    /// Half-size of the whole grid along each axis, in voxels.
    pub fn half_extent(&self) -> [usize; 3] {
        std::array::from_fn(|a| {
            let (lo, hi) = self.span(a);
            self.reach(a) + lo.unsigned_abs().max(hi.unsigned_abs())
        })
    }
}

/// Best subregion geometric mean of `p` around `center`.
///
/// Out-of-volume voxels are left out of a subregion's mean; a subregion with
/// no voxel inside the volume scores [`PROBABILITY_FLOOR`].
pub fn grid_max_logmean(p: &ProbabilityVolume, center: [usize; 3], g: &GridSpec) -> Result<f64> {
    p.expect_stage(Stage::Puncta3D)?;
    let dims = p.dims;
    let (sx, sy, sz) = (g.span(0), g.span(1), g.span(2));
    let mut best = f64::NEG_INFINITY;
    for kz in g.shifts(2) {
        for ky in g.shifts(1) {
            for kx in g.shifts(0) {
                let (mut sum, mut count) = (0.0f64, 0usize);
                for dz in sz.0..=sz.1 {
                    for dy in sy.0..=sy.1 {
                        for dx in sx.0..=sx.1 {
                            let x = center[0] as isize + kx + dx;
                            let y = center[1] as isize + ky + dy;
                            let z = center[2] as isize + kz + dz;
                            if dims.contains(x, y, z) {
                                sum += (p.get(x as usize, y as usize, z as usize) as f64).ln();
                                count += 1;
                            }
                        }
                    }
                }
                let score = if count == 0 {
                    PROBABILITY_FLOOR.ln()
                } else {
                    sum / count as f64
                };
                best = best.max(score);
            }
        }
    }
    Ok(best.exp().clamp(PROBABILITY_FLOOR, 1.0))
}

/// [`grid_max_logmean`] for every voxel of the volume at once.
///
/// Subregion sums come from separable box sums of `ln p` over a lattice
/// padded by the grid reach, so each voxel costs `K³` lookups.
pub fn grid_max_logmean_volume(p: &ProbabilityVolume, g: &GridSpec) -> Result<Vec<f64>> {
    p.expect_stage(Stage::Puncta3D)?;
    let dims = p.dims;
    let n = dims.as_array();
    let reach: [usize; 3] = std::array::from_fn(|a| g.reach(a));
    let ext: [usize; 3] = std::array::from_fn(|a| n[a] + 2 * reach[a]);

    let logs: Vec<f64> = p.data().par_iter().map(|&v| (v as f64).ln()).collect();

    // x pass: (ext_x, y, z)
    let (lo, hi) = g.span(0);
    let mut sx = vec![0f64; ext[0] * n[1] * n[2]];
    sx.par_chunks_mut(ext[0])
        .zip(logs.par_chunks(n[0]))
        .for_each(|(dst, row)| {
            for (ce, d) in dst.iter_mut().enumerate() {
                let c = ce as isize - reach[0] as isize;
                *d = axis_sum(c + lo, c + hi, n[0], |i| row[i]);
            }
        });

    // y pass: (ext_x, ext_y, z)
    let (lo, hi) = g.span(1);
    let plane_in = ext[0] * n[1];
    let plane_out = ext[0] * ext[1];
    let mut sxy = vec![0f64; plane_out * n[2]];
    sxy.par_chunks_mut(plane_out)
        .zip(sx.par_chunks(plane_in))
        .for_each(|(dst, src)| {
            for ye in 0..ext[1] {
                let c = ye as isize - reach[1] as isize;
                for x in 0..ext[0] {
                    dst[ye * ext[0] + x] = axis_sum(c + lo, c + hi, n[1], |y| src[y * ext[0] + x]);
                }
            }
        });
    drop(sx);

    // z pass: (ext_x, ext_y, ext_z)
    let (lo, hi) = g.span(2);
    let mut sums = vec![0f64; plane_out * ext[2]];
    sums.par_chunks_mut(plane_out)
        .enumerate()
        .for_each(|(ze, dst)| {
            let c = ze as isize - reach[2] as isize;
            for (i, d) in dst.iter_mut().enumerate() {
                *d = axis_sum(c + lo, c + hi, n[2], |z| sxy[z * plane_out + i]);
            }
        });
    drop(sxy);

    let counts: [Vec<usize>; 3] = std::array::from_fn(|a| {
        let (lo, hi) = g.span(a);
        (0..ext[a])
            .map(|ce| {
                let c = ce as isize - reach[a] as isize;
                let first = (c + lo).max(0);
                let last = (c + hi).min(n[a] as isize - 1);
                (last - first + 1).max(0) as usize
            })
            .collect()
    });

    let shifts: Vec<[isize; 3]> = g
        .shifts(2)
        .flat_map(|kz| {
            g.shifts(1)
                .flat_map(move |ky| g.shifts(0).map(move |kx| [kx, ky, kz]))
        })
        .collect();
    let floor_log = PROBABILITY_FLOOR.ln();

    let mut out = vec![0f64; dims.len()];
    out.par_chunks_mut(dims.slice_len())
        .enumerate()
        .for_each(|(z, dst)| {
            for y in 0..n[1] {
                for x in 0..n[0] {
                    let mut best = f64::NEG_INFINITY;
                    for k in &shifts {
                        let ex = (x + reach[0]) as isize + k[0];
                        let ey = (y + reach[1]) as isize + k[1];
                        let ez = (z + reach[2]) as isize + k[2];
                        let (ex, ey, ez) = (ex as usize, ey as usize, ez as usize);
                        let count = counts[0][ex] * counts[1][ey] * counts[2][ez];
                        let score = if count == 0 {
                            floor_log
                        } else {
                            sums[(ez * ext[1] + ey) * ext[0] + ex] / count as f64
                        };
                        best = best.max(score);
                    }
                    dst[y * n[0] + x] = best.exp().clamp(PROBABILITY_FLOOR, 1.0);
                }
            }
        });
    Ok(out)
}

#[inline]
fn axis_sum(first: isize, last: isize, n: usize, at: impl Fn(usize) -> f64) -> f64 {
    let first = first.max(0);
    let last = last.min(n as isize - 1);
    let mut acc = 0.0;
    let mut i = first;
    while i <= last {
        acc += at(i as usize);
        i += 1;
    }
    acc
}

/// One marker's 3D puncta volume paired with the grid it is searched with.
#[derive(Clone, Copy, Debug)]
pub struct MarkerEvidence<'a> {
    pub puncta_3d: &'a ProbabilityVolume,
    pub grid: GridSpec,
}

/// Multiplies the grid evidence of every marker into a synapse probability
/// volume. Presynaptic and postsynaptic evidences are treated alike; the
/// grid of each entry decides how it is searched.
pub fn synapse_probability(markers: &[MarkerEvidence<'_>]) -> Result<ProbabilityVolume> {
    let first = markers
        .first()
        .ok_or_else(|| Error::InvalidParameter("no marker evidence to combine".into()))?;
    let dims = first.puncta_3d.dims;
    let geometry = first.puncta_3d.geometry;
    for m in markers {
        check_frame(dims, geometry, m.puncta_3d.dims, m.puncta_3d.geometry)?;
    }

    let fields = markers
        .iter()
        .map(|m| grid_max_logmean_volume(m.puncta_3d, &m.grid))
        .collect::<Result<Vec<_>>>()?;

    let data = (0..dims.len())
        .into_par_iter()
        .map(|i| {
            // Fixed multiplication order regardless of how markers were listed.
            let mut factors: Vec<f64> = fields.iter().map(|f| f[i]).collect();
            factors.sort_by(f64::total_cmp);
            factors.iter().product::<f64>() as f32
        })
        .collect();
    Ok(ProbabilityVolume::from_parts_unchecked(
        Stage::Synapse,
        dims,
        geometry,
        data,
    ))
}

fn check_frame(dims: Dims, g: VoxelGeometry, other_dims: Dims, other_g: VoxelGeometry) -> Result<()> {
    if dims != other_dims || g != other_g {
        return Err(Error::GeometryMismatch(format!(
            "{}x{}x{} at {}x{} nm vs {}x{}x{} at {}x{} nm",
            dims.x,
            dims.y,
            dims.z,
            g.pixel_size_xy,
            g.slice_thickness_z,
            other_dims.x,
            other_dims.y,
            other_dims.z,
            other_g.pixel_size_xy,
            other_g.slice_thickness_z
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default)]
pub struct QueryOptions {
    pub background: BackgroundFit,
    /// Keep every intermediate stage in the result.
    pub keep_stages: bool,
}

/// Output of one query.
#[derive(Clone, Debug)]
pub struct QueryResult {
    pub synapse: ProbabilityVolume,
    /// Per-marker intermediate stages, in query order, when requested.
    pub stages: Vec<(String, ChannelStages)>,
}

/// Resolves every marker of `q` among `channels`, checking that they share
/// one voxel frame. Runs before any heavy computation.
pub fn resolve_channels<'a>(
    channels: &'a [ChannelVolume],
    q: &QuerySpec,
) -> Result<Vec<&'a ChannelVolume>> {
    q.validate()?;
    let resolved = q
        .markers()
        .map(|m| {
            channels
                .iter()
                .find(|c| c.name == m.channel_name)
                .ok_or_else(|| Error::UnknownChannel(m.channel_name.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let anchor = resolved[q.presynaptic.len()];
    for c in &resolved {
        check_frame(anchor.dims, anchor.geometry, c.dims, c.geometry)?;
    }
    Ok(resolved)
}

/// Runs the per-channel stages for every marker of `q` with that marker's
/// own punctum size, then combines them into a synapse probability volume
/// in the anchor's frame.
pub fn execute_query(channels: &[ChannelVolume], q: &QuerySpec, opts: QueryOptions) -> Result<QueryResult> {
    let resolved = resolve_channels(channels, q)?;
    let mut stages = Vec::with_capacity(resolved.len());
    for (m, c) in q.markers().zip(&resolved) {
        stages.push(run_channel(c, &m.size, opts.background)?);
    }
    let evidence: Vec<MarkerEvidence<'_>> = q
        .markers()
        .zip(&stages)
        .zip(&resolved)
        .map(|((m, s), c)| MarkerEvidence {
            puncta_3d: &s.puncta_3d,
            grid: GridSpec::for_marker(m, &c.geometry),
        })
        .collect();
    let synapse = synapse_probability(&evidence)?;
    let stages = if opts.keep_stages {
        q.markers()
            .map(|m| m.channel_name.clone())
            .zip(stages)
            .collect()
    } else {
        Vec::new()
    };
    Ok(QueryResult { synapse, stages })
}

/// Grid for a marker searched with `mode` using a subregion of `extent`.
pub fn grid_for(mode: SearchMode, extent: [usize; 3]) -> Result<GridSpec> {
    GridSpec::new(mode.subregions_per_axis(), extent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::PunctaSize;

    fn geom() -> VoxelGeometry {
        VoxelGeometry::new(100.0, 70.0).unwrap()
    }

    fn filled(dims: Dims, v: f32) -> ProbabilityVolume {
        ProbabilityVolume::filled(Stage::Puncta3D, dims, geom(), v).unwrap()
    }

    #[test]
    fn grid_spec_validation() {
        assert!(GridSpec::new(2, [3, 3, 3]).is_err());
        assert!(GridSpec::new(3, [3, 0, 3]).is_err());
        let g = GridSpec::new(3, [3, 3, 3]).unwrap();
        assert_eq!(g.half_extent(), [4, 4, 4]);
        let m = MarkerQuery::new(
            "syn",
            PunctaSize::new(0.2, 0.21).unwrap(),
            SearchMode::GridSearch,
        );
        assert_eq!(GridSpec::for_marker(&m, &geom()), g);
    }

    #[test]
    fn constant_volumes() {
        let dims = Dims::new(7, 7, 5);
        for k in [1, 3] {
            let g = GridSpec::new(k, [3, 3, 3]).unwrap();
            assert_eq!(grid_max_logmean(&filled(dims, 1.0), [3, 3, 2], &g).unwrap(), 1.0);
            let c = grid_max_logmean(&filled(dims, 0.37), [0, 6, 4], &g).unwrap();
            assert!((c - 0.37f32 as f64).abs() < 1e-12);
            let field = grid_max_logmean_volume(&filled(dims, 0.37), &g).unwrap();
            assert!(field.iter().all(|v| (v - 0.37f32 as f64).abs() < 1e-12));
        }
    }

    #[test]
    fn single_bright_subregion_wins() {
        let dims = Dims::new(9, 9, 9);
        let mut data = vec![PROBABILITY_FLOOR as f32; dims.len()];
        // subregion at grid offset (+1, 0, -1) around center (4,4,4): x 6..=8, y 3..=5, z 0..=2
        for z in 0..=2 {
            for y in 3..=5 {
                for x in 6..=8 {
                    data[dims.index(x, y, z)] = 0.8;
                }
            }
        }
        let p = ProbabilityVolume::new(Stage::Puncta3D, dims, geom(), data).unwrap();
        let g = GridSpec::new(3, [3, 3, 3]).unwrap();
        let v = grid_max_logmean(&p, [4, 4, 4], &g).unwrap();
        assert!((v - 0.8f32 as f64).abs() < 1e-12);
        let field = grid_max_logmean_volume(&p, &g).unwrap();
        assert!((field[dims.index(4, 4, 4)] - v).abs() < 1e-12);
    }

    #[test]
    fn fully_outside_subregions_score_floor() {
        let dims = Dims::new(1, 1, 1);
        let p = filled(dims, PROBABILITY_FLOOR as f32);
        let g = GridSpec::new(3, [1, 1, 1]).unwrap();
        let v = grid_max_logmean(&p, [0, 0, 0], &g).unwrap();
        assert!((v - PROBABILITY_FLOOR).abs() < 1e-20);
    }

    #[test]
    fn products_of_evidence() {
        let dims = Dims::new(9, 9, 5);
        let post_a = filled(dims, 0.9);
        let post_b = filled(dims, 0.9);
        let pre = filled(dims, 0.8);
        let k1 = GridSpec::new(1, [3, 3, 3]).unwrap();
        let k3 = GridSpec::new(3, [3, 3, 3]).unwrap();
        let out = synapse_probability(&[
            MarkerEvidence { puncta_3d: &pre, grid: k3 },
            MarkerEvidence { puncta_3d: &post_a, grid: k1 },
        ])
        .unwrap();
        assert_eq!(out.stage, Stage::Synapse);
        assert!(out.data().iter().all(|&v| (v - 0.72).abs() < 1e-6));

        let out = synapse_probability(&[
            MarkerEvidence { puncta_3d: &pre, grid: k3 },
            MarkerEvidence { puncta_3d: &post_a, grid: k1 },
            MarkerEvidence { puncta_3d: &post_b, grid: k1 },
        ])
        .unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.648).abs() < 1e-6));
    }

    #[test]
    fn mismatched_frames_rejected() {
        let a = filled(Dims::new(4, 4, 2), 0.5);
        let b = filled(Dims::new(4, 4, 3), 0.5);
        let g = GridSpec::new(1, [1, 1, 1]).unwrap();
        let err = synapse_probability(&[
            MarkerEvidence { puncta_3d: &a, grid: g },
            MarkerEvidence { puncta_3d: &b, grid: g },
        ])
        .unwrap_err();
        assert!(matches!(err, Error::GeometryMismatch(_)));
    }

    #[test]
    fn unknown_channel_is_named() {
        let c = ChannelVolume::new("psd95", Dims::new(2, 2, 1), geom(), vec![0.0; 4]).unwrap();
        let s = PunctaSize::new(0.2, 0.07).unwrap();
        let q = QuerySpec::new("q", vec![("gad".into(), s)], vec![("psd95".into(), s)]).unwrap();
        let err = execute_query(&[c], &q, QueryOptions::default()).unwrap_err();
        assert_eq!(err.to_string(), "unknown channel 'gad'");
    }
}

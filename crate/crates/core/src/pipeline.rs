//! Per-channel probability stages: background model, foreground
//! probability, 2D puncta probability and the slice-continuity factor.
//!
//! Every stage is a pure volume-to-volume map. Slices are processed in
//! parallel, but each output value is accumulated in a fixed order, so the
//! results do not depend on the thread count.

use rayon::prelude::*;

use crate::error::Result;
use crate::model::{
    ChannelVolume, Dims, ProbabilityVolume, PunctaSize, SliceNeighborhood, Stage,
    PROBABILITY_FLOOR,
};

/// Relative σ floor, as a fraction of a slice's dynamic range.
pub const SIGMA_RELATIVE_FLOOR: f64 = 1e-6;
/// Absolute σ floor, reached by constant slices.
pub const SIGMA_ABSOLUTE_FLOOR: f64 = 1e-12;

/// Gaussian background statistics, one `(μ, σ)` pair per slice.
#[derive(Clone, Debug, PartialEq)]
pub struct BackgroundModel {
    pub slices: Vec<SliceBackground>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceBackground {
    pub mean: f64,
    pub sigma: f64,
}

/// How background statistics are gathered from a slice.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct BackgroundFit {
    /// Drop this fraction of the brightest voxels of each slice before
    /// computing the statistics. `None` uses every voxel.
    pub trim_top_fraction: Option<f64>,
}

/// Fits the background model over every voxel of each slice.
pub fn fit_background(c: &ChannelVolume) -> BackgroundModel {
    fit_background_with(c, BackgroundFit::default())
}

pub fn fit_background_with(c: &ChannelVolume, fit: BackgroundFit) -> BackgroundModel {
    let slices = (0..c.dims.z)
        .into_par_iter()
        .map(|z| slice_statistics(c.slice(z), fit))
        .collect();
    BackgroundModel { slices }
}

fn slice_statistics(values: &[f32], fit: BackgroundFit) -> SliceBackground {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        });

    let trimmed;
    let sample: &[f32] = match fit.trim_top_fraction {
        Some(frac) if frac > 0.0 => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f32::total_cmp);
            let keep = ((sorted.len() as f64) * (1.0 - frac.min(1.0))).ceil() as usize;
            sorted.truncate(keep.max(1));
            trimmed = sorted;
            &trimmed
        }
        _ => values,
    };

    // Population convention (divide by N), two passes.
    let n = sample.len() as f64;
    let mean = sample.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = sample
        .iter()
        .map(|&v| {
            let d = v as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / n;

    let floor = (SIGMA_RELATIVE_FLOOR * (hi - lo)).max(SIGMA_ABSOLUTE_FLOOR);
    SliceBackground {
        mean,
        sigma: var.sqrt().max(floor),
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

#[inline]
fn clamp_probability(p: f64) -> f32 {
    p.clamp(PROBABILITY_FLOOR, 1.0) as f32
}

/// Probability that each voxel is brighter than its slice's background:
/// `Φ((v − μ)/σ)`, floored at [`PROBABILITY_FLOOR`].
pub fn foreground_probability(c: &ChannelVolume, m: &BackgroundModel) -> Result<ProbabilityVolume> {
    if m.slices.len() != c.dims.z {
        return Err(crate::Error::InvalidVolume(format!(
            "background model has {} slices, channel '{}' has {}",
            m.slices.len(),
            c.name,
            c.dims.z
        )));
    }
    let n = c.dims.slice_len();
    let mut out = vec![0f32; c.dims.len()];
    out.par_chunks_mut(n)
        .zip(c.data().par_chunks(n))
        .zip(m.slices.par_iter())
        .for_each(|((dst, src), bg)| {
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = clamp_probability(normal_cdf((v as f64 - bg.mean) / bg.sigma));
            }
        });
    Ok(ProbabilityVolume::from_parts_unchecked(
        Stage::Foreground,
        c.dims,
        c.geometry,
        out,
    ))
}

/// Product of foreground probabilities over the `(2W+1)²` in-slice window
/// around each voxel, evaluated as `exp` of a box-filtered log map.
///
/// Windows reaching past the slice edge reuse the nearest edge pixel.
pub fn puncta_2d(p_f: &ProbabilityVolume, halfwidth: usize) -> Result<ProbabilityVolume> {
    p_f.expect_stage(Stage::Foreground)?;
    let dims = p_f.dims;
    let n = dims.slice_len();
    let mut out = vec![0f32; dims.len()];
    out.par_chunks_mut(n)
        .zip(p_f.data().par_chunks(n))
        .for_each(|(dst, src)| {
            let logs: Vec<f64> = src.iter().map(|&p| (p as f64).ln()).collect();
            let sums = box_sum_replicate(&logs, dims.x, dims.y, halfwidth);
            for (d, s) in dst.iter_mut().zip(sums) {
                *d = clamp_probability(s.exp());
            }
        });
    Ok(ProbabilityVolume::from_parts_unchecked(
        Stage::Puncta2D,
        dims,
        p_f.geometry,
        out,
    ))
}

/// Separable `(2w+1)²` window sum over one slice with edge-replicate
/// padding. Rows first, then columns; each output is summed left to right.
fn box_sum_replicate(src: &[f64], nx: usize, ny: usize, w: usize) -> Vec<f64> {
    if w == 0 {
        return src.to_vec();
    }
    let w = w as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut rows = vec![0f64; src.len()];
    for y in 0..ny {
        let line = &src[y * nx..(y + 1) * nx];
        for x in 0..nx {
            let mut acc = 0.0;
            for dx in -w..=w {
                acc += line[clamp(x as isize + dx, nx)];
            }
            rows[y * nx + x] = acc;
        }
    }

    let mut out = vec![0f64; src.len()];
    for y in 0..ny {
        for x in 0..nx {
            let mut acc = 0.0;
            for dy in -w..=w {
                acc += rows[clamp(y as isize + dy, ny) * nx + x];
            }
            out[y * nx + x] = acc;
        }
    }
    out
}

/// Per-voxel attenuation factor in `(0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorField {
    pub dims: Dims,
    pub data: Vec<f64>,
}

/// `exp(−Σ_j (p(z) − p(z+j))²)` over the neighbor offsets that fall inside
/// the volume. For even spans the larger of the two one-sided factors is
/// kept.
pub fn slice_factor(p_p: &ProbabilityVolume, neighbors: &SliceNeighborhood) -> Result<FactorField> {
    p_p.expect_stage(Stage::Puncta2D)?;
    let dims = p_p.dims;
    let n = dims.slice_len();
    let mut data = vec![1f64; dims.len()];
    if !neighbors.is_empty() {
        data.par_chunks_mut(n).enumerate().for_each(|(z, dst)| {
            for (i, d) in dst.iter_mut().enumerate() {
                *d = match neighbors {
                    SliceNeighborhood::Symmetric(offsets) => factor_at(p_p, n, i, z, offsets),
                    SliceNeighborhood::BestOf(a, b) => {
                        factor_at(p_p, n, i, z, a).max(factor_at(p_p, n, i, z, b))
                    }
                };
            }
        });
    }
    Ok(FactorField { dims, data })
}

#[inline]
fn factor_at(p: &ProbabilityVolume, n: usize, i: usize, z: usize, offsets: &[isize]) -> f64 {
    let data = p.data();
    let center = data[z * n + i] as f64;
    let mut acc = 0.0;
    for &j in offsets {
        let zz = z as isize + j;
        if zz < 0 || zz >= p.dims.z as isize {
            continue;
        }
        let d = center - data[zz as usize * n + i] as f64;
        acc += d * d;
    }
    (-acc).exp()
}

/// `p_P · f`, floored at [`PROBABILITY_FLOOR`].
pub fn puncta_3d(p_p: &ProbabilityVolume, f: &FactorField) -> Result<ProbabilityVolume> {
    p_p.expect_stage(Stage::Puncta2D)?;
    if f.dims != p_p.dims {
        return Err(crate::Error::InvalidVolume(format!(
            "factor field {:?} does not match volume {:?}",
            f.dims, p_p.dims
        )));
    }
    let data = p_p
        .data()
        .par_iter()
        .zip(f.data.par_iter())
        .map(|(&p, &k)| clamp_probability(p as f64 * k))
        .collect();
    Ok(ProbabilityVolume::from_parts_unchecked(
        Stage::Puncta3D,
        p_p.dims,
        p_p.geometry,
        data,
    ))
}

/// All intermediate stages for one channel.
#[derive(Clone, Debug)]
pub struct ChannelStages {
    pub background: BackgroundModel,
    pub foreground: ProbabilityVolume,
    pub puncta_2d: ProbabilityVolume,
    pub factor: FactorField,
    pub puncta_3d: ProbabilityVolume,
}

/// Runs every per-channel stage with the window and slice neighborhood
/// implied by `size`.
pub fn run_channel(c: &ChannelVolume, size: &PunctaSize, fit: BackgroundFit) -> Result<ChannelStages> {
    let background = fit_background_with(c, fit);
    let foreground = foreground_probability(c, &background)?;
    let puncta_2d = puncta_2d(&foreground, size.window_halfwidth(&c.geometry))?;
    let neighbors = SliceNeighborhood::from_span(size.slice_span(&c.geometry));
    let factor = slice_factor(&puncta_2d, &neighbors)?;
    let puncta_3d = puncta_3d(&puncta_2d, &factor)?;
    Ok(ChannelStages {
        background,
        foreground,
        puncta_2d,
        factor,
        puncta_3d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::VoxelGeometry;

    fn geom() -> VoxelGeometry {
        VoxelGeometry::new(100.0, 70.0).unwrap()
    }

    fn channel(dims: Dims, data: Vec<f32>) -> ChannelVolume {
        ChannelVolume::new("c", dims, geom(), data).unwrap()
    }

    fn prob(stage: Stage, dims: Dims, data: Vec<f32>) -> ProbabilityVolume {
        ProbabilityVolume::new(stage, dims, geom(), data).unwrap()
    }

    #[test]
    fn constant_slice_hits_sigma_floor() {
        let m = fit_background(&channel(Dims::new(3, 3, 1), vec![10.0; 9]));
        assert_eq!(m.slices[0].mean, 10.0);
        assert_eq!(m.slices[0].sigma, SIGMA_ABSOLUTE_FLOOR);
    }

    #[test]
    fn population_statistics() {
        let m = fit_background(&channel(Dims::new(2, 2, 1), vec![0.0, 0.0, 0.0, 4.0]));
        assert_eq!(m.slices[0].mean, 1.0);
        // population variance: (1+1+1+9)/4 = 3
        assert!((m.slices[0].sigma - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn slices_fit_independently() {
        let m = fit_background(&channel(
            Dims::new(2, 1, 2),
            vec![1.0, 3.0, 100.0, 100.0],
        ));
        assert_eq!(m.slices.len(), 2);
        assert_eq!(m.slices[0].mean, 2.0);
        assert_eq!(m.slices[0].sigma, 1.0);
        assert_eq!(m.slices[1].mean, 100.0);
    }

    #[test]
    fn trimmed_fit_drops_bright_tail() {
        let mut data = vec![1.0f32; 99];
        data.push(1000.0);
        let c = channel(Dims::new(10, 10, 1), data);
        let m = fit_background_with(
            &c,
            BackgroundFit {
                trim_top_fraction: Some(0.02),
            },
        );
        assert_eq!(m.slices[0].mean, 1.0);
        assert!(fit_background(&c).slices[0].mean > 10.0);
    }

    #[test]
    fn foreground_examples() {
        // Values frozen from an arbitrary-precision normal CDF.
        const PHI_3: f64 = 0.998_650_101_968_369_9;
        const PHI_M3: f64 = 0.001_349_898_031_630_094_5;
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(3.0) - PHI_3).abs() < 1e-12);
        assert!((normal_cdf(-3.0) - PHI_M3).abs() < 1e-12);

        let model = BackgroundModel {
            slices: vec![SliceBackground {
                mean: 50.0,
                sigma: 4.0,
            }],
        };
        let c = channel(Dims::new(4, 1, 1), vec![50.0, 62.0, 38.0, 0.0]);
        let p = foreground_probability(&c, &model).unwrap();
        assert_eq!(p.data()[0], 0.5);
        assert!((p.data()[1] as f64 - PHI_3).abs() < 1e-7);
        assert!((p.data()[2] as f64 - PHI_M3).abs() < 1e-9);
        // 12.5 σ below the mean: clamped to the floor.
        assert_eq!(p.data()[3], PROBABILITY_FLOOR as f32);
    }

    #[test]
    fn foreground_rejects_mismatched_model() {
        let c = channel(Dims::new(2, 1, 2), vec![0.0; 4]);
        let model = BackgroundModel {
            slices: vec![SliceBackground {
                mean: 0.0,
                sigma: 1.0,
            }],
        };
        assert!(foreground_probability(&c, &model).is_err());
    }

    #[test]
    fn zero_window_is_identity() {
        let dims = Dims::new(3, 2, 2);
        let data: Vec<f32> = (0..12).map(|i| 0.05 + i as f32 * 0.07).collect();
        let p = prob(Stage::Foreground, dims, data.clone());
        let out = puncta_2d(&p, 0).unwrap();
        assert_eq!(out.stage, Stage::Puncta2D);
        for (a, b) in out.data().iter().zip(&data) {
            assert!((a - b).abs() <= 1e-7 * b);
        }
    }

    #[test]
    fn uniform_window_product() {
        let dims = Dims::new(5, 5, 1);
        let p = prob(Stage::Foreground, dims, vec![0.9; 25]);
        let out = puncta_2d(&p, 1).unwrap();
        // 0.9^9, direct product
        let expected = (0..9).fold(1.0f64, |a, _| a * 0.9);
        assert!((expected - 0.387_420_489).abs() < 1e-12);
        assert!((out.get(2, 2, 0) as f64 - expected).abs() < 1e-6);
        // replicate padding keeps corners uniform too
        assert!((out.get(0, 0, 0) as f64 - expected).abs() < 1e-6);
    }

    #[test]
    fn floor_voxel_annihilates_window() {
        let dims = Dims::new(5, 5, 1);
        let mut data = vec![1.0; 25];
        data[dims.index(2, 2, 0)] = PROBABILITY_FLOOR as f32;
        let out = puncta_2d(&prob(Stage::Foreground, dims, data), 1).unwrap();
        for y in 1..4 {
            for x in 1..4 {
                assert!(out.get(x, y, 0) <= PROBABILITY_FLOOR as f32);
            }
        }
        assert_eq!(out.get(4, 4, 0), 1.0);
    }

    #[test]
    fn puncta_2d_requires_foreground() {
        let p = prob(Stage::Puncta3D, Dims::new(1, 1, 1), vec![0.5]);
        assert!(puncta_2d(&p, 1).is_err());
    }

    #[test]
    fn factor_examples() {
        let dims = Dims::new(1, 1, 3);
        let same = prob(Stage::Puncta2D, dims, vec![0.4, 0.4, 0.4]);
        let f = slice_factor(&same, &SliceNeighborhood::from_span(3)).unwrap();
        assert_eq!(f.data, vec![1.0; 3]);

        let spike = prob(Stage::Puncta2D, dims, vec![0.0, 1.0, 0.0]);
        let f = slice_factor(&spike, &SliceNeighborhood::from_span(1)).unwrap();
        assert_eq!(f.data, vec![1.0; 3]);

        let f = slice_factor(&spike, &SliceNeighborhood::from_span(3)).unwrap();
        assert!((f.data[1] - 0.135_335_283_236_612_69).abs() < 1e-15);
        // first and last slices only see the center neighbor
        assert!((f.data[0] - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn even_span_takes_better_side() {
        let dims = Dims::new(1, 1, 3);
        let p = prob(Stage::Puncta2D, dims, vec![0.9, 0.9, 0.1]);
        let f = slice_factor(&p, &SliceNeighborhood::from_span(2)).unwrap();
        assert_eq!(f.data[1], 1.0);
        let f = slice_factor(&p, &SliceNeighborhood::Symmetric(vec![1])).unwrap();
        assert!(f.data[1] < 0.6);
    }

    #[test]
    fn puncta_3d_examples() {
        let dims = Dims::new(1, 1, 1);
        let p = prob(Stage::Puncta2D, dims, vec![0.8]);
        let one = FactorField {
            dims,
            data: vec![1.0],
        };
        assert_eq!(puncta_3d(&p, &one).unwrap().data(), &[0.8]);
        let f = FactorField {
            dims,
            data: vec![(-2f64).exp()],
        };
        let out = puncta_3d(&p, &f).unwrap();
        assert_eq!(out.stage, Stage::Puncta3D);
        assert!((out.data()[0] as f64 - 0.108_268_226_589_290_15).abs() < 1e-7);
    }
}

//! Fusing pixel residuals and detector scores into irregularity masks.
//!
//! A pixel is irregular when the inpainter changed it by at least `alpha`
//! and it lies in a block whose detector score is at most `zeta`.

use rayon::prelude::*;

use crate::data::ModelInput;
use crate::error::{AvidError, Result};
use crate::mask::BinaryMask;
use crate::models::{region_map, DetectorModel, InpainterModel, RegionGrid, ScoreGrid};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thresholds {
    /// Minimum per-pixel residual.
    pub alpha: f64,
    /// Maximum block regularity score.
    pub zeta: f64,
}

impl Thresholds {
    pub fn new(alpha: f64, zeta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(AvidError::config(format!("alpha must be >= 0, got {alpha}")));
        }
        if !(zeta > 0.0 && zeta < 1.0) {
            return Err(AvidError::config(format!("zeta must be in (0, 1), got {zeta}")));
        }
        Ok(Self { alpha, zeta })
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { alpha: 0.5, zeta: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IrregularityMask {
    pub pixels: BinaryMask,
    pub thresholds: Thresholds,
}

/// The fused mask together with the two masks it was intersected from.
#[derive(Clone, Debug, PartialEq)]
pub struct Fusion {
    pub mask: IrregularityMask,
    pub residual: BinaryMask,
    pub region: BinaryMask,
}

/// Per-pixel mean absolute difference over channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualMap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f32>,
}

impl ResidualMap {
    pub fn between(x: &ModelInput, x_prime: &ModelInput) -> Result<Self> {
        let (a, b) = (&x.tensor, &x_prime.tensor);
        if a.shape() != b.shape() {
            return Err(AvidError::argument(format!(
                "residual needs equal shapes, got {:?} and {:?}",
                a.shape(),
                b.shape()
            )));
        }
        let (c, h, w) = a.shape();
        let mut values = vec![0.0f32; h * w];
        for ch in 0..c {
            for ((v, &p), &q) in values.iter_mut().zip(a.channel(ch)).zip(b.channel(ch)) {
                *v += (p - q).abs();
            }
        }
        let inv = 1.0 / c as f32;
        values.iter_mut().for_each(|v| *v *= inv);
        Ok(Self {
            height: h,
            width: w,
            values,
        })
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }

    pub fn mask(&self, alpha: f64) -> BinaryMask {
        let bits = self.values.iter().map(|&v| v as f64 >= alpha).collect();
        BinaryMask::from_bits(self.height, self.width, bits).expect("dims match")
    }

    /// Largest residual inside each block of `grid`.
    pub fn block_max(&self, grid: &RegionGrid) -> Result<Vec<f32>> {
        check_grid(grid, self.height, self.width)?;
        let mut out = vec![0.0f32; grid.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                let b = grid.block_of(y, x);
                out[b] = out[b].max(self.get(y, x));
            }
        }
        Ok(out)
    }
}

fn check_grid(grid: &RegionGrid, height: usize, width: usize) -> Result<()> {
    if (grid.height(), grid.width()) != (height, width) {
        return Err(AvidError::argument(format!(
            "region grid covers {}x{}, frame is {height}x{width}",
            grid.height(),
            grid.width()
        )));
    }
    Ok(())
}

pub fn residual_mask(x: &ModelInput, x_prime: &ModelInput, alpha: f64) -> Result<BinaryMask> {
    Ok(ResidualMap::between(x, x_prime)?.mask(alpha))
}

/// All pixels of every block whose score is at most `zeta`.
pub fn region_irregularity_mask(o: &ScoreGrid, grid: &RegionGrid, zeta: f64) -> Result<BinaryMask> {
    if o.dims() != (grid.rows, grid.cols) {
        return Err(AvidError::argument(format!(
            "score grid {:?} does not match region grid {}x{}",
            o.dims(),
            grid.rows,
            grid.cols
        )));
    }
    let mut mask = BinaryMask::empty(grid.height(), grid.width());
    for (block, &score) in grid.blocks.iter().zip(o.values()) {
        if score as f64 <= zeta {
            mask.fill_rect(block.top, block.left, block.height, block.width);
        }
    }
    Ok(mask)
}

/// Fusion from precomputed residuals and scores.
pub fn fuse_maps(residual: &ResidualMap, o: &ScoreGrid, grid: &RegionGrid, thresholds: Thresholds) -> Result<Fusion> {
    check_grid(grid, residual.height, residual.width)?;
    let region = region_irregularity_mask(o, grid, thresholds.zeta)?;
    let residual = residual.mask(thresholds.alpha);
    let pixels = residual.and(&region)?;
    Ok(Fusion {
        mask: IrregularityMask { pixels, thresholds },
        residual,
        region,
    })
}

/// Everything the masks and scores of one input are derived from.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameAnalysis {
    pub inpainted: ModelInput,
    pub residual: ResidualMap,
    pub scores: ScoreGrid,
    pub grid: RegionGrid,
}

impl FrameAnalysis {
    pub fn fuse(&self, thresholds: Thresholds) -> Result<Fusion> {
        fuse_maps(&self.residual, &self.scores, &self.grid, thresholds)
    }

    pub fn frame_score(&self) -> Result<f64> {
        frame_score_from(&self.residual, &self.scores, &self.grid)
    }

    /// `(max residual, score)` per block, in grid order.
    pub fn blocks(&self) -> Result<Vec<(f32, f32)>> {
        let maxima = self.residual.block_max(&self.grid)?;
        Ok(maxima.into_iter().zip(self.scores.values().iter().copied()).collect())
    }
}

/// Runs both networks on the clean input.
pub fn analyze(x: &ModelInput, inpainter: &InpainterModel, detector: &DetectorModel) -> Result<FrameAnalysis> {
    let grid = region_map(detector, (x.height(), x.width()))?;
    let inpainted = crate::models::inpainter_forward(inpainter, x)?;
    let residual = ResidualMap::between(x, &inpainted)?;
    let scores = detector.infer(&x.tensor)?;
    Ok(FrameAnalysis {
        inpainted,
        residual,
        scores,
        grid,
    })
}

pub fn analyze_all(
    inputs: &[ModelInput],
    inpainter: &InpainterModel,
    detector: &DetectorModel,
) -> Result<Vec<FrameAnalysis>> {
    inputs.par_iter().map(|x| analyze(x, inpainter, detector)).collect()
}

pub fn fuse(
    x: &ModelInput,
    inpainter: &InpainterModel,
    detector: &DetectorModel,
    thresholds: Thresholds,
) -> Result<Fusion> {
    analyze(x, inpainter, detector)?.fuse(thresholds)
}

/// `max_p min(residual(p), 1 - score(block(p)))`: high when a strongly
/// changed pixel sits in a block the detector finds irregular.
pub fn frame_score_from(residual: &ResidualMap, o: &ScoreGrid, grid: &RegionGrid) -> Result<f64> {
    if o.dims() != (grid.rows, grid.cols) {
        return Err(AvidError::argument("score grid does not match region grid"));
    }
    let maxima = residual.block_max(grid)?;
    Ok(maxima
        .iter()
        .zip(o.values())
        .map(|(&r, &s)| (r as f64).min(1.0 - s as f64))
        .fold(0.0, f64::max))
}

pub fn frame_score(x: &ModelInput, inpainter: &InpainterModel, detector: &DetectorModel) -> Result<f64> {
    analyze(x, inpainter, detector)?.frame_score()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::tensor::Tensor;

    fn input(h: usize, w: usize, data: Vec<f32>) -> ModelInput {
        ModelInput {
            tensor: Tensor::from_vec(3, h, w, data),
            source_frame_index: 0,
        }
    }

    fn residual(h: usize, w: usize, values: Vec<f32>) -> ResidualMap {
        ResidualMap {
            height: h,
            width: w,
            values,
        }
    }

    #[test]
    fn identical_inputs_have_empty_residual_masks() {
        let x = input(4, 4, (0..48).map(|i| i as f32 / 48.0).collect());
        assert!(residual_mask(&x, &x, 1e-6).unwrap().is_empty());
        assert_eq!(residual_mask(&x, &x, 0.0).unwrap().count(), 16);
    }

    #[test]
    fn residual_reduces_channels_by_mean() {
        let x = input(1, 1, vec![0.0, 0.0, 0.0]);
        let y = input(1, 1, vec![0.3, 0.6, 0.0]);
        let r = ResidualMap::between(&x, &y).unwrap();
        assert!((r.values[0] - 0.3).abs() < 1e-7);
        assert!(r.mask(0.3 - 1e-6).get(0, 0));
        assert!(!r.mask(0.31).get(0, 0));
        let bad = input(1, 2, vec![0.0; 6]);
        assert!(matches!(ResidualMap::between(&x, &bad), Err(AvidError::Argument(_))));
    }

    #[test]
    fn region_mask_extremes_and_single_cell() {
        let grid = RegionGrid::uniform(56, 56, 2, 2).unwrap();
        let ones = ScoreGrid::filled(2, 2, 1.0);
        assert!(region_irregularity_mask(&ones, &grid, 0.5).unwrap().is_empty());
        let zeros = ScoreGrid::filled(2, 2, 0.0);
        assert_eq!(region_irregularity_mask(&zeros, &grid, 0.5).unwrap().count(), 56 * 56);
        let one_low = ScoreGrid::new(2, 2, vec![0.9, 0.9, 0.1, 0.9]).unwrap();
        let m = region_irregularity_mask(&one_low, &grid, 0.5).unwrap();
        let mut want = BinaryMask::empty(56, 56);
        want.fill_rect(28, 0, 28, 28);
        assert_eq!(m, want);
        let wrong = ScoreGrid::filled(3, 2, 0.0);
        assert!(matches!(region_irregularity_mask(&wrong, &grid, 0.5), Err(AvidError::Argument(_))));
    }

    #[test]
    fn frame_score_extremes() {
        let grid = RegionGrid::uniform(4, 4, 2, 2).unwrap();
        let zero = residual(4, 4, vec![0.0; 16]);
        assert_eq!(frame_score_from(&zero, &ScoreGrid::filled(2, 2, 1.0), &grid).unwrap(), 0.0);
        let mut vals = vec![0.0; 16];
        vals[15] = 1.0;
        let scores = ScoreGrid::new(2, 2, vec![1.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(frame_score_from(&residual(4, 4, vals), &scores, &grid).unwrap(), 1.0);
    }

    #[test]
    fn fuse_with_zero_alpha_is_the_region_mask() {
        let grid = RegionGrid::uniform(4, 4, 2, 2).unwrap();
        let r = residual(4, 4, (0..16).map(|i| i as f32 / 16.0).collect());
        let o = ScoreGrid::new(2, 2, vec![0.2, 0.7, 0.4, 0.9]).unwrap();
        let f = fuse_maps(&r, &o, &grid, Thresholds::new(0.0, 1.0 - 1e-9).unwrap()).unwrap();
        assert_eq!(f.mask.pixels, f.region);
        assert_eq!(f.region.count(), 16);
    }

    #[test]
    fn threshold_validation() {
        assert!(Thresholds::new(-0.1, 0.5).is_err());
        assert!(Thresholds::new(0.1, 0.0).is_err());
        assert!(Thresholds::new(0.1, 1.0).is_err());
        assert!(Thresholds::new(2.0, 0.5).is_ok());
    }

    fn instance() -> impl Strategy<Value = (ResidualMap, ScoreGrid, RegionGrid, f64, f64)> {
        (1usize..4, 1usize..4, 1usize..5, 1usize..5).prop_flat_map(|(rows, cols, bh, bw)| {
            let (h, w) = (rows * bh, cols * bw);
            (
                proptest::collection::vec(0.0f32..1.0, h * w),
                proptest::collection::vec(0.0f32..1.0, rows * cols),
                0.0f64..1.0,
                0.001f64..0.999,
            )
                .prop_map(move |(r, o, alpha, zeta)| {
                    (
                        residual(h, w, r),
                        ScoreGrid::new(rows, cols, o).unwrap(),
                        RegionGrid::uniform(h, w, rows, cols).unwrap(),
                        alpha,
                        zeta,
                    )
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn fused_mask_is_the_brute_force_intersection((r, o, grid, alpha, zeta) in instance()) {
            let f = fuse_maps(&r, &o, &grid, Thresholds { alpha, zeta }).unwrap();
            prop_assert!(f.mask.pixels.is_subset_of(&f.residual));
            prop_assert!(f.mask.pixels.is_subset_of(&f.region));
            for y in 0..r.height {
                for x in 0..r.width {
                    let b = grid.blocks.iter().position(|b| b.contains(y, x)).unwrap();
                    let want = r.get(y, x) as f64 >= alpha && o.values()[b] as f64 <= zeta;
                    prop_assert_eq!(f.mask.pixels.get(y, x), want);
                }
            }
        }

        #[test]
        fn masks_are_monotone_in_both_thresholds(
            (r, o, grid, alpha, zeta) in instance(),
            da in 0.0f64..0.5,
            dz in 0.0f64..0.5,
        ) {
            let base = fuse_maps(&r, &o, &grid, Thresholds { alpha, zeta }).unwrap();
            let stricter_alpha = fuse_maps(&r, &o, &grid, Thresholds { alpha: alpha + da, zeta }).unwrap();
            let lower_zeta = fuse_maps(&r, &o, &grid, Thresholds { alpha, zeta: (zeta - dz).max(1e-6) }).unwrap();
            prop_assert!(stricter_alpha.residual.is_subset_of(&base.residual));
            prop_assert!(stricter_alpha.mask.pixels.is_subset_of(&base.mask.pixels));
            prop_assert!(lower_zeta.region.is_subset_of(&base.region));
            prop_assert!(lower_zeta.mask.pixels.is_subset_of(&base.mask.pixels));
        }

        #[test]
        fn frame_score_is_the_pixel_max_min((r, o, grid, _a, _z) in instance()) {
            let mut want = 0.0f64;
            for y in 0..r.height {
                for x in 0..r.width {
                    let s = o.values()[grid.block_of(y, x)] as f64;
                    want = want.max((r.get(y, x) as f64).min(1.0 - s));
                }
            }
            prop_assert_eq!(frame_score_from(&r, &o, &grid).unwrap(), want);
        }
    }
}

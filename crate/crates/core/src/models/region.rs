use super::DetectorModel;
use crate::error::{AvidError, Result};
use crate::tensor::Real;

/// Pixel rectangle covered by one detector cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Block {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Block {
    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.top && y < self.top + self.height && x >= self.left && x < self.left + self.width
    }
}

/// Non-overlapping blocks tiling the input, indexed like [`super::ScoreGrid`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegionGrid {
    pub rows: usize,
    pub cols: usize,
    pub block_height: usize,
    pub block_width: usize,
    pub blocks: Vec<Block>,
}

impl RegionGrid {
    /// Regular grid of `rows x cols` blocks over an image of `height x width`.
    pub fn uniform(height: usize, width: usize, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || height % rows != 0 || width % cols != 0 {
            return Err(AvidError::config(format!(
                "{height}x{width} image does not split into {rows}x{cols} equal blocks"
            )));
        }
        let (bh, bw) = (height / rows, width / cols);
        let blocks = (0..rows * cols)
            .map(|i| Block {
                top: (i / cols) * bh,
                left: (i % cols) * bw,
                height: bh,
                width: bw,
            })
            .collect();
        Ok(Self {
            rows,
            cols,
            block_height: bh,
            block_width: bw,
            blocks,
        })
    }

    pub fn height(&self) -> usize {
        self.rows * self.block_height
    }

    pub fn width(&self) -> usize {
        self.cols * self.block_width
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Flat index of the block containing pixel `(y, x)`.
    pub fn block_of(&self, y: usize, x: usize) -> usize {
        (y / self.block_height) * self.cols + x / self.block_width
    }
}

/// Pixel footprint of every detector cell for inputs of `input_size`.
///
/// Cells are treated as stride-sized blocks, not full receptive fields, so the
/// input must be divisible by the detector's total stride.
pub fn region_map<T: Real>(model: &DetectorModel<T>, input_size: (usize, usize)) -> Result<RegionGrid> {
    let stride = model.total_stride();
    let (h, w) = input_size;
    if h % stride != 0 || w % stride != 0 {
        return Err(AvidError::config(format!(
            "input {h}x{w} is not divisible by the detector stride {stride}"
        )));
    }
    if input_size != model.input_size() {
        return Err(AvidError::config(format!(
            "detector was built for {:?}, not {input_size:?}",
            model.input_size()
        )));
    }
    let (rows, cols) = model.output_grid();
    if (rows, cols) != (h / stride, w / stride) {
        return Err(AvidError::config("detector grid does not match stride blocks"));
    }
    RegionGrid::uniform(h, w, rows, cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_models, ArchConfig};

    fn detector(side: usize) -> DetectorModel {
        let arch = ArchConfig {
            input_height: side,
            input_width: side,
            inpainter_widths: vec![2],
            ..Default::default()
        };
        init_models(&arch, 0).unwrap().1
    }

    #[test]
    fn default_geometry_gives_28_pixel_blocks() {
        let grid = region_map(&detector(308), (308, 308)).unwrap();
        assert_eq!((grid.rows, grid.cols), (11, 11));
        assert_eq!(grid.blocks[0], Block { top: 0, left: 0, height: 28, width: 28 });
        assert_eq!(grid.blocks[12], Block { top: 28, left: 28, height: 28, width: 28 });
        assert_eq!(grid.blocks.iter().map(Block::area).sum::<usize>(), 308 * 308);
    }

    #[test]
    fn single_cell_covers_the_frame() {
        let grid = region_map(&detector(28), (28, 28)).unwrap();
        assert_eq!(grid.blocks, vec![Block { top: 0, left: 0, height: 28, width: 28 }]);
    }

    #[test]
    fn every_pixel_has_exactly_one_block() {
        let grid = region_map(&detector(84), (84, 84)).unwrap();
        for y in 0..84 {
            for x in 0..84 {
                let owners: Vec<usize> = (0..grid.len()).filter(|&i| grid.blocks[i].contains(y, x)).collect();
                assert_eq!(owners, vec![grid.block_of(y, x)]);
            }
        }
    }

    #[test]
    fn indivisible_input_is_a_config_error() {
        assert!(matches!(region_map(&detector(56), (50, 56)), Err(AvidError::Config(_))));
    }
}

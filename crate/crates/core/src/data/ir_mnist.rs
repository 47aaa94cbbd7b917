//! Grid composites of digit tiles where one digit class plays the irregularity.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::digits::{DigitSource, DIGIT_SIDE};
use super::{Dataset, Frame, Layout, Sample, Split, TileLabels};
use crate::error::{AvidError, Result};
use crate::mask::BinaryMask;

#[derive(Clone, Debug, PartialEq)]
pub struct IrMnistConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub grid_side: usize,
    pub excluded_digit: u8,
    /// Per-tile probability of drawing the excluded digit in an irregular test composite.
    pub irregular_rate_test: f64,
    /// Fraction of test composites that contain no excluded digit at all.
    pub clean_test_fraction: f64,
    pub seed: u64,
}

impl Default for IrMnistConfig {
    fn default() -> Self {
        Self {
            n_train: 5000,
            n_test: 1000,
            grid_side: 11,
            excluded_digit: 3,
            irregular_rate_test: 0.1,
            clean_test_fraction: 0.5,
            seed: 0,
        }
    }
}

impl IrMnistConfig {
    pub fn image_side(&self) -> usize {
        self.grid_side * DIGIT_SIDE
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(AvidError::argument("n_train and n_test must be positive"));
        }
        if self.grid_side == 0 {
            return Err(AvidError::argument("grid_side must be at least 1"));
        }
        if self.excluded_digit > 9 {
            return Err(AvidError::argument("excluded_digit must be 0..=9"));
        }
        for (name, v) in [
            ("irregular_rate_test", self.irregular_rate_test),
            ("clean_test_fraction", self.clean_test_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(AvidError::argument(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

struct Composer<'a> {
    pool: &'a [super::digits::DigitImage],
    classes: Vec<Vec<usize>>,
    normal_classes: Vec<u8>,
    excluded: u8,
    grid: usize,
}

impl Composer<'_> {
    fn draw(&self, class: u8, rng: &mut ChaCha8Rng) -> &[f32] {
        let idx = *self.classes[class as usize]
            .choose(rng)
            .expect("validated source has every class");
        &self.pool[idx].pixels
    }

    fn compose(&self, digits: &[u8], rng: &mut ChaCha8Rng, index: usize) -> Frame {
        let side = self.grid * DIGIT_SIDE;
        let mut pixels = vec![0.0f32; side * side];
        for (t, &d) in digits.iter().enumerate() {
            let (row, col) = (t / self.grid, t % self.grid);
            let tile = self.draw(d, rng);
            for y in 0..DIGIT_SIDE {
                let dst = (row * DIGIT_SIDE + y) * side + col * DIGIT_SIDE;
                pixels[dst..dst + DIGIT_SIDE]
                    .copy_from_slice(&tile[y * DIGIT_SIDE..(y + 1) * DIGIT_SIDE]);
            }
        }
        Frame::new(side, side, pixels, index).expect("digit pixels lie in [0, 1]")
    }

    fn normal_digit(&self, rng: &mut ChaCha8Rng) -> u8 {
        *self.normal_classes.choose(rng).expect("nine normal classes")
    }
}

/// Generates the train (normal-only) and test composites.
///
/// Test composites are clean with probability `clean_test_fraction`; otherwise
/// every tile independently becomes the excluded digit with probability
/// `irregular_rate_test`, and one random tile is forced irregular if none was drawn.
pub fn generate_ir_mnist(source: &DigitSource, cfg: &IrMnistConfig) -> Result<(Dataset, Dataset)> {
    cfg.validate()?;
    source.validate()?;
    let normal_classes: Vec<u8> = (0..10).filter(|&d| d != cfg.excluded_digit).collect();
    let tiles = cfg.grid_side * cfg.grid_side;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let train_composer = Composer {
        pool: &source.train,
        classes: DigitSource::by_class(&source.train),
        normal_classes: normal_classes.clone(),
        excluded: cfg.excluded_digit,
        grid: cfg.grid_side,
    };
    let mut train = Vec::with_capacity(cfg.n_train);
    for i in 0..cfg.n_train {
        let digits: Vec<u8> = (0..tiles).map(|_| train_composer.normal_digit(&mut rng)).collect();
        let frame = train_composer.compose(&digits, &mut rng, i);
        train.push(Sample {
            frame_label: Some(false),
            tile_digits: Some(digits),
            ..Sample::still(frame)
        });
    }

    let test_composer = Composer {
        pool: &source.test,
        classes: DigitSource::by_class(&source.test),
        normal_classes,
        excluded: cfg.excluded_digit,
        grid: cfg.grid_side,
    };
    let mut test = Vec::with_capacity(cfg.n_test);
    for i in 0..cfg.n_test {
        let clean = rng.gen_bool(cfg.clean_test_fraction);
        let mut irregular: Vec<bool> = (0..tiles)
            .map(|_| !clean && rng.gen_bool(cfg.irregular_rate_test))
            .collect();
        if !clean && !irregular.iter().any(|&b| b) {
            irregular[rng.gen_range(0..tiles)] = true;
        }
        let digits: Vec<u8> = irregular
            .iter()
            .map(|&irr| {
                if irr {
                    test_composer.excluded
                } else {
                    test_composer.normal_digit(&mut rng)
                }
            })
            .collect();
        let frame = test_composer.compose(&digits, &mut rng, i);
        let side = frame.height();
        let mut mask = BinaryMask::empty(side, side);
        for (t, _) in irregular.iter().enumerate().filter(|(_, &b)| b) {
            let (row, col) = (t / cfg.grid_side, t % cfg.grid_side);
            mask.fill_rect(row * DIGIT_SIDE, col * DIGIT_SIDE, DIGIT_SIDE, DIGIT_SIDE);
        }
        test.push(Sample {
            frame_label: Some(!clean),
            pixel_mask: Some(mask),
            tile_labels: Some(TileLabels {
                rows: cfg.grid_side,
                cols: cfg.grid_side,
                irregular,
            }),
            tile_digits: Some(digits),
            ..Sample::still(frame)
        });
    }

    Ok((
        Dataset {
            split: Split::Train,
            layout: Layout::IrMnist,
            samples: train,
        },
        Dataset {
            split: Split::Test,
            layout: Layout::IrMnist,
            samples: test,
        },
    ))
}

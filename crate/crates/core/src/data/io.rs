//! On-disk dataset layouts.
//!
//! IR-MNIST:
//! `train/IMG_<idx>.png`, `test/IMG_<idx>.png`, `test/labels.csv`
//! (`image_index,tile_row,tile_col,is_irregular`) and `test/masks/IMG_<idx>.png`.
//!
//! Frame directory: `<clip>/frame_<t>.png`, optional `<clip>/gt/frame_<t>.png`
//! masks and `<clip>/labels.csv` (`frame_index,is_irregular`). The root may be
//! a single clip or a directory of clips.
//!
//! Images are 8-bit grayscale PNG mapped linearly to `[0, 1]`; masks are 0/255.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::GrayImage;

use super::{Dataset, Frame, Sample, Split, TileLabels};
use crate::error::{AvidError, Result};
use crate::mask::BinaryMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    IrMnist,
    FrameDirectory,
}

impl std::str::FromStr for Layout {
    type Err = AvidError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ir_mnist" | "ir-mnist" => Ok(Self::IrMnist),
            "frame_directory" | "frame-directory" | "frames" => Ok(Self::FrameDirectory),
            other => Err(AvidError::config(format!("unknown dataset layout '{other}'"))),
        }
    }
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn read_gray(path: &Path, index: usize) -> Result<Frame> {
    let img = image::open(path)
        .map_err(|e| AvidError::load(path, e.to_string()))?
        .to_luma8();
    let (w, h) = img.dimensions();
    let pixels = img.as_raw().iter().map(|&b| b as f32 / 255.0).collect();
    Frame::new(h as usize, w as usize, pixels, index).map_err(|e| AvidError::load(path, e.to_string()))
}

pub fn write_gray(path: &Path, height: usize, width: usize, values: &[f32]) -> Result<()> {
    let bytes = values.iter().map(|&v| to_u8(v)).collect();
    save(path, height, width, bytes)
}

pub fn read_mask(path: &Path) -> Result<BinaryMask> {
    let img = image::open(path)
        .map_err(|e| AvidError::load(path, e.to_string()))?
        .to_luma8();
    let (w, h) = img.dimensions();
    let mut bits = Vec::with_capacity(img.as_raw().len());
    for &b in img.as_raw() {
        match b {
            0 => bits.push(false),
            255 => bits.push(true),
            other => {
                return Err(AvidError::load(path, format!("mask value {other} is not 0 or 255")))
            }
        }
    }
    BinaryMask::from_bits(h as usize, w as usize, bits).map_err(|e| AvidError::load(path, e.to_string()))
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    let bytes = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    save(path, mask.height(), mask.width(), bytes)
}

fn save(path: &Path, height: usize, width: usize, bytes: Vec<u8>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| AvidError::io(dir, e))?;
    }
    let img = GrayImage::from_raw(width as u32, height as u32, bytes)
        .ok_or_else(|| AvidError::argument("pixel buffer does not match image size"))?;
    img.save(path).map_err(|e| AvidError::load(path, e.to_string()))
}

/// Collects `<prefix><n>.png` files in `dir`, keyed by `n`, and checks the
/// indices run contiguously from the smallest one.
fn indexed_pngs(dir: &Path, prefix: &str) -> Result<BTreeMap<usize, PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| AvidError::io(dir, e))?;
    let mut files = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|e| AvidError::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let Some(num) = name.strip_prefix(prefix).and_then(|r| r.strip_suffix(".png")) else {
            continue;
        };
        let idx: usize = num
            .parse()
            .map_err(|_| AvidError::load(entry.path(), "file index is not a number"))?;
        files.insert(idx, entry.path());
    }
    if let (Some(&first), Some(&last)) = (files.keys().next(), files.keys().next_back()) {
        if let Some(missing) = (first..=last).find(|i| !files.contains_key(i)) {
            return Err(AvidError::load(
                dir.join(format!("{prefix}{missing}.png")),
                "missing frame in sequence",
            ));
        }
    }
    Ok(files)
}

fn parse_flag(path: &Path, line: usize, field: &str) -> Result<bool> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(AvidError::load(
            path,
            format!("line {line}: is_irregular must be 0 or 1, got '{other}'"),
        )),
    }
}

fn parse_index(path: &Path, line: usize, field: &str) -> Result<usize> {
    field
        .trim()
        .parse()
        .map_err(|_| AvidError::load(path, format!("line {line}: bad index '{field}'")))
}

fn csv_rows(path: &Path, columns: usize) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| AvidError::load(path, e.to_string()))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| AvidError::load(path, e.to_string()))?;
        if rec.len() != columns {
            return Err(AvidError::load(
                path,
                format!("line {}: expected {columns} columns, found {}", i + 2, rec.len()),
            ));
        }
        rows.push((i + 2, rec));
    }
    Ok(rows)
}

/// Loads a dataset from `root`. For IR-MNIST, `split` selects the `train/` or
/// `test/` subdirectory; frame directories are loaded whole.
pub fn load_dataset(root: &Path, layout: Layout, split: Split) -> Result<Dataset> {
    if !root.is_dir() {
        return Err(AvidError::load(root, "dataset root is not a directory"));
    }
    let samples = match layout {
        Layout::IrMnist => load_ir_mnist(&root.join(split.dir_name()))?,
        Layout::FrameDirectory => load_frame_directory(root)?,
    };
    Ok(Dataset {
        split,
        layout,
        samples,
    })
}

fn load_ir_mnist(dir: &Path) -> Result<Vec<Sample>> {
    let files = indexed_pngs(dir, "IMG_")?;
    if files.is_empty() {
        return Err(AvidError::load(dir, "no IMG_<idx>.png files"));
    }
    let mut samples = Vec::with_capacity(files.len());
    for (&idx, path) in &files {
        samples.push(Sample::still(read_gray(path, idx)?));
    }

    let labels_path = dir.join("labels.csv");
    if labels_path.exists() {
        let mut tiles: BTreeMap<usize, BTreeMap<(usize, usize), bool>> = BTreeMap::new();
        for (line, rec) in csv_rows(&labels_path, 4)? {
            let img = parse_index(&labels_path, line, &rec[0])?;
            let row = parse_index(&labels_path, line, &rec[1])?;
            let col = parse_index(&labels_path, line, &rec[2])?;
            let flag = parse_flag(&labels_path, line, &rec[3])?;
            if !files.contains_key(&img) {
                return Err(AvidError::load(
                    &labels_path,
                    format!("line {line}: label for missing image {img}"),
                ));
            }
            tiles.entry(img).or_default().insert((row, col), flag);
        }
        for s in &mut samples {
            let Some(cells) = tiles.get(&s.frame.index) else {
                return Err(AvidError::load(
                    &labels_path,
                    format!("no labels for image {}", s.frame.index),
                ));
            };
            let rows = cells.keys().map(|k| k.0).max().unwrap_or(0) + 1;
            let cols = cells.keys().map(|k| k.1).max().unwrap_or(0) + 1;
            if cells.len() != rows * cols {
                return Err(AvidError::load(
                    &labels_path,
                    format!("image {} has an incomplete tile grid", s.frame.index),
                ));
            }
            let irregular: Vec<bool> = cells.values().copied().collect();
            s.frame_label = Some(irregular.iter().any(|&b| b));
            s.tile_labels = Some(TileLabels {
                rows,
                cols,
                irregular,
            });
        }
    }

    let masks_dir = dir.join("masks");
    if masks_dir.is_dir() {
        for s in &mut samples {
            let path = masks_dir.join(format!("IMG_{}.png", s.frame.index));
            if !path.exists() {
                return Err(AvidError::load(&path, "missing ground-truth mask"));
            }
            let mask = read_mask(&path)?;
            if mask.dims() != s.frame.dims() {
                return Err(AvidError::load(
                    &path,
                    format!("mask is {:?} but image is {:?}", mask.dims(), s.frame.dims()),
                ));
            }
            s.pixel_mask = Some(mask);
        }
    }
    Ok(samples)
}

fn is_clip_dir(dir: &Path) -> Result<bool> {
    Ok(!indexed_pngs(dir, "frame_")?.is_empty())
}

fn load_frame_directory(root: &Path) -> Result<Vec<Sample>> {
    let clips: Vec<PathBuf> = if is_clip_dir(root)? {
        vec![root.to_path_buf()]
    } else {
        let mut dirs: Vec<PathBuf> = fs::read_dir(root)
            .map_err(|e| AvidError::io(root, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        let mut clips = Vec::new();
        for d in dirs {
            if is_clip_dir(&d)? {
                clips.push(d);
            }
        }
        clips
    };
    if clips.is_empty() {
        return Err(AvidError::load(root, "no frame_<t>.png files found"));
    }
    let mut samples = Vec::new();
    for clip_dir in clips {
        samples.extend(load_clip(&clip_dir)?);
    }
    Ok(samples)
}

fn load_clip(dir: &Path) -> Result<Vec<Sample>> {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let files = indexed_pngs(dir, "frame_")?;
    let mut samples = Vec::with_capacity(files.len());
    for (&t, path) in &files {
        let frame = read_gray(path, t)?;
        if let Some(first) = samples.first() {
            let first: &Sample = first;
            if first.frame.dims() != frame.dims() {
                return Err(AvidError::load(path, "frame size differs from the rest of the clip"));
            }
        }
        samples.push(Sample {
            clip: Some(name.clone()),
            ..Sample::still(frame)
        });
    }

    let gt_dir = dir.join("gt");
    if gt_dir.is_dir() {
        for s in &mut samples {
            let path = gt_dir.join(format!("frame_{}.png", s.frame.index));
            if !path.exists() {
                return Err(AvidError::load(&path, "missing ground-truth mask"));
            }
            let mask = read_mask(&path)?;
            if mask.dims() != s.frame.dims() {
                return Err(AvidError::load(
                    &path,
                    format!("mask is {:?} but frame is {:?}", mask.dims(), s.frame.dims()),
                ));
            }
            s.pixel_mask = Some(mask);
        }
    }

    let labels_path = dir.join("labels.csv");
    if labels_path.exists() {
        let mut labels = BTreeMap::new();
        for (line, rec) in csv_rows(&labels_path, 2)? {
            let t = parse_index(&labels_path, line, &rec[0])?;
            if !files.contains_key(&t) {
                return Err(AvidError::load(
                    &labels_path,
                    format!("line {line}: label for missing frame {t}"),
                ));
            }
            labels.insert(t, parse_flag(&labels_path, line, &rec[1])?);
        }
        for s in &mut samples {
            match labels.get(&s.frame.index) {
                Some(&l) => s.frame_label = Some(l),
                None => {
                    return Err(AvidError::load(
                        &labels_path,
                        format!("no label for frame {}", s.frame.index),
                    ))
                }
            }
        }
    }
    Ok(samples)
}

/// Writes `dataset` under `root` in its layout. Loading the result back yields
/// the same frames, labels and masks.
pub fn write_dataset(dataset: &Dataset, root: &Path) -> Result<()> {
    match dataset.layout {
        Layout::IrMnist => write_ir_mnist(dataset, &root.join(dataset.split.dir_name())),
        Layout::FrameDirectory => write_frame_directory(dataset, root),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| AvidError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| AvidError::io(path, e))
}

fn write_ir_mnist(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| AvidError::io(dir, e))?;
    let mut labels = String::from("image_index,tile_row,tile_col,is_irregular\n");
    let mut any_labels = false;
    for s in &dataset.samples {
        let f = &s.frame;
        write_gray(&dir.join(format!("IMG_{}.png", f.index)), f.height(), f.width(), f.pixels())?;
        if let Some(tl) = &s.tile_labels {
            any_labels = true;
            for r in 0..tl.rows {
                for c in 0..tl.cols {
                    labels.push_str(&format!("{},{r},{c},{}\n", f.index, u8::from(tl.get(r, c))));
                }
            }
        }
        if let Some(m) = &s.pixel_mask {
            write_mask(&dir.join("masks").join(format!("IMG_{}.png", f.index)), m)?;
        }
    }
    if any_labels {
        write_text(&dir.join("labels.csv"), &labels)?;
    }
    Ok(())
}

fn write_frame_directory(dataset: &Dataset, root: &Path) -> Result<()> {
    let mut clips: BTreeMap<String, Vec<&Sample>> = BTreeMap::new();
    for s in &dataset.samples {
        clips
            .entry(s.clip.clone().unwrap_or_else(|| "clip".to_string()))
            .or_default()
            .push(s);
    }
    for (name, samples) in clips {
        let dir = root.join(name);
        fs::create_dir_all(&dir).map_err(|e| AvidError::io(&dir, e))?;
        let mut labels = String::from("frame_index,is_irregular\n");
        let mut any_labels = false;
        for s in samples {
            let f = &s.frame;
            write_gray(&dir.join(format!("frame_{}.png", f.index)), f.height(), f.width(), f.pixels())?;
            if let Some(m) = &s.pixel_mask {
                write_mask(&dir.join("gt").join(format!("frame_{}.png", f.index)), m)?;
            }
            if let Some(l) = s.frame_label {
                any_labels = true;
                labels.push_str(&format!("{},{}\n", f.index, u8::from(l)));
            }
        }
        if any_labels {
            write_text(&dir.join("labels.csv"), &labels)?;
        }
    }
    Ok(())
}

use super::{FrameSequence, ModelInput};
use crate::error::{AvidError, Result};
use crate::tensor::Tensor;

/// Smallest frame position that can be scored: the oldest channel reads frame `t - 5`.
pub const MIN_TEMPORAL_INDEX: usize = 5;

/// Offsets (back from `t`) of the averaged frames stacked into the three channels.
const CHANNEL_OFFSETS: [usize; 3] = [4, 2, 0];

/// Builds the input for frame position `t` of `clip`.
///
/// Each channel is the pixel-wise mean of a frame and its predecessor, taken at
/// `t - 4`, `t - 2` and `t`.
pub fn preprocess_temporal(clip: &FrameSequence, t: usize) -> Result<ModelInput> {
    if t < MIN_TEMPORAL_INDEX || t >= clip.len() {
        return Err(AvidError::Range(format!(
            "frame position {t} needs {MIN_TEMPORAL_INDEX} <= t < {} in this clip",
            clip.len()
        )));
    }
    let frames = clip.frames();
    let (h, w) = frames[t].dims();
    let mut data = Vec::with_capacity(3 * h * w);
    for off in CHANNEL_OFFSETS {
        let cur = frames[t - off].pixels();
        let prev = frames[t - off - 1].pixels();
        data.extend(cur.iter().zip(prev).map(|(&a, &b)| 0.5 * (a + b)));
    }
    Ok(ModelInput {
        tensor: Tensor::from_vec(3, h, w, data),
        source_frame_index: frames[t].index,
    })
}

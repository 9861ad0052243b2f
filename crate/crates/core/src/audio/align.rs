use crate::error::{Error, Result};

/// Frame-to-phoneme assignment derived from per-phoneme durations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameToPhonemeMap {
    assignment: Vec<usize>,
    durations: Vec<usize>,
}

impl FrameToPhonemeMap {
    /// Builds the map for durations that already sum to the frame count.
    pub fn from_durations(durations: &[usize]) -> Result<Self> {
        if durations.is_empty() || durations.iter().all(|&d| d == 0) {
            return Err(Error::invalid("need at least one phoneme with a non-zero duration"));
        }
        let assignment = durations
            .iter()
            .enumerate()
            .flat_map(|(i, &d)| std::iter::repeat_n(i, d))
            .collect();
        Ok(Self {
            assignment,
            durations: durations.to_vec(),
        })
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn durations(&self) -> &[usize] {
        &self.durations
    }

    pub fn num_frames(&self) -> usize {
        self.assignment.len()
    }

    pub fn num_phonemes(&self) -> usize {
        self.durations.len()
    }

    /// Half-open frame span of each phoneme.
    pub fn spans(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.durations.iter().scan(0usize, |start, &d| {
            let span = *start..*start + d;
            *start += d;
            Some(span)
        })
    }
}

/// Aligns `num_frames` mel frames to phonemes with the given durations.
///
/// When the durations miss the frame count by at most `tolerance` frames the
/// final phoneme absorbs the difference. If the last phoneme is too short to
/// give back the surplus, the remainder is taken from the phonemes before
/// it, latest first.
pub fn align_frames_to_phonemes(num_frames: usize, durations: &[usize], tolerance: usize) -> Result<FrameToPhonemeMap> {
    if num_frames == 0 {
        return Err(Error::invalid("cannot align zero frames"));
    }
    if durations.is_empty() || durations.iter().all(|&d| d == 0) {
        return Err(Error::invalid("need at least one phoneme with a non-zero duration"));
    }
    let sum: usize = durations.iter().sum();
    if sum.abs_diff(num_frames) > tolerance {
        return Err(Error::AlignmentMismatch {
            sum,
            frames: num_frames,
            tolerance,
        });
    }
    let mut adjusted = durations.to_vec();
    if num_frames > sum {
        *adjusted.last_mut().expect("non-empty") += num_frames - sum;
    } else {
        let mut surplus = sum - num_frames;
        for d in adjusted.iter_mut().rev() {
            let take = surplus.min(*d);
            *d -= take;
            surplus -= take;
            if surplus == 0 {
                break;
            }
        }
    }
    FrameToPhonemeMap::from_durations(&adjusted)
}

/// The last `len` observation frames, most recent first, zero-padded after
/// a reset.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    frame_dim: usize,
    len: usize,
    frames: Vec<f64>,
}

impl History {
    pub fn new(len: usize, frame_dim: usize) -> Self {
        Self {
            frame_dim,
            len,
            frames: vec![0.0; len * frame_dim],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn frame_dim(&self) -> usize {
        self.frame_dim
    }

    pub fn clear(&mut self) {
        self.frames.fill(0.0);
    }

    /// Flattened `[o_{t-1}, o_{t-2}, ..., o_{t-len}]`.
    pub fn as_slice(&self) -> &[f64] {
        &self.frames
    }

    pub fn push(&mut self, frame: &[f64]) {
        debug_assert_eq!(frame.len(), self.frame_dim);
        if self.len == 0 {
            return;
        }
        self.frames.copy_within(0..(self.len - 1) * self.frame_dim, self.frame_dim);
        self.frames[..self.frame_dim].copy_from_slice(frame);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn most_recent_first_and_bounded() {
        let mut h = History::new(3, 2);
        assert!(h.as_slice().iter().all(|&x| x == 0.0));
        for i in 1..=4 {
            h.push(&[i as f64, -(i as f64)]);
        }
        assert_eq!(h.as_slice(), &[4.0, -4.0, 3.0, -3.0, 2.0, -2.0]);
        h.clear();
        assert!(h.as_slice().iter().all(|&x| x == 0.0));
    }
}

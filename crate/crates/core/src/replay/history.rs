use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fixed-length window of the most recent `(observation, action)` pairs
/// before the current step.
///
/// The window always has `max(len, 1)` rows. The first `rows − valid_len`
/// rows are zero padding (the dummy pair); the remaining rows hold real
/// experience in chronological order. A length-0 window is a single
/// zero row.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryWindow {
    len: usize,
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f64>,
    act: Vec<f64>,
    valid_len: usize,
}

impl HistoryWindow {
    pub fn empty(len: usize, obs_dim: usize, act_dim: usize) -> Self {
        let rows = len.max(1);
        Self {
            len,
            obs_dim,
            act_dim,
            obs: vec![0.0; rows * obs_dim],
            act: vec![0.0; rows * act_dim],
            valid_len: 0,
        }
    }

    /// Builds a window from chronologically ordered pairs, keeping only the
    /// most recent `len`.
    pub fn from_pairs<'a>(
        len: usize,
        obs_dim: usize,
        act_dim: usize,
        pairs: impl IntoIterator<Item = (&'a [f64], &'a [f64])>,
    ) -> Self {
        let mut w = Self::empty(len, obs_dim, act_dim);
        for (o, a) in pairs {
            w.push(o, a);
        }
        w
    }

    /// Configured history length `l`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.valid_len == 0
    }

    /// Number of stored rows, `max(l, 1)`.
    pub fn rows(&self) -> usize {
        self.len.max(1)
    }

    pub fn valid_len(&self) -> usize {
        self.valid_len
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn obs_row(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn act_row(&self, i: usize) -> &[f64] {
        &self.act[i * self.act_dim..(i + 1) * self.act_dim]
    }

    pub fn obs_data(&self) -> &[f64] {
        &self.obs
    }

    pub fn act_data(&self) -> &[f64] {
        &self.act
    }

    fn push(&mut self, o: &[f64], a: &[f64]) {
        if self.len == 0 {
            return;
        }
        let (od, ad) = (self.obs_dim, self.act_dim);
        self.obs.copy_within(od.., 0);
        self.act.copy_within(ad.., 0);
        let rows = self.rows();
        self.obs[(rows - 1) * od..].copy_from_slice(o);
        self.act[(rows - 1) * ad..].copy_from_slice(a);
        self.valid_len = (self.valid_len + 1).min(self.len);
    }

    /// The window one step later: drop the oldest pair and append `(o, a)`.
    pub fn advanced(&self, o: &[f64], a: &[f64]) -> Self {
        let mut next = self.clone();
        next.push(o, a);
        next
    }

    /// Same rows re-cut to a different length: longer windows gain zero
    /// padding at the front, shorter ones keep only the most recent pairs.
    pub fn resized(&self, len: usize) -> Self {
        let start = self.rows() - self.valid_len;
        Self::from_pairs(
            len,
            self.obs_dim,
            self.act_dim,
            (start..self.rows()).map(|i| (self.obs_row(i), self.act_row(i))),
        )
    }
}

/// Live-history update used while acting: a finished episode clears the
/// window, otherwise `(o_t, a_t)` is appended.
pub fn advance_live_history(h: &HistoryWindow, o: &[f64], a: &[f64], done: bool) -> HistoryWindow {
    if done {
        HistoryWindow::empty(h.len(), h.obs_dim(), h.act_dim())
    } else {
        h.advanced(o, a)
    }
}

/// A batch of current observations with their history windows, laid out as
/// tensors: `obs [N×obs]`, `hist_obs [N×R×obs]`, `hist_act [N×R×act]`
/// where `R = max(l, 1)`.
#[derive(Clone, Debug)]
pub struct WindowBatch {
    pub obs: Tensor,
    pub hist_obs: Tensor,
    pub hist_act: Tensor,
    pub valid_len: Vec<usize>,
    pub history_len: usize,
}

impl WindowBatch {
    pub fn from_parts(obs: &[&[f64]], windows: &[HistoryWindow]) -> Result<Self> {
        let n = obs.len();
        if n == 0 || windows.len() != n {
            return Err(Error::Contract(format!(
                "window batch needs matching non-empty inputs, got {} observations and {} windows",
                n,
                windows.len()
            )));
        }
        let w0 = &windows[0];
        let (od, ad, rows, len) = (w0.obs_dim(), w0.act_dim(), w0.rows(), w0.len());
        let mut o = Vec::with_capacity(n * od);
        let mut ho = Vec::with_capacity(n * rows * od);
        let mut ha = Vec::with_capacity(n * rows * ad);
        let mut valid = Vec::with_capacity(n);
        for (x, w) in obs.iter().zip(windows) {
            if x.len() != od || w.obs_dim() != od || w.act_dim() != ad || w.len() != len {
                return Err(Error::dim(
                    "window_batch",
                    &[x.len(), w.obs_dim(), w.len()],
                    &[od, od, len],
                ));
            }
            o.extend_from_slice(x);
            ho.extend_from_slice(w.obs_data());
            ha.extend_from_slice(w.act_data());
            valid.push(w.valid_len());
        }
        Ok(Self {
            obs: Tensor::new(vec![n, od], o)?,
            hist_obs: Tensor::new(vec![n, rows, od], ho)?,
            hist_act: Tensor::new(vec![n, rows, ad], ha)?,
            valid_len: valid,
            history_len: len,
        })
    }

    pub fn single(obs: &[f64], window: &HistoryWindow) -> Result<Self> {
        Self::from_parts(&[obs], std::slice::from_ref(window))
    }

    pub fn size(&self) -> usize {
        self.obs.shape()[0]
    }

    pub fn obs_dim(&self) -> usize {
        self.obs.shape()[1]
    }

    pub fn act_dim(&self) -> usize {
        self.hist_act.shape()[2]
    }

    pub fn rows(&self) -> usize {
        self.hist_obs.shape()[1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_window_is_zero() {
        let w = HistoryWindow::empty(5, 3, 1);
        assert_eq!(w.rows(), 5);
        assert_eq!(w.valid_len(), 0);
        assert!(w.obs_data().iter().all(|&v| v == 0.0));
        let d = HistoryWindow::empty(0, 3, 1);
        assert_eq!(d.rows(), 1);
    }

    #[test]
    fn one_advance_gives_one_valid_row() {
        let w = HistoryWindow::empty(3, 2, 1);
        let w = advance_live_history(&w, &[1.0, 2.0], &[0.5], false);
        assert_eq!(w.valid_len(), 1);
        assert_eq!(w.obs_row(2), &[1.0, 2.0]);
        assert_eq!(w.act_row(2), &[0.5]);
        assert_eq!(w.obs_row(0), &[0.0, 0.0]);
    }

    #[test]
    fn done_clears_window() {
        let mut w = HistoryWindow::empty(3, 2, 1);
        for i in 0..4 {
            w = advance_live_history(&w, &[i as f64, 1.0], &[1.0], false);
        }
        assert_eq!(w.valid_len(), 3);
        let w = advance_live_history(&w, &[9.0, 9.0], &[9.0], true);
        assert_eq!(w, HistoryWindow::empty(3, 2, 1));
    }

    #[test]
    fn zero_length_window_never_fills() {
        let mut w = HistoryWindow::empty(0, 2, 1);
        for _ in 0..3 {
            w = w.advanced(&[1.0, 1.0], &[1.0]);
        }
        assert_eq!(w, HistoryWindow::empty(0, 2, 1));
    }

    #[test]
    fn resize_pads_or_truncates() {
        let mut w = HistoryWindow::empty(3, 1, 1);
        for i in 1..=3 {
            w = w.advanced(&[i as f64], &[-(i as f64)]);
        }
        let longer = w.resized(5);
        assert_eq!(longer.valid_len(), 3);
        assert_eq!(longer.obs_data(), &[0.0, 0.0, 1.0, 2.0, 3.0]);
        let shorter = w.resized(1);
        assert_eq!(shorter.obs_data(), &[3.0]);
        assert_eq!(shorter.act_data(), &[-3.0]);
        assert_eq!(w.resized(0), HistoryWindow::empty(0, 1, 1));
    }

    #[test]
    fn batch_layout() {
        let w = HistoryWindow::empty(2, 2, 1).advanced(&[1.0, 2.0], &[3.0]);
        let b = WindowBatch::from_parts(&[&[5.0, 6.0], &[7.0, 8.0]], &[w.clone(), w]).unwrap();
        assert_eq!(b.obs.shape(), &[2, 2]);
        assert_eq!(b.hist_obs.shape(), &[2, 2, 2]);
        assert_eq!(b.hist_obs.data(), &[0.0, 0.0, 1.0, 2.0, 0.0, 0.0, 1.0, 2.0]);
        assert_eq!(b.hist_act.data(), &[0.0, 3.0, 0.0, 3.0]);
        assert_eq!(b.valid_len, vec![1, 1]);
    }
}

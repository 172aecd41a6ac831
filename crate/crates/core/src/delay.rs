use alloc::collections::VecDeque;

use crate::error::{Error, Result};

/// Time-stamped history of one signal, queried with linear interpolation.
///
/// Samples older than the retention span (measured back from the newest
/// sample) are dropped, keeping one sample at or before the window start
/// so interpolation across the boundary still works.
#[derive(Debug, Clone)]
pub struct DelayLine {
    samples: VecDeque<(f64, f64)>,
    span: f64,
}

const TIME_EPS: f64 = 1e-9;

impl DelayLine {
    pub fn new(span: f64) -> Self {
        DelayLine {
            samples: VecDeque::new(),
            span: span.max(0.0),
        }
    }

    /// A history holding `value` constant over `[t0 - span, t0]`.
    pub fn constant(t0: f64, span: f64, value: f64) -> Self {
        let mut line = DelayLine::new(span);
        if span > 0.0 {
            line.samples.push_back((t0 - span, value));
        }
        line.samples.push_back((t0, value));
        line
    }

    pub fn span(&self) -> f64 {
        self.span
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn earliest(&self) -> Option<f64> {
        self.samples.front().map(|s| s.0)
    }

    pub fn latest(&self) -> Option<(f64, f64)> {
        self.samples.back().copied()
    }

    /// Appends a sample. A sample at the same time as the newest one
    /// replaces it; earlier times are rejected.
    pub fn push(&mut self, t: f64, value: f64) -> Result<()> {
        if let Some(&(last, _)) = self.samples.back() {
            if (t - last).abs() <= TIME_EPS {
                if let Some(back) = self.samples.back_mut() {
                    back.1 = value;
                }
                return Ok(());
            }
            if t < last {
                return Err(Error::HistoryOrder { time: t, last });
            }
        }
        self.samples.push_back((t, value));
        self.prune(t - self.span);
        Ok(())
    }

    fn prune(&mut self, window_start: f64) {
        while self.samples.len() > 2 && self.samples[1].0 <= window_start {
            self.samples.pop_front();
        }
    }

    /// Interpolated value at time `t`. Times after the newest sample hold
    /// the newest value; times before the oldest sample are an underrun.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        let (first_t, first_v) = *self.samples.front().ok_or(Error::HistoryUnderrun {
            requested: t,
            earliest: f64::NAN,
        })?;
        if t < first_t - TIME_EPS {
            return Err(Error::HistoryUnderrun {
                requested: t,
                earliest: first_t,
            });
        }
        if t <= first_t {
            return Ok(first_v);
        }
        let (last_t, last_v) = self.samples[self.samples.len() - 1];
        if t >= last_t {
            return Ok(last_v);
        }
        let k = self.samples.partition_point(|s| s.0 <= t);
        let (t0, v0) = self.samples[k - 1];
        let (t1, v1) = self.samples[k];
        if t1 - t0 <= 0.0 {
            return Ok(v1);
        }
        Ok(v0 + (v1 - v0) * (t - t0) / (t1 - t0))
    }
}

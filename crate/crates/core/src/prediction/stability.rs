use serde::{Deserialize, Serialize};

/// Default number of consecutive positive windows needed for a prediction.
pub const DEFAULT_STABILITY: usize = 7;

/// One reported prediction: the first position at which `k` consecutive raw
/// positives were seen, collapsed over the whole run of positives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StableRun {
    /// Index at which the run first became stable.
    pub trigger: usize,
    /// Index of the first positive of the run.
    pub start: usize,
    /// Length of the maximal run of positives (the consecutive count).
    pub len: usize,
}

impl StableRun {
    /// Windows whose positives made the prediction stable.
    pub fn triggering(&self, k: usize) -> std::ops::Range<usize> {
        self.trigger + 1 - k..self.trigger + 1
    }
}

/// A stable prediction anchored in time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionEvent {
    pub timestamp_ms: i64,
    pub consecutive_count: usize,
    pub window_ids: Vec<usize>,
}

pub fn stability_filter(raw: &[bool], k: usize) -> Vec<StableRun> {
    assert!(k >= 1, "stability requires k >= 1");
    let mut out = Vec::new();
    let mut i = 0;
    while i < raw.len() {
        if !raw[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < raw.len() && raw[i] {
            i += 1;
        }
        let len = i - start;
        if len >= k {
            out.push(StableRun {
                trigger: start + k - 1,
                start,
                len,
            });
        }
    }
    out
}

/// `mask[t]` is true iff `raw[t-k+1..=t]` are all true.
pub fn stable_mask(raw: &[bool], k: usize) -> Vec<bool> {
    assert!(k >= 1, "stability requires k >= 1");
    let mut run = 0usize;
    raw.iter()
        .map(|&r| {
            run = if r { run + 1 } else { 0 };
            run >= k
        })
        .collect()
}

/// Attach window timestamps to the stable runs of `raw`.
pub fn prediction_events(raw: &[bool], timestamps_ms: &[i64], k: usize) -> Vec<PredictionEvent> {
    assert_eq!(raw.len(), timestamps_ms.len());
    stability_filter(raw, k)
        .into_iter()
        .map(|r| PredictionEvent {
            timestamp_ms: timestamps_ms[r.trigger],
            consecutive_count: r.len,
            window_ids: r.triggering(k).collect(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(n: usize) -> Vec<bool> {
        vec![true; n]
    }

    #[test]
    fn seven_in_a_row_fires_once_at_six() {
        let r = stability_filter(&t(7), 7);
        assert_eq!(r, vec![StableRun { trigger: 6, start: 0, len: 7 }]);
    }

    #[test]
    fn broken_run_never_fires() {
        let mut raw = t(6);
        raw.push(false);
        raw.extend(t(6));
        assert!(stability_filter(&raw, 7).is_empty());
    }

    #[test]
    fn long_run_is_collapsed() {
        let r = stability_filter(&t(10), 7);
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].len, 10);
        assert_eq!(r[0].triggering(7), 0..7);
    }

    #[test]
    fn events_carry_timestamps() {
        let raw = [false, true, true, true, false];
        let ts = [10, 20, 30, 40, 50];
        let e = prediction_events(&raw, &ts, 2);
        assert_eq!(
            e,
            vec![PredictionEvent {
                timestamp_ms: 30,
                consecutive_count: 3,
                window_ids: vec![1, 2],
            }]
        );
    }

    #[test]
    fn mask_marks_every_stable_position() {
        let raw = [true, true, true, false, true];
        assert_eq!(stable_mask(&raw, 2), vec![false, true, true, false, false]);
    }
}

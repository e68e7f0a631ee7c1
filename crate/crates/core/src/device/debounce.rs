use serde::{Deserialize, Serialize};

use crate::attendance::Millis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Edge {
    Rising,
    Falling,
}

/// Sampled pushbutton levels at a fixed period. `true` is pressed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ButtonSampleStream {
    pub sample_period_ms: Millis,
    pub samples: Vec<(Millis, bool)>,
}

impl ButtonSampleStream {
    /// Builds a stream from consecutive levels starting at `start`.
    pub fn from_levels(start: Millis, sample_period_ms: Millis, levels: impl IntoIterator<Item = bool>) -> Self {
        let samples = levels
            .into_iter()
            .enumerate()
            .map(|(i, l)| (start + i as Millis * sample_period_ms, l))
            .collect();
        Self { sample_period_ms, samples }
    }
}

/// Reports a level change once the new level has held for `stable_samples`
/// consecutive samples. The edge carries the timestamp of the first sample
/// of that stable run. The first sample sets the baseline and is never an
/// edge. `stable_samples` of 0 is treated as 1.
pub fn debounce(samples: &[(Millis, bool)], stable_samples: usize) -> Vec<(Millis, Edge)> {
    let n = stable_samples.max(1);
    let mut edges = Vec::new();
    let Some(&(t0, first)) = samples.first() else {
        return edges;
    };
    let mut stable = first;
    let (mut run_level, mut run_start, mut run_len) = (first, t0, 0usize);
    for &(t, level) in samples {
        if level == run_level {
            run_len += 1;
        } else {
            (run_level, run_start, run_len) = (level, t, 1);
        }
        if run_level != stable && run_len >= n {
            stable = run_level;
            edges.push((run_start, if stable { Edge::Rising } else { Edge::Falling }));
        }
    }
    edges
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stream(levels: &[u8]) -> Vec<(Millis, bool)> {
        ButtonSampleStream::from_levels(0, 10, levels.iter().map(|l| *l == 1)).samples
    }

    #[test]
    fn constant_stream_has_no_edges() {
        assert!(debounce(&stream(&[0; 50]), 5).is_empty());
        assert!(debounce(&stream(&[1; 50]), 5).is_empty());
        assert!(debounce(&[], 5).is_empty());
    }

    #[test]
    fn glitch_and_press() {
        // t:   0  10 20 30 40 50 60 70 80 90 100 110 120 130
        // lvl: 0  0  1  1  1  0  0  1  1  1  1   1   0   0
        // The 3-sample glitch at 20..40 never reaches 5; the run starting at
        // 70 reaches 5 samples at t=110, so one Rising edge stamped 70.
        let s = stream(&[0, 0, 1, 1, 1, 0, 0, 1, 1, 1, 1, 1, 0, 0]);
        assert_eq!(debounce(&s, 5), vec![(70, Edge::Rising)]);
        assert!(debounce(&stream(&[0, 0, 1, 1, 1, 0, 0]), 5).is_empty());
    }

    #[test]
    fn press_then_release() {
        // Rising run starts at index 2 (t=20), falling run at index 8 (t=80).
        let s = stream(&[0, 0, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0]);
        assert_eq!(debounce(&s, 5), vec![(20, Edge::Rising), (80, Edge::Falling)]);
    }

    #[test]
    fn bounce_within_press_is_absorbed() {
        let s = stream(&[0, 1, 0, 1, 0, 1, 1, 1, 1, 1, 0, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0]);
        assert_eq!(debounce(&s, 5), vec![(50, Edge::Rising), (170, Edge::Falling)]);
    }

    proptest! {
        #[test]
        fn short_runs_never_edge(runs in proptest::collection::vec(1usize..5, 1..40), first in any::<bool>()) {
            let mut levels = Vec::new();
            let mut l = first;
            // A long baseline, then runs all shorter than n=5 alternating away and back.
            levels.extend(std::iter::repeat_n(l, 10));
            for r in runs {
                l = !l;
                levels.extend(std::iter::repeat_n(l, r));
                l = !l;
                levels.extend(std::iter::repeat_n(l, 1));
            }
            let s = ButtonSampleStream::from_levels(0, 10, levels);
            prop_assert!(debounce(&s.samples, 5).is_empty());
        }
    }
}

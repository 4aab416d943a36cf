//! Decimation onto a fixed time grid.

use pvdt_core::Measurement;

#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub samples: Vec<Measurement>,
    /// Input samples not selected.
    pub dropped: usize,
    /// Grid slots with no sample at or after the boundary inside the slot.
    pub empty_slots: usize,
}

/// Picks, for each boundary t₀ + k·Δ, the first sample at or after it that
/// falls before the next boundary. `stream` must be sorted by timestamp.
pub fn resample(stream: &[Measurement], resample_s: f64) -> Resampled {
    let Some(first) = stream.first() else {
        return Resampled { samples: Vec::new(), dropped: 0, empty_slots: 0 };
    };
    let t0 = first.ts;
    let last = stream[stream.len() - 1].ts;
    // tolerate float noise in timestamps sitting exactly on a boundary
    let eps = 1e-6 * resample_s;
    let mut out = Vec::new();
    let mut empty = 0;
    let mut j = 0;
    let mut k: u64 = 0;
    loop {
        let b = t0 + k as f64 * resample_s;
        if b > last + eps {
            break;
        }
        while j < stream.len() && stream[j].ts < b - eps {
            j += 1;
        }
        if j < stream.len() && stream[j].ts < b + resample_s - eps {
            out.push(stream[j]);
            j += 1;
        } else {
            empty += 1;
        }
        k += 1;
    }
    Resampled { dropped: stream.len() - out.len(), samples: out, empty_slots: empty }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(ts: &[f64]) -> Vec<Measurement> {
        ts.iter().map(|t| Measurement::new(*t, 30.0, 8.0, 25.0)).collect()
    }

    #[test]
    fn thirty_seconds_to_three_samples() {
        let s = at(&(0..30).map(f64::from).collect::<Vec<_>>());
        let r = resample(&s, 10.0);
        assert_eq!(r.samples.iter().map(|m| m.ts).collect::<Vec<_>>(), vec![0.0, 10.0, 20.0]);
        assert_eq!(r.dropped, 27);
    }

    #[test]
    fn already_on_grid_is_identity() {
        let s = at(&[0.0, 10.0, 20.0, 30.0]);
        let r = resample(&s, 10.0);
        assert_eq!(r.samples, s);
        assert_eq!((r.dropped, r.empty_slots), (0, 0));
    }

    #[test]
    fn empty_input() {
        assert!(resample(&[], 10.0).samples.is_empty());
    }
}

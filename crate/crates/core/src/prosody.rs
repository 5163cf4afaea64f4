//! Prosody units and their resampling onto the 10 ms frame grid.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Frame hop in milliseconds.
pub const FRAME_MS: f64 = 10.0;

/// Lowest pitch of the normalized scale (`log2(62.5)`).
const LOG2_PITCH_FLOOR: f64 = 5.965_784_284_662_087;
/// Octaves spanned by the normalized scale (62.5-500 Hz).
const PITCH_OCTAVES: f64 = 3.0;

/// Which third of a phone a unit covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Position {
    Heading,
    Middle,
    Trailing,
}

impl Position {
    pub fn index(self) -> usize {
        match self {
            Position::Heading => 0,
            Position::Middle => 1,
            Position::Trailing => 2,
        }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Position::Heading => "heading",
            Position::Middle => "middle",
            Position::Trailing => "trailing",
        })
    }
}

impl FromStr for Position {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heading" => Ok(Position::Heading),
            "middle" => Ok(Position::Middle),
            "trailing" => Ok(Position::Trailing),
            other => Err(Error::invalid(format!("unknown unit position '{other}'"))),
        }
    }
}

/// One sub-phoneme unit as emitted by the prosody generator.
///
/// Pitches are `log2(Hz)`; both zero marks an unvoiced unit. `log_energy`
/// is carried but not consumed by the acoustic model.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsodyUnit {
    pub label_id: u32,
    pub position: Position,
    pub duration_ms: f64,
    pub log_pitch_initial: f64,
    pub log_pitch_final: f64,
    pub log_energy: f64,
}

impl ProsodyUnit {
    pub fn is_voiced(&self) -> bool {
        self.log_pitch_initial > 0.0 && self.log_pitch_final > 0.0
    }
}

/// Per-frame input to the acoustic model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameInput {
    pub label_id: u32,
    pub position: Position,
    /// Normalized log pitch in `[0, 1]`, 0 when unvoiced.
    pub pitch: f64,
}

/// Maps `log2(f0)` to `[0, 1]` over 62.5-500 Hz.
pub fn normalize_log_pitch(log2_hz: f64) -> f64 {
    ((log2_hz - LOG2_PITCH_FLOOR) / PITCH_OCTAVES).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    NonPositiveDuration(f64),
    MixedVoicing,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::NonPositiveDuration(d) => {
                write!(f, "unit {}: duration {d} ms is not positive", self.index)
            }
            ViolationKind::MixedVoicing => write!(
                f,
                "unit {}: pitch endpoints must both be positive or both be zero",
                self.index
            ),
            ViolationKind::NonFinite => write!(f, "unit {}: non-finite value", self.index),
        }
    }
}

/// Lists every unit invariant violation; empty when the sequence is valid.
pub fn validate_units(units: &[ProsodyUnit]) -> Vec<Violation> {
    let mut out = Vec::new();
    for (index, u) in units.iter().enumerate() {
        let fields = [
            u.duration_ms,
            u.log_pitch_initial,
            u.log_pitch_final,
            u.log_energy,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            out.push(Violation {
                index,
                kind: ViolationKind::NonFinite,
            });
            continue;
        }
        if u.duration_ms <= 0.0 {
            out.push(Violation {
                index,
                kind: ViolationKind::NonPositiveDuration(u.duration_ms),
            });
        }
        let unvoiced = u.log_pitch_initial == 0.0 && u.log_pitch_final == 0.0;
        if !u.is_voiced() && !unvoiced {
            out.push(Violation {
                index,
                kind: ViolationKind::MixedVoicing,
            });
        }
    }
    out
}

/// Frames per unit by cumulative-boundary rounding, at least one per unit.
pub fn frame_counts(units: &[ProsodyUnit]) -> Vec<usize> {
    let mut elapsed = 0.0;
    let mut prev_boundary = 0i64;
    units
        .iter()
        .map(|u| {
            elapsed += u.duration_ms;
            let boundary = (elapsed / FRAME_MS).round() as i64;
            let n = (boundary - prev_boundary).max(1) as usize;
            prev_boundary = boundary;
            n
        })
        .collect()
}

/// Resamples units onto 10 ms frames. Within a voiced unit the log pitch
/// ramps linearly from the initial to the final endpoint and is sampled at
/// frame centers.
pub fn units_to_frames(units: &[ProsodyUnit]) -> Result<Vec<FrameInput>> {
    if units.is_empty() {
        return Err(Error::invalid("no prosody units"));
    }
    if let Some(v) = validate_units(units).first() {
        return Err(Error::invalid(v.to_string()));
    }
    let counts = frame_counts(units);
    let mut frames = Vec::with_capacity(counts.iter().sum());
    for (u, &n) in units.iter().zip(&counts) {
        for j in 0..n {
            let pitch = if u.is_voiced() {
                let frac = (j as f64 + 0.5) / n as f64;
                let lp = u.log_pitch_initial + (u.log_pitch_final - u.log_pitch_initial) * frac;
                normalize_log_pitch(lp)
            } else {
                0.0
            };
            frames.push(FrameInput {
                label_id: u.label_id,
                position: u.position,
                pitch,
            });
        }
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(dur: f64, lp0: f64, lp1: f64) -> ProsodyUnit {
        ProsodyUnit {
            label_id: 1,
            position: Position::Middle,
            duration_ms: dur,
            log_pitch_initial: lp0,
            log_pitch_final: lp1,
            log_energy: 0.0,
        }
    }

    #[test]
    fn thirty_ms_is_three_frames() {
        assert_eq!(units_to_frames(&[unit(30.0, 0.0, 0.0)]).unwrap().len(), 3);
    }

    #[test]
    fn pitch_ramp_at_frame_centers() {
        let f = units_to_frames(&[unit(30.0, 6.0, 6.6)]).unwrap();
        for (fr, lp) in f.iter().zip([6.1, 6.3, 6.5]) {
            let expected = (lp - 62.5f64.log2()) / 3.0;
            assert!((fr.pitch - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn cumulative_rounding() {
        let units = vec![unit(14.0, 0.0, 0.0); 3];
        assert_eq!(frame_counts(&units), vec![1, 2, 1]);
    }

    #[test]
    fn short_units_get_one_frame() {
        let units = vec![unit(3.0, 0.0, 0.0); 4];
        assert_eq!(frame_counts(&units), vec![1, 1, 1, 1]);
    }

    #[test]
    fn normalization_range() {
        assert_eq!(normalize_log_pitch(62.5f64.log2()), 0.0);
        assert!((normalize_log_pitch(500f64.log2()) - 1.0).abs() < 1e-12);
        assert_eq!(normalize_log_pitch(12.0), 1.0);
        assert_eq!(normalize_log_pitch(1.0), 0.0);
    }

    #[test]
    fn validation_reports() {
        assert!(validate_units(&[unit(10.0, 7.0, 7.1), unit(20.0, 0.0, 0.0)]).is_empty());
        let v = validate_units(&[unit(10.0, 7.0, 7.1), unit(0.0, 0.0, 0.0)]);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].index, 1);
        let v = validate_units(&[unit(10.0, 7.0, 0.0)]);
        assert_eq!(
            v,
            vec![Violation {
                index: 0,
                kind: ViolationKind::MixedVoicing
            }]
        );
        assert_eq!(validate_units(&[unit(f64::NAN, 0.0, 0.0)]).len(), 1);
    }

    #[test]
    fn rejects_empty_and_invalid() {
        assert!(units_to_frames(&[]).is_err());
        assert!(units_to_frames(&[unit(-5.0, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn unvoiced_units_emit_zero_pitch() {
        let f = units_to_frames(&[unit(50.0, 0.0, 0.0)]).unwrap();
        assert!(f.iter().all(|x| x.pitch == 0.0));
    }

    fn arb_durations() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((1u32..200).prop_map(|d| d as f64), 1..30)
    }

    proptest! {
        #[test]
        fn total_frames_track_total_duration(d in arb_durations()) {
            let units: Vec<_> = d.iter().map(|&x| unit(x + 10.0, 0.0, 0.0)).collect();
            let total: f64 = units.iter().map(|u| u.duration_ms).sum();
            let n: usize = frame_counts(&units).iter().sum();
            prop_assert_eq!(n as i64, (total / FRAME_MS).round() as i64);
        }

        #[test]
        fn prefix_counts_unchanged_by_appending(a in arb_durations(), b in arb_durations()) {
            let ua: Vec<_> = a.iter().map(|&x| unit(x, 0.0, 0.0)).collect();
            let mut ub = ua.clone();
            ub.extend(b.iter().map(|&x| unit(x, 0.0, 0.0)));
            let ca = frame_counts(&ua);
            prop_assert_eq!(&frame_counts(&ub)[..ca.len()], &ca[..]);
        }

        #[test]
        fn continuous_pitch_stays_between_endpoints(
            p0 in 6.0f64..8.5, p1 in 6.0f64..8.5, p2 in 6.0f64..8.5,
            d0 in 10u32..100, d1 in 10u32..100,
        ) {
            let units = [unit(d0 as f64, p0, p1), unit(d1 as f64, p1, p2)];
            let f = units_to_frames(&units).unwrap();
            let (lo, hi) = (p0.min(p1).min(p2), p0.max(p1).max(p2));
            for fr in &f {
                prop_assert!(fr.pitch >= normalize_log_pitch(lo) - 1e-12);
                prop_assert!(fr.pitch <= normalize_log_pitch(hi) + 1e-12);
            }
            // across the shared boundary the ramp does not leave [p0, p2] hull of the
            // neighbouring segments
            let n0 = frame_counts(&units)[0];
            let last = f[n0 - 1].pitch;
            let first = f[n0].pitch;
            let b = normalize_log_pitch(p1);
            let (a_lo, a_hi) = (normalize_log_pitch(p0.min(p1)), normalize_log_pitch(p0.max(p1)));
            let (c_lo, c_hi) = (normalize_log_pitch(p1.min(p2)), normalize_log_pitch(p1.max(p2)));
            prop_assert!(last >= a_lo - 1e-12 && last <= a_hi + 1e-12);
            prop_assert!(first >= c_lo - 1e-12 && first <= c_hi + 1e-12);
            prop_assert!((last - b).abs() <= (a_hi - a_lo) + 1e-12);
        }
    }
}

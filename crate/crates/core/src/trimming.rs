//! Temporal trimming of linked tubes.
//!
//! A window `(s, e)` of a tube is scored by its mean link score minus a
//! penalty on how far its length `e - s` (in links) drifts from the class
//! average. The best window is found by exhaustive search over prefix sums.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linking::{tube_link_scores, ActionTube, LinkingParams, TIE_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyMode {
    /// `|len - avg| / avg`
    #[default]
    Absolute,
    /// `(len - avg) / avg`; rewards windows shorter than average.
    Signed,
}

impl PenaltyMode {
    pub fn penalty(&self, len: f64, avg: f64) -> f64 {
        match self {
            PenaltyMode::Absolute => (len - avg).abs() / avg,
            PenaltyMode::Signed => (len - avg) / avg,
        }
    }
}

impl std::str::FromStr for PenaltyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absolute" => Ok(Self::Absolute),
            "signed" => Ok(Self::Signed),
            other => Err(invalid("mode", format!("unknown penalty mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrimmingParams {
    /// Average `end - start` per class.
    pub avg_length: BTreeMap<u32, f64>,
    pub mode: PenaltyMode,
}

impl TrimmingParams {
    pub fn length_for(&self, class_id: u32) -> Result<f64> {
        let l = *self.avg_length.get(&class_id).ok_or(Error::MissingClassLength(class_id))?;
        if !(l > 0.0 && l.is_finite()) {
            return Err(invalid("avg_length", format!("class {class_id} has non-positive average length {l}")));
        }
        Ok(l)
    }
}

/// Mean of `end - start` per class over `tubes`.
pub fn avg_class_length(tubes: &[ActionTube]) -> BTreeMap<u32, f64> {
    let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for t in tubes {
        let e = acc.entry(t.class_id).or_default();
        e.0 += f64::from(t.end - t.start);
        e.1 += 1;
    }
    acc.into_iter().map(|(c, (sum, n))| (c, sum / n as f64)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrimWindow {
    /// Relative frame positions; the window spans `end - start` links.
    pub start: usize,
    pub end: usize,
    pub objective: f64,
}

/// Best window over a tube with `link_scores.len() + 1` frames.
///
/// Ties go to the earliest start, then the earliest end.
pub fn trim_tube(link_scores: &[f64], avg_length: f64, mode: PenaltyMode) -> Result<TrimWindow> {
    if link_scores.is_empty() {
        return Err(Error::TubeTooShort(1));
    }
    if !(avg_length > 0.0 && avg_length.is_finite()) {
        return Err(invalid("avg_length", "must be positive"));
    }
    let mut prefix = Vec::with_capacity(link_scores.len() + 1);
    prefix.push(0.0);
    for s in link_scores {
        prefix.push(prefix.last().unwrap() + s);
    }
    let frames = prefix.len();
    let mut best = TrimWindow {
        start: 0,
        end: 1,
        objective: f64::NEG_INFINITY,
    };
    for s in 0..frames {
        for e in s + 1..frames {
            let len = (e - s) as f64;
            let obj = (prefix[e] - prefix[s]) / len - mode.penalty(len, avg_length);
            if obj > best.objective + TIE_EPS {
                best = TrimWindow { start: s, end: e, objective: obj };
            }
        }
    }
    Ok(best)
}

/// Trims a tube to its best window, recomputing link scores from its boxes
/// and per-frame scores.
pub fn trim_action_tube(tube: &ActionTube, params: &TrimmingParams, linking: &LinkingParams) -> Result<(ActionTube, TrimWindow)> {
    if tube.len() < 2 {
        return Err(Error::TubeTooShort(tube.len()));
    }
    let avg = params.length_for(tube.class_id)?;
    let w = trim_tube(&tube_link_scores(tube, linking), avg, params.mode)?;
    Ok((tube.slice(w.start, w.end)?, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::seeding;
    use rand::Rng;

    fn brute_force(links: &[f64], avg: f64, mode: PenaltyMode) -> (usize, usize, f64) {
        let n = links.len() + 1;
        let mut best = (0, 0, f64::NEG_INFINITY);
        for s in 0..n {
            for e in s + 1..n {
                let sum: f64 = links[s..e].iter().sum();
                let len = (e - s) as f64;
                let obj = sum / len - mode.penalty(len, avg);
                if obj > best.2 + TIE_EPS {
                    best = (s, e, obj);
                }
            }
        }
        best
    }

    #[test]
    fn constant_scores_pick_average_length() {
        let w = trim_tube(&[0.9; 9], 4.0, PenaltyMode::Absolute).unwrap();
        assert_eq!((w.start, w.end), (0, 4));
        assert!((w.objective - 0.9).abs() < 1e-12);
    }

    #[test]
    fn low_score_ends_are_cut() {
        let w = trim_tube(&[0.1, 0.9, 0.9, 0.9, 0.1], 3.0, PenaltyMode::Absolute).unwrap();
        assert_eq!((w.start, w.end), (1, 4));
        assert!((w.objective - 0.9).abs() < 1e-12);
        let full: f64 = 2.9 / 5.0 - 2.0 / 3.0;
        assert!(full < 0.0 && (full + 0.0867).abs() < 1e-3);
    }

    #[test]
    fn signed_mode_prefers_short_windows() {
        let w = trim_tube(&[0.9; 9], 4.0, PenaltyMode::Signed).unwrap();
        assert_eq!((w.start, w.end), (0, 1));
    }

    #[test]
    fn errors() {
        assert_eq!(trim_tube(&[], 3.0, PenaltyMode::Absolute), Err(Error::TubeTooShort(1)));
        assert!(trim_tube(&[0.5], 0.0, PenaltyMode::Absolute).is_err());
        assert!(TrimmingParams::default().length_for(3).is_err());
    }

    #[test]
    fn matches_brute_force() {
        for seed in 0..200 {
            let mut rng = seeding::stream(seed, &[3]);
            let n = rng.random_range(1..50);
            // Coarse score grid so that ties are common.
            let links: Vec<f64> = (0..n).map(|_| rng.random_range(0..=13) as f64 / 10.0).collect();
            let avg = rng.random_range(1..30) as f64 / 2.0;
            for mode in [PenaltyMode::Absolute, PenaltyMode::Signed] {
                let w = trim_tube(&links, avg, mode).unwrap();
                let (s, e, obj) = brute_force(&links, avg, mode);
                assert_eq!((w.start, w.end), (s, e), "seed {seed} {mode:?}");
                assert!((w.objective - obj).abs() < 1e-9);
            }
        }
    }

    fn tube(class_id: u32, start: u32, len: usize) -> ActionTube {
        let boxes = (0..len).map(|i| BoundingBox::new(i as f64, 0.0, i as f64 + 20.0, 20.0).unwrap()).collect();
        ActionTube::new(class_id, start, boxes, vec![0.9; len]).unwrap()
    }

    #[test]
    fn average_lengths() {
        assert_eq!(avg_class_length(&[tube(0, 0, 11)])[&0], 10.0);
        let avg = avg_class_length(&[tube(1, 0, 5), tube(1, 3, 9)]);
        assert_eq!(avg[&1], 6.0);
        assert!(!avg.contains_key(&0));
    }

    #[test]
    fn full_tube_kept_when_length_matches() {
        let t = tube(0, 5, 12);
        let params = TrimmingParams {
            avg_length: avg_class_length(std::slice::from_ref(&t)),
            mode: PenaltyMode::Absolute,
        };
        let (trimmed, _) = trim_action_tube(&t, &params, &LinkingParams::default()).unwrap();
        assert_eq!(trimmed, t);
        assert_eq!(
            trim_action_tube(&tube(0, 0, 1), &params, &LinkingParams::default()),
            Err(Error::TubeTooShort(1))
        );
        assert_eq!(
            trim_action_tube(&tube(4, 0, 3), &params, &LinkingParams::default()),
            Err(Error::MissingClassLength(4))
        );
    }
}

//! Per-sample election of the most confident student.
//!
//! A student's confidence is read off its foreground score map: the ratio of
//! the highest local maximum to the second highest. A map with a single peak
//! is maximally confident, a flat map not at all.

use serde::{Deserialize, Serialize};

use crate::autodiff::softmax_tensor;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Denominator floor of [`persuasive_value`].
pub const RATIO_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentConfidence {
    /// Local-maximum values, descending.
    pub peaks: Vec<f64>,
    pub persuasive: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectionResult {
    pub per_student: Vec<StudentConfidence>,
    /// 1-based id of the elected student.
    pub best_id: usize,
}

/// Local maxima of a `[H, W]` (or `[1, H, W]`) map, descending.
///
/// A cell is a peak when it is `>=` every existing 8-neighbor and `>` at least
/// one. Connected equal-valued peak cells form a plateau reported once.
pub fn find_peaks(map: &Tensor) -> Result<Vec<f64>> {
    let (h, w) = match map.shape() {
        [h, w] | [1, h, w] => (*h, *w),
        s => return Err(Error::shape("find_peaks", s, &[9, 9])),
    };
    let v = map.data();
    let neighbors = |i: usize| {
        let (r, c) = ((i / w) as isize, (i % w) as isize);
        (-1isize..=1)
            .flat_map(move |dr| (-1isize..=1).map(move |dc| (r + dr, c + dc)))
            .filter(move |&(rr, cc)| (rr, cc) != (r, c) && rr >= 0 && cc >= 0 && rr < h as isize && cc < w as isize)
            .map(move |(rr, cc)| rr as usize * w + cc as usize)
    };
    let qualifies: Vec<bool> = (0..h * w)
        .map(|i| {
            let mut strictly_above_one = false;
            for j in neighbors(i) {
                if v[j] > v[i] {
                    return false;
                }
                strictly_above_one |= v[j] < v[i];
            }
            strictly_above_one
        })
        .collect();

    let mut seen = vec![false; h * w];
    let mut peaks = Vec::new();
    for i in 0..h * w {
        if !qualifies[i] || seen[i] {
            continue;
        }
        peaks.push(v[i]);
        let mut stack = vec![i];
        seen[i] = true;
        while let Some(k) = stack.pop() {
            for j in neighbors(k) {
                if !seen[j] && qualifies[j] && v[j] == v[i] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    peaks.sort_by(|a, b| b.total_cmp(a));
    Ok(peaks)
}

/// `peaks[0] / peaks[1]`; `+inf` for a single peak and `0` for none.
pub fn persuasive_value(peaks: &[f64]) -> f64 {
    match peaks {
        [] => 0.0,
        [_] => f64::INFINITY,
        [first, second, ..] => first / second.max(RATIO_FLOOR),
    }
}

/// Foreground probability map `[H, W]` from `[2, H, W]` class logits.
pub fn foreground_probability(cls: &Tensor) -> Result<Tensor> {
    if cls.rank() != 3 || cls.shape()[0] != 2 {
        return Err(Error::shape("foreground_probability", cls.shape(), &[2, 9, 9]));
    }
    let p = softmax_tensor(cls, 0, 1.0, false)?;
    let (h, w) = (cls.shape()[1], cls.shape()[2]);
    Tensor::new(&[h, w], p.data()[h * w..].to_vec())
}

/// Elects the student with the largest persuasive value; ties go to the lowest id.
pub fn elect(score_maps: &[Tensor]) -> Result<ElectionResult> {
    if score_maps.len() < 2 {
        return Err(Error::domain(
            "elect",
            format!("need at least 2 students, got {}", score_maps.len()),
        ));
    }
    let shape = score_maps[0].shape();
    if let Some(bad) = score_maps.iter().find(|m| m.shape() != shape) {
        return Err(Error::shape("elect", shape, bad.shape()));
    }
    let per_student = score_maps
        .iter()
        .map(|m| {
            let peaks = find_peaks(m)?;
            let persuasive = persuasive_value(&peaks);
            Ok(StudentConfidence { peaks, persuasive })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, s) in per_student.iter().enumerate() {
        if s.persuasive > per_student[best].persuasive {
            best = i;
        }
    }
    Ok(ElectionResult {
        per_student,
        best_id: best + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(rows: &[&[f64]]) -> Tensor {
        let h = rows.len();
        let w = rows[0].len();
        Tensor::new(&[h, w], rows.concat()).unwrap()
    }

    #[test]
    fn radial_map_has_one_peak() {
        let m = Tensor::from_fn(&[9, 9], |i| {
            let (r, c) = ((i / 9) as f64 - 4.0, (i % 9) as f64 - 4.0);
            -(r * r + c * c)
        });
        assert_eq!(find_peaks(&m).unwrap(), vec![0.0]);
    }

    #[test]
    fn corner_peaks_by_brute_force() {
        let m = map(&[&[1.0, 0.0, 1.0], &[0.0, 0.0, 0.0], &[1.0, 0.0, 0.5]]);
        assert_eq!(find_peaks(&m).unwrap(), vec![1.0, 1.0, 1.0, 0.5]);
    }

    #[test]
    fn constant_map_has_no_peaks() {
        assert!(find_peaks(&Tensor::full(&[9, 9], 0.7)).unwrap().is_empty());
    }

    #[test]
    fn plateau_is_reported_once() {
        let m = map(&[&[0.0, 0.0, 0.0, 0.0], &[0.0, 2.0, 2.0, 0.0], &[0.0, 0.0, 0.0, 0.0]]);
        assert_eq!(find_peaks(&m).unwrap(), vec![2.0]);
    }

    #[test]
    fn persuasive_values() {
        assert_eq!(persuasive_value(&[0.9, 0.3]), 0.9 / 0.3);
        assert!((persuasive_value(&[0.9, 0.3]) - 3.0).abs() < 1e-12);
        assert_eq!(persuasive_value(&[0.9]), f64::INFINITY);
        assert_eq!(persuasive_value(&[]), 0.0);
        let p = persuasive_value(&[0.9, 0.45, 0.3]);
        assert_eq!(p, 2.0);
        assert_eq!(persuasive_value(&[9.0, 4.5, 3.0]), p);
    }

    fn two_peak_map(ratio: f64) -> Tensor {
        let mut m = Tensor::zeros(&[9, 9]);
        m.set(&[1, 1], 0.1 * ratio);
        m.set(&[6, 6], 0.1);
        m
    }

    #[test]
    fn elect_picks_largest_ratio_then_lowest_id() {
        let maps = [two_peak_map(2.0), two_peak_map(3.5), two_peak_map(1.2)];
        let r = elect(&maps).unwrap();
        assert_eq!(r.best_id, 2);
        assert!((r.per_student[1].persuasive - 3.5).abs() < 1e-12);

        let same = [two_peak_map(2.0), two_peak_map(2.0), two_peak_map(2.0)];
        assert_eq!(elect(&same).unwrap().best_id, 1);
    }

    #[test]
    fn single_peak_beats_any_finite_ratio() {
        let mut single = Tensor::zeros(&[9, 9]);
        single.set(&[4, 4], 0.01);
        let r = elect(&[two_peak_map(1e9), single]).unwrap();
        assert_eq!(r.best_id, 2);
    }

    #[test]
    fn rescaling_keeps_the_winner() {
        let maps = [two_peak_map(2.0), two_peak_map(3.5), two_peak_map(1.2)];
        let scaled: Vec<Tensor> = maps.iter().map(|m| m.map(|x| x * 7.5)).collect();
        assert_eq!(elect(&maps).unwrap().best_id, elect(&scaled).unwrap().best_id);
    }

    #[test]
    fn elect_needs_two_students_of_one_shape() {
        assert!(elect(&[two_peak_map(2.0)]).is_err());
        assert!(elect(&[two_peak_map(2.0), Tensor::zeros(&[8, 8])]).is_err());
    }

    #[test]
    fn foreground_probability_is_softmax_channel() {
        let mut cls = Tensor::zeros(&[2, 9, 9]);
        cls.data_mut()[81] = 2.0;
        let p = foreground_probability(&cls).unwrap();
        assert!((p.data()[0] - 1.0 / (1.0 + (-2f64).exp())).abs() < 1e-15);
        assert_eq!(p.data()[1], 0.5);
    }
}

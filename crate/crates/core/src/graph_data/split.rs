use std::ops::Range;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

/// Contiguous train/val/test ranges. Each of the first two ranges takes the
/// floor of its share; the remainder goes to the test range.
pub fn chronological_split(t_len: usize, fractions: [f64; 3]) -> Result<SplitRanges> {
    if fractions.iter().any(|&f| !(f > 0.0)) {
        return Err(Error::Config(format!("split fractions must be positive, got {fractions:?}")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions sum to {total}, expected 1")));
    }
    // The epsilon keeps products like 0.29 * 100 = 28.999... from flooring down.
    let share = |f: f64| ((f * t_len as f64) + 1e-9).floor() as usize;
    let n_train = share(fractions[0]).min(t_len);
    let n_val = share(fractions[1]).min(t_len - n_train);
    Ok(SplitRanges {
        train: 0..n_train,
        val: n_train..n_train + n_val,
        test: n_train + n_val..t_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn even_split() {
        let s = chronological_split(100, [0.6, 0.2, 0.2]).unwrap();
        assert_eq!((s.train, s.val, s.test), (0..60, 60..80, 80..100));
    }

    #[test]
    fn remainder_goes_to_test() {
        let s = chronological_split(101, [0.6, 0.2, 0.2]).unwrap();
        assert_eq!((s.train, s.val, s.test), (0..60, 60..80, 80..101));
    }

    #[test]
    fn rejects_bad_fractions() {
        assert!(chronological_split(100, [0.5, 0.5, 0.5]).is_err());
        assert!(chronological_split(100, [1.0, 0.0, 0.0]).is_err());
    }

    /// Integer oracle for the 60/20/20 split: floor(6T/10), floor(2T/10), rest.
    #[test]
    fn exhaustive_small_lengths() {
        for t in 3..=200usize {
            let s = chronological_split(t, [0.6, 0.2, 0.2]).unwrap();
            assert_eq!(s.train, 0..6 * t / 10, "T={t}");
            assert_eq!(s.val, 6 * t / 10..6 * t / 10 + 2 * t / 10, "T={t}");
            assert_eq!(s.test.end, t);
            assert_eq!(s.train.end, s.val.start);
            assert_eq!(s.val.end, s.test.start);
            let covered: Vec<usize> = s.train.clone().chain(s.val.clone()).chain(s.test.clone()).collect();
            assert_eq!(covered, (0..t).collect::<Vec<_>>());
        }
    }

    #[test]
    fn awkward_fractions_floor_correctly() {
        let s = chronological_split(100, [0.29, 0.31, 0.4]).unwrap();
        assert_eq!((s.train, s.val, s.test), (0..29, 29..60, 60..100));
    }
}

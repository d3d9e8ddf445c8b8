use crate::error::{Error, Result};

/// Ordered neighbor offsets `(drow, dcol)` of the spatial LSTMs.
///
/// The hidden vector a position emits toward direction `n` arrives at the
/// neighbor displaced by `offsets[n]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectionSet {
    offsets: Vec<(isize, isize)>,
}

const FULL: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
const LOCAL2: [(isize, isize); 2] = [(-1, 0), (0, -1)];
const LOCAL4: [(isize, isize); 4] = [(-1, 0), (0, -1), (-1, -1), (-1, 1)];

impl DirectionSet {
    /// All eight neighbors in row-major order.
    pub fn full() -> Self {
        Self { offsets: FULL.to_vec() }
    }

    /// Top and left.
    pub fn local2() -> Self {
        Self { offsets: LOCAL2.to_vec() }
    }

    /// Top, left, top-left and top-right.
    pub fn local4() -> Self {
        Self { offsets: LOCAL4.to_vec() }
    }

    pub fn from_count(k: usize) -> Result<Self> {
        match k {
            2 => Ok(Self::local2()),
            4 => Ok(Self::local4()),
            8 => Ok(Self::full()),
            _ => Err(Error::Config(format!("direction count must be 2, 4 or 8, got {k}"))),
        }
    }

    /// Custom offset list; offsets must be distinct unit steps.
    pub fn new(offsets: Vec<(isize, isize)>) -> Result<Self> {
        for (i, &(dr, dc)) in offsets.iter().enumerate() {
            if (dr, dc) == (0, 0) || dr.abs() > 1 || dc.abs() > 1 || offsets[..i].contains(&(dr, dc)) {
                return Err(Error::Config(format!("invalid direction offsets {offsets:?}")));
            }
        }
        if offsets.is_empty() {
            return Err(Error::Config("empty direction set".into()));
        }
        Ok(Self { offsets })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    /// Position `(row - drow, col - dcol)` if it lies inside `height x width`.
    #[inline]
    pub(crate) fn source(&self, n: usize, row: usize, col: usize, height: usize, width: usize) -> Option<(usize, usize)> {
        let (dr, dc) = self.offsets[n];
        let r = row as isize - dr;
        let c = col as isize - dc;
        (r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width).then_some((r as usize, c as usize))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_sets_are_valid() {
        for k in [2, 4, 8] {
            let set = DirectionSet::from_count(k).unwrap();
            assert_eq!(set.len(), k);
            DirectionSet::new(set.offsets().to_vec()).unwrap();
        }
        assert!(DirectionSet::from_count(3).is_err());
    }

    #[test]
    fn rejects_bad_offsets() {
        assert!(DirectionSet::new(vec![(0, 0)]).is_err());
        assert!(DirectionSet::new(vec![(2, 0)]).is_err());
        assert!(DirectionSet::new(vec![(1, 0), (1, 0)]).is_err());
    }
}

use crate::error::{Error, Result};

/// Ordered subsystem dimensions of a tensor-product Hilbert space.
///
/// Index 0 is the spin, indices 1..=K the primary modes. The first subsystem
/// is the most significant in the Kronecker ordering.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HilbertLayout {
    dims: Vec<usize>,
    total: usize,
}

impl HilbertLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Dimension("layout needs at least one subsystem".into()));
        }
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::Dimension(format!("subsystem dimension {d} < 2")));
        }
        let total = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Dimension("total dimension overflows".into()))?;
        Ok(Self { dims, total })
    }

    pub fn single(dim: usize) -> Result<Self> {
        Self::new(vec![dim])
    }

    /// Spin-½ followed by `n_modes` oscillators truncated at `n_fock` levels.
    pub fn spin_with_modes(n_modes: usize, n_fock: usize) -> Result<Self> {
        let mut dims = Vec::with_capacity(n_modes + 1);
        dims.push(2);
        dims.extend(std::iter::repeat_n(n_fock, n_modes));
        Self::new(dims)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_subsystems(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.total
    }

    /// Index stride of each subsystem in the flattened basis.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for s in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[s] = strides[s + 1] * self.dims[s + 1];
        }
        strides
    }

    pub fn index_of(&self, levels: &[usize]) -> Result<usize> {
        if levels.len() != self.dims.len() {
            return Err(Error::Dimension(format!("expected {} levels, got {}", self.dims.len(), levels.len())));
        }
        let mut idx = 0;
        for (s, (&l, &d)) in levels.iter().zip(&self.dims).enumerate() {
            if l >= d {
                return Err(Error::Index(format!("level {l} out of range for subsystem {s} (dim {d})")));
            }
            idx = idx * d + l;
        }
        Ok(idx)
    }

    pub fn levels_of(&self, mut index: usize) -> Vec<usize> {
        let mut levels = vec![0; self.dims.len()];
        for s in (0..self.dims.len()).rev() {
            levels[s] = index % self.dims[s];
            index /= self.dims[s];
        }
        levels
    }

    pub fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.dims.len() {
            return Err(Error::Index(format!(
                "subsystem {site} out of range for layout with {} subsystems",
                self.dims.len()
            )));
        }
        Ok(())
    }

    /// Layout of the listed subsystems, in ascending subsystem order.
    pub fn sub_layout(&self, keep: &[usize]) -> Result<Self> {
        let keep = self.normalize_subset(keep)?;
        Self::new(keep.iter().map(|&s| self.dims[s]).collect())
    }

    /// Sorted, deduplicated, validated subsystem subset.
    pub(crate) fn normalize_subset(&self, subset: &[usize]) -> Result<Vec<usize>> {
        if subset.is_empty() {
            return Err(Error::Index("empty subsystem set".into()));
        }
        let mut out = subset.to_vec();
        out.sort_unstable();
        out.dedup();
        if out.len() != subset.len() {
            return Err(Error::Index("repeated subsystem index".into()));
        }
        for &s in &out {
            self.check_site(s)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_dims() {
        assert!(HilbertLayout::new(vec![2, 1]).is_err());
        assert!(HilbertLayout::new(vec![]).is_err());
    }

    #[test]
    fn index_round_trip() {
        let l = HilbertLayout::new(vec![2, 3, 4]).unwrap();
        assert_eq!(l.total_dim(), 24);
        assert_eq!(l.strides(), vec![12, 4, 1]);
        for i in 0..24 {
            assert_eq!(l.index_of(&l.levels_of(i)).unwrap(), i);
        }
        assert!(l.index_of(&[0, 3, 0]).is_err());
    }

    #[test]
    fn spin_with_modes_layout() {
        let l = HilbertLayout::spin_with_modes(3, 4).unwrap();
        assert_eq!(l.dims(), &[2, 4, 4, 4]);
        assert_eq!(l.total_dim(), 128);
    }
}

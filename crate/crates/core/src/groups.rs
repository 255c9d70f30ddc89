//! Disjoint group partitions of the coefficient vector and active-set
//! bookkeeping.
//!
//! Groups are stored contiguously: group `k` owns the coefficient indices
//! `offset(k) .. offset(k) + size(k)`. An arbitrary disjoint partition can be
//! brought to this form by permuting the design columns before fitting.
//! All indices are zero-based.

use std::collections::BTreeSet;
use std::ops::Range;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Partition of `d` coefficients into `m` contiguous, non-overlapping groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct GroupStructure {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    dim: usize,
}

impl GroupStructure {
    pub fn new(group_sizes: &[usize]) -> Result<Self> {
        if group_sizes.is_empty() {
            return Err(Error::EmptyPartition);
        }
        if let Some((group, &size)) = group_sizes.iter().enumerate().find(|(_, &s)| s < 1) {
            return Err(Error::InvalidSize { group, size });
        }
        let mut offsets = Vec::with_capacity(group_sizes.len());
        let mut dim = 0;
        for &size in group_sizes {
            offsets.push(dim);
            dim += size;
        }
        Ok(Self {
            sizes: group_sizes.to_vec(),
            offsets,
            dim,
        })
    }

    /// One singleton group per coefficient.
    pub fn singletons(dim: usize) -> Result<Self> {
        Self::new(&vec![1; dim])
    }

    /// Total number of coefficients.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of groups.
    pub fn n_groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn size(&self, group: usize) -> usize {
        self.sizes[group]
    }

    pub fn range(&self, group: usize) -> Range<usize> {
        self.offsets[group]..self.offsets[group] + self.sizes[group]
    }

    pub fn ranges(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        (0..self.n_groups()).map(move |k| self.range(k))
    }

    /// Maps a global index to `(group, position within group)`.
    pub fn locate(&self, index: usize) -> Option<(usize, usize)> {
        if index >= self.dim {
            return None;
        }
        let group = self.offsets.partition_point(|&o| o <= index) - 1;
        Some((group, index - self.offsets[group]))
    }

    /// Euclidean norm of the block belonging to `group`.
    pub fn block_norm(&self, theta: &DVector<f64>, group: usize) -> f64 {
        theta.rows_range(self.range(group)).norm()
    }
}

impl TryFrom<Vec<usize>> for GroupStructure {
    type Error = Error;

    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Self::new(&sizes)
    }
}

impl From<GroupStructure> for Vec<usize> {
    fn from(groups: GroupStructure) -> Self {
        groups.sizes
    }
}

/// Recovered (or true) support: active groups, active coordinates and the
/// active positions within each group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSets {
    pub active_groups: BTreeSet<usize>,
    pub active_coords: BTreeSet<usize>,
    pub per_group_active: Vec<BTreeSet<usize>>,
    pub dim: usize,
}

impl ActiveSets {
    /// A coordinate is active iff `|theta_j| > zero_tol`.
    pub fn from_theta(theta: &DVector<f64>, groups: &GroupStructure, zero_tol: f64) -> Result<Self> {
        check_len(groups.dim(), theta.len())?;
        if !(zero_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "zero tolerance must be non-negative, got {zero_tol}"
            )));
        }
        let mut active_groups = BTreeSet::new();
        let mut active_coords = BTreeSet::new();
        let mut per_group_active = Vec::with_capacity(groups.n_groups());
        for (k, range) in groups.ranges().enumerate() {
            let start = range.start;
            let within: BTreeSet<usize> = range
                .filter(|&j| theta[j].abs() > zero_tol)
                .map(|j| j - start)
                .collect();
            if !within.is_empty() {
                active_groups.insert(k);
                active_coords.extend(within.iter().map(|i| i + start));
            }
            per_group_active.push(within);
        }
        Ok(Self {
            active_groups,
            active_coords,
            per_group_active,
            dim: groups.dim(),
        })
    }

    pub fn is_active(&self, index: usize) -> bool {
        self.active_coords.contains(&index)
    }

    pub fn n_active(&self) -> usize {
        self.active_coords.len()
    }

    pub fn n_zero(&self) -> usize {
        self.dim - self.active_coords.len()
    }

    /// Active coordinates in increasing order.
    pub fn indices(&self) -> Vec<usize> {
        self.active_coords.iter().copied().collect()
    }
}

/// Support-recovery counts of an estimate against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupportComparison {
    /// True zeros estimated as zero.
    pub correct_zeros: usize,
    /// True non-zeros estimated as zero.
    pub incorrect_zeros: usize,
    /// Estimated active set equals the true active set.
    pub exact_recovery: bool,
}

pub fn compare_supports(estimated: &ActiveSets, truth: &ActiveSets) -> Result<SupportComparison> {
    check_len(truth.dim, estimated.dim)?;
    check_len(truth.per_group_active.len(), estimated.per_group_active.len())?;
    let mut correct_zeros = 0;
    let mut incorrect_zeros = 0;
    for j in 0..truth.dim {
        if estimated.is_active(j) {
            continue;
        }
        if truth.is_active(j) {
            incorrect_zeros += 1;
        } else {
            correct_zeros += 1;
        }
    }
    Ok(SupportComparison {
        correct_zeros,
        incorrect_zeros,
        exact_recovery: estimated.active_coords == truth.active_coords,
    })
}

//! Subsets of platforms as bitmasks over `{0, .., K-1}`.
//!
//! Entry, sharing and buyer profiles are all points of the subset lattice, so a
//! single `u64` bitmask covers every profile the solver manipulates.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Largest number of platforms representable by [`PlatformSet`].
pub const MAX_PLATFORMS: usize = 64;

/// A subset of platform indices (0-based).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlatformSet(u64);

impl PlatformSet {
    pub const EMPTY: PlatformSet = PlatformSet(0);

    pub fn from_bits(bits: u64) -> Self {
        PlatformSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    /// The set `{0, .., k-1}`.
    pub fn full(k: usize) -> Self {
        assert!(k <= MAX_PLATFORMS, "at most {MAX_PLATFORMS} platforms");
        if k == MAX_PLATFORMS {
            PlatformSet(u64::MAX)
        } else {
            PlatformSet((1u64 << k) - 1)
        }
    }

    pub fn single(i: usize) -> Self {
        assert!(i < MAX_PLATFORMS);
        PlatformSet(1u64 << i)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        indices
            .into_iter()
            .fold(Self::EMPTY, |set, i| set.with(i))
    }

    /// Builds a set from a 0/1 flag vector (nonzero means member).
    pub fn from_flags(flags: &[u8]) -> Self {
        Self::from_indices(flags.iter().enumerate().filter(|(_, &f)| f != 0).map(|(i, _)| i))
    }

    pub fn to_flags(self, k: usize) -> Vec<u8> {
        (0..k).map(|i| u8::from(self.contains(i))).collect()
    }

    pub fn contains(self, i: usize) -> bool {
        i < MAX_PLATFORMS && self.0 & (1u64 << i) != 0
    }

    #[must_use]
    pub fn with(self, i: usize) -> Self {
        assert!(i < MAX_PLATFORMS);
        PlatformSet(self.0 | (1u64 << i))
    }

    #[must_use]
    pub fn without(self, i: usize) -> Self {
        if i >= MAX_PLATFORMS {
            return self;
        }
        PlatformSet(self.0 & !(1u64 << i))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Self) -> Self {
        PlatformSet(self.0 | other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        PlatformSet(self.0 & other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        PlatformSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    /// Largest member index plus one (0 for the empty set).
    pub fn upper_bound(self) -> usize {
        MAX_PLATFORMS - self.0.leading_zeros() as usize
    }

    /// Members in increasing order.
    pub fn iter(self) -> Members {
        Members(self.0)
    }

    /// Every subset of `self`, including the empty set and `self`.
    pub fn subsets(self) -> Subsets {
        Subsets {
            universe: self.0,
            next: Some(0),
        }
    }

    /// Flag string in platform order, e.g. `"101"`.
    pub fn flag_string(self, k: usize) -> String {
        (0..k)
            .map(|i| if self.contains(i) { '1' } else { '0' })
            .collect()
    }
}

impl fmt::Debug for PlatformSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for PlatformSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (n, i) in self.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

impl FromIterator<usize> for PlatformSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        Self::from_indices(iter)
    }
}

impl Serialize for PlatformSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for PlatformSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let indices = Vec::<usize>::deserialize(deserializer)?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= MAX_PLATFORMS) {
            return Err(serde::de::Error::custom(format!(
                "platform index {bad} exceeds {MAX_PLATFORMS}"
            )));
        }
        Ok(Self::from_indices(indices))
    }
}

/// Iterator over the members of a [`PlatformSet`].
#[derive(Clone)]
pub struct Members(u64);

impl Iterator for Members {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(i)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Members {}

/// Iterator over all subsets of a universe, in increasing bitmask order.
#[derive(Clone)]
pub struct Subsets {
    universe: u64,
    next: Option<u64>,
}

impl Iterator for Subsets {
    type Item = PlatformSet;

    fn next(&mut self) -> Option<PlatformSet> {
        let cur = self.next?;
        // Standard submask enumeration in increasing order.
        self.next = if cur == self.universe {
            None
        } else {
            Some((cur.wrapping_sub(self.universe)) & self.universe)
        };
        Some(PlatformSet(cur))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsets_enumerates_every_submask_once() {
        let universe = PlatformSet::from_indices([0, 2, 5]);
        let subs: Vec<_> = universe.subsets().collect();
        assert_eq!(subs.len(), 8);
        assert!(subs.iter().all(|s| s.is_subset(universe)));
        let mut bits: Vec<u64> = subs.iter().map(|s| s.bits()).collect();
        bits.dedup();
        assert_eq!(bits.len(), 8);
        assert_eq!(subs[0], PlatformSet::EMPTY);
        assert_eq!(*subs.last().unwrap(), universe);
    }

    #[test]
    fn empty_universe_has_one_subset() {
        assert_eq!(PlatformSet::EMPTY.subsets().count(), 1);
    }

    #[test]
    fn flags_round_trip() {
        let set = PlatformSet::from_flags(&[1, 0, 1, 1]);
        assert_eq!(set.to_flags(4), vec![1, 0, 1, 1]);
        assert_eq!(set.flag_string(4), "1011");
        assert_eq!(set.to_string(), "{0,2,3}");
        assert_eq!(set.upper_bound(), 4);
    }

    #[test]
    fn full_set_edges() {
        assert_eq!(PlatformSet::full(0), PlatformSet::EMPTY);
        assert_eq!(PlatformSet::full(64).len(), 64);
        assert_eq!(PlatformSet::full(3).iter().collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}

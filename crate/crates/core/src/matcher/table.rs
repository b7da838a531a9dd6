//! Orientation-aware identity gallery.
//!
//! Every identity owns one slot per orientation. Slots of the same
//! orientation live in one contiguous bank so a lookup is a linear scan over
//! a single dense matrix.

use crate::error::{Error, Result};
use crate::matcher::similarity::unit_cosine;
use crate::types::{Orientation, PersonId, ORIENTATION_COUNT};

#[derive(Debug, Clone, Default, PartialEq)]
struct Bank {
    owners: Vec<PersonId>,
    data: Vec<f64>,
}

/// A gallery hit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableMatch {
    pub id: PersonId,
    pub similarity: f64,
}

/// Keeps the higher similarity; equal similarities keep the lower id.
#[inline]
fn consider(best: &mut Option<TableMatch>, id: PersonId, similarity: f64) {
    let better = match best {
        None => true,
        Some(b) => similarity > b.similarity || (similarity == b.similarity && id < b.id),
    };
    if better {
        *best = Some(TableMatch { id, similarity });
    }
}

/// Outcome of [`PooledTable::resolve_sequence`] for one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolution {
    pub id: PersonId,
    /// Similarity of the matched identity; `None` when a new one was created.
    pub similarity: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PooledTable {
    dim: usize,
    capacity: Option<usize>,
    /// Row of each identity in each bank, indexed by `PersonId`.
    rows: Vec<[Option<u32>; ORIENTATION_COUNT]>,
    banks: [Bank; ORIENTATION_COUNT],
}

impl PooledTable {
    pub fn new(dim: usize, capacity: Option<usize>) -> Self {
        Self { dim, capacity, rows: Vec::new(), banks: Default::default() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    /// Number of identities.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Identifier the next [`init_identity`](Self::init_identity) returns.
    pub fn next_id(&self) -> PersonId {
        PersonId(self.rows.len() as u64)
    }

    pub fn contains(&self, id: PersonId) -> bool {
        (id.0 as usize) < self.rows.len()
    }

    /// Number of occupied slots in one orientation.
    pub fn occupied(&self, orientation: Orientation) -> usize {
        self.banks[orientation.index()].owners.len()
    }

    pub fn slot(&self, id: PersonId, orientation: Orientation) -> Option<&[f64]> {
        let row = (*self.rows.get(id.0 as usize)?)[orientation.index()]? as usize;
        let bank = &self.banks[orientation.index()];
        Some(&bank.data[row * self.dim..(row + 1) * self.dim])
    }

    /// All identities in ascending order with their per-orientation slots.
    pub fn entries(&self) -> impl Iterator<Item = (PersonId, [Option<&[f64]>; ORIENTATION_COUNT])> + '_ {
        (0..self.rows.len()).map(move |i| {
            let id = PersonId(i as u64);
            (id, Orientation::ALL.map(|o| self.slot(id, o)))
        })
    }

    fn check_dim(&self, feature: &[f64]) -> Result<()> {
        if feature.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: feature.len() });
        }
        Ok(())
    }

    /// Best same-orientation match with similarity `>= tau`.
    ///
    /// Identities without a slot for `orientation` are skipped. Equal
    /// similarities resolve to the lowest `PersonId`.
    pub fn match_feature(&self, feature: &[f64], orientation: Orientation, tau: f64) -> Result<Option<TableMatch>> {
        self.check_dim(feature)?;
        Ok(self.best_in_bank(feature, orientation).filter(|m| m.similarity >= tau))
    }

    /// Nearest same-orientation identity regardless of threshold.
    pub fn nearest(&self, feature: &[f64], orientation: Orientation) -> Result<Option<TableMatch>> {
        self.check_dim(feature)?;
        Ok(self.best_in_bank(feature, orientation))
    }

    /// Resolves features in order: each either updates the best
    /// same-orientation identity with similarity `>= tau` or allocates a new
    /// one. Later queries see earlier changes.
    pub fn resolve_sequence(&mut self, queries: &[(&[f64], Orientation)], tau: f64) -> Result<Vec<Resolution>> {
        queries
            .iter()
            .map(|&(feature, o)| match self.match_feature(feature, o, tau)? {
                Some(m) => {
                    self.update(m.id, o, feature)?;
                    Ok(Resolution { id: m.id, similarity: Some(m.similarity) })
                }
                None => Ok(Resolution { id: self.init_identity(feature, o)?, similarity: None }),
            })
            .collect()
    }

    fn best_in_bank(&self, feature: &[f64], orientation: Orientation) -> Option<TableMatch> {
        let bank = &self.banks[orientation.index()];
        let mut best: Option<TableMatch> = None;
        for (owner, row) in bank.owners.iter().zip(bank.data.chunks_exact(self.dim)) {
            consider(&mut best, *owner, unit_cosine(feature, row));
        }
        best
    }

    /// Overwrites (or fills) the slot for `(id, orientation)`.
    pub fn update(&mut self, id: PersonId, orientation: Orientation, feature: &[f64]) -> Result<()> {
        self.check_dim(feature)?;
        let dim = self.dim;
        let slots = self.rows.get_mut(id.0 as usize).ok_or(Error::UnknownId(id))?;
        let bank = &mut self.banks[orientation.index()];
        match slots[orientation.index()] {
            Some(row) => {
                let row = row as usize;
                bank.data[row * dim..(row + 1) * dim].copy_from_slice(feature);
            }
            None => {
                slots[orientation.index()] = Some(bank.owners.len() as u32);
                bank.owners.push(id);
                bank.data.extend_from_slice(feature);
            }
        }
        Ok(())
    }

    /// Allocates a new identity holding `feature` in its `orientation` slot.
    pub fn init_identity(&mut self, feature: &[f64], orientation: Orientation) -> Result<PersonId> {
        self.check_dim(feature)?;
        if let Some(cap) = self.capacity {
            if self.rows.len() >= cap {
                return Err(Error::TableFull(cap));
            }
        }
        let id = self.next_id();
        self.rows.push([None; ORIENTATION_COUNT]);
        self.update(id, orientation, feature)?;
        Ok(id)
    }

    /// Appends an identity with arbitrary slots; used when loading snapshots.
    pub(crate) fn push_entry(&mut self, slots: [Option<Vec<f64>>; ORIENTATION_COUNT]) -> Result<PersonId> {
        if let Some(cap) = self.capacity {
            if self.rows.len() >= cap {
                return Err(Error::TableFull(cap));
            }
        }
        let id = self.next_id();
        self.rows.push([None; ORIENTATION_COUNT]);
        for (o, slot) in Orientation::ALL.into_iter().zip(slots) {
            if let Some(f) = slot {
                self.update(id, o, &f)?;
            }
        }
        Ok(id)
    }
}

/// Tables are equal when they hold the same slots; bank row order is an
/// internal detail.
impl PartialEq for PooledTable {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.capacity == other.capacity && self.entries().eq(other.entries())
    }
}

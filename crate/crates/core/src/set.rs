use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::gaussian::Gaussian3D;

/// An ordered collection of Gaussians with stable ids and active flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GaussianSet {
    pub gaussians: Vec<Gaussian3D>,
    pub ids: Vec<u32>,
    pub active: Vec<bool>,
}

impl GaussianSet {
    /// Wraps `gaussians` with ids `0..n` in order, all active.
    pub fn new(gaussians: Vec<Gaussian3D>) -> Self {
        let n = gaussians.len();
        Self {
            gaussians,
            ids: (0..n as u32).collect(),
            active: vec![true; n],
        }
    }

    pub fn with_ids(gaussians: Vec<Gaussian3D>, ids: Vec<u32>) -> Result<Self> {
        if gaussians.len() != ids.len() {
            return Err(Error::InvalidParameter(format!(
                "{} gaussians but {} ids",
                gaussians.len(),
                ids.len()
            )));
        }
        let mut seen = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if seen.insert(*id, i).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate id {id}")));
            }
        }
        let n = gaussians.len();
        Ok(Self {
            gaussians,
            ids,
            active: vec![true; n],
        })
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    /// Active members as `(id, gaussian)` pairs in storage order.
    pub fn iter_active(&self) -> impl Iterator<Item = (u32, &Gaussian3D)> + '_ {
        self.ids
            .iter()
            .zip(&self.gaussians)
            .zip(&self.active)
            .filter(|(_, a)| **a)
            .map(|((id, g), _)| (*id, g))
    }

    /// A new set holding only the active members, sorted by id.
    pub fn compacted(&self) -> Self {
        let mut pairs: Vec<(u32, Gaussian3D)> =
            self.iter_active().map(|(id, g)| (id, g.clone())).collect();
        pairs.sort_by_key(|(id, _)| *id);
        let (ids, gaussians): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let n = ids.len();
        Self {
            gaussians,
            ids,
            active: vec![true; n],
        }
    }

    pub fn get(&self, id: u32) -> Option<&Gaussian3D> {
        self.ids
            .iter()
            .position(|x| *x == id)
            .map(|i| &self.gaussians[i])
    }

    /// Bitwise comparison of the active members, matched by id.
    pub fn bits_eq(&self, other: &Self) -> bool {
        let a = self.compacted();
        let b = other.compacted();
        a.ids == b.ids
            && a.gaussians
                .iter()
                .zip(&b.gaussians)
                .all(|(x, y)| x.bits_eq(y))
    }
}

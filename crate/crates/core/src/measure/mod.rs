//! Finitely supported measures on a group with a lost-mass ledger.
//!
//! A [`SparseMeasure`] stands for an unknown "true" measure that agrees with
//! its atoms up to `lost_mass`: mass that was pruned, or that never entered
//! because the measure is a truncation. Total-variation distances are
//! reported with a bracket equal to the combined lost mass, so the true
//! distance lies within `value ± bracket`.

mod io;
mod kernel;
mod weight;

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::group::{Element, FiniteSet, Group};
pub use io::{read_measure, write_measure};
pub use weight::{Compensated, Exact, Mode, Weight};

#[derive(Clone, Debug, PartialEq)]
pub struct SparseMeasure<W: Weight> {
    /// Sorted by element, every mass strictly positive.
    atoms: Vec<(Element, W)>,
    lost: W,
}

/// A total-variation value with its error bracket.
#[derive(Clone, Debug, PartialEq)]
pub struct Tv<W> {
    pub value: W,
    pub bracket: W,
}

impl<W: Weight> SparseMeasure<W> {
    pub fn zero() -> Self {
        SparseMeasure {
            atoms: Vec::new(),
            lost: W::zero(),
        }
    }

    /// Unit mass at `g`.
    pub fn delta(g: Element) -> Self {
        SparseMeasure {
            atoms: vec![(g, W::one())],
            lost: W::zero(),
        }
    }

    /// Uniform probability measure on `set`.
    pub fn uniform(set: &FiniteSet) -> Result<Self> {
        if set.is_empty() {
            return Err(Error::Invalid("uniform measure on an empty set".into()));
        }
        let w = W::from_rational(&num_rational::BigRational::new(1.into(), set.len().into()));
        Ok(SparseMeasure {
            atoms: set.iter().map(|x| (x.clone(), w.clone())).collect(),
            lost: W::zero(),
        })
    }

    /// Builds a measure from arbitrary `(element, mass)` pairs; duplicate
    /// elements are merged and zero masses dropped.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (Element, W)>) -> Self {
        let mut atoms: Vec<(Element, W)> = atoms.into_iter().collect();
        atoms.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(Element, W)> = Vec::with_capacity(atoms.len());
        for (x, w) in atoms {
            match merged.last_mut() {
                Some((y, v)) if *y == x => *v = v.add(&w),
                _ => merged.push((x, w)),
            }
        }
        merged.retain(|(_, w)| !w.is_zero());
        SparseMeasure {
            atoms: merged,
            lost: W::zero(),
        }
    }

    pub fn with_lost(mut self, lost: W) -> Self {
        self.lost = lost;
        self
    }

    pub fn atoms(&self) -> &[(Element, W)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn support(&self) -> impl Iterator<Item = &Element> {
        self.atoms.iter().map(|(x, _)| x)
    }

    pub fn total_mass(&self) -> W {
        W::sum(self.atoms.iter().map(|(_, w)| w))
    }

    pub fn lost_mass(&self) -> &W {
        &self.lost
    }

    pub fn mass(&self, x: &Element) -> W {
        match self.atoms.binary_search_by(|(y, _)| y.cmp(x)) {
            Ok(i) => self.atoms[i].1.clone(),
            Err(_) => W::zero(),
        }
    }

    /// Checks every atom belongs to `group`.
    pub fn check(&self, group: &Group) -> Result<()> {
        self.atoms.iter().try_for_each(|(x, _)| group.check(x))
    }

    /// `μ(g) = μ(g⁻¹)` for every atom, compared exactly.
    pub fn is_symmetric(&self, group: &Group) -> bool {
        self.atoms
            .iter()
            .all(|(x, w)| self.mass(&group.inv_raw(x)) == *w)
    }

    pub fn map_weights<V: Weight>(&self, f: impl Fn(&W) -> V) -> SparseMeasure<V> {
        SparseMeasure {
            atoms: self.atoms.iter().map(|(x, w)| (x.clone(), f(w))).collect(),
            lost: f(&self.lost),
        }
    }

    pub fn to_float(&self) -> SparseMeasure<f64> {
        self.map_weights(|w| w.to_f64())
    }

    /// Moves every atom lighter than `min_mass` into the lost-mass ledger.
    pub fn prune(&self, min_mass: &W) -> Self {
        let (keep, drop): (Vec<_>, Vec<_>) = self
            .atoms
            .iter()
            .cloned()
            .partition(|(_, w)| w.total_cmp(min_mass) != Ordering::Less);
        let moved = W::sum(drop.iter().map(|(_, w)| w));
        SparseMeasure {
            atoms: keep,
            lost: self.lost.add(&moved),
        }
    }

    /// Keeps the `budget` heaviest atoms (ties broken by canonical order) and
    /// moves the rest into the ledger.
    pub fn prune_to_budget(&self, budget: usize) -> Self {
        let mut atoms = self.atoms.clone();
        let moved = kernel::retain_heaviest(&mut atoms, budget);
        SparseMeasure {
            atoms,
            lost: self.lost.add(&moved),
        }
    }
}

/// `μ * ν`, keeping at most `budget` atoms.
///
/// Discarded atoms and the propagated losses of both inputs go to the ledger:
/// `lost = lost(μ)·(|ν| + lost(ν)) + |μ|·lost(ν) + pruned`. The result does
/// not depend on the number of worker threads.
pub fn convolve<W: Weight>(
    group: &Group,
    mu: &SparseMeasure<W>,
    nu: &SparseMeasure<W>,
    budget: usize,
) -> Result<SparseMeasure<W>> {
    if budget == 0 {
        return Err(Error::Budget("convolution atom budget must be at least 1".into()));
    }
    mu.check(group)?;
    nu.check(group)?;
    let (atoms, pruned) = kernel::convolve_atoms(group, &mu.atoms, &nu.atoms, budget);
    let mu_mass = mu.total_mass();
    let nu_mass = nu.total_mass();
    let lost = mu
        .lost
        .mul(&nu_mass.add(&nu.lost))
        .add(&mu_mass.mul(&nu.lost))
        .add(&pruned);
    Ok(SparseMeasure { atoms, lost })
}

/// `(t·μ)(g) = μ(t⁻¹g)`.
pub fn translate_left<W: Weight>(group: &Group, t: &Element, mu: &SparseMeasure<W>) -> Result<SparseMeasure<W>> {
    group.check(t)?;
    mu.check(group)?;
    let mut atoms: Vec<(Element, W)> = mu
        .atoms
        .iter()
        .map(|(x, w)| (group.mul_raw(t, x), w.clone()))
        .collect();
    atoms.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    Ok(SparseMeasure {
        atoms,
        lost: mu.lost.clone(),
    })
}

/// `Σ_g |μ1(g) − μ2(g)|` over the retained atoms, with bracket
/// `lost(μ1) + lost(μ2)`.
pub fn tv_distance<W: Weight>(mu1: &SparseMeasure<W>, mu2: &SparseMeasure<W>) -> Tv<W> {
    let (a, b) = (&mu1.atoms, &mu2.atoms);
    let mut diffs: Vec<W> = Vec::with_capacity(a.len().max(b.len()));
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let ord = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.0.cmp(&y.0),
            (Some(_), None) => Ordering::Less,
            (None, _) => Ordering::Greater,
        };
        match ord {
            Ordering::Less => {
                diffs.push(a[i].1.clone());
                i += 1;
            }
            Ordering::Greater => {
                diffs.push(b[j].1.clone());
                j += 1;
            }
            Ordering::Equal => {
                diffs.push(a[i].1.abs_diff(&b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    Tv {
        value: W::sum(&diffs),
        bracket: mu1.lost.add(&mu2.lost),
    }
}

/// Reference convolution by a plain double loop over a `BTreeMap`; used as the
/// oracle for the sharded kernel.
pub fn convolve_naive<W: Weight>(group: &Group, mu: &SparseMeasure<W>, nu: &SparseMeasure<W>) -> SparseMeasure<W> {
    let mut acc: std::collections::BTreeMap<Element, W> = std::collections::BTreeMap::new();
    for (x, a) in &mu.atoms {
        for (y, b) in &nu.atoms {
            let z = group.mul_raw(x, y);
            let p = a.mul(b);
            acc.entry(z)
                .and_modify(|w| *w = w.add(&p))
                .or_insert(p);
        }
    }
    SparseMeasure::from_atoms(acc)
}

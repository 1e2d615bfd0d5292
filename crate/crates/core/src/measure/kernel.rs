//! Sharded convolution.
//!
//! Output keys are spread over 64 shards by hash. Each worker owns a fixed
//! subset of shards, walks every product in `(i, j)` order and accumulates
//! the ones landing in its shards. Every key therefore sees its terms in the
//! same order whatever the worker count, so float results are bit-identical
//! however many threads rayon has.
//!
//! Large products are split into passes over disjoint slices of the hash
//! space. Every pass recomputes all products but only keeps its own slice, so
//! memory stays bounded; after each pass the running result is cut back to
//! the atom budget. Cutting early is exact: the heaviest `budget` atoms of a
//! union are the heaviest `budget` of (heaviest `budget` of one part) plus
//! the other part.

use std::cmp::Ordering;
use std::hash::{BuildHasher, BuildHasherDefault, Hash, Hasher};

use rayon::prelude::*;
use rustc_hash::FxBuildHasher;

use super::weight::Weight;
use crate::group::{Element, Group};

const SHARD_BITS: u32 = 6;
const SHARDS: usize = 1 << SHARD_BITS;
/// Products handled per pass; bounds the distinct keys held at once.
const PAIRS_PER_PASS: u128 = 48 << 20;

/// An element with its hash computed once.
#[derive(PartialEq, Eq)]
struct Key {
    hash: u64,
    x: Element,
}

impl Hash for Key {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.hash);
    }
}

#[derive(Default)]
struct PassThrough(u64);

impl Hasher for PassThrough {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, _: &[u8]) {
        unreachable!("keys hash through write_u64")
    }
    fn write_u64(&mut self, v: u64) {
        self.0 = v;
    }
}

type Map<A> = std::collections::HashMap<Key, A, BuildHasherDefault<PassThrough>>;

fn key(x: Element) -> Key {
    Key { hash: FxBuildHasher.hash_one(&x), x }
}

fn shard_of(k: &Key) -> usize {
    (k.hash >> (64 - SHARD_BITS)) as usize
}

fn pass_of(k: &Key, passes: u64) -> u64 {
    ((k.hash as u32 as u64) * passes) >> 32
}

/// `μ * ν` cut back to `budget` atoms, with the discarded mass.
pub(super) fn convolve_atoms<W: Weight>(
    group: &Group,
    mu: &[(Element, W)],
    nu: &[(Element, W)],
    budget: usize,
) -> (Vec<(Element, W)>, W) {
    if mu.is_empty() || nu.is_empty() {
        return (Vec::new(), W::zero());
    }
    let pairs = mu.len() as u128 * nu.len() as u128;
    let passes = pairs.div_ceil(PAIRS_PER_PASS).clamp(1, 1 << 16) as u64;
    convolve_in_passes(group, mu, nu, budget, passes)
}

fn convolve_in_passes<W: Weight>(
    group: &Group,
    mu: &[(Element, W)],
    nu: &[(Element, W)],
    budget: usize,
    passes: u64,
) -> (Vec<(Element, W)>, W) {
    let ls = W::scale_of(mu.iter().map(|(_, w)| w));
    let rs = W::scale_of(nu.iter().map(|(_, w)| w));
    let left: Vec<(&Element, W::Scaled)> = mu.iter().map(|(x, w)| (x, w.scaled(&ls))).collect();
    let right: Vec<(&Element, W::Scaled)> = nu.iter().map(|(y, w)| (y, w.scaled(&rs))).collect();

    let mut kept: Vec<(Element, W)> = Vec::new();
    let mut dropped: Vec<W> = Vec::new();
    for pass in 0..passes {
        let shards = accumulate::<W>(group, &left, &right, passes, pass);
        let mut out: Vec<(Element, W)> = shards
            .into_par_iter()
            .flat_map_iter(|m| m.into_iter().map(|(k, acc)| (k.x, W::acc_finish(acc, &ls, &rs))))
            .filter(|(_, w)| !w.is_zero())
            .collect();
        kept.append(&mut out);
        if kept.len() > budget {
            dropped.push(retain_heaviest(&mut kept, budget));
        }
    }
    kept.par_sort_unstable_by(|a, b| a.0.cmp(&b.0));
    (kept, W::sum(&dropped))
}

fn accumulate<W: Weight>(
    group: &Group,
    left: &[(&Element, W::Scaled)],
    right: &[(&Element, W::Scaled)],
    passes: u64,
    pass: u64,
) -> Vec<Map<W::Acc>> {
    let workers = rayon::current_num_threads().clamp(1, SHARDS);
    let owned: Vec<Vec<Map<W::Acc>>> = (0..workers)
        .into_par_iter()
        .map(|w| {
            let mut maps: Vec<Map<W::Acc>> = (w..SHARDS).step_by(workers).map(|_| Map::default()).collect();
            for (x, a) in left {
                for (y, b) in right {
                    let k = key(group.mul_raw(x, y));
                    let s = shard_of(&k);
                    if s % workers != w || (passes > 1 && pass_of(&k, passes) != pass) {
                        continue;
                    }
                    let acc = maps[s / workers].entry(k).or_insert_with(W::acc_new);
                    W::acc_add(acc, a, b);
                }
            }
            maps
        })
        .collect();
    let mut global: Vec<Option<Map<W::Acc>>> = (0..SHARDS).map(|_| None).collect();
    for (w, maps) in owned.into_iter().enumerate() {
        for (j, m) in maps.into_iter().enumerate() {
            global[w + j * workers] = Some(m);
        }
    }
    global.into_iter().map(|m| m.expect("every shard has an owner")).collect()
}

/// Keeps the `budget` heaviest atoms, ties going to the canonically smaller
/// element, and returns the discarded mass. `atoms` stays sorted if it was.
pub(super) fn retain_heaviest<W: Weight>(atoms: &mut Vec<(Element, W)>, budget: usize) -> W {
    if atoms.len() <= budget {
        return W::zero();
    }
    let heavier = |a: &(Element, W), b: &(Element, W)| match b.1.total_cmp(&a.1) {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    };
    let mut all = std::mem::take(atoms);
    if budget > 0 {
        all.select_nth_unstable_by(budget - 1, heavier);
    }
    let mut dropped = all.split_off(budget);
    dropped.par_sort_unstable_by(|a, b| a.0.cmp(&b.0));
    all.par_sort_unstable_by(|a, b| a.0.cmp(&b.0));
    *atoms = all;
    W::sum(dropped.iter().map(|(_, w)| w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Exact;

    #[test]
    fn passes_do_not_change_the_result() {
        let g = Group::parse("lamplighter(2)").unwrap();
        let ball = g.ball(8, 1 << 20).unwrap();
        let mu: Vec<(Element, Exact)> = ball.iter().enumerate().map(|(i, x)| (x.clone(), Exact::new(1 + (i % 5) as i64, 1000))).collect();
        let nu: Vec<(Element, Exact)> = g.generators().iter().map(|x| (x.clone(), Exact::new(1, 4))).collect();
        for budget in [usize::MAX, 700, 50] {
            let one = convolve_in_passes(&g, &mu, &nu, budget, 1);
            let many = convolve_in_passes(&g, &mu, &nu, budget, 7);
            assert_eq!(one, many, "budget {budget}");
            let fm: Vec<(Element, f64)> = mu.iter().map(|(x, w)| (x.clone(), w.to_f64())).collect();
            let fnu: Vec<(Element, f64)> = nu.iter().map(|(x, w)| (x.clone(), w.to_f64())).collect();
            let a = convolve_in_passes(&g, &fm, &fnu, budget, 1);
            let b = convolve_in_passes(&g, &fm, &fnu, budget, 7);
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() < 1e-15);
        }
    }
}

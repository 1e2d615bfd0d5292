//! Computable countable groups: canonical forms, the group law, enumeration
//! and finite-set combinatorics.

mod code;
mod set;
mod spec;

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use rustc_hash::{FxHashMap, FxHashSet};

use crate::error::{Error, Result};
pub(crate) use code::{factors as factor_codes, push_identity, Code};
use code::ElementParser;
pub use set::FiniteSet;
pub use spec::GroupSpec;

/// Canonical form of a group element, tagged with the group it belongs to.
///
/// Equality is equality of canonical forms, so it coincides with equality in
/// the group. The derived order is the canonical order used for tie-breaking.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Element {
    tag: u32,
    code: Code,
}

impl Element {
    pub(crate) fn code(&self) -> &[i32] {
        &self.code
    }
}

/// A registered group family together with its declared generators.
#[derive(Clone, Debug)]
pub struct Group {
    spec: GroupSpec,
    name: String,
    tag: u32,
    identity: Element,
    generators: Vec<Element>,
}

fn fnv1a(text: &str) -> u32 {
    text.bytes()
        .fold(0x811c_9dc5u32, |h, b| (h ^ b as u32).wrapping_mul(0x0100_0193))
}

impl Group {
    pub fn new(spec: GroupSpec) -> Result<Group> {
        spec.validate()?;
        let name = spec.to_string();
        let tag = fnv1a(&name);
        let mut id = Code::new();
        code::push_identity(&spec, &mut id);
        let generators = code::generators(&spec)
            .into_iter()
            .map(|code| Element { tag, code })
            .collect();
        Ok(Group {
            identity: Element { tag, code: id },
            spec,
            name,
            tag,
            generators,
        })
    }

    pub fn parse(text: &str) -> Result<Group> {
        Group::new(text.parse()?)
    }

    /// Wraps a canonical code produced by this group's own routines.
    pub(crate) fn element_from(&self, code: Code) -> Element {
        debug_assert!(code::is_valid(&self.spec, &code));
        Element { tag: self.tag, code }
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn identity(&self) -> Element {
        self.identity.clone()
    }

    pub fn is_identity(&self, x: &Element) -> bool {
        *x == self.identity
    }

    /// The declared symmetric generating set, in declaration order.
    pub fn generators(&self) -> &[Element] {
        &self.generators
    }

    /// Whether `x` is a well-formed element of this group.
    pub fn contains(&self, x: &Element) -> bool {
        x.tag == self.tag && code::is_valid(&self.spec, &x.code)
    }

    pub fn check(&self, x: &Element) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(Error::SpecMismatch { group: self.name.clone() })
        }
    }

    pub fn mul(&self, x: &Element, y: &Element) -> Result<Element> {
        self.check(x)?;
        self.check(y)?;
        Ok(self.mul_raw(x, y))
    }

    /// Multiplication without the membership check; both arguments must
    /// already belong to this group.
    pub fn mul_raw(&self, x: &Element, y: &Element) -> Element {
        debug_assert!(x.tag == self.tag && y.tag == self.tag);
        let mut out = Code::new();
        code::mul_into(&self.spec, &x.code, &y.code, &mut out);
        Element { tag: self.tag, code: out }
    }

    pub fn inv(&self, x: &Element) -> Result<Element> {
        self.check(x)?;
        Ok(self.inv_raw(x))
    }

    pub fn inv_raw(&self, x: &Element) -> Element {
        let mut out = Code::new();
        code::inv_into(&self.spec, &x.code, &mut out);
        Element { tag: self.tag, code: out }
    }

    /// `b⁻¹ a b`.
    pub fn conjugate(&self, a: &Element, b: &Element) -> Element {
        self.mul_raw(&self.mul_raw(&self.inv_raw(b), a), b)
    }

    /// Word length with respect to the declared generators.
    pub fn word_len(&self, x: &Element) -> u64 {
        code::word_len(&self.spec, &x.code)
    }

    /// Whether `x` commutes with every generator, hence with the whole group.
    pub fn is_central(&self, x: &Element) -> bool {
        self.generators
            .iter()
            .all(|g| self.mul_raw(x, g) == self.mul_raw(g, x))
    }

    pub fn format(&self, x: &Element) -> String {
        let mut out = String::new();
        code::format_into(&self.spec, &x.code, &mut out);
        out
    }

    pub fn parse_element(&self, text: &str) -> Result<Element> {
        let text = text.trim();
        let mut parser = ElementParser::new(text);
        let mut out = Code::new();
        parser.parse(&self.spec, &mut out)?;
        if !parser.at_end() {
            return Err(Error::Parse(format!(
                "trailing input in element {text:?} for {}",
                self.name
            )));
        }
        let x = Element { tag: self.tag, code: out };
        self.check(&x)?;
        Ok(x)
    }

    pub fn parse_set<S: AsRef<str>>(&self, items: &[S]) -> Result<FiniteSet> {
        items
            .iter()
            .map(|s| self.parse_element(s.as_ref()))
            .collect::<Result<Vec<_>>>()
            .map(FiniteSet::new)
    }

    /// Product of `len` uniformly drawn generators.
    pub fn random_word<R: Rng + ?Sized>(&self, rng: &mut R, len: usize) -> Element {
        (0..len).fold(self.identity(), |acc, _| {
            let g = &self.generators[rng.gen_range(0..self.generators.len())];
            self.mul_raw(&acc, g)
        })
    }

    /// Breadth-first enumeration of the Cayley graph from the identity,
    /// right-multiplying by generators in declaration order.
    pub fn enumeration(&self) -> Enumeration<'_> {
        let mut seen = FxHashSet::default();
        seen.insert(self.identity());
        Enumeration {
            group: self,
            frontier: VecDeque::new(),
            pending: VecDeque::from([(self.identity(), 0)]),
            seen,
        }
    }

    /// The `i`-th element (1-based) of the enumeration; `c_1` is the identity.
    pub fn enumerate_element(&self, i: u64) -> Result<Element> {
        if i == 0 {
            return Err(Error::Invalid("enumeration index starts at 1".into()));
        }
        match self.enumeration().nth((i - 1) as usize) {
            Some((x, _)) => Ok(x),
            None => Err(Error::OutOfRange {
                index: i,
                order: self.spec.order().unwrap_or(0),
            }),
        }
    }

    /// All elements of word length at most `radius`.
    pub fn ball(&self, radius: u64, cap: usize) -> Result<FiniteSet> {
        let mut out = Vec::new();
        for (x, depth) in self.enumeration() {
            if depth > radius {
                break;
            }
            if out.len() == cap {
                return Err(Error::Budget(format!(
                    "ball of radius {radius} in {} exceeds {cap} elements",
                    self.name
                )));
            }
            out.push(x);
        }
        Ok(FiniteSet::new(out))
    }

    /// The product set `A^k = {a_1 ⋯ a_k}`.
    ///
    /// When a stage exceeds `cap` it is cut back to the largest word-length
    /// radius that fits, and the result is flagged as truncated.
    pub fn product_power(&self, a: &FiniteSet, k: usize, cap: usize) -> Result<ProductPower> {
        if a.is_empty() {
            return Err(Error::Invalid("product power of an empty set".into()));
        }
        if k == 0 {
            return Err(Error::Invalid("product power exponent must be positive".into()));
        }
        if cap < a.len() {
            return Err(Error::Budget(format!(
                "product-power cap {cap} is below the base set size {}",
                a.len()
            )));
        }
        let mut current: Vec<Element> = a.as_slice().to_vec();
        let mut exact_power = 1;
        let mut truncated = false;
        let mut radius = None;
        for j in 2..=k {
            let mut acc = CappedSet::new(self, cap);
            for x in &current {
                for y in a {
                    acc.insert(self.mul_raw(x, y));
                }
            }
            let stage_radius = acc.radius;
            let mut next = acc.into_sorted();
            if next.is_empty() {
                return Err(Error::Budget(format!(
                    "product-power cap {cap} cannot hold a single sphere at power {j}"
                )));
            }
            if stage_radius.is_some() {
                truncated = true;
                radius = stage_radius;
            } else if !truncated {
                if next == current {
                    // A^j = A^{j-1}, so every higher power is the same set.
                    exact_power = k;
                    break;
                }
                exact_power = j;
            }
            std::mem::swap(&mut current, &mut next);
        }
        Ok(ProductPower {
            set: FiniteSet::new(current).with_truncation(truncated),
            exact_power,
            radius,
        })
    }

    /// `A^B = {b⁻¹ a b : a ∈ A, b ∈ B}`, radius-truncated above `cap`.
    pub fn conjugate_set(&self, a: &FiniteSet, b: &FiniteSet, cap: usize) -> Result<FiniteSet> {
        if cap == 0 {
            return Err(Error::Budget("conjugate-set cap must be positive".into()));
        }
        let mut acc = CappedSet::new(self, cap);
        for y in b {
            let y_inv = self.inv_raw(y);
            for x in a {
                acc.insert(self.mul_raw(&self.mul_raw(&y_inv, x), y));
            }
        }
        let truncated = acc.radius.is_some() || a.truncated() || b.truncated();
        Ok(FiniteSet::new(acc.into_sorted()).with_truncation(truncated))
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Result of [`Group::product_power`].
#[derive(Clone, Debug)]
pub struct ProductPower {
    pub set: FiniteSet,
    /// Largest exponent whose product set was computed without truncation.
    pub exact_power: usize,
    /// Word-length radius of the final truncation, if any.
    pub radius: Option<u64>,
}

/// Set accumulator that keeps only the largest word-length ball fitting `cap`.
struct CappedSet<'g> {
    group: &'g Group,
    cap: usize,
    items: FxHashMap<Element, u64>,
    radius: Option<u64>,
}

impl<'g> CappedSet<'g> {
    fn new(group: &'g Group, cap: usize) -> Self {
        CappedSet {
            group,
            cap,
            items: FxHashMap::default(),
            radius: None,
        }
    }

    fn insert(&mut self, x: Element) {
        let len = self.group.word_len(&x);
        if matches!(self.radius, Some(r) if len > r) {
            return;
        }
        self.items.insert(x, len);
        if self.items.len() > self.cap {
            let mut hist: Vec<(u64, usize)> = Vec::new();
            let mut lens: Vec<u64> = self.items.values().copied().collect();
            lens.sort_unstable();
            for l in lens {
                match hist.last_mut() {
                    Some((v, c)) if *v == l => *c += 1,
                    _ => hist.push((l, 1)),
                }
            }
            let mut total = 0;
            let mut keep: Option<u64> = None;
            for (l, c) in hist {
                if total + c > self.cap {
                    break;
                }
                total += c;
                keep = Some(l);
            }
            match keep {
                Some(r) => {
                    self.items.retain(|_, l| *l <= r);
                    self.radius = Some(r);
                }
                None => {
                    self.items.clear();
                    self.radius = Some(0);
                    self.cap = 0;
                }
            }
        }
    }

    fn into_sorted(self) -> Vec<Element> {
        let mut v: Vec<Element> = self.items.into_keys().collect();
        v.sort_unstable();
        v
    }
}

/// Streaming breadth-first enumeration; yields `(element, word length)`.
pub struct Enumeration<'g> {
    group: &'g Group,
    frontier: VecDeque<(Element, u64)>,
    pending: VecDeque<(Element, u64)>,
    seen: FxHashSet<Element>,
}

impl Iterator for Enumeration<'_> {
    type Item = (Element, u64);

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(item) = self.pending.pop_front() {
                self.frontier.push_back(item.clone());
                return Some(item);
            }
            let (x, depth) = self.frontier.pop_front()?;
            for g in &self.group.generators {
                let y = self.group.mul_raw(&x, g);
                if self.seen.insert(y.clone()) {
                    self.pending.push_back((y, depth + 1));
                }
            }
        }
    }
}

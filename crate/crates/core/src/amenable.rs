//! Følner sets inside registered amenable subgroups and certificates for
//! amenably-visible sets.
//!
//! Subgroups are declared by embedding name rather than discovered:
//!
//! | name          | subgroup                                                |
//! |---------------|---------------------------------------------------------|
//! | `trivial`     | `{e}`                                                   |
//! | `whole`       | the ambient group (must be amenable)                    |
//! | `center`      | product of the abelian factors                          |
//! | `factor(i)`   | the `i`-th direct factor, 1-based (must be amenable)    |
//! | `lamps`       | lamp subgroup of a lamplighter, or `lamps(i)` in a product |
//! | `base`        | the `Z` carrying the lamplighter, or `base(i)`          |
//!
//! Each embedding carries a Følner family `F(0) = {e} ⊆ F(1) ⊆ ...` that
//! exhausts it: boxes for free abelian parts, the whole group for cyclic parts,
//! finite lamp blocks for lamp subgroups and `P·L·P` (shift interval, lamp
//! block, shift interval) for whole lamplighters.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Code, Element, FiniteSet, Group, GroupSpec};

#[derive(Clone, Debug, PartialEq, Eq)]
enum Shape {
    Trivial,
    Whole,
    Lamps,
    Base,
    Product(Vec<Shape>),
}

/// An amenable subgroup `H` of a registered group, with its Følner family.
#[derive(Clone, Debug)]
pub struct AmenableSubgroup {
    ambient: Group,
    name: String,
    shape: Shape,
}

fn whole_shape(spec: &GroupSpec) -> Result<Shape> {
    match spec {
        GroupSpec::Free { rank } if *rank > 1 => Err(Error::Invalid(format!(
            "{spec} is not amenable and cannot be an amenable subgroup"
        ))),
        GroupSpec::Product(fs) => Ok(Shape::Product(
            fs.iter().map(whole_shape).collect::<Result<_>>()?,
        )),
        _ => Ok(Shape::Whole),
    }
}

fn center_shape(spec: &GroupSpec) -> Shape {
    match spec {
        GroupSpec::Product(fs) => Shape::Product(fs.iter().map(center_shape).collect()),
        s if s.is_abelian() => Shape::Whole,
        _ => Shape::Trivial,
    }
}

fn parse_embedding(text: &str) -> Result<(String, Option<usize>)> {
    let text = text.trim();
    match text.split_once('(') {
        None => Ok((text.to_string(), None)),
        Some((head, rest)) => {
            let idx = rest
                .strip_suffix(')')
                .and_then(|s| s.trim().parse::<usize>().ok())
                .filter(|&i| i >= 1)
                .ok_or_else(|| Error::Parse(format!("bad subgroup embedding {text:?}")))?;
            Ok((head.trim().to_string(), Some(idx)))
        }
    }
}

impl AmenableSubgroup {
    pub fn new(group: &Group, embedding: &str) -> Result<Self> {
        let spec = group.spec();
        let (head, index) = parse_embedding(embedding)?;
        let in_factor = |build: &dyn Fn(&GroupSpec) -> Result<Shape>| -> Result<Shape> {
            match (spec, index) {
                (GroupSpec::Product(fs), Some(i)) => {
                    let target = fs.get(i - 1).ok_or_else(|| {
                        Error::Invalid(format!("{embedding}: {spec} has {} factors", fs.len()))
                    })?;
                    let mut shapes = vec![Shape::Trivial; fs.len()];
                    shapes[i - 1] = build(target)?;
                    Ok(Shape::Product(shapes))
                }
                (_, None) => build(spec),
                (_, Some(_)) => Err(Error::Invalid(format!(
                    "{embedding}: factor index needs a product group, got {spec}"
                ))),
            }
        };
        let lamplighter_only = |shape: Shape| {
            move |s: &GroupSpec| match s {
                GroupSpec::Lamplighter { .. } => Ok(shape.clone()),
                other => Err(Error::Invalid(format!("{other} is not a lamplighter group"))),
            }
        };
        let shape = match (head.as_str(), index) {
            ("trivial", None) => Shape::Trivial,
            ("whole", None) => whole_shape(spec)?,
            ("center", None) => center_shape(spec),
            ("factor", Some(_)) => in_factor(&whole_shape)?,
            ("lamps", _) => in_factor(&lamplighter_only(Shape::Lamps))?,
            ("base", _) => in_factor(&lamplighter_only(Shape::Base))?,
            _ => return Err(Error::Parse(format!("unknown subgroup embedding {embedding:?}"))),
        };
        Ok(AmenableSubgroup {
            ambient: group.clone(),
            name: embedding.trim().to_string(),
            shape,
        })
    }

    pub fn ambient(&self) -> &Group {
        &self.ambient
    }

    /// The embedding name this subgroup was declared with.
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn contains(&self, x: &Element) -> bool {
        self.ambient.contains(x) && shape_contains(self.ambient.spec(), &self.shape, x.code())
    }

    pub fn is_normal(&self) -> bool {
        shape_normal(&self.shape)
    }

    /// The `m`-th member of the declared Følner family, or a budget error if
    /// it would exceed `cap` elements.
    pub fn folner_member(&self, m: u32, cap: usize) -> Result<FiniteSet> {
        let bound = family_bound(self.ambient.spec(), &self.shape, m);
        if bound > cap as u128 {
            return Err(Error::Budget(format!(
                "Følner family member {m} of {} has up to {bound} elements (cap {cap})",
                self.name
            )));
        }
        let codes = family(self.ambient.spec(), &self.shape, m);
        Ok(FiniteSet::new(codes.into_iter().map(|c| self.ambient.element_from(c))))
    }
}

fn shape_contains(spec: &GroupSpec, shape: &Shape, x: &[i32]) -> bool {
    match (shape, spec) {
        (Shape::Whole, _) => true,
        (Shape::Trivial, _) => {
            let mut id = Code::new();
            crate::group::push_identity(spec, &mut id);
            x == id.as_slice()
        }
        (Shape::Lamps, _) => x[0] == 0,
        (Shape::Base, _) => x.len() == 1,
        (Shape::Product(shapes), GroupSpec::Product(fs)) => fs
            .iter()
            .zip(shapes)
            .zip(crate::group::factor_codes(x))
            .all(|((f, s), xf)| shape_contains(f, s, xf)),
        _ => false,
    }
}

fn shape_normal(shape: &Shape) -> bool {
    match shape {
        Shape::Base => false,
        Shape::Product(shapes) => shapes.iter().all(shape_normal),
        _ => true,
    }
}

/// Upper bound on the size of family member `m` (before deduplication).
fn family_bound(spec: &GroupSpec, shape: &Shape, m: u32) -> u128 {
    let m128 = m as u128;
    let sat = |base: u128, exp: u32| base.checked_pow(exp).unwrap_or(u128::MAX);
    match (shape, spec) {
        (Shape::Trivial, _) => 1,
        (_, _) if m == 0 => 1,
        (Shape::Whole, GroupSpec::Free { .. }) => 2 * m128 + 1,
        (Shape::Whole, GroupSpec::FreeAbelian { rank }) => sat(2 * m128 + 1, *rank),
        (Shape::Whole, GroupSpec::Cyclic { order }) => *order as u128,
        (Shape::Whole, GroupSpec::Lamplighter { lamps }) => (2 * m128 + 1)
            .saturating_mul(2 * m128 + 1)
            .saturating_mul(sat(*lamps as u128, 2 * m + 1)),
        (Shape::Lamps, GroupSpec::Lamplighter { lamps }) => sat(*lamps as u128, 2 * m - 1),
        (Shape::Base, _) => 2 * m128 + 1,
        (Shape::Product(shapes), GroupSpec::Product(fs)) => fs
            .iter()
            .zip(shapes)
            .fold(1u128, |acc, (f, s)| acc.saturating_mul(family_bound(f, s, m))),
        _ => unreachable!("shape does not match spec"),
    }
}

/// All lamp configurations supported in `[lo, hi]`, as flat `(pos, value)` lists.
fn lamp_configs(lamps: u32, lo: i32, hi: i32) -> Vec<Vec<i32>> {
    let mut out = vec![Vec::new()];
    for pos in lo..=hi {
        let mut next = Vec::with_capacity(out.len() * lamps as usize);
        for cfg in &out {
            next.push(cfg.clone());
            for v in 1..lamps as i32 {
                let mut c = cfg.clone();
                c.push(pos);
                c.push(v);
                next.push(c);
            }
        }
        out = next;
    }
    out
}

fn family(spec: &GroupSpec, shape: &Shape, m: u32) -> Vec<Code> {
    let mi = m as i32;
    let identity = || {
        let mut c = Code::new();
        crate::group::push_identity(spec, &mut c);
        vec![c]
    };
    if m == 0 && !matches!(shape, Shape::Product(_)) {
        return identity();
    }
    match (shape, spec) {
        (Shape::Trivial, _) => identity(),
        (Shape::Whole, GroupSpec::Free { .. }) => (-mi..=mi)
            .map(|k| {
                let letter = if k >= 0 { 1 } else { -1 };
                (0..k.unsigned_abs()).map(|_| letter).collect()
            })
            .collect(),
        (Shape::Whole, GroupSpec::FreeAbelian { rank }) => {
            let mut out = vec![Code::new()];
            for _ in 0..*rank {
                out = out
                    .into_iter()
                    .flat_map(|c| {
                        (-mi..=mi).map(move |k| {
                            let mut c = c.clone();
                            c.push(k);
                            c
                        })
                    })
                    .collect();
            }
            out
        }
        (Shape::Whole, GroupSpec::Cyclic { order }) => {
            (0..*order as i32).map(|v| Code::from_slice(&[v])).collect()
        }
        (Shape::Whole, GroupSpec::Lamplighter { lamps }) => {
            // (0,p)(f,0)(0,q) = (shift_p f, p + q) with |p|, |q| <= m, supp f in [-m, m]
            let configs = lamp_configs(*lamps, -mi, mi);
            let mut out = Vec::new();
            for p in -mi..=mi {
                for cfg in &configs {
                    for q in -mi..=mi {
                        let mut c = Code::new();
                        c.push(p + q);
                        for pair in cfg.chunks_exact(2) {
                            c.push(pair[0] + p);
                            c.push(pair[1]);
                        }
                        out.push(c);
                    }
                }
            }
            out
        }
        (Shape::Lamps, GroupSpec::Lamplighter { lamps }) => lamp_configs(*lamps, -(mi - 1), mi - 1)
            .into_iter()
            .map(|cfg| {
                let mut c = Code::from_slice(&[0]);
                c.extend_from_slice(&cfg);
                c
            })
            .collect(),
        (Shape::Base, _) => (-mi..=mi).map(|p| Code::from_slice(&[p])).collect(),
        (Shape::Product(shapes), GroupSpec::Product(fs)) => {
            let mut out = vec![Code::new()];
            for (f, s) in fs.iter().zip(shapes) {
                let parts = family(f, s, m);
                let mut next = Vec::with_capacity(out.len() * parts.len());
                for prefix in &out {
                    for part in &parts {
                        let mut c = prefix.clone();
                        c.push(part.len() as i32);
                        c.extend_from_slice(part);
                        next.push(c);
                    }
                }
                out = next;
            }
            out
        }
        _ => unreachable!("shape does not match spec"),
    }
}

/// `|B·F \ F|`.
pub fn boundary_count(group: &Group, b: &FiniteSet, f: &FiniteSet) -> usize {
    let mut escaped = rustc_hash::FxHashSet::default();
    for x in b {
        for y in f {
            let z = group.mul_raw(x, y);
            if !f.contains(&z) {
                escaped.insert(z);
            }
        }
    }
    escaped.len()
}

/// Exact test of `|B·F \ F| < eps·|F|` in integer arithmetic.
pub fn is_invariant(group: &Group, b: &FiniteSet, f: &FiniteSet, eps: Ratio<u64>) -> bool {
    let lhs = boundary_count(group, b, f) as u128 * *eps.denom() as u128;
    let rhs = *eps.numer() as u128 * f.len() as u128;
    !f.is_empty() && lhs < rhs
}

/// Default cap on the size of a Følner candidate.
pub const FOLNER_CAP: usize = 1 << 20;

/// The smallest member of `h`'s Følner family that is `(B, eps)`-invariant,
/// symmetrized. The returned set passed the exact invariance check.
pub fn folner_set(h: &AmenableSubgroup, b: &FiniteSet, eps: Ratio<u64>, cap: usize) -> Result<FiniteSet> {
    if *eps.numer() == 0 {
        return Err(Error::Invalid("Følner tolerance must be positive".into()));
    }
    if let Some(x) = b.iter().find(|x| !h.contains(x)) {
        return Err(Error::Invalid(format!(
            "{} is not in the subgroup {}",
            h.ambient.format(x),
            h.name
        )));
    }
    let group = &h.ambient;
    let mut previous = 0;
    for m in 0.. {
        let candidate = h.folner_member(m, cap)?.symmetrized(group);
        if is_invariant(group, b, &candidate, eps) {
            return Ok(candidate);
        }
        if m > 0 && candidate.len() == previous {
            // the family has stabilized on a finite subgroup that still fails
            return Err(Error::Budget(format!(
                "Følner family of {} exhausted without a ({eps})-invariant member",
                h.name
            )));
        }
        previous = candidate.len();
    }
    unreachable!()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum CertificateMode {
    /// `H` is normal and meets `S`, so every conjugate of `S` meets `H`.
    Structural,
    /// `S^γ ∩ H ≠ ∅` was checked for every `γ` of word length at most `radius`.
    /// This is not a proof for larger `γ`.
    RadiusChecked { radius: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Visibility {
    Pass,
    Refuted { witness: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisibilityCertificate {
    pub group: String,
    pub set: Vec<String>,
    pub subgroup: String,
    #[serde(flatten)]
    pub mode: CertificateMode,
    #[serde(flatten)]
    pub verdict: Visibility,
}

impl VisibilityCertificate {
    pub fn passed(&self) -> bool {
        self.verdict == Visibility::Pass
    }
}

/// Certify that `S` is amenably visible through `H`.
pub fn certify_visibility(s: &FiniteSet, h: &AmenableSubgroup, radius: u64) -> Result<VisibilityCertificate> {
    let group = &h.ambient;
    if s.is_empty() {
        return Err(Error::Invalid("visibility of an empty set".into()));
    }
    for x in s {
        group.check(x)?;
    }
    let base = |mode, verdict| VisibilityCertificate {
        group: group.name().to_string(),
        set: s.iter().map(|x| group.format(x)).collect(),
        subgroup: h.name.clone(),
        mode,
        verdict,
    };
    if h.is_normal() && s.iter().any(|x| h.contains(x)) {
        return Ok(base(CertificateMode::Structural, Visibility::Pass));
    }
    let mode = CertificateMode::RadiusChecked { radius };
    for (gamma, depth) in group.enumeration() {
        if depth > radius {
            break;
        }
        if !s.iter().any(|x| h.contains(&group.conjugate(x, &gamma))) {
            let witness = group.format(&gamma);
            return Ok(base(mode, Visibility::Refuted { witness }));
        }
    }
    Ok(base(mode, Visibility::Pass))
}

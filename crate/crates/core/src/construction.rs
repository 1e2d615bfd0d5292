//! The iterative `(A_i, F_i)` construction and the truncated measure `ν_k`.
//!
//! ```text
//! A_1 = {e}
//! B_i = R_i^(A_i^i) ∩ H_i
//! F_i = symmetric (B_i, 1/i)-invariant subset of H_i
//! A_{i+1} = A_i ∪ F_i ∪ {c_i, c_i⁻¹}
//! ν_k = Σ_{i≤k} α_i/3 (δ_{c_i} + δ_{c_i⁻¹} + λ_{F_i})
//! ```

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::amenable::{certify_visibility, folner_set, is_invariant, AmenableSubgroup, CertificateMode, VisibilityCertificate, FOLNER_CAP};
use crate::error::{Error, Result};
use crate::group::{Element, FiniteSet, Group};
use crate::measure::{Exact, SparseMeasure, Weight};

/// RNG stream offsets; every consumer of the master seed draws from its own
/// range of ChaCha streams.
pub(crate) const SCHEDULE_STREAMS: u64 = 0;
pub(crate) const INCREMENT_STREAMS: u64 = 1 << 62;
pub(crate) const TRIAL_STREAMS: u64 = 2 << 62;
pub(crate) const PATH_STREAM: u64 = 3 << 62;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaRule {
    /// `α_i = 1/(i(i+1))`, tail `P(K ≥ n) = 1/n`.
    #[default]
    Harmonic,
    /// `α_i = 2^{-i}`. Light-tailed: `K_i − i → −∞`, so it violates the
    /// limsup requirement. Kept as a negative control.
    Geometric,
}

impl AlphaRule {
    pub fn alpha(self, i: u64) -> BigRational {
        assert!(i >= 1, "alpha index starts at 1");
        match self {
            AlphaRule::Harmonic => BigRational::new(BigInt::one(), BigInt::from(i) * BigInt::from(i + 1)),
            AlphaRule::Geometric => BigRational::new(BigInt::one(), BigInt::one() << i),
        }
    }

    /// `Σ_{i≤k} α_i` in closed form.
    pub fn partial_sum(self, k: u64) -> BigRational {
        BigRational::one() - self.tail(k + 1)
    }

    /// `P(K ≥ n)`.
    pub fn tail(self, n: u64) -> BigRational {
        if n <= 1 {
            return BigRational::one();
        }
        match self {
            AlphaRule::Harmonic => BigRational::new(BigInt::one(), BigInt::from(n)),
            AlphaRule::Geometric => BigRational::new(BigInt::one(), BigInt::one() << (n - 1)),
        }
    }

    /// One draw of `K`, untruncated.
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> u64 {
        match self {
            AlphaRule::Harmonic => {
                // U uniform on (0, 1], K = floor(1/U)
                let u = 1.0 - rng.gen::<f64>();
                let k = (1.0 / u).floor();
                if k >= u64::MAX as f64 {
                    u64::MAX
                } else {
                    k as u64
                }
            }
            AlphaRule::Geometric => {
                let mut k = 1;
                while rng.gen::<bool>() {
                    k += 1;
                }
                k
            }
        }
    }
}

impl std::str::FromStr for AlphaRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic" => Ok(AlphaRule::Harmonic),
            "geometric" => Ok(AlphaRule::Geometric),
            other => Err(Error::Parse(format!("unknown alpha rule {other:?}"))),
        }
    }
}

/// Fraction of `trials` i.i.d. sequences `K_1..K_len` with some `K_l > l + c`.
pub fn limsup_check(rule: AlphaRule, trials: u64, len: u64, c: u64, seed: u64) -> f64 {
    let hits = (0..trials)
        .filter(|&t| {
            let mut rng = stream_rng(seed, TRIAL_STREAMS + t);
            (1..=len).any(|l| rule.sample(&mut rng) > l + c)
        })
        .count();
    hits as f64 / trials as f64
}

/// A catalogue entry as written in configuration files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntrySpec {
    pub set: Vec<String>,
    pub subgroup: String,
    #[serde(default = "one_u32")]
    pub weight: u32,
}

fn one_u32() -> u32 {
    1
}

#[derive(Clone, Debug)]
pub struct CatalogueEntry {
    pub set: FiniteSet,
    pub subgroup: AmenableSubgroup,
    pub weight: u32,
    pub certificate: VisibilityCertificate,
}

/// Registered amenably-visible sets with a seeded full-support schedule.
#[derive(Clone, Debug)]
pub struct VisibilityCatalogue {
    entries: Vec<CatalogueEntry>,
    specs: Vec<EntrySpec>,
    seed: u64,
    total_weight: u64,
}

/// Conjugation radius used for entries without a structural certificate.
pub const CERTIFY_RADIUS: u64 = 4;

impl VisibilityCatalogue {
    /// Parses and certifies every entry; an entry whose certificate fails is
    /// rejected.
    pub fn new(group: &Group, specs: &[EntrySpec], seed: u64) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Invalid("visibility catalogue is empty".into()));
        }
        let mut entries = Vec::with_capacity(specs.len());
        for spec in specs {
            if spec.weight == 0 {
                return Err(Error::Invalid("catalogue weights must be positive".into()));
            }
            let set = group.parse_set(&spec.set)?;
            let subgroup = AmenableSubgroup::new(group, &spec.subgroup)?;
            let certificate = certify_visibility(&set, &subgroup, CERTIFY_RADIUS)?;
            if !certificate.passed() {
                return Err(Error::Invalid(format!(
                    "{{{}}} is not visible through {}",
                    spec.set.join(", "),
                    spec.subgroup
                )));
            }
            entries.push(CatalogueEntry {
                set,
                subgroup,
                weight: spec.weight,
                certificate,
            });
        }
        Ok(VisibilityCatalogue {
            total_weight: entries.iter().map(|e| e.weight as u64).sum(),
            entries,
            specs: specs.to_vec(),
            seed,
        })
    }

    pub fn entries(&self) -> &[CatalogueEntry] {
        &self.entries
    }

    pub fn specs(&self) -> &[EntrySpec] {
        &self.specs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Whether every certificate is structural rather than radius-checked.
    pub fn fully_certified(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.certificate.mode == CertificateMode::Structural)
    }

    /// Catalogue index of `R_i`; a pure function of `(seed, i)`.
    pub fn schedule_index(&self, i: u64) -> usize {
        if self.entries.len() == 1 {
            return 0;
        }
        let mut rng = stream_rng(self.seed, SCHEDULE_STREAMS + i);
        let mut draw = rng.gen_range(0..self.total_weight);
        for (j, e) in self.entries.iter().enumerate() {
            if draw < e.weight as u64 {
                return j;
            }
            draw -= e.weight as u64;
        }
        unreachable!()
    }

    /// `(R_i, H_i)`.
    pub fn schedule_next(&self, i: u64) -> &CatalogueEntry {
        &self.entries[self.schedule_index(i)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstructionBudgets {
    /// Element cap for `A_i^i` and its conjugates of `R_i`.
    pub power_cap: usize,
    pub folner_cap: usize,
}

impl Default for ConstructionBudgets {
    fn default() -> Self {
        ConstructionBudgets {
            power_cap: 1_000_000,
            folner_cap: FOLNER_CAP,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Stage {
    pub index: usize,
    pub c: Element,
    pub entry: usize,
    pub b: FiniteSet,
    pub f: FiniteSet,
    /// Largest exponent of `A_i` computed without truncation (`index` when
    /// exact or bypassed).
    pub exact_power: usize,
    pub truncated: bool,
}

#[derive(Clone, Debug)]
pub struct ConstructionState {
    group: Group,
    catalogue: VisibilityCatalogue,
    alpha: AlphaRule,
    budgets: ConstructionBudgets,
    a: FiniteSet,
    stages: Vec<Stage>,
    enumeration: Vec<Element>,
}

impl ConstructionState {
    pub fn new(group: &Group, catalogue: VisibilityCatalogue, alpha: AlphaRule, budgets: ConstructionBudgets) -> Self {
        ConstructionState {
            group: group.clone(),
            catalogue,
            alpha,
            budgets,
            a: FiniteSet::singleton(group.identity()),
            stages: Vec::new(),
            enumeration: Vec::new(),
        }
    }

    pub fn group(&self) -> &Group {
        &self.group
    }

    pub fn catalogue(&self) -> &VisibilityCatalogue {
        &self.catalogue
    }

    pub fn alpha(&self) -> AlphaRule {
        self.alpha
    }

    pub fn budgets(&self) -> ConstructionBudgets {
        self.budgets
    }

    /// Number of completed stages `k`.
    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn stage(&self, i: usize) -> Option<&Stage> {
        i.checked_sub(1).and_then(|j| self.stages.get(j))
    }

    /// The current `A_{k+1}`.
    pub fn a(&self) -> &FiniteSet {
        &self.a
    }

    /// Largest `n` such that no stage up to `n` truncated its product power.
    pub fn honest_stages(&self) -> usize {
        self.stages.iter().take_while(|s| !s.truncated).count()
    }

    /// The `i`-th enumerated element; wraps around for finite groups.
    pub fn c(&mut self, i: usize) -> Element {
        if i > self.enumeration.len() {
            let want = i.max(2 * self.enumeration.len()).max(64);
            self.enumeration = self.group.enumeration().map(|(x, _)| x).take(want).collect();
        }
        let n = self.enumeration.len();
        self.enumeration[(i - 1) % n].clone()
    }

    /// Runs stage `i = k + 1`.
    pub fn step(&mut self) -> Result<&Stage> {
        let i = self.stages.len() + 1;
        self.compute_stage(i).map_err(|e| e.at_stage(i))?;
        Ok(self.stages.last().expect("stage just pushed"))
    }

    fn compute_stage(&mut self, i: usize) -> Result<()> {
        let group = self.group.clone();
        let entry_index = self.catalogue.schedule_index(i as u64);
        let entry = &self.catalogue.entries[entry_index];
        let h = &entry.subgroup;
        // conjugation preserves a normal H, so only R ∩ H can land in it
        let r = if h.is_normal() {
            entry.set.filter(|x| h.contains(x))
        } else {
            entry.set.clone()
        };
        let (b, exact_power, truncated) = if r.iter().all(|x| group.is_central(x)) {
            (r.filter(|x| h.contains(x)), i, false)
        } else {
            let power = group.product_power(&self.a, i, self.budgets.power_cap)?;
            let conj = group.conjugate_set(&r, &power.set, self.budgets.power_cap)?;
            (conj.filter(|x| h.contains(x)), power.exact_power, conj.truncated())
        };
        let eps = Ratio::new(1, i as u64);
        let f = folner_set(h, &b.symmetrized(&group), eps, self.budgets.folner_cap)?;
        let c = self.c(i);
        let c_inv = group.inv_raw(&c);
        self.a = self.a.union(&f).union(&FiniteSet::new([c.clone(), c_inv]));
        self.stages.push(Stage {
            index: i,
            c,
            entry: entry_index,
            b,
            f,
            exact_power,
            truncated,
        });
        Ok(())
    }

    /// Runs stages until `k` are complete.
    pub fn run_to(&mut self, k: usize) -> Result<()> {
        while self.stages.len() < k {
            self.step()?;
        }
        Ok(())
    }

    /// Re-checks every per-stage invariant with exact integer counts.
    pub fn verify(&self) -> Result<()> {
        let g = &self.group;
        let mut a = FiniteSet::singleton(g.identity());
        for s in &self.stages {
            let fail = |what: &str| Err(Error::Invalid(what.to_string()).at_stage(s.index));
            let h = &self.catalogue.entries[s.entry].subgroup;
            let mut f = s.f.clone();
            if !f.certify_symmetric(g) {
                return fail("F is not symmetric");
            }
            if !f.iter().all(|x| h.contains(x)) {
                return fail("F leaves H");
            }
            if !s.b.iter().all(|x| h.contains(x)) {
                return fail("B leaves H");
            }
            if !is_invariant(g, &s.b, &f, Ratio::new(1, s.index as u64)) {
                return fail("F is not (B, 1/i)-invariant");
            }
            if !a.contains(&g.identity()) {
                return fail("A lost the identity");
            }
            let next = a.union(&f).union(&FiniteSet::new([s.c.clone(), g.inv_raw(&s.c)]));
            if !a.iter().all(|x| next.contains(x)) {
                return fail("A chain is not increasing");
            }
            a = next;
        }
        if a != self.a {
            return Err(Error::Invalid("A does not match the recorded stages".into()));
        }
        Ok(())
    }

    /// `ν_k`, with the tail `1 − Σ_{i≤k} α_i` as lost mass.
    pub fn build_measure<W: Weight>(&self) -> Result<SparseMeasure<W>> {
        let k = self.stages.len();
        if k == 0 {
            return Err(Error::Invalid("build_measure needs at least one stage".into()));
        }
        let g = &self.group;
        let three = BigRational::from_integer(3.into());
        let mut atoms: Vec<(Element, Exact)> = Vec::new();
        for s in &self.stages {
            let w = self.alpha.alpha(s.index as u64) / &three;
            atoms.push((s.c.clone(), Exact(w.clone())));
            atoms.push((g.inv_raw(&s.c), Exact(w.clone())));
            let each = w / BigRational::from_integer(s.f.len().into());
            atoms.extend(s.f.iter().map(|x| (x.clone(), Exact(each.clone()))));
        }
        let tail = self.alpha.tail(k as u64 + 1);
        let exact = SparseMeasure::from_atoms(atoms).with_lost(Exact(tail));
        Ok(exact.map_weights(|w| W::from_rational(&w.0)))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let g = &self.group;
        let fmt = |s: &FiniteSet| s.iter().map(|x| g.format(x)).collect();
        Checkpoint {
            group: g.name().to_string(),
            alpha: self.alpha,
            seed: self.catalogue.seed,
            catalogue: self.catalogue.specs.clone(),
            budgets: self.budgets,
            stages: self
                .stages
                .iter()
                .map(|s| StageRecord {
                    index: s.index,
                    c: g.format(&s.c),
                    entry: s.entry,
                    b: fmt(&s.b),
                    f: fmt(&s.f),
                    exact_power: s.exact_power,
                    truncated: s.truncated,
                })
                .collect(),
        }
    }

    /// Rebuilds a state from a checkpoint and re-verifies it.
    pub fn resume(cp: &Checkpoint) -> Result<Self> {
        let group = Group::parse(&cp.group)?;
        let catalogue = VisibilityCatalogue::new(&group, &cp.catalogue, cp.seed)?;
        let mut state = ConstructionState::new(&group, catalogue, cp.alpha, cp.budgets);
        for (j, r) in cp.stages.iter().enumerate() {
            if r.index != j + 1 || r.entry >= state.catalogue.entries.len() {
                return Err(Error::Invalid(format!("checkpoint stage {} is out of sequence", j + 1)));
            }
            let c = group.parse_element(&r.c)?;
            let f = group.parse_set(&r.f)?;
            state.a = state.a.union(&f).union(&FiniteSet::new([c.clone(), group.inv_raw(&c)]));
            state.stages.push(Stage {
                index: r.index,
                c,
                entry: r.entry,
                b: group.parse_set(&r.b)?,
                f,
                exact_power: r.exact_power,
                truncated: r.truncated,
            });
        }
        for s in &state.stages.clone() {
            if state.c(s.index) != s.c || state.catalogue.schedule_index(s.index as u64) != s.entry {
                return Err(Error::Invalid(format!(
                    "checkpoint stage {} does not match the seeded schedule",
                    s.index
                )));
            }
        }
        state.verify()?;
        Ok(state)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub index: usize,
    pub c: String,
    pub entry: usize,
    pub b: Vec<String>,
    pub f: Vec<String>,
    pub exact_power: usize,
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub group: String,
    pub alpha: AlphaRule,
    pub seed: u64,
    pub catalogue: Vec<EntrySpec>,
    pub budgets: ConstructionBudgets,
    pub stages: Vec<StageRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(set: &[&str], sub: &str) -> EntrySpec {
        EntrySpec {
            set: set.iter().map(|s| s.to_string()).collect(),
            subgroup: sub.into(),
            weight: 1,
        }
    }

    fn state(group: &str, entries: &[EntrySpec], seed: u64) -> ConstructionState {
        let g = Group::parse(group).unwrap();
        let cat = VisibilityCatalogue::new(&g, entries, seed).unwrap();
        ConstructionState::new(&g, cat, AlphaRule::Harmonic, ConstructionBudgets::default())
    }

    fn zint(g: &Group, m: i64) -> FiniteSet {
        FiniteSet::new((-m..=m).map(|v| g.parse_element(&format!("({v})")).unwrap()))
    }

    #[test]
    fn alpha_values() {
        let h = AlphaRule::Harmonic;
        assert_eq!(h.alpha(1), BigRational::new(1.into(), 2.into()));
        for k in 1..20u64 {
            let direct: BigRational = (1..=k).map(|i| h.alpha(i)).sum();
            assert_eq!(direct, h.partial_sum(k));
            assert_eq!(direct, BigRational::one() - BigRational::new(1.into(), (k + 1).into()));
            let g: BigRational = (1..=k).map(|i| AlphaRule::Geometric.alpha(i)).sum();
            assert_eq!(g, AlphaRule::Geometric.partial_sum(k));
        }
    }

    #[test]
    fn harmonic_sampler_has_tail_one_over_n() {
        let mut rng = stream_rng(3, 0);
        let n = 200_000;
        let draws: Vec<u64> = (0..n).map(|_| AlphaRule::Harmonic.sample(&mut rng)).collect();
        for m in [1u64, 2, 3, 5, 10] {
            let frac = draws.iter().filter(|&&k| k >= m).count() as f64 / n as f64;
            let p = 1.0 / m as f64;
            assert!((frac - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-12, "m={m} frac={frac}");
        }
    }

    #[test]
    fn limsup_monte_carlo() {
        // P(some K_l > l + 5, l ≤ 200) = 1 − Π_{l≤200} (l+5)/(l+6) = 1 − 6/206
        let exact = 1.0 - 6.0 / 206.0;
        let n = 100_000;
        let frac = limsup_check(AlphaRule::Harmonic, n, 200, 5, 11);
        let sd = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((frac - exact).abs() < 5.0 * sd, "frac={frac}");
        // light tail: P(K ≥ l + 6) = 2^-(l+5)
        let exact = 1.0 - (1..=200).map(|l| 1.0 - 0.5f64.powi(l + 5)).product::<f64>();
        let n = 20_000;
        let light = limsup_check(AlphaRule::Geometric, n, 200, 5, 11);
        let sd = (exact * (1.0 - exact) / n as f64).sqrt();
        assert!((light - exact).abs() < 5.0 * sd, "geometric {light}");
    }

    #[test]
    fn schedule_is_seeded_and_full_support() {
        let g = Group::parse("free-abelian(2)").unwrap();
        let specs = [entry(&["(1,0)"], "whole"), entry(&["(0,1)"], "whole")];
        let cat = VisibilityCatalogue::new(&g, &specs, 5).unwrap();
        let n = 10_000;
        let first: Vec<usize> = (1..=n).map(|i| cat.schedule_index(i)).collect();
        let again: Vec<usize> = (1..=n).map(|i| cat.schedule_index(i)).collect();
        assert_eq!(first, again);
        let frac = first.iter().filter(|&&j| j == 0).count() as f64 / n as f64;
        assert!((0.47..=0.53).contains(&frac), "{frac}");
        let other = VisibilityCatalogue::new(&g, &specs, 6).unwrap();
        assert_ne!(first, (1..=n).map(|i| other.schedule_index(i)).collect::<Vec<_>>());
        let single = VisibilityCatalogue::new(&g, &specs[..1], 5).unwrap();
        assert!((1..100).all(|i| single.schedule_index(i) == 0));
    }

    #[test]
    fn catalogue_rejects_bad_entries() {
        let g = Group::parse("free(2)").unwrap();
        assert!(VisibilityCatalogue::new(&g, &[], 1).is_err());
        // {a} is not visible through the trivial subgroup
        assert!(VisibilityCatalogue::new(&g, &[entry(&["a"], "trivial")], 1).is_err());
        assert!(VisibilityCatalogue::new(&g, &[entry(&["e"], "trivial")], 1).is_ok());
        let z = Group::parse("free-abelian(1)").unwrap();
        let mut e = entry(&["(1)"], "whole");
        e.weight = 0;
        assert!(VisibilityCatalogue::new(&z, &[e], 1).is_err());
    }

    #[test]
    fn z_construction_intervals() {
        let mut st = state("free-abelian(1)", &[entry(&["(1)"], "whole")], 1);
        st.run_to(12).unwrap();
        let g = st.group().clone();
        for s in st.stages() {
            assert_eq!(s.f, zint(&g, s.index as i64), "stage {}", s.index);
            assert!(!s.truncated);
            let c = s.c.clone();
            assert!(st.a().contains(&c) && st.a().contains(&g.inv_raw(&c)));
        }
        assert_eq!(st.stage(1).unwrap().b, g.parse_set(&["(1)"]).unwrap());
        st.verify().unwrap();
    }

    #[test]
    fn central_set_in_f2xz() {
        let mut st = state(
            "product(free(2), free-abelian(1))",
            &[entry(&["<e;(1)>"], "center")],
            9,
        );
        st.run_to(10).unwrap();
        let g = st.group().clone();
        for s in st.stages() {
            assert_eq!(s.b, g.parse_set(&["<e;(1)>"]).unwrap());
            let expect = FiniteSet::new((-(s.index as i64)..=s.index as i64).map(|v| g.parse_element(&format!("<e;({v})>")).unwrap()));
            assert_eq!(s.f, expect);
        }
        st.verify().unwrap();
    }

    #[test]
    fn non_central_path_agrees_with_direct_conjugation() {
        // the lamp toggle is not central, so this goes through A_i^i
        let mut st = state("lamplighter(2)", &[entry(&["{0:1}@0"], "lamps")], 2);
        st.run_to(3).unwrap();
        let g = st.group().clone();
        let r = g.parse_set(&["{0:1}@0"]).unwrap();
        assert_eq!(st.stage(1).unwrap().b, r);
        let a2 = FiniteSet::new(
            st.stage(1).unwrap().f.iter().cloned().chain([g.identity()]),
        );
        let mut direct = Vec::new();
        for x in &a2 {
            for y in &a2 {
                let p = g.mul_raw(x, y);
                direct.push(g.conjugate(&r.as_slice()[0], &p));
            }
        }
        assert_eq!(st.stage(2).unwrap().b, FiniteSet::new(direct));
        st.verify().unwrap();
    }

    #[test]
    fn measure_mass_and_symmetry() {
        let mut st = state(
            "product(free(2), free-abelian(1))",
            &[entry(&["<e;(1)>"], "center")],
            9,
        );
        st.run_to(8).unwrap();
        let nu: SparseMeasure<Exact> = st.build_measure().unwrap();
        assert_eq!(nu.total_mass(), Exact::new(8, 9));
        assert_eq!(*nu.lost_mass(), Exact::new(1, 9));
        assert!(nu.is_symmetric(st.group()));
        for s in st.stages() {
            assert!(nu.mass(&s.c) > Exact::zero());
            assert!(nu.mass(&st.group().inv_raw(&s.c)) > Exact::zero());
        }
        let f: SparseMeasure<f64> = st.build_measure().unwrap();
        assert!(f.is_symmetric(st.group()));
        assert!((f.total_mass() - 8.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn enumeration_wraps_for_finite_groups() {
        let mut st = state("cyclic(3)", &[entry(&["1"], "whole")], 1);
        st.run_to(7).unwrap();
        let cs: Vec<String> = st.stages().iter().map(|s| st.group().format(&s.c)).collect();
        assert_eq!(cs[0], cs[3]);
        assert_eq!(cs[1], cs[4]);
        st.verify().unwrap();
    }

    #[test]
    fn checkpoint_round_trip() {
        let specs = [entry(&["<e;(1)>"], "center"), entry(&["<e;(1)>", "<a;(0)>"], "center")];
        let g = Group::parse("product(free(2), free-abelian(1))").unwrap();
        let cat = VisibilityCatalogue::new(&g, &specs, 4).unwrap();
        let mut full = ConstructionState::new(&g, cat, AlphaRule::Harmonic, ConstructionBudgets::default());
        full.run_to(9).unwrap();
        let mut half = ConstructionState::new(&g, VisibilityCatalogue::new(&g, &specs, 4).unwrap(), AlphaRule::Harmonic, ConstructionBudgets::default());
        half.run_to(5).unwrap();
        let json = serde_json::to_string(&half.checkpoint()).unwrap();
        let mut resumed = ConstructionState::resume(&serde_json::from_str(&json).unwrap()).unwrap();
        resumed.run_to(9).unwrap();
        assert_eq!(resumed.checkpoint(), full.checkpoint());
        let mut bad = half.checkpoint();
        bad.stages[2].f.pop();
        assert!(ConstructionState::resume(&bad).is_err());
    }

    #[test]
    fn budget_errors_carry_the_stage() {
        let g = Group::parse("lamplighter(2)").unwrap();
        let cat = VisibilityCatalogue::new(&g, &[entry(&["{0:1}@0"], "lamps")], 1).unwrap();
        let mut st = ConstructionState::new(&g, cat, AlphaRule::Harmonic, ConstructionBudgets { power_cap: 1_000_000, folner_cap: 1 });
        let err = st.run_to(3).unwrap_err();
        assert!(err.is_budget());
        assert!(matches!(err, Error::Stage { .. }));
    }
}

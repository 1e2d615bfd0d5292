//! Sampling the `ν`-random walk through its stage/color coupling.
//!
//! An increment is drawn as `K ~ α`, a color uniform on {blue, red, green},
//! and then `X` uniform on `F_K` (blue), `c_K` (red) or `c_K⁻¹` (green).
//! Against the built state only stages `≤ k` exist, so larger draws of `K`
//! are rejected and redrawn; the rejections are counted.
//!
//! Randomness: trial or chunk `t` uses ChaCha8 seeded with the master seed on
//! a stream reserved for that purpose, so results do not depend on how work
//! is spread over threads.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::construction::{stream_rng, ConstructionState, INCREMENT_STREAMS, TRIAL_STREAMS};
use crate::error::{Error, Result};
use crate::group::{Element, FiniteSet, Group};
use crate::measure::SparseMeasure;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Samples per RNG stream in the bulk samplers.
const CHUNK: u64 = 1 << 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Blue,
    Red,
    Green,
}

impl Color {
    pub const ALL: [Color; 3] = [Color::Blue, Color::Red, Color::Green];

    fn draw<R: Rng + ?Sized>(rng: &mut R) -> Color {
        Color::ALL[rng.gen_range(0..3)]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Color::Blue => "blue",
            Color::Red => "red",
            Color::Green => "green",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingSample {
    pub k: u64,
    pub color: Color,
    pub x: Element,
    /// Draws of `K` beyond the built stages discarded before this one.
    pub rejections: u64,
}

/// Sampler for increments of `ν_k`, conditioned on `K ≤ k`.
pub struct Walker<'s> {
    state: &'s ConstructionState,
    c: Vec<Element>,
    c_inv: Vec<Element>,
}

impl<'s> Walker<'s> {
    pub fn new(state: &'s ConstructionState) -> Result<Self> {
        if state.stage_count() == 0 {
            return Err(Error::Invalid("the walk needs at least one built stage".into()));
        }
        let g = state.group();
        Ok(Walker {
            c: state.stages().iter().map(|s| s.c.clone()).collect(),
            c_inv: state.stages().iter().map(|s| g.inv_raw(&s.c)).collect(),
            state,
        })
    }

    pub fn group(&self) -> &Group {
        self.state.group()
    }

    pub fn stages(&self) -> u64 {
        self.c.len() as u64
    }

    pub fn sample_increment<R: Rng + ?Sized>(&self, rng: &mut R) -> CouplingSample {
        let alpha = self.state.alpha();
        let mut rejections = 0;
        let k = loop {
            let k = alpha.sample(rng);
            if k <= self.stages() {
                break k;
            }
            rejections += 1;
        };
        let color = Color::draw(rng);
        let i = (k - 1) as usize;
        let x = match color {
            Color::Blue => {
                let f = &self.state.stages()[i].f;
                f.as_slice()[rng.gen_range(0..f.len())].clone()
            }
            Color::Red => self.c[i].clone(),
            Color::Green => self.c_inv[i].clone(),
        };
        CouplingSample { k, color, x, rejections }
    }

    /// `n` increments with their running products `X_1 ⋯ X_j`.
    pub fn sample_path<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<PathStep> {
        let g = self.group();
        let mut product = g.identity();
        (1..=n)
            .map(|step| {
                let s = self.sample_increment(rng);
                product = g.mul_raw(&product, &s.x);
                PathStep {
                    step,
                    sample: s,
                    product: product.clone(),
                }
            })
            .collect()
    }

    /// Empirical statistics of `samples` increments.
    pub fn increment_stats(&self, samples: u64, seed: u64) -> IncrementStats {
        let k = self.stages() as usize;
        let chunks = samples.div_ceil(CHUNK);
        let parts: Vec<IncrementStats> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = stream_rng(seed, INCREMENT_STREAMS + c);
                let n = CHUNK.min(samples - c * CHUNK);
                let mut st = IncrementStats::empty(k);
                for _ in 0..n {
                    let s = self.sample_increment(&mut rng);
                    st.record(&s);
                }
                st
            })
            .collect();
        let mut total = IncrementStats::empty(k);
        for p in parts {
            total.merge(p);
        }
        total
    }

    /// Empirical law of `X_1 ⋯ X_n` over `samples` independent paths.
    pub fn product_law(&self, n: usize, samples: u64, seed: u64) -> SparseMeasure<f64> {
        let chunks = samples.div_ceil(CHUNK);
        let parts: Vec<FxHashMap<Element, u64>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = stream_rng(seed, INCREMENT_STREAMS + c);
                let mut counts = FxHashMap::default();
                for _ in 0..CHUNK.min(samples - c * CHUNK) {
                    let path = self.sample_path(n, &mut rng);
                    *counts.entry(path[n - 1].product.clone()).or_insert(0) += 1;
                }
                counts
            })
            .collect();
        empirical(parts, samples)
    }
}

fn empirical(parts: Vec<FxHashMap<Element, u64>>, samples: u64) -> SparseMeasure<f64> {
    let mut counts: FxHashMap<Element, u64> = FxHashMap::default();
    for p in parts {
        for (x, n) in p {
            *counts.entry(x).or_insert(0) += n;
        }
    }
    SparseMeasure::from_atoms(counts.into_iter().map(|(x, n)| (x, n as f64 / samples as f64)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathStep {
    pub step: usize,
    pub sample: CouplingSample,
    pub product: Element,
}

#[derive(Clone, Debug, Default)]
pub struct IncrementStats {
    pub samples: u64,
    pub rejections: u64,
    /// `table[K-1][color]`.
    pub table: Vec<[u64; 3]>,
    counts: FxHashMap<Element, u64>,
}

impl IncrementStats {
    fn empty(k: usize) -> Self {
        IncrementStats {
            table: vec![[0; 3]; k],
            ..Default::default()
        }
    }

    fn record(&mut self, s: &CouplingSample) {
        self.samples += 1;
        self.rejections += s.rejections;
        self.table[(s.k - 1) as usize][s.color as usize] += 1;
        *self.counts.entry(s.x.clone()).or_insert(0) += 1;
    }

    fn merge(&mut self, other: IncrementStats) {
        self.samples += other.samples;
        self.rejections += other.rejections;
        for (row, o) in self.table.iter_mut().zip(&other.table) {
            for c in 0..3 {
                row[c] += o[c];
            }
        }
        for (x, n) in other.counts {
            *self.counts.entry(x).or_insert(0) += n;
        }
    }

    pub fn color_counts(&self) -> [u64; 3] {
        let mut out = [0; 3];
        for row in &self.table {
            for c in 0..3 {
                out[c] += row[c];
            }
        }
        out
    }

    /// The empirical increment law as a probability measure.
    pub fn empirical(&self) -> SparseMeasure<f64> {
        empirical(vec![self.counts.clone()], self.samples)
    }

    /// Chi-square test of independence of `K` and the color.
    pub fn independence(&self) -> ChiSquareTest {
        chi_square_independence(&self.table)
    }
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: u64,
    pub p_value: f64,
}

/// Pearson's test on a contingency table. Rows whose expected counts fall
/// below 5 are pooled into their successor (the last into its predecessor).
pub fn chi_square_independence(table: &[[u64; 3]]) -> ChiSquareTest {
    let mut rows: Vec<[u64; 3]> = table.iter().copied().filter(|r| r.iter().sum::<u64>() > 0).collect();
    let total: u64 = rows.iter().flatten().sum();
    let mut cols = [0u64; 3];
    for r in &rows {
        for c in 0..3 {
            cols[c] += r[c];
        }
    }
    let min_col = cols.iter().copied().filter(|&c| c > 0).min().unwrap_or(0);
    let need = if min_col == 0 { u64::MAX } else { (5 * total).div_ceil(min_col) };
    let mut pooled: Vec<[u64; 3]> = Vec::new();
    let mut acc = [0u64; 3];
    for r in rows.drain(..) {
        for c in 0..3 {
            acc[c] += r[c];
        }
        if acc.iter().sum::<u64>() >= need {
            pooled.push(acc);
            acc = [0; 3];
        }
    }
    if acc.iter().sum::<u64>() > 0 {
        match pooled.last_mut() {
            Some(last) => (0..3).for_each(|c| last[c] += acc[c]),
            None => pooled.push(acc),
        }
    }
    let live_cols = cols.iter().filter(|&&c| c > 0).count() as u64;
    let dof = (pooled.len() as u64).saturating_sub(1) * live_cols.saturating_sub(1);
    if dof == 0 {
        return ChiSquareTest {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
        };
    }
    let mut stat = 0.0;
    for r in &pooled {
        let row: u64 = r.iter().sum();
        for c in 0..3 {
            if cols[c] == 0 {
                continue;
            }
            let expect = row as f64 * cols[c] as f64 / total as f64;
            stat += (r[c] as f64 - expect).powi(2) / expect;
        }
    }
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    ChiSquareTest {
        statistic: stat,
        dof,
        p_value: 1.0 - dist.cdf(stat),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub target: Vec<String>,
    pub n: u64,
    pub eps: f64,
    pub trials: u64,
    pub horizon: u64,
    /// Smallest `M` whose lower Wilson bound reaches `1 − eps`.
    pub m: Option<u64>,
    pub hit_probability: f64,
    pub ci: (f64, f64),
    /// `1 − P(hit by M)`, the Monte Carlo stand-in for `|η|`.
    pub remainder: f64,
    pub ci_method: String,
    /// `(M, P(hit by M))` at every `M` where the estimate changes.
    pub curve: Vec<(u64, f64)>,
    /// True when no `M ≤ horizon` qualified.
    pub horizon_exhausted: bool,
}

/// Estimates how long until the event `l > N`, `K_l > l + 1`, `K_l > K_j`
/// for all `j < l`, `R_{K_l} = S` and blue color first happens.
pub fn estimate_m(
    state: &ConstructionState,
    target: &FiniteSet,
    n: u64,
    eps: f64,
    trials: u64,
    horizon: u64,
    seed: u64,
) -> Result<DecompositionReport> {
    let cat = state.catalogue();
    if !cat.entries().iter().any(|e| e.set == *target) {
        return Err(Error::Invalid("target set is not in the catalogue".into()));
    }
    if trials == 0 {
        return Err(Error::Invalid("estimate_m needs at least one trial".into()));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Invalid("eps must be positive".into()));
    }
    let alpha = state.alpha();
    let hits: Vec<Option<u64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, TRIAL_STREAMS + t);
            let mut record = 0u64;
            for l in 1..=horizon {
                let k = alpha.sample(&mut rng);
                let color = Color::draw(&mut rng);
                if l > n
                    && k > l + 1
                    && k > record
                    && color == Color::Blue
                    && cat.entries()[cat.schedule_index(k)].set == *target
                {
                    return Some(l);
                }
                record = record.max(k);
            }
            None
        })
        .collect();
    let mut times: Vec<u64> = hits.into_iter().flatten().collect();
    times.sort_unstable();
    let mut curve = Vec::new();
    let mut m = if eps >= 1.0 { Some(0) } else { None };
    for (j, &t) in times.iter().enumerate() {
        if times.get(j + 1) == Some(&t) {
            continue;
        }
        let count = j as u64 + 1;
        curve.push((t, count as f64 / trials as f64));
        if m.is_none() && wilson(count, trials, Z95).0 >= 1.0 - eps {
            m = Some(t);
        }
    }
    let hit_at = |m: u64| times.partition_point(|&t| t <= m) as u64;
    let count = hit_at(m.unwrap_or(horizon));
    let p = count as f64 / trials as f64;
    Ok(DecompositionReport {
        target: target.iter().map(|x| state.group().format(x)).collect(),
        n,
        eps,
        trials,
        horizon,
        m,
        hit_probability: p,
        ci: wilson(count, trials, Z95),
        remainder: 1.0 - p,
        ci_method: "wilson-95".into(),
        curve,
        horizon_exhausted: m.is_none(),
    })
}

/// CSV rows `step,k,color,element,product`.
pub fn write_trajectory_csv(out: &mut impl Write, group: &Group, path: &[PathStep]) -> Result<()> {
    writeln!(out, "step,k,color,element,product")?;
    for s in path {
        writeln!(
            out,
            "{},{},{},\"{}\",\"{}\"",
            s.step,
            s.sample.k,
            s.sample.color.as_str(),
            group.format(&s.sample.x),
            group.format(&s.product)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construction::{AlphaRule, ConstructionBudgets, EntrySpec, VisibilityCatalogue};
    use crate::measure::{convolve, tv_distance};

    fn f2xz(k: usize) -> ConstructionState {
        let g = Group::parse("product(free(2), free-abelian(1))").unwrap();
        let spec = EntrySpec {
            set: vec!["<e;(1)>".into()],
            subgroup: "center".into(),
            weight: 1,
        };
        let cat = VisibilityCatalogue::new(&g, &[spec], 17).unwrap();
        let mut st = ConstructionState::new(&g, cat, AlphaRule::Harmonic, ConstructionBudgets::default());
        st.run_to(k).unwrap();
        st
    }

    #[test]
    fn wilson_reference_values() {
        // 8/10 at z = 1.96, computed by hand
        let (lo, hi) = wilson(8, 10, Z95);
        assert!((lo - 0.4902).abs() < 1e-4 && (hi - 0.9433).abs() < 1e-4, "{lo} {hi}");
        assert_eq!(wilson(0, 0, Z95), (0.0, 1.0));
        let (lo, hi) = wilson(10, 10, Z95);
        assert!(lo > 0.69 && hi == 1.0);
    }

    #[test]
    fn chi_square_detects_dependence() {
        let indep = vec![[100, 100, 100], [50, 50, 50], [10, 10, 10]];
        let t = chi_square_independence(&indep);
        assert_eq!(t.dof, 4);
        assert!(t.statistic.abs() < 1e-12 && (t.p_value - 1.0).abs() < 1e-12);
        let dep = vec![[200, 50, 50], [50, 200, 50]];
        assert!(chi_square_independence(&dep).p_value < 1e-6);
        // expected 50 everywhere, statistic 4·(100/50) = 8 on 2 dof, p = e^{-4}
        let t = chi_square_independence(&[[60, 50, 40], [40, 50, 60]]);
        assert!((t.statistic - 8.0).abs() < 1e-12);
        assert!((t.p_value - (-4.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn blue_on_trivial_folner_set_is_identity() {
        let g = Group::parse("cyclic(2)").unwrap();
        let spec = EntrySpec {
            set: vec!["0".into()],
            subgroup: "trivial".into(),
            weight: 1,
        };
        let cat = VisibilityCatalogue::new(&g, &[spec], 1).unwrap();
        let mut st = ConstructionState::new(&g, cat, AlphaRule::Harmonic, ConstructionBudgets::default());
        st.run_to(1).unwrap();
        let w = Walker::new(&st).unwrap();
        let mut rng = stream_rng(1, 0);
        let mut blues = 0;
        for _ in 0..200 {
            let s = w.sample_increment(&mut rng);
            assert_eq!(s.k, 1);
            if s.color == Color::Blue {
                assert!(g.is_identity(&s.x));
                blues += 1;
            }
        }
        assert!(blues > 0);
    }

    #[test]
    fn increments_follow_nu() {
        let st = f2xz(16);
        let w = Walker::new(&st).unwrap();
        let stats = w.increment_stats(200_000, 5);
        let nu: SparseMeasure<f64> = st.build_measure().unwrap();
        let tv = tv_distance(&stats.empirical(), &nu).value;
        // conditioning on K ≤ k rescales by (k+1)/k, worth 1/(k+1) in TV
        assert!(tv < 0.05 + 1.0 / 17.0, "tv {tv}");
        let colors = stats.color_counts();
        for c in colors {
            let (lo, hi) = wilson(c, stats.samples, Z95);
            assert!(lo < 1.0 / 3.0 + 0.01 && hi > 1.0 / 3.0 - 0.01);
        }
        assert!(stats.independence().p_value > 0.01);
        // rejection rate is P(K > k) / P(K ≤ k) = 1/k per accepted draw
        let rate = stats.rejections as f64 / stats.samples as f64;
        assert!((rate - 1.0 / 16.0).abs() < 0.005, "{rate}");
    }

    #[test]
    fn two_step_products_follow_convolution() {
        let st = f2xz(6);
        let w = Walker::new(&st).unwrap();
        let emp = w.product_law(2, 100_000, 9);
        let nu: SparseMeasure<f64> = st.build_measure().unwrap();
        let mass = nu.total_mass();
        let nu = nu.map_weights(|x| x / mass);
        let two = convolve(st.group(), &nu, &nu, usize::MAX).unwrap();
        let tv = tv_distance(&emp, &two).value;
        assert!(tv < 0.06, "tv {tv}");
    }

    #[test]
    fn paths_are_seeded() {
        let st = f2xz(4);
        let w = Walker::new(&st).unwrap();
        let a = w.sample_path(20, &mut stream_rng(3, 7));
        let b = w.sample_path(20, &mut stream_rng(3, 7));
        assert_eq!(a, b);
        assert_eq!(w.sample_path(1, &mut stream_rng(3, 7))[0].product, a[0].sample.x);
        let g = st.group();
        for pair in a.windows(2) {
            assert_eq!(pair[1].product, g.mul_raw(&pair[0].product, &pair[1].sample.x));
        }
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, g, &a).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 21);
    }

    #[test]
    fn hit_curve_properties() {
        let st = f2xz(4);
        let z = st.group().parse_set(&["<e;(1)>"]).unwrap();
        let vacuous = estimate_m(&st, &z, 1, 1.0, 100, 1000, 3).unwrap();
        assert_eq!(vacuous.m, Some(0));
        let r = estimate_m(&st, &z, 1, 0.5, 2000, 100_000, 3).unwrap();
        assert!(r.m.is_some());
        assert!(r.curve.windows(2).all(|p| p[0].0 < p[1].0 && p[0].1 <= p[1].1));
        let strict = estimate_m(&st, &z, 1, 0.3, 2000, 100_000, 3).unwrap();
        assert!(strict.m.unwrap() >= r.m.unwrap());
        let other = st.group().parse_set(&["<a;(0)>"]).unwrap();
        assert!(estimate_m(&st, &other, 1, 0.5, 10, 10, 3).is_err());
    }
}

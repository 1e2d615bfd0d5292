//! Total-variation curves `d_n = |t·μ·ν^{*n} − μ·ν^{*n}|` and the verdicts
//! built on them.
//!
//! Statements about `liminf d_n` can only be confirmed at a finite horizon,
//! never refuted, so reports on them end in `PASS` or `INCONCLUSIVE`. Control
//! experiments compare against fixed thresholds and may `FAIL`.

use std::io::Write;

use num_bigint::BigInt;
use num_rational::BigRational;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construction::{AlphaRule, ConstructionBudgets, ConstructionState, EntrySpec, VisibilityCatalogue};
use crate::error::{Error, Result};
use crate::group::{Element, FiniteSet, Group};
use crate::measure::{convolve, translate_left, tv_distance, Exact, SparseMeasure, Tv, Weight};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Inconclusive => "INCONCLUSIVE",
            Verdict::Fail => "FAIL",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveOptions {
    pub n_max: usize,
    pub budget: usize,
    /// Stop once some `d_n` is at or below this value.
    pub stop_below: Option<f64>,
}

/// `d_n` for several `t` along a shared `μ·ν^{*n}` track.
#[derive(Clone, Debug)]
pub struct TvCurves<W: Weight> {
    pub ts: Vec<Element>,
    /// `points[n][j]` is `d_n` for `ts[j]`.
    pub points: Vec<Vec<Tv<W>>>,
    /// Support size of `μ·ν^{*n}`.
    pub atoms: Vec<usize>,
    /// The brackets reached 2, so later points would carry no information.
    pub exhausted: bool,
}

impl<W: Weight> TvCurves<W> {
    pub fn last_n(&self) -> usize {
        self.points.len() - 1
    }

    /// The curve for `ts[j]` as `(value, bracket)` pairs in `f64`.
    pub fn curve(&self, j: usize) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .map(|row| (row[j].value.to_f64(), row[j].bracket.to_f64()))
            .collect()
    }

    /// `(n, j, d_n)` minimizing the value over all `n` and `t`; ties go to
    /// the smallest `n`, then the first `t`.
    pub fn best(&self) -> (usize, usize, &Tv<W>) {
        let mut best = (0, 0, &self.points[0][0]);
        for (n, row) in self.points.iter().enumerate() {
            for (j, tv) in row.iter().enumerate() {
                if tv.value.total_cmp(&best.2.value).is_lt() {
                    best = (n, j, tv);
                }
            }
        }
        best
    }

    pub fn write_csv(&self, out: &mut impl Write, group: &Group) -> Result<()> {
        writeln!(out, "t,n,value,bracket")?;
        for (j, t) in self.ts.iter().enumerate() {
            for (n, row) in self.points.iter().enumerate() {
                writeln!(out, "\"{}\",{},{},{}", group.format(t), n, row[j].value.format(), row[j].bracket.format())?;
            }
        }
        Ok(())
    }
}

/// Computes `d_0..d_{n_max}` for every `t`, one convolution per step.
pub fn tv_curves<W: Weight>(
    group: &Group,
    mu: &SparseMeasure<W>,
    ts: &[Element],
    nu: &SparseMeasure<W>,
    opts: CurveOptions,
) -> Result<TvCurves<W>> {
    if ts.is_empty() {
        return Err(Error::Invalid("need at least one translate t".into()));
    }
    if opts.n_max == 0 {
        return Err(Error::Invalid("n_max must be at least 1".into()));
    }
    for t in ts {
        group.check(t)?;
    }
    let two = W::from_rational(&BigRational::from_integer(BigInt::from(2)));
    let distances = |eta: &SparseMeasure<W>| -> Result<Vec<Tv<W>>> {
        ts.par_iter()
            .map(|t| Ok(tv_distance(&translate_left(group, t, eta)?, eta)))
            .collect()
    };
    let reached = |row: &[Tv<W>]| match opts.stop_below {
        Some(s) => row.iter().any(|tv| tv.value.to_f64() <= s),
        None => false,
    };
    let mut eta = mu.clone();
    let mut curves = TvCurves {
        ts: ts.to_vec(),
        points: vec![distances(&eta)?],
        atoms: vec![eta.len()],
        exhausted: false,
    };
    for _ in 1..=opts.n_max {
        let last = curves.points.last().expect("n = 0 row");
        if reached(last) {
            break;
        }
        if last[0].bracket.total_cmp(&two).is_ge() {
            curves.exhausted = true;
            break;
        }
        eta = convolve(group, &eta, nu, opts.budget)?;
        curves.points.push(distances(&eta)?);
        curves.atoms.push(eta.len());
    }
    Ok(curves)
}

/// Single-`t` convenience wrapper.
pub fn tv_curve<W: Weight>(
    group: &Group,
    mu: &SparseMeasure<W>,
    t: &Element,
    nu: &SparseMeasure<W>,
    opts: CurveOptions,
) -> Result<Vec<Tv<W>>> {
    let curves = tv_curves(group, mu, std::slice::from_ref(t), nu, opts)?;
    Ok(curves.points.into_iter().map(|mut row| row.remove(0)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub value: f64,
    pub bracket: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub t: String,
    pub points: Vec<CurvePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinPoint {
    pub n: usize,
    pub t: String,
    pub value: f64,
    pub bracket: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvReport {
    pub fingerprint: String,
    pub seed: Option<u64>,
    pub group: String,
    pub mu: String,
    pub set: Vec<String>,
    pub mode: String,
    pub bound: f64,
    /// The bound as exact text in exact mode.
    pub bound_text: String,
    pub slack: f64,
    pub curves: Vec<CurveRecord>,
    pub min_per_n: Vec<MinPoint>,
    pub best: MinPoint,
    pub verdict: Verdict,
    /// The best value stays under `bound + slack` even after adding its
    /// bracket.
    pub certified: bool,
    pub exhausted: bool,
    pub atoms: Vec<usize>,
}

fn describe<W: Weight>(group: &Group, mu: &SparseMeasure<W>) -> String {
    if mu.len() == 1 && mu.lost_mass().is_zero() && mu.atoms()[0].1 == W::one() {
        return format!("delta({})", group.format(&mu.atoms()[0].0));
    }
    format!("{} atoms, mass {}", mu.len(), mu.total_mass().format())
}

fn point<W: Weight>(group: &Group, curves: &TvCurves<W>, n: usize, j: usize) -> MinPoint {
    let tv = &curves.points[n][j];
    MinPoint {
        n,
        t: group.format(&curves.ts[j]),
        value: tv.value.to_f64(),
        bracket: tv.bracket.to_f64(),
    }
}

/// `2(1 − 1/|S|)·|μ|`.
pub fn reference_bound<W: Weight>(mu: &SparseMeasure<W>, s_len: usize) -> W {
    let factor = BigRational::new(BigInt::from(2 * s_len.saturating_sub(1)), BigInt::from(s_len.max(1)));
    W::from_rational(&factor).mul(&mu.total_mass())
}

fn build_report<W: Weight>(
    group: &Group,
    mu: &SparseMeasure<W>,
    curves: &TvCurves<W>,
    slack: f64,
    verdict: impl FnOnce(&MinPoint, f64) -> Verdict,
) -> TvReport {
    let bound = reference_bound(mu, curves.ts.len());
    let min_per_n = (0..curves.points.len())
        .map(|n| {
            let row = &curves.points[n];
            let j = (0..row.len())
                .min_by(|&a, &b| row[a].value.total_cmp(&row[b].value))
                .expect("non-empty row");
            point(group, curves, n, j)
        })
        .collect();
    let (bn, bj, _) = curves.best();
    let best = point(group, curves, bn, bj);
    let b = bound.to_f64();
    TvReport {
        fingerprint: String::new(),
        seed: None,
        group: group.name().to_string(),
        mu: describe(group, mu),
        set: curves.ts.iter().map(|t| group.format(t)).collect(),
        mode: W::MODE.to_string(),
        bound: b,
        bound_text: bound.format(),
        slack,
        curves: (0..curves.ts.len())
            .map(|j| CurveRecord {
                t: group.format(&curves.ts[j]),
                points: curves
                    .curve(j)
                    .into_iter()
                    .enumerate()
                    .map(|(n, (value, bracket))| CurvePoint { n, value, bracket })
                    .collect(),
            })
            .collect(),
        min_per_n,
        certified: best.value + best.bracket <= b + slack,
        verdict: verdict(&best, b),
        best,
        exhausted: curves.exhausted,
        atoms: curves.atoms.clone(),
    }
}

/// Checks `min_{t∈S} d_n ≤ 2(1 − 1/|S|)|μ| + slack` for some `n ≤ n_max`.
///
/// With `stop_on_pass` the curve stops at the first passing `n`.
pub fn nondisjointness_report<W: Weight>(
    group: &Group,
    mu: &SparseMeasure<W>,
    s: &FiniteSet,
    nu: &SparseMeasure<W>,
    opts: CurveOptions,
    slack: f64,
    stop_on_pass: bool,
) -> Result<TvReport> {
    if s.is_empty() {
        return Err(Error::Invalid("S must be non-empty".into()));
    }
    let bound = reference_bound(mu, s.len()).to_f64();
    let opts = CurveOptions {
        stop_below: if stop_on_pass { Some(bound + slack) } else { opts.stop_below },
        ..opts
    };
    let curves = tv_curves(group, mu, s.as_slice(), nu, opts)?;
    Ok(build_report(group, mu, &curves, slack, |best, b| {
        if best.value <= b + slack {
            Verdict::Pass
        } else {
            Verdict::Inconclusive
        }
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Control {
    /// Simple random walk on `F_2`, `t = a`, `μ = δ_e`: `d_n` must stay at or
    /// above `floor` at `n_max`.
    FreeGroupSrw,
    /// The construction on `Z` with `S = {1}`: `d_n` must drop below `floor`.
    AmenableSanity,
}

impl std::str::FromStr for Control {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free-group-srw" => Ok(Control::FreeGroupSrw),
            "amenable-sanity" => Ok(Control::AmenableSanity),
            other => Err(Error::Parse(format!("unknown control {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlParams {
    pub n_max: usize,
    pub floor: f64,
    /// Stages of the construction (amenable-sanity only).
    pub stages: usize,
    pub budget: usize,
}

impl Control {
    pub fn default_params(self) -> ControlParams {
        match self {
            Control::FreeGroupSrw => ControlParams {
                n_max: 10,
                floor: 1.0,
                stages: 0,
                budget: usize::MAX,
            },
            Control::AmenableSanity => ControlParams {
                n_max: 50,
                floor: 0.2,
                stages: 32,
                budget: usize::MAX,
            },
        }
    }
}

/// The simple random walk measure on `group`'s declared generators.
pub fn simple_random_walk<W: Weight>(group: &Group) -> Result<SparseMeasure<W>> {
    SparseMeasure::uniform(&FiniteSet::new(group.generators().iter().cloned()))
}

/// Runs a control experiment in exact arithmetic.
pub fn control_experiment(control: Control, params: ControlParams, seed: u64) -> Result<TvReport> {
    match control {
        Control::FreeGroupSrw => {
            let g = Group::parse("free(2)")?;
            let nu = simple_random_walk::<Exact>(&g)?;
            let mu = SparseMeasure::delta(g.identity());
            let t = g.parse_element("a")?;
            let opts = CurveOptions {
                n_max: params.n_max,
                budget: params.budget,
                stop_below: None,
            };
            let curves = tv_curves(&g, &mu, &[t], &nu, opts)?;
            let last = curves.points[curves.last_n()][0].value.to_f64();
            let complete = curves.last_n() == params.n_max;
            Ok(build_report(&g, &mu, &curves, 0.0, |_, _| {
                if complete && last >= params.floor {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                }
            }))
        }
        Control::AmenableSanity => {
            let g = Group::parse("free-abelian(1)")?;
            let spec = EntrySpec {
                set: vec!["(1)".into()],
                subgroup: "whole".into(),
                weight: 1,
            };
            let cat = VisibilityCatalogue::new(&g, &[spec], seed)?;
            let mut st = ConstructionState::new(&g, cat, AlphaRule::Harmonic, ConstructionBudgets::default());
            st.run_to(params.stages)?;
            let nu: SparseMeasure<Exact> = st.build_measure()?;
            let mu = SparseMeasure::delta(g.identity());
            let t = g.parse_element("(1)")?;
            let opts = CurveOptions {
                n_max: params.n_max,
                budget: params.budget,
                stop_below: Some(params.floor),
            };
            let curves = tv_curves(&g, &mu, &[t], &nu, opts)?;
            Ok(build_report(&g, &mu, &curves, 0.0, |best, _| {
                if best.value < params.floor {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                }
            }))
        }
    }
}

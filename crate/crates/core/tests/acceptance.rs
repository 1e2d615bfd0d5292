//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use amenvis::amenable::{boundary_count, is_invariant};
use amenvis::cli::{build_state, preset, run, Command, RunConfig};
use amenvis::diagnostics::{nondisjointness_report, simple_random_walk, tv_curve, CurveOptions, Verdict};
use amenvis::group::{Element, Group};
use amenvis::measure::{convolve, convolve_naive, tv_distance, Exact, SparseMeasure, Tv, Weight};
use amenvis::walk::{estimate_m, wilson, Walker, Z95};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn construction_invariants() -> Outcome {
    let start = Instant::now();
    let mut cfg = preset("f2xz").map_err(err)?;
    cfg.stages = 32;
    let (g, state) = build_state(&cfg, None).map_err(err)?;
    state.verify().map_err(err)?;
    let nu: SparseMeasure<Exact> = state.build_measure().map_err(err)?;
    for (x, w) in nu.atoms() {
        ensure(nu.mass(&g.inv_raw(x)) == *w, || format!("mass of {} differs from its inverse", g.format(x)))?;
    }
    ensure(nu.total_mass() == Exact::new(32, 33), || format!("total mass {}", nu.total_mass()))?;
    for s in state.stages() {
        let eps = Ratio::new(1, s.index as u64);
        ensure(is_invariant(&g, &s.b, &s.f, eps), || {
            format!(
                "F_{} fails invariance: boundary {} vs |F| = {}",
                s.index,
                boundary_count(&g, &s.b, &s.f),
                s.f.len()
            )
        })?;
        ensure(s.f.iter().all(|x| s.f.contains(&g.inv_raw(x))), || format!("F_{} not symmetric", s.index))?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{} atoms, mass 32/33, 32 Følner sets checked, {secs:.2}s", nu.len()))
}

fn random_measure(g: &Group, rng: &mut ChaCha8Rng) -> SparseMeasure<Exact> {
    let n = rng.gen_range(0..=30);
    let atoms: Vec<(Element, Exact)> = (0..n)
        .map(|_| {
            let len = rng.gen_range(0..6);
            (g.random_word(rng, len), Exact::new(rng.gen_range(1..50), rng.gen_range(1..200)))
        })
        .collect();
    let lost = if rng.gen_bool(0.3) { Exact::new(rng.gen_range(1..5), 97) } else { Exact::new(0, 1) };
    SparseMeasure::from_atoms(atoms).with_lost(lost)
}

fn kernel_oracle() -> Outcome {
    let groups: Vec<Group> = ["product(free(2), free-abelian(1))", "free(2)", "lamplighter(2)", "free-abelian(2)"]
        .iter()
        .map(|s| Group::parse(s).map_err(err))
        .collect::<Result<_, _>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..200 {
        let g = &groups[i % groups.len()];
        let mu = random_measure(g, &mut rng);
        let nu = random_measure(g, &mut rng);
        let fast = convolve(g, &mu, &nu, usize::MAX).map_err(err)?;
        let slow = convolve_naive(g, &mu, &nu);
        ensure(fast.atoms() == slow.atoms(), || format!("pair {i} on {} differs", g.name()))?;
        let (lm, ln) = (&mu.lost_mass().0, &nu.lost_mass().0);
        let expected = lm * (&nu.total_mass().0 + ln) + &mu.total_mass().0 * ln;
        ensure(fast.lost_mass().0 == expected, || format!("pair {i}: lost mass {}", fast.lost_mass()))?;
    }
    Ok("200 pairs identical, lost mass as expected".into())
}

struct Curves {
    f2xz: Vec<Tv<f64>>,
    f2xz_verdict: Verdict,
    amenable: Vec<Tv<Exact>>,
    free: Vec<Tv<Exact>>,
}

fn compute_curves() -> Result<Curves, String> {
    let cfg = preset("f2xz").map_err(err)?;
    let (g, state) = build_state(&cfg, None).map_err(err)?;
    let nu: SparseMeasure<f64> = state.build_measure().map_err(err)?;
    let s = g.parse_set(&["<e;(1)>"]).map_err(err)?;
    let opts = CurveOptions {
        n_max: 40,
        budget: 2_000_000,
        stop_below: None,
    };
    let report = nondisjointness_report(&g, &SparseMeasure::delta(g.identity()), &s, &nu, opts, 0.5, true).map_err(err)?;
    let f2xz = report.curves[0].points.iter().map(|p| Tv { value: p.value, bracket: p.bracket }).collect();

    let cfg = preset("z-amenable").map_err(err)?;
    let (z, state) = build_state(&cfg, None).map_err(err)?;
    let nu: SparseMeasure<Exact> = state.build_measure().map_err(err)?;
    let one = z.parse_element("(1)").map_err(err)?;
    let opts = CurveOptions {
        n_max: 50,
        budget: usize::MAX,
        stop_below: Some(0.2),
    };
    let amenable = tv_curve(&z, &SparseMeasure::delta(z.identity()), &one, &nu, opts).map_err(err)?;

    let f2 = Group::parse("free(2)").map_err(err)?;
    let srw = simple_random_walk::<Exact>(&f2).map_err(err)?;
    let a = f2.parse_element("a").map_err(err)?;
    let opts = CurveOptions {
        n_max: 10,
        budget: usize::MAX,
        stop_below: None,
    };
    let free = tv_curve(&f2, &SparseMeasure::delta(f2.identity()), &a, &srw, opts).map_err(err)?;
    Ok(Curves {
        f2xz,
        f2xz_verdict: report.verdict,
        amenable,
        free,
    })
}

fn contraction(c: &Curves) -> Outcome {
    let check = |name: &str, pts: Vec<(f64, f64)>, tol: f64| -> Result<usize, String> {
        for (n, w) in pts.windows(2).enumerate() {
            let allowed = w[0].0 + 2.0 * (w[1].1 - w[0].1) + tol;
            ensure(w[1].0 <= allowed, || format!("{name}: d_{} = {} > {allowed}", n + 1, w[1].0))?;
        }
        Ok(pts.len() - 1)
    };
    let exact = |curve: &[Tv<Exact>]| -> Result<(), String> {
        for w in curve.windows(2) {
            let growth = &w[1].bracket.0 - &w[0].bracket.0;
            let allowed = &w[0].value.0 + growth.clone() + growth;
            ensure(w[1].value.0 <= allowed, || "exact contraction violated".into())?;
        }
        Ok(())
    };
    let steps = check("f2xz", c.f2xz.iter().map(|t| (t.value, t.bracket)).collect(), 1e-12)?;
    exact(&c.amenable)?;
    exact(&c.free)?;
    Ok(format!(
        "f2xz {steps} steps, z-amenable {} steps, f2-control {} steps",
        c.amenable.len() - 1,
        c.free.len() - 1
    ))
}

fn nondisjointness(c: &Curves) -> Outcome {
    let (n, best) = c
        .f2xz
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .expect("curve has d_0");
    ensure(best.value <= 0.5, || format!("min d_n = {} at n = {n} ({})", best.value, c.f2xz_verdict))?;
    Ok(format!("d_{n} = {:.4} ± {:.4} ≤ 0.5, verdict {}", best.value, best.bracket, c.f2xz_verdict))
}

fn amenable_sanity(c: &Curves) -> Outcome {
    let threshold = Exact::new(1, 5);
    let hit = c.amenable.iter().position(|t| t.value < threshold);
    match hit {
        Some(n) if n <= 50 => Ok(format!("d_{n} = {:.6} < 0.2 (exact)", c.amenable[n].value.to_f64())),
        _ => Err(format!("no d_n < 0.2 within {} steps", c.amenable.len() - 1)),
    }
}

fn free_control(c: &Curves) -> Outcome {
    ensure(c.free.len() == 11, || format!("curve stopped at n = {}", c.free.len() - 1))?;
    ensure(c.free[1].value == Exact::new(2, 1), || format!("d_1 = {}", c.free[1].value))?;
    ensure(c.free[10].value >= Exact::new(1, 1), || format!("d_10 = {}", c.free[10].value))?;
    Ok(format!("d_1 = {}, d_10 = {}", c.free[1].value, c.free[10].value))
}

fn coupling_law() -> Outcome {
    let cfg = preset("f2xz").map_err(err)?;
    let (_, state) = build_state(&cfg, None).map_err(err)?;
    let k = state.stage_count();
    let nu: SparseMeasure<f64> = state.build_measure().map_err(err)?;
    let walker = Walker::new(&state).map_err(err)?;
    let samples = 1_000_000;
    let stats = walker.increment_stats(samples, 7);
    let tv = tv_distance(&stats.empirical(), &nu).value;
    let limit = 0.02 + 1.0 / (k as f64 + 1.0);
    ensure(tv < limit, || format!("TV {tv:.5} ≥ {limit:.5}"))?;
    let third = 1.0 / 3.0;
    for (i, &count) in stats.color_counts().iter().enumerate() {
        let (lo, hi) = wilson(count, samples, Z95);
        ensure(lo >= third - 0.01 && hi <= third + 0.01, || format!("color {i}: [{lo:.4}, {hi:.4}]"))?;
    }
    Ok(format!("TV {tv:.5} < {limit:.5}, colors {:?}", stats.color_counts()))
}

fn decomposition_event() -> Outcome {
    let cfg = preset("f2xz").map_err(err)?;
    let (g, state) = build_state(&cfg, None).map_err(err)?;
    let target = g.parse_set(&["<e;(1)>"]).map_err(err)?;
    let r = estimate_m(&state, &target, 4, 0.25, 10_000, 100_000, 11).map_err(err)?;
    let m = r.m.ok_or_else(|| format!("no M up to the horizon {}", r.horizon))?;
    ensure(r.ci.0 >= 0.75, || format!("lower bound {}", r.ci.0))?;
    ensure(r.curve.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1), || "hit curve decreases".into())?;
    Ok(format!("M = {m}, P = {:.4}, 95% CI [{:.4}, {:.4}]", r.hit_probability, r.ci.0, r.ci.1))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .expect("output dir exists")
        .map(|e| {
            let p = e.expect("dir entry").path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).expect("readable"))
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let mut base = preset("f2xz").map_err(err)?;
    base.stages = 24;
    base.budgets.atoms = 20_000;
    base.budgets.n_max = 5;
    base.budgets.trials = 2_000;
    base.budgets.horizon = 20_000;
    base.report.stop_on_pass = false;
    let commands = [
        Command::Construct { resume: None },
        Command::Folner,
        Command::Certify,
        Command::TvCurve,
        Command::Report,
        Command::Couple,
    ];
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut outputs = Vec::new();
    for threads in [1, 4, 8] {
        let dir = tmp.path().join(format!("t{threads}"));
        let cfg = RunConfig {
            threads: Some(threads),
            output: Some(dir.clone()),
            ..base.clone()
        };
        for c in &commands {
            run(c, &cfg).map_err(err)?;
        }
        outputs.push(read_dir_sorted(&dir));
    }
    for (i, threads) in [4, 8].iter().enumerate() {
        for (a, b) in outputs[0].iter().zip(&outputs[i + 1]) {
            ensure(a == b, || format!("{} differs between 1 and {threads} threads", a.0))?;
        }
        ensure(outputs[0].len() == outputs[i + 1].len(), || "file sets differ".into())?;
    }
    Ok(format!("{} files identical across 1, 4, 8 workers", outputs[0].len()))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, outcome: Outcome| {
        let line = match outcome {
            Ok(detail) => format!("criterion {id} {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                format!("criterion {id} {name}: FAIL ({detail})")
            }
        };
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "{line}");
        let _ = out.flush();
    };
    report(1, "construction invariants", construction_invariants());
    report(2, "kernel oracle", kernel_oracle());
    match compute_curves() {
        Ok(c) => {
            report(3, "tv contraction", contraction(&c));
            report(4, "non-disjointness", nondisjointness(&c));
            report(5, "amenable sanity", amenable_sanity(&c));
            report(6, "free control", free_control(&c));
        }
        Err(e) => {
            for (id, name) in [(3, "tv contraction"), (4, "non-disjointness"), (5, "amenable sanity"), (6, "free control")] {
                report(id, name, Err(e.clone()));
            }
        }
    }
    report(7, "coupling law", coupling_law());
    report(8, "decomposition event", decomposition_event());
    report(9, "determinism", determinism());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

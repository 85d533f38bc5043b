//! Acceptance battery. Prints one line per criterion and exits nonzero if
//! any criterion fails. Tolerances are pinned here, independent of the
//! catalog defaults.

use std::process::ExitCode;
use std::time::Instant;

use etgeom::chart::{Chart, Sampler};
use etgeom::constructions::{alpha0_warped_structure, corpus, corpus_entry, flat, gaussian_soliton, hyperbolic, sphere, Fiber};
use etgeom::curvature::{identity_suite, random_test_function, ricci_at, space_form_observations_at, weyl_at};
use etgeom::einstein_type::{structure_suite, Coefficient, DForm, EinsteinTypeStructure, StructureClass};
use etgeom::levelset::{levelset_property_report, levelset_suite, sample_level, REGULARITY_EPS};
use etgeom::report::{CheckReport, Status, Tally, Tolerances};
use etgeom::spectral::{critical_curve, lambda1_radial, parse_radial, RadialModel};
use etgeom_cli::{parse_scenario, run_scenario, RunOptions};

const SEED: u64 = 20;

type Outcome = Result<String, String>;

/// Worst `max / tol` over the listed checks; each must have asserted points.
fn require(report: &CheckReport, pinned: &[(&str, f64)], label: &str) -> Result<f64, String> {
    let mut worst = 0.0f64;
    for &(name, tol) in pinned {
        let e = report.get(name).ok_or_else(|| format!("{label}: {name} missing"))?;
        if e.status == Status::Fail && e.max.is_none() {
            return Err(format!("{label}: {name}: {}", e.message.clone().unwrap_or_default()));
        }
        let max = e.max.ok_or_else(|| format!("{label}: {name} asserted at no point ({:?})", e.status))?;
        if max > tol {
            return Err(format!("{label}: {name} = {max:.3e} > {tol:e}"));
        }
        if tol > 0.0 {
            worst = worst.max(max / tol);
        }
    }
    Ok(worst)
}

fn points(chart: &Chart, n: usize) -> Vec<Vec<f64>> {
    Sampler::new(SEED, 0.05).sample(chart.domain(), n)
}

fn build(name: &str) -> Result<EinsteinTypeStructure, String> {
    let e = corpus_entry(name).ok_or_else(|| format!("no corpus entry {name}"))?;
    (e.build)().map_err(|e| format!("{name}: {e}"))
}

fn space_forms() -> Outcome {
    let start = Instant::now();
    let cases: Vec<(&str, Chart, f64, f64)> = vec![
        ("S3", sphere(3).map_err(|e| e.to_string())?, 6.0, 1.0),
        ("S4", sphere(4).map_err(|e| e.to_string())?, 12.0, 1.0),
        ("R3", flat(3), 0.0, 0.0),
        ("R4", flat(4), 0.0, 0.0),
        ("H3", hyperbolic(3).map_err(|e| e.to_string())?, -6.0, -1.0),
    ];
    let pinned = [
        ("scalar_curvature", 1e-9),
        ("einstein_constant", 1e-9),
        ("weyl_zero", 1e-9),
        ("cotton_zero", 1e-6),
        ("bach_zero", 1e-4),
    ];
    let mut worst = 0.0f64;
    for (label, chart, s, kappa) in &cases {
        let m = chart.dim();
        let pts = points(chart, 16);
        let mut t = Tally::new();
        for p in &pts {
            t.observe_all(space_form_observations_at(chart, p, Some(*s)));
            // Ric = κ(m−1)g
            let ric = ricci_at(chart, p).map_err(|e| e.to_string())?;
            let g = chart.metric_at(p).map_err(|e| e.to_string())?;
            let d = ric.axpy(-kappa * (m as f64 - 1.0), &g).map_err(|e| e.to_string())?.max_abs();
            if d > 1e-9 {
                return Err(format!("{label}: |Ric - k(m-1)g| = {d:.3e}"));
            }
        }
        let r = t.finish(&Tolerances::default());
        // W vanishes identically in dimension 3 and is asserted for m = 3 too
        worst = worst.max(require(&r, &pinned, label)?);
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 10.0 {
        return Err(format!("runtime {secs:.1} s >= 10 s"));
    }
    Ok(format!("5 charts, worst residual/tol {worst:.2e}, {secs:.2} s"))
}

fn identity_battery() -> Outcome {
    let pinned = [
        ("hessian_symmetry", 1e-10),
        ("third_derivative_commutation", 1e-8),
        ("traced_commutation", 1e-8),
        ("first_bianchi", 1e-6),
        ("second_bianchi", 1e-6),
        ("ricci_commutation", 1e-5),
        ("schur", 1e-5),
        ("cotton_cyclic", 1e-6),
        ("cotton_trace", 1e-6),
        ("cotton_divergence_symmetry", 1e-6),
        ("cotton_null_divergence", 1e-4),
    ];
    let mut worst = 0.0f64;
    for e in corpus() {
        let s = (e.build)().map_err(|x| format!("{}: {x}", e.name))?;
        let chart = s.chart();
        let f = random_test_function(chart.dim(), SEED);
        let r = identity_suite(chart, &points(chart, 64), &f, &Tolerances::default());
        for (name, _) in &pinned {
            if r.get(name).map(|x| x.points) != Some(64) {
                return Err(format!("{}: {name} not asserted at all 64 points", e.name));
            }
        }
        worst = worst.max(require(&r, &pinned, e.name)?);
    }
    Ok(format!("{} charts x 64 points, worst residual/tol {worst:.2e}", corpus().len()))
}

fn gaussian() -> Outcome {
    let mut worst = 0.0f64;
    for m in [3, 4] {
        let s = gaussian_soliton(m, Coefficient::ratio(1, 2)).map_err(|e| e.to_string())?;
        let pts = points(s.chart(), 16);
        let r = structure_suite(&s, &pts, true, &Tolerances::default());
        let label = format!("gaussian m={m}");
        worst = worst.max(require(
            &r,
            &[
                ("structure_residual", 1e-12),
                ("integrability_1", 1e-6),
                ("integrability_2", 1e-4),
                ("sk_identity", 1e-8),
            ],
            &label,
        )?);
        for p in &pts {
            for form in [DForm::Ricci, DForm::Schouten, DForm::Hessian] {
                let d = s.d_tensor_at(p, form).map_err(|e| e.to_string())?.components.max_abs();
                if d > 1e-9 {
                    return Err(format!("{label}: |D| ({form:?}) = {d:.3e}"));
                }
            }
            let y = s.y_field_at(p).map_err(|e| e.to_string())?.max_abs();
            if y > 1e-9 {
                return Err(format!("{label}: |Y| = {y:.3e}"));
            }
        }
    }
    Ok(format!("m = 3, 4; D = Y = 0 in every form, worst residual/tol {worst:.2e}"))
}

fn alpha_zero_warps() -> Outcome {
    let mut worst = 0.0f64;
    let mut cases = 0;
    for f in ["exp(r) - 1", "r + r^3/3"] {
        for mu in [Coefficient::integer(0), Coefficient::ratio(1, 2)] {
            let s = alpha0_warped_structure(f, mu, Fiber::Sphere, 3, (0.2, 1.2)).map_err(|e| e.to_string())?;
            let label = format!("f = {f}, mu = {mu}");
            let pts = points(s.chart(), 16);
            let r = structure_suite(&s, &pts, false, &Tolerances::default());
            worst = worst.max(require(&r, &[("structure_residual", 1e-8), ("integrability_1", 1e-5)], &label)?);
            let c = s.f().eval(&s.chart().domain().center()).map_err(|e| e.to_string())?;
            let level = sample_level(&s, c, 12, SEED).map_err(|e| e.to_string())?;
            if level.len() < 4 {
                return Err(format!("{label}: only {} level points", level.len()));
            }
            let lr = levelset_property_report(&s, &level, &Tolerances::default());
            worst = worst.max(require(&lr, &[("level_grad_spread", 1e-6), ("level_umbilic", 1e-6)], &label)?);
            cases += 1;
        }
    }
    Ok(format!("{cases} warps, worst residual/tol {worst:.2e}"))
}

fn degenerate_round_trip() -> Outcome {
    let mut worst = 0.0f64;
    for name in ["sphere4_degenerate", "flat4_degenerate"] {
        let s = build(name)?;
        let [a, b, mu, _] = s.params();
        let (a, b, mu) = match (a.exact(), b.exact(), mu.exact()) {
            (Some(a), Some(b), Some(mu)) => (a, b, mu),
            _ => return Err(format!("{name}: parameters are not exact")),
        };
        let m = s.dim() as i64;
        if b * b != a * mu * (m - 2) {
            return Err(format!("{name}: beta^2 != (m-2) alpha mu"));
        }
        if s.classify().map_err(|e| e.to_string())? != StructureClass::Degenerate {
            return Err(format!("{name}: not classified degenerate"));
        }
        let r = structure_suite(&s, &points(s.chart(), 16), false, &Tolerances::default());
        worst = worst.max(require(&r, &[("structure_residual", 1e-6), ("conformal_einstein", 1e-6)], name)?);
    }
    Ok(format!("S4 and R4, exact degeneracy, worst residual/tol {worst:.2e}"))
}

fn cotton_cross_definition() -> Outcome {
    let s = build("alpha0_warp_cubic")?;
    let chart = s.chart();
    if chart.dim() != 4 {
        return Err("chart is not 4-dimensional".into());
    }
    let pts = points(chart, 16);
    let wmin = pts
        .iter()
        .map(|p| weyl_at(chart, p).map(|w| w.max_abs()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    if wmin < 1e-3 {
        return Err(format!("chart is nearly conformally flat: min |W| = {wmin:.3e}"));
    }
    let r = identity_suite(chart, &pts, &random_test_function(4, SEED), &Tolerances::default());
    let worst = require(&r, &[("cotton_weyl_divergence", 1e-5)], "alpha0_warp_cubic")?;
    Ok(format!("m = 4 warped chart with min |W| = {wmin:.2e}, residual/tol {worst:.2e}"))
}

fn levelset_identity() -> Outcome {
    let s = build("cylinder4")?;
    if s.dim() != 4 || s.classify().map_err(|e| e.to_string())? != StructureClass::Nondegenerate {
        return Err("cylinder4 is not a nondegenerate m = 4 structure".into());
    }
    let regular: Vec<Vec<f64>> = points(s.chart(), 64)
        .into_iter()
        .filter(|p| {
            s.at_light(p)
                .map(|sp| sp.jet.grad_norm2(&sp.geo.metric).sqrt() >= REGULARITY_EPS)
                .unwrap_or(false)
        })
        .take(32)
        .collect();
    if regular.len() < 32 {
        return Err(format!("only {} regular points", regular.len()));
    }
    let dmax = regular
        .iter()
        .map(|p| s.d_tensor_at(p, DForm::Ricci).map(|d| d.components.max_abs()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?
        .into_iter()
        .fold(0.0, f64::max);
    let r = levelset_suite(&s, &regular, &Tolerances::default());
    let worst = require(&r, &[("d2_levelset", 1e-6), ("d2_rhs_nonnegative", 0.0)], "cylinder4")?;
    for n in ["d2_levelset", "d2_rhs_nonnegative"] {
        if r.get(n).map(|e| e.points) != Some(32) {
            return Err(format!("{n} not asserted at all 32 points"));
        }
    }
    Ok(format!("cylinder4, 32 regular points, max |D| = {dmax:.2e}, residual/tol {worst:.2e}"))
}

fn d_norm_div_y() -> Outcome {
    let mut asserted = 0;
    let mut gated = 0;
    let mut worst = 0.0f64;
    for e in corpus() {
        let s = (e.build)().map_err(|x| format!("{}: {x}", e.name))?;
        let r = structure_suite(&s, &points(s.chart(), 16), true, &Tolerances::default());
        if let Some(x) = r.get("d_norm_div_y") {
            gated += x.gated_points;
            if x.points > 0 {
                asserted += x.points;
                worst = worst.max(require(&r, &[("d_norm_div_y", 1e-4)], e.name)?);
            } else if x.status == Status::Fail {
                return Err(format!("{}: {}", e.name, x.message.clone().unwrap_or_default()));
            }
        }
    }
    if asserted == 0 {
        return Err("identity asserted at no point".into());
    }
    Ok(format!("{asserted} points asserted, {gated} gated on B(grad f, .), worst residual/tol {worst:.2e}"))
}

fn spectral() -> Outcome {
    let e = |x: etgeom::spectral::SpectralError| x.to_string();
    let l1 = lambda1_radial(&RadialModel::flat(3), 1.0, 2000).map_err(e)?;
    let pi2 = std::f64::consts::PI.powi(2);
    let rel = (l1 - pi2).abs() / pi2;
    if rel > 5e-3 {
        return Err(format!("lambda1 = {l1} vs pi^2, relative error {rel:.2e}"));
    }
    let mut chi_err = 0.0f64;
    let exp2 = parse_radial("exp(2*r)").map_err(e)?;
    for r in [0.5, 1.0, 2.0, 5.0] {
        chi_err = chi_err.max((critical_curve(&exp2, r).map_err(e)? - 1.0).abs());
    }
    for sigma in [2.0f64, 3.0, 4.5] {
        let v = parse_radial(&format!("r^{sigma}")).map_err(e)?;
        for r in [0.5, 1.0, 3.0] {
            let want = ((sigma - 1.0) / (2.0 * r)).powi(2);
            let got = critical_curve(&v, r).map_err(e)?;
            chi_err = chi_err.max((got - want).abs() / want.max(1.0));
        }
    }
    if chi_err > 1e-8 {
        return Err(format!("chi closed forms off by {chi_err:.2e}"));
    }
    Ok(format!("lambda1 relative error {rel:.2e}, chi error {chi_err:.2e}"))
}

fn determinism() -> Outcome {
    let start = Instant::now();
    let run_all = || -> Result<Vec<String>, String> {
        corpus()
            .iter()
            .map(|e| {
                let sc = parse_scenario(&format!("corpus = \"{}\"\n[sampling]\nseed = {SEED}\n", e.name))
                    .map_err(|x| x.to_string())?;
                let r = run_scenario(&sc, &RunOptions::default()).map_err(|x| x.to_string())?;
                if r.exit_code() != 0 {
                    return Err(format!("{} has failing checks", e.name));
                }
                serde_json::to_string_pretty(&r.without_timing()).map_err(|x| x.to_string())
            })
            .collect()
    };
    let a = run_all()?;
    let b = run_all()?;
    if a != b {
        return Err("reports differ between runs".into());
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 120.0 {
        return Err(format!("two full runs took {secs:.1} s"));
    }
    Ok(format!("{} scenarios run twice, identical JSON, {secs:.1} s", a.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("space-form battery", space_forms),
        ("identity suite on every corpus chart", identity_battery),
        ("Gaussian soliton structure", gaussian),
        ("alpha = 0 warped construction", alpha_zero_warps),
        ("degenerate round trip", degenerate_round_trip),
        ("Cotton cross-definition", cotton_cross_definition),
        ("level-set |D|^2 identity", levelset_identity),
        ("|D|^2 and div Y", d_norm_div_y),
        ("spectral surrogate", spectral),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2}  PASS  {name}: {detail} [{secs:.1} s]", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2}  FAIL  {name}: {why} [{secs:.1} s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

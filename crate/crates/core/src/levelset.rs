//! Regular level sets of `f`: adapted frames, second fundamental form and
//! the properties forced by `D = 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chart::Sampler;
use crate::einstein_type::{DForm, EinsteinTypeStructure, StructurePoint};
use crate::error::{GeomError, Result};
use crate::report::{scaled, CheckReport, Observation, Tally, Tolerances};
use crate::tensorfield::{MetricAt, PointTensor};

/// Points with `|∇f|` below this are treated as critical.
pub const REGULARITY_EPS: f64 = 1e-8;
/// Bisection stops once `|f − c|` is at most this.
pub const LEVEL_EPS: f64 = 1e-10;
/// Level-set properties are asserted only when the scaled `|D|` is at most
/// this at every level point.
pub const D_GATE: f64 = 1e-6;

/// Orthonormal frame with `e_m = ∇f/|∇f|` as the last leg.
#[derive(Debug, Clone)]
pub struct AdaptedFrame {
    /// `vectors[a][i]` is the `i`-th coordinate component of `e_a`.
    pub vectors: Vec<Vec<f64>>,
    pub grad_norm: f64,
}

impl AdaptedFrame {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// `T(e_a, e_b)` for a covariant 2-tensor.
    pub fn components2(&self, t: &PointTensor) -> Vec<Vec<f64>> {
        let m = self.dim();
        let mut out = vec![vec![0.0; m]; m];
        for a in 0..m {
            for b in 0..m {
                let mut acc = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        acc += self.vectors[a][i] * self.vectors[b][j] * t.get(&[i, j]);
                    }
                }
                out[a][b] = acc;
            }
        }
        out
    }

    /// `T(e_a, e_b, e_c, e_d)` for a covariant 4-tensor.
    pub fn components4(&self, t: &PointTensor) -> Vec<f64> {
        let m = self.dim();
        // contract one slot at a time
        let mut cur = t.data().to_vec();
        for _ in 0..4 {
            let mut next = vec![0.0; cur.len()];
            let stride = m * m * m;
            for a in 0..m {
                for rest in 0..stride {
                    let mut acc = 0.0;
                    for i in 0..m {
                        acc += self.vectors[a][i] * cur[i * stride + rest];
                    }
                    // rotate the contracted slot to the back
                    next[rest * m + a] = acc;
                }
            }
            cur = next;
        }
        cur
    }

    /// Max `|g(e_a, e_b) − δ_ab|`.
    pub fn orthonormality_defect(&self, metric: &MetricAt) -> f64 {
        let m = self.dim();
        let mut worst = 0.0f64;
        for a in 0..m {
            for b in 0..m {
                let mut g = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        g += self.vectors[a][i] * self.vectors[b][j] * metric.g(i, j);
                    }
                }
                let d = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - d).abs());
            }
        }
        worst
    }
}

fn g_dot(metric: &MetricAt, u: &[f64], v: &[f64]) -> f64 {
    let m = u.len();
    let mut acc = 0.0;
    for i in 0..m {
        for j in 0..m {
            acc += u[i] * v[j] * metric.g(i, j);
        }
    }
    acc
}

/// Gram–Schmidt from `∇f` and candidate vectors: the coordinate basis when
/// `seed` is `None`, seeded random vectors otherwise.
pub fn frame_from_gradient(metric: &MetricAt, grad_up: &[f64], seed: Option<u64>) -> Result<AdaptedFrame> {
    let m = grad_up.len();
    let norm = g_dot(metric, grad_up, grad_up).sqrt();
    if !(norm >= REGULARITY_EPS) {
        return Err(GeomError::CriticalPoint { norm });
    }
    let em: Vec<f64> = grad_up.iter().map(|v| v / norm).collect();
    let candidates: Vec<Vec<f64>> = match seed {
        None => (0..m).map(|k| (0..m).map(|i| if i == k { 1.0 } else { 0.0 }).collect()).collect(),
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            (0..m + 2).map(|_| (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
        }
    };
    let mut basis = vec![em.clone()];
    for c in candidates {
        if basis.len() == m {
            break;
        }
        let mut v = c;
        for _ in 0..2 {
            for b in &basis {
                let d = g_dot(metric, &v, b);
                for i in 0..m {
                    v[i] -= d * b[i];
                }
            }
        }
        let n = g_dot(metric, &v, &v).sqrt();
        if n > 1e-6 {
            basis.push(v.iter().map(|x| x / n).collect());
        }
    }
    if basis.len() < m {
        return Err(GeomError::Dimension("could not complete the adapted frame".into()));
    }
    basis.rotate_left(1);
    Ok(AdaptedFrame {
        vectors: basis,
        grad_norm: norm,
    })
}

pub fn adapted_frame_at(s: &EinsteinTypeStructure, p: &[f64]) -> Result<AdaptedFrame> {
    let sp = s.at_light(p)?;
    frame_from_gradient(&sp.geo.metric, &sp.grad_up, None)
}

/// Second fundamental form of the level set through `p` in the adapted frame.
#[derive(Debug, Clone)]
pub struct SecondFundamentalForm {
    /// `−f_ab/|∇f|`
    pub hessian_route: Vec<Vec<f64>>,
    /// `(αR_ab − (ρS + λ)δ_ab)/(β|∇f|)`, absent when `β = 0`.
    pub structure_route: Option<Vec<Vec<f64>>>,
}

impl SecondFundamentalForm {
    /// `h = h_aa/(m−1)`
    pub fn mean(&self) -> f64 {
        mean_of(&self.hessian_route)
    }

    /// `|h_ab − h δ_ab|²`
    pub fn traceless_norm2(&self) -> f64 {
        traceless_norm2(&self.hessian_route)
    }
}

fn mean_of(h: &[Vec<f64>]) -> f64 {
    let n = h.len();
    (0..n).map(|a| h[a][a]).sum::<f64>() / n as f64
}

fn traceless_norm2(h: &[Vec<f64>]) -> f64 {
    let hm = mean_of(h);
    let n = h.len();
    let mut acc = 0.0;
    for a in 0..n {
        for b in 0..n {
            let d = h[a][b] - if a == b { hm } else { 0.0 };
            acc += d * d;
        }
    }
    acc
}

fn second_fundamental_form(sp: &StructurePoint<'_>, frame: &AdaptedFrame) -> SecondFundamentalForm {
    let m = frame.dim();
    let n = m - 1;
    let hess = frame.components2(&sp.jet.hess);
    let nf = frame.grad_norm;
    let hessian_route = (0..n).map(|a| (0..n).map(|b| -hess[a][b] / nf).collect()).collect();
    let s = sp.s;
    let structure_route = (!s.beta.is_zero()).then(|| {
        let ric = frame.components2(&sp.geo.ricci);
        let c = s.rho.value() * sp.geo.scalar + sp.lambda;
        (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| {
                        let d = if a == b { c } else { 0.0 };
                        (s.alpha.value() * ric[a][b] - d) / (s.beta.value() * nf)
                    })
                    .collect()
            })
            .collect()
    });
    SecondFundamentalForm {
        hessian_route,
        structure_route,
    }
}

pub fn second_fundamental_form_at(s: &EinsteinTypeStructure, p: &[f64]) -> Result<SecondFundamentalForm> {
    let sp = s.at_light(p)?;
    let frame = frame_from_gradient(&sp.geo.metric, &sp.grad_up, None)?;
    Ok(second_fundamental_form(&sp, &frame))
}

/// Both sides of the `|D|²` level-set identity at a point: `(|D|², rhs, scale)`.
fn d2_sides(sp: &StructurePoint<'_>, frame: &AdaptedFrame) -> Result<(f64, f64, f64)> {
    let s = sp.s;
    if s.alpha.is_zero() {
        return Err(GeomError::AlphaZero);
    }
    if s.beta.is_zero() {
        return Err(GeomError::BetaZero);
    }
    let m = frame.dim();
    let mf = m as f64;
    let d = sp.d_tensor(DForm::Ricci)?.components;
    let d2 = d.norm2(&sp.geo.metric)?;
    let sff = second_fundamental_form(sp, frame);
    let ba = s.beta.value() / s.alpha.value();
    let nf2 = frame.grad_norm * frame.grad_norm;
    let ric = frame.components2(&sp.geo.ricci);
    let ram2: f64 = (0..m - 1).map(|a| ric[a][m - 1].powi(2)).sum();
    let t1 = ba * ba * 2.0 * nf2 * nf2 / (mf - 2.0).powi(2) * sff.traceless_norm2();
    let t2 = 2.0 * nf2 / ((mf - 1.0) * (mf - 2.0)) * ram2;
    Ok((d2, t1 + t2, d2.abs().max(t1.abs()).max(t2.abs())))
}

/// Scaled `| |D|² − rhs |` at a regular point.
pub fn d2_levelset_identity_residual_at(s: &EinsteinTypeStructure, p: &[f64]) -> Result<f64> {
    let sp = s.at_light(p)?;
    let frame = frame_from_gradient(&sp.geo.metric, &sp.grad_up, None)?;
    let (lhs, rhs, sc) = d2_sides(&sp, &frame)?;
    Ok(scaled((lhs - rhs).abs(), sc))
}

/// Point-wise level-set checks: frame, both routes of `h_ab`, frame
/// independence and the `|D|²` identity.
pub fn levelset_observations_at(s: &EinsteinTypeStructure, p: &[f64]) -> Vec<Observation> {
    const NAMES: [&str; 5] = [
        "frame_orthonormality",
        "h_routes",
        "h_frame_independence",
        "d2_levelset",
        "d2_rhs_nonnegative",
    ];
    let mut out = Vec::new();
    let sp = match s.at_light(p) {
        Ok(sp) => sp,
        Err(e) => {
            out.extend(NAMES.iter().map(|n| Observation::error(n, &e)));
            return out;
        }
    };
    let frame = match frame_from_gradient(&sp.geo.metric, &sp.grad_up, None) {
        Ok(f) => f,
        Err(e @ GeomError::CriticalPoint { .. }) => {
            out.extend(NAMES.iter().map(|n| Observation::not_applicable(n, e.to_string())));
            return out;
        }
        Err(e) => {
            out.extend(NAMES.iter().map(|n| Observation::error(n, &e)));
            return out;
        }
    };
    let m = frame.dim();
    let tangent_df: f64 = (0..m - 1)
        .map(|a| frame.vectors[a].iter().zip(sp.jet.grad.data()).map(|(x, y)| x * y).sum::<f64>().abs())
        .fold(0.0, f64::max);
    out.push(Observation::value(
        "frame_orthonormality",
        frame.orthonormality_defect(&sp.geo.metric).max(tangent_df / frame.grad_norm),
    ));
    let sff = second_fundamental_form(&sp, &frame);
    let gate = sp.structure_gate();
    let gated = gate > crate::einstein_type::STRUCTURE_GATE;
    match &sff.structure_route {
        None => out.push(Observation::not_applicable("h_routes", "beta = 0")),
        Some(_) if gated => out.push(Observation::gated("h_routes", format!("structure residual {gate:.3e}"))),
        Some(h2) => {
            let mut diff = 0.0f64;
            let mut sc = 0.0f64;
            for (r1, r2) in sff.hessian_route.iter().zip(h2) {
                for (a, b) in r1.iter().zip(r2) {
                    diff = diff.max((a - b).abs());
                    sc = sc.max(a.abs());
                }
            }
            out.push(Observation::value("h_routes", scaled(diff, sc)));
        }
    }
    match frame_from_gradient(&sp.geo.metric, &sp.grad_up, Some(0x5eed)) {
        Ok(other) => {
            let n1 = sff.traceless_norm2();
            let n2 = second_fundamental_form(&sp, &other).traceless_norm2();
            out.push(Observation::value("h_frame_independence", scaled((n1 - n2).abs(), n1)));
        }
        Err(e) => out.push(Observation::error("h_frame_independence", e)),
    }
    if s.alpha.is_zero() || s.beta.is_zero() {
        let why = if s.alpha.is_zero() { "alpha = 0" } else { "beta = 0" };
        out.push(Observation::not_applicable("d2_levelset", why));
        out.push(Observation::not_applicable("d2_rhs_nonnegative", why));
    } else if m < 3 {
        out.push(Observation::not_applicable("d2_levelset", "m < 3"));
    } else {
        match d2_sides(&sp, &frame) {
            Ok((lhs, rhs, sc)) => {
                out.push(Observation::value("d2_rhs_nonnegative", (-rhs).max(0.0)));
                if gated {
                    out.push(Observation::gated("d2_levelset", format!("structure residual {gate:.3e}")));
                } else {
                    out.push(Observation::value("d2_levelset", scaled((lhs - rhs).abs(), sc)));
                }
            }
            Err(e) => {
                out.push(Observation::error("d2_levelset", &e));
                out.push(Observation::error("d2_rhs_nonnegative", e));
            }
        }
    }
    out
}

/// Point-wise level-set checks summed over many points.
pub fn levelset_suite(s: &EinsteinTypeStructure, points: &[Vec<f64>], tol: &Tolerances) -> CheckReport {
    let mut t = Tally::new();
    for p in points {
        t.observe_all(levelset_observations_at(s, p));
    }
    t.finish(tol)
}

/// Points on `f = c` found by bisection along coordinate lines through
/// seed points. The search stays `margin` (relative) inside the domain.
pub fn level_points(s: &EinsteinTypeStructure, c: f64, seeds: &[Vec<f64>], margin: f64) -> Result<Vec<Vec<f64>>> {
    let dom = s.chart().domain();
    let m = s.dim();
    let f = |q: &[f64]| -> Result<f64> { Ok(s.f().eval(q)? - c) };
    let mut out = Vec::new();
    const STEPS: usize = 64;
    for seed in seeds {
        'axes: for k in 0..m {
            let (lo, hi) = dom.interval(k);
            let pad = margin * (hi - lo);
            let (lo, hi) = (lo + pad, hi - pad);
            // scan outward from the seed so the root nearest to it wins
            let grid: Vec<f64> = (0..=STEPS).map(|i| lo + (hi - lo) * i as f64 / STEPS as f64).collect();
            let mut order: Vec<usize> = (0..STEPS).collect();
            order.sort_by(|&a, &b| {
                let da = ((grid[a] + grid[a + 1]) / 2.0 - seed[k]).abs();
                let db = ((grid[b] + grid[b + 1]) / 2.0 - seed[k]).abs();
                da.total_cmp(&db)
            });
            let mut q = seed.clone();
            for i in order {
                q[k] = grid[i];
                let fa = f(&q)?;
                q[k] = grid[i + 1];
                let fb = f(&q)?;
                if fa == 0.0 {
                    q[k] = grid[i];
                    out.push(q);
                    break 'axes;
                }
                if fa * fb > 0.0 {
                    continue;
                }
                let (mut a, mut b, mut fa) = (grid[i], grid[i + 1], fa);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    q[k] = mid;
                    let fm = f(&q)?;
                    if fm.abs() <= LEVEL_EPS {
                        break;
                    }
                    if fa * fm <= 0.0 {
                        b = mid;
                    } else {
                        a = mid;
                        fa = fm;
                    }
                }
                if f(&q)?.abs() <= LEVEL_EPS {
                    out.push(q);
                    break 'axes;
                }
            }
        }
    }
    Ok(out)
}

/// Level points for `f = c` from `count` seeded samples of the domain.
pub fn sample_level(s: &EinsteinTypeStructure, c: f64, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let sampler = Sampler::new(seed, 0.1);
    let seeds = sampler.sample(s.chart().domain(), count);
    level_points(s, c, &seeds, 0.1)
}

/// Quantities whose constancy or vanishing on a level set follows from `D = 0`.
struct LevelData {
    d_scaled: f64,
    grad2: f64,
    ram: f64,
    umbilic: f64,
    mean: f64,
    scalar: f64,
    lambda: f64,
    tangential: f64,
    fiber_einstein: f64,
    cotton: f64,
    weyl: Option<f64>,
}

fn level_data(s: &EinsteinTypeStructure, p: &[f64]) -> Result<LevelData> {
    let sp = s.at(p)?;
    let frame = frame_from_gradient(&sp.geo.metric, &sp.grad_up, None)?;
    let m = frame.dim();
    let n = m - 1;
    let d = sp.d_tensor(DForm::Ricci)?.components;
    let d_scale = sp.jet.grad.max_abs() * sp.geo.ricci.max_abs();
    let ric = frame.components2(&sp.geo.ricci);
    let sff = second_fundamental_form(&sp, &frame);
    let h = &sff.hessian_route;
    let ram = (0..n).map(|a| ric[a][m - 1].abs()).fold(0.0, f64::max);
    let tr: f64 = (0..n).map(|a| ric[a][a]).sum::<f64>() / n as f64;
    let mut tangential = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            tangential = tangential.max((ric[a][b] - if a == b { tr } else { 0.0 }).abs());
        }
    }
    // Gauss equation: R^Σ_abcd = R_abcd + h_ac h_bd − h_ad h_bc
    let riem = frame.components4(&sp.geo.riemann);
    let idx = |a: usize, b: usize, c: usize, e: usize| ((a * m + b) * m + c) * m + e;
    let mut fric = vec![vec![0.0; n]; n];
    for b in 0..n {
        for e in 0..n {
            fric[b][e] = (0..n)
                .map(|a| riem[idx(a, b, a, e)] + h[a][a] * h[b][e] - h[a][e] * h[b][a])
                .sum();
        }
    }
    let ftr: f64 = (0..n).map(|a| fric[a][a]).sum::<f64>() / n as f64;
    let mut fiber_einstein = 0.0f64;
    for a in 0..n {
        for b in 0..n {
            fiber_einstein = fiber_einstein.max((fric[a][b] - if a == b { ftr } else { 0.0 }).abs());
        }
    }
    let cotton = if m >= 3 { sp.geo.cotton()?.max_abs() } else { 0.0 };
    let weyl = (m == 4).then(|| sp.geo.weyl().map(|w| w.max_abs())).transpose()?;
    Ok(LevelData {
        d_scaled: scaled(d.max_abs(), d_scale),
        grad2: frame.grad_norm * frame.grad_norm,
        ram,
        umbilic: traceless_norm2(h).sqrt(),
        mean: mean_of(h),
        scalar: sp.geo.scalar,
        lambda: sp.lambda,
        tangential,
        fiber_einstein,
        cotton,
        weyl,
    })
}

fn spread(v: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// Level-set properties over points sampled on one level. Properties are
/// reported as gated unless `D` vanishes at every point.
pub fn levelset_property_report(s: &EinsteinTypeStructure, points: &[Vec<f64>], tol: &Tolerances) -> CheckReport {
    const PER_POINT: [&str; 6] = [
        "level_ram",
        "level_umbilic",
        "level_tangential_ricci",
        "level_fiber_einstein",
        "level_cotton",
        "level_weyl",
    ];
    const SPREADS: [&str; 4] = [
        "level_grad_spread",
        "level_mean_curvature_spread",
        "level_scalar_spread",
        "level_lambda_spread",
    ];
    let mut t = Tally::new();
    if s.f().is_constant() {
        for n in PER_POINT.iter().chain(&SPREADS) {
            t.observe(Observation::not_applicable(n, "f is constant"));
        }
        return t.finish(tol);
    }
    let mut data = Vec::new();
    for p in points {
        match level_data(s, p) {
            Ok(d) => data.push(d),
            Err(e) => {
                for n in PER_POINT.iter().chain(&SPREADS) {
                    t.observe(Observation::error(n, &e));
                }
            }
        }
    }
    let worst_d = data.iter().map(|d| d.d_scaled).fold(0.0, f64::max);
    if worst_d > D_GATE || data.is_empty() {
        let why = if data.is_empty() {
            "no regular level points".to_string()
        } else {
            format!("D = 0 gate failed: scaled |D| = {worst_d:.3e}")
        };
        for n in PER_POINT.iter().chain(&SPREADS) {
            t.observe(Observation::gated(n, why.clone()));
        }
        return t.finish(tol);
    }
    for d in &data {
        t.observe(Observation::value("level_ram", d.ram));
        t.observe(Observation::value("level_umbilic", d.umbilic));
        t.observe(Observation::value("level_tangential_ricci", d.tangential));
        t.observe(Observation::value("level_fiber_einstein", d.fiber_einstein));
        t.observe(Observation::value("level_cotton", d.cotton));
        match d.weyl {
            Some(w) => t.observe(Observation::value("level_weyl", w)),
            None => t.observe(Observation::not_applicable("level_weyl", "m != 4")),
        }
    }
    if data.len() < 2 {
        for n in SPREADS {
            t.observe(Observation::not_applicable(n, "fewer than two level points"));
        }
    } else {
        let sp = |f: fn(&LevelData) -> f64| spread(data.iter().map(f));
        t.observe(Observation::value("level_grad_spread", sp(|d| d.grad2)));
        t.observe(Observation::value("level_mean_curvature_spread", sp(|d| d.mean)));
        t.observe(Observation::value("level_scalar_spread", sp(|d| d.scalar)));
        t.observe(Observation::value("level_lambda_spread", sp(|d| d.lambda)));
    }
    t.finish(tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Chart;
    use crate::constructions::{corpus_entry, gaussian_soliton};
    use crate::einstein_type::Coefficient;
    use crate::report::Status;
    use std::sync::Arc;

    #[test]
    fn frame_components_match_naive_sum() {
        let m = 3;
        let t = PointTensor::from_fn(m, vec![crate::tensorfield::Variance::Lower; 4], |x| {
            (x[0] + 2 * x[1]) as f64 - 0.5 * (x[2] * x[3]) as f64 + 0.1 * x[3] as f64
        });
        let frame = AdaptedFrame {
            vectors: vec![vec![1.0, 2.0, 0.5], vec![-0.3, 0.0, 1.0], vec![0.7, -1.0, 0.2]],
            grad_norm: 1.0,
        };
        let got = frame.components4(&t);
        let v = &frame.vectors;
        for (k, g) in got.iter().enumerate() {
            let (a, b, c, d) = (k / 27, (k / 9) % 3, (k / 3) % 3, k % 3);
            let mut want = 0.0;
            crate::chart::for_each_multi_index(m, 4, |x| {
                want += v[a][x[0]] * v[b][x[1]] * v[c][x[2]] * v[d][x[3]] * t.get(x);
            });
            assert!((g - want).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_height_function_frame() {
        let chart = Arc::new(Chart::euclidean(3));
        let s = EinsteinTypeStructure::from_strs(chart, [1.into(), 1.into(), 0.into(), 0.into()], "0", "x3").unwrap();
        let fr = adapted_frame_at(&s, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(fr.vectors, vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let h = second_fundamental_form_at(&s, &[0.1, 0.2, 0.3]).unwrap();
        assert!(h.hessian_route.iter().flatten().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn gaussian_spheres_are_umbilic() {
        let s = gaussian_soliton(3, Coefficient::ratio(1, 2)).unwrap();
        let p = [0.5, 0.0, 0.0];
        let fr = adapted_frame_at(&s, &p).unwrap();
        assert!((fr.vectors[2][0] - 1.0).abs() < 1e-14);
        let h = second_fundamental_form_at(&s, &p).unwrap();
        assert!(h.traceless_norm2() < 1e-18);
        // level spheres of radius r have h_ab = -(1/r) δ_ab
        assert!((h.mean() + 2.0).abs() < 1e-12);
        assert!(d2_levelset_identity_residual_at(&s, &p).unwrap() < 1e-12);
    }

    #[test]
    fn critical_points_are_flagged() {
        let s = gaussian_soliton(3, Coefficient::ratio(1, 2)).unwrap();
        assert!(matches!(adapted_frame_at(&s, &[0.0; 3]), Err(GeomError::CriticalPoint { .. })));
        let e = (corpus_entry("sphere3").unwrap().build)().unwrap();
        let p = e.chart().domain().center();
        assert!(matches!(
            d2_levelset_identity_residual_at(&e, &p),
            Err(GeomError::CriticalPoint { .. })
        ));
    }

    #[test]
    fn cylinder_identity_is_nontrivial() {
        let s = (corpus_entry("cylinder4").unwrap().build)().unwrap();
        let pts = Sampler::new(3, 0.05).sample(s.chart().domain(), 8);
        let r = levelset_suite(&s, &pts, &Tolerances::default());
        assert!(r.all_pass(), "{:#?}", r.failures());
        let sp = s.at_light(&pts[0]).unwrap();
        let frame = frame_from_gradient(&sp.geo.metric, &sp.grad_up, None).unwrap();
        let (lhs, _, _) = d2_sides(&sp, &frame).unwrap();
        assert!(lhs > 1e-3);
    }

    #[test]
    fn warped_level_properties() {
        let s = (corpus_entry("alpha0_warp_exp").unwrap().build)().unwrap();
        let pts = sample_level(&s, 1.0, 12, 7).unwrap();
        assert!(pts.len() >= 6);
        for p in &pts {
            assert!((s.f().eval(p).unwrap() - 1.0).abs() <= LEVEL_EPS);
        }
        let r = levelset_property_report(&s, &pts, &Tolerances::default());
        assert!(r.all_pass(), "{:#?}", r.failures());
        assert_eq!(r.get("level_weyl").unwrap().status, Status::Pass);
    }

    #[test]
    fn properties_gate_on_d() {
        let s = (corpus_entry("cylinder4").unwrap().build)().unwrap();
        let pts = sample_level(&s, 0.3, 6, 1).unwrap();
        let r = levelset_property_report(&s, &pts, &Tolerances::default());
        assert!(r.entries.iter().all(|e| e.status == Status::Gated));
    }
}

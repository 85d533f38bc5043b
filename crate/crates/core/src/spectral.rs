//! Radial surrogates for the stability operator: critical curve, the
//! divergence diagnostic and first Dirichlet eigenvalues on balls.

use std::collections::BinaryHeap;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{parse, Expr, ExprError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("1/v is not integrable on [{r}, inf) to the requested accuracy")]
    NotIntegrable { r: f64 },
    #[error("q is positive ({value:e}) at r = {r}")]
    SignViolation { r: f64, value: f64 },
    #[error("discretization is not positive definite: v = {value:e} at r = {r}")]
    NonSpd { r: f64, value: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, SpectralError>;

// 15-point Kronrod nodes on [-1, 1] (non-negative half) and weights; the
// odd-indexed nodes carry the embedded 7-point Gauss rule.
const XK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// `(K15, |K15 − G7|)` on `[a, b]`.
fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let x = h * XK[i];
        let s = f(c - x) + f(c + x);
        k += WK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

#[derive(PartialEq)]
struct Piece {
    err: f64,
    a: f64,
    b: f64,
    val: f64,
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}

impl Ord for Piece {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Globally adaptive Gauss–Kronrod quadrature. Returns `None` when the
/// tolerance is not met within the subdivision budget or a value is not
/// finite.
pub fn integrate(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Option<f64> {
    const MAX_PIECES: usize = 4000;
    let (v, e) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Piece { err: e, a, b, val: v });
    let (mut total, mut err) = (v, e);
    while err > abs_tol.max(rel_tol * total.abs()) {
        if !total.is_finite() || !err.is_finite() || heap.len() >= MAX_PIECES {
            return None;
        }
        let p = heap.pop()?;
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            return None;
        }
        let (v1, e1) = gk15(&mut f, p.a, mid);
        let (v2, e2) = gk15(&mut f, mid, p.b);
        total += v1 + v2 - p.val;
        err += e1 + e2 - p.err;
        heap.push(Piece { err: e1, a: p.a, b: mid, val: v1 });
        heap.push(Piece { err: e2, a: mid, b: p.b, val: v2 });
    }
    // re-sum to drop accumulated rounding in the running total
    let sum: f64 = heap.iter().map(|p| p.val).sum();
    sum.is_finite().then_some(sum)
}

/// Relative accuracy of the tail integral.
pub const QUAD_REL_TOL: f64 = 1e-10;

fn eval_r(e: &Expr, r: f64) -> Result<f64> {
    Ok(e.eval(&[r])?)
}

/// `∫_r^∞ ds / v̂(s)`: directly on `[r, a]` with `a = max(r, 0) + 1`, then
/// through `s = a/u` on `(0, 1]`, which keeps algebraic tails resolvable
/// near `u = 0`.
pub fn tail_integral(v_hat: &Expr, r: f64) -> Result<f64> {
    let a = r.max(0.0) + 1.0;
    let mut failed = None;
    let mut inv_v = |s: f64| match v_hat.eval(&[s]) {
        Ok(v) if v > 0.0 => 1.0 / v,
        Ok(v) => {
            failed.get_or_insert(SpectralError::Invalid(format!("v is not positive ({v}) at r = {s}")));
            f64::NAN
        }
        Err(e) => {
            failed.get_or_insert(e.into());
            f64::NAN
        }
    };
    let near = integrate(&mut inv_v, r, a, QUAD_REL_TOL, 0.0);
    let far = integrate(
        |u: f64| {
            let s = a / u;
            if !s.is_finite() {
                // bisection reached the end of the float range: the tail
                // does not decay fast enough to resolve
                return f64::NAN;
            }
            let w = inv_v(s);
            if w == 0.0 {
                0.0
            } else {
                w * s / u
            }
        },
        0.0,
        1.0,
        QUAD_REL_TOL,
        0.0,
    );
    if let Some(e) = failed {
        return Err(e);
    }
    match (near, far) {
        (Some(x), Some(y)) => Ok(x + y),
        _ => Err(SpectralError::NotIntegrable { r }),
    }
}

/// `χ(r) = {2 v̂(r) ∫_r^∞ ds/v̂(s)}^{−2}`
pub fn critical_curve(v_hat: &Expr, r: f64) -> Result<f64> {
    let v = eval_r(v_hat, r)?;
    if !(v > 0.0) {
        return Err(SpectralError::Invalid(format!("v is not positive ({v}) at r = {r}")));
    }
    let i = tail_integral(v_hat, r)?;
    Ok((2.0 * v * i).powi(-2))
}

/// Parses a function of `r`.
pub fn parse_radial(src: &str) -> Result<Expr> {
    Ok(parse(src, &["r"])?.simplify())
}

/// Finite-horizon behaviour of the partial integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Diverging,
    Bounded,
    InconclusiveAtHorizon,
}

/// Trajectory of `P(r) = ∫_R^r (√|q̄| − √χ) ds` on a grid up to `r_max`.
/// A numeric diagnostic at a finite horizon, not a proof of divergence.
#[derive(Debug, Clone, Serialize)]
pub struct DivergenceReport {
    pub radii: Vec<f64>,
    pub partial: Vec<f64>,
    /// `(P(r_max) − P(r_max/10)) / ln 10`, growth per unit of `ln r`.
    pub last_decade_slope: f64,
    /// Same quantity over the previous decade, when it fits in `[R, r_max]`.
    pub previous_decade_slope: Option<f64>,
    pub verdict: Verdict,
    pub note: &'static str,
}

/// Slopes below this count as flat.
pub const FLAT_SLOPE: f64 = 1e-6;

/// Partial integrals of `√|q̄| − √χ_v̂` on a log-spaced grid. Fails when
/// `q̄ > 0` at a grid node.
pub fn divergence_report(q: &Expr, v_hat: &Expr, r0: f64, r_max: f64, n: usize) -> Result<DivergenceReport> {
    if !(r0 > 0.0 && r_max > r0 && n >= 2) {
        return Err(SpectralError::Invalid("need 0 < R < r_max and n >= 2".into()));
    }
    let ratio = (r_max / r0).ln();
    let radii: Vec<f64> = (0..=n).map(|k| r0 * (ratio * k as f64 / n as f64).exp()).collect();
    for &r in &radii {
        let v = eval_r(q, r)?;
        if v > 0.0 {
            return Err(SpectralError::SignViolation { r, value: v });
        }
    }
    // tail integrals from the far end backwards, one panel at a time
    let mut tails = vec![0.0; radii.len()];
    tails[n] = tail_integral(v_hat, r_max)?;
    for k in (0..n).rev() {
        let piece = integrate(
            |s| v_hat.eval(&[s]).map(|v| 1.0 / v).unwrap_or(f64::NAN),
            radii[k],
            radii[k + 1],
            QUAD_REL_TOL,
            0.0,
        )
        .ok_or(SpectralError::NotIntegrable { r: radii[k] })?;
        tails[k] = tails[k + 1] + piece;
    }
    let integrand = |s: f64| -> f64 {
        let qv = q.eval(&[s]).unwrap_or(f64::NAN).abs().sqrt();
        let v = v_hat.eval(&[s]).unwrap_or(f64::NAN);
        qv - 1.0 / (2.0 * v * tail_at(v_hat, s, &radii, &tails))
    };
    let mut partial = vec![0.0; radii.len()];
    for k in 0..n {
        let piece = integrate(integrand, radii[k], radii[k + 1], 1e-9, 1e-12)
            .ok_or(SpectralError::NotIntegrable { r: radii[k] })?;
        partial[k + 1] = partial[k] + piece;
    }
    let at = |r: f64| -> Option<f64> {
        if r < r0 * (1.0 - 1e-12) {
            return None;
        }
        let k = radii.partition_point(|&x| x < r).min(n);
        let k = if k > 0 && (radii[k] - r).abs() > (radii[k - 1] - r).abs() { k - 1 } else { k };
        Some(partial[k])
    };
    let ln10 = std::f64::consts::LN_10;
    let p_end = partial[n];
    let last = at(r_max / 10.0).map(|p| (p_end - p) / ln10);
    let prev = match (at(r_max / 10.0), at(r_max / 100.0)) {
        (Some(a), Some(b)) => Some((a - b) / ln10),
        _ => None,
    };
    let last_slope = last.unwrap_or_else(|| (p_end - partial[0]) / ratio);
    let verdict = match (last, prev) {
        (Some(l), _) if l.abs() <= FLAT_SLOPE => Verdict::Bounded,
        (Some(l), Some(p)) if l > FLAT_SLOPE && l >= 0.9 * p => Verdict::Diverging,
        (Some(l), Some(p)) if l.abs() < 0.1 * p.abs() => Verdict::Bounded,
        _ => Verdict::InconclusiveAtHorizon,
    };
    Ok(DivergenceReport {
        radii,
        partial,
        last_decade_slope: last_slope,
        previous_decade_slope: prev,
        verdict,
        note: "finite-horizon numeric diagnostic, not a proof",
    })
}

/// `∫_s^∞ 1/v̂` for `s` inside the grid, from the nearest node above.
fn tail_at(v_hat: &Expr, s: f64, radii: &[f64], tails: &[f64]) -> f64 {
    let k = radii.partition_point(|&x| x < s).min(radii.len() - 1);
    if radii[k] == s {
        return tails[k];
    }
    let extra = integrate(|t| v_hat.eval(&[t]).map(|v| 1.0 / v).unwrap_or(f64::NAN), s, radii[k], 1e-12, 0.0)
        .unwrap_or(f64::NAN);
    tails[k] + extra
}

/// `−(1/v)(v u′)′ + q u` on `(0, R)` with `u(R) = 0`.
#[derive(Debug, Clone)]
pub struct RadialModel {
    /// Boundary-area function up to a constant factor.
    pub v: Expr,
    pub q: Expr,
}

impl RadialModel {
    /// Flat `ℝ^m`: `v = r^{m−1}`, `q = 0`.
    pub fn flat(m: usize) -> RadialModel {
        RadialModel {
            v: Expr::var(0).powi(m as i32 - 1),
            q: Expr::zero(),
        }
    }

    /// Warped `dr² + w² g_{S^{m−1}}`: `v = w^{m−1}`.
    pub fn warped(m: usize, w: Expr, q: Expr) -> RadialModel {
        RadialModel {
            v: w.powi(m as i32 - 1),
            q,
        }
    }

    pub fn with_potential(mut self, q: Expr) -> RadialModel {
        self.q = q;
        self
    }
}

/// Symmetric tridiagonal matrix `(diag, off)`.
fn sturm_count(diag: &[f64], off2: &[f64], x: f64) -> usize {
    // number of eigenvalues below x
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..diag.len() {
        let o = if i == 0 { 0.0 } else { off2[i - 1] };
        d = diag[i] - x - if i == 0 { 0.0 } else { o / d };
        if d == 0.0 {
            d = f64::EPSILON * (diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if d < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix by bisection.
pub fn smallest_eigenvalue(diag: &[f64], off: &[f64]) -> f64 {
    let n = diag.len();
    let off2: Vec<f64> = off.iter().map(|o| o * o).collect();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, &off2, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// First Dirichlet eigenvalue on `(0, R)` from a cell-centred, second-order
/// symmetric discretization with `n` cells.
pub fn lambda1_radial(model: &RadialModel, radius: f64, n: usize) -> Result<f64> {
    if n < 100 {
        return Err(SpectralError::Invalid("n_grid must be at least 100".into()));
    }
    if !(radius > 0.0) {
        return Err(SpectralError::Invalid("radius must be positive".into()));
    }
    let h = radius / n as f64;
    let mut vc = Vec::with_capacity(n);
    let mut qc = Vec::with_capacity(n);
    let mut vf = Vec::with_capacity(n + 1);
    for i in 0..n {
        let r = (i as f64 + 0.5) * h;
        let v = eval_r(&model.v, r)?;
        if !(v > 0.0) {
            return Err(SpectralError::NonSpd { r, value: v });
        }
        vc.push(v);
        qc.push(eval_r(&model.q, r)?);
    }
    for i in 0..=n {
        let r = i as f64 * h;
        let v = eval_r(&model.v, r)?;
        if v < 0.0 || !v.is_finite() {
            return Err(SpectralError::NonSpd { r, value: v });
        }
        vf.push(v);
    }
    // A u = λ B u with B = diag(vc); symmetrize with B^{-1/2}
    let h2 = h * h;
    let mut diag = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n - 1);
    for i in 0..n {
        let right = if i + 1 < n { vf[i + 1] } else { 2.0 * vf[n] };
        diag.push((vf[i] + right) / (h2 * vc[i]) + qc[i]);
        if i + 1 < n {
            off.push(-vf[i + 1] / (h2 * (vc[i] * vc[i + 1]).sqrt()));
        }
    }
    Ok(smallest_eigenvalue(&diag, &off))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn quadrature_basics() {
        let v = integrate(|x| x.sin(), 0.0, PI, 1e-12, 0.0).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let v = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10, 0.0).unwrap();
        assert!((v - 2.0).abs() < 1e-8);
    }

    #[test]
    fn chi_closed_forms() {
        let e = parse_radial("exp(2*r)").unwrap();
        for r in [0.1, 1.0, 3.0] {
            assert!((critical_curve(&e, r).unwrap() - 1.0).abs() < 1e-8);
        }
        let p = parse_radial("r^3").unwrap();
        for r in [0.5, 2.0, 10.0] {
            let want = (2.0f64 / (2.0 * r)).powi(2);
            assert!((critical_curve(&p, r).unwrap() - want).abs() < 1e-8 * want.max(1.0));
        }
    }

    #[test]
    fn chi_not_integrable() {
        let p = parse_radial("r").unwrap();
        assert!(matches!(critical_curve(&p, 1.0), Err(SpectralError::NotIntegrable { .. })));
    }

    #[test]
    fn ball_eigenvalue() {
        let l = lambda1_radial(&RadialModel::flat(3), 1.0, 2000).unwrap();
        assert!((l / (PI * PI) - 1.0).abs() < 5e-3, "{l}");
        let shifted = lambda1_radial(&RadialModel::flat(3).with_potential(Expr::constant(2.5)), 1.0, 2000).unwrap();
        assert!((shifted - l - 2.5).abs() < 1e-8);
    }

    #[test]
    fn ball_eigenvalue_converges_second_order() {
        let exact = PI * PI;
        let e1 = (lambda1_radial(&RadialModel::flat(3), 1.0, 200).unwrap() - exact).abs();
        let e2 = (lambda1_radial(&RadialModel::flat(3), 1.0, 400).unwrap() - exact).abs();
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn divergence_verdicts() {
        let v = parse_radial("r^2").unwrap();
        let r = divergence_report(&Expr::constant(-1.0), &v, 1.0, 1000.0, 60).unwrap();
        assert_eq!(r.verdict, Verdict::Diverging);
        let q = parse_radial("-1/(4*r^2)").unwrap();
        let r = divergence_report(&q, &v, 1.0, 1000.0, 60).unwrap();
        assert_eq!(r.verdict, Verdict::Bounded);
        assert!(r.partial.iter().all(|p| p.abs() < 1e-8));
        assert!(matches!(
            divergence_report(&Expr::constant(0.5), &v, 1.0, 10.0, 10),
            Err(SpectralError::SignViolation { .. })
        ));
    }
}

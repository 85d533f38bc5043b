//! Builders for the example corpus: warped products, space forms, solitons
//! and degenerate structures obtained from Einstein metrics.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::chart::{Chart, Domain, Sampler};
use crate::curvature::LocalGeometry;
use crate::einstein_type::{Coefficient, EinsteinTypeStructure, Preset};
use crate::error::{GeomError, Result};
use crate::expr::{parse, Expr};

/// Angular margin keeping sphere coordinates away from their poles.
pub const POLE_MARGIN: f64 = 0.3;

/// Fiber metric of a warped product.
#[derive(Debug, Clone, PartialEq)]
pub enum Fiber {
    /// Euclidean coordinates `y1..yn` on `[-1/2, 1/2]^n`.
    Flat,
    /// Unit round sphere in polar angles `t1..tn`.
    Sphere,
    /// Unit hyperbolic space in the half-space model `y1..yn`, `yn > 0`.
    Hyperbolic,
    /// Diagonal fiber metric given by formula strings.
    Declared {
        coords: Vec<String>,
        diag: Vec<String>,
        domain: Vec<(f64, f64)>,
    },
}

/// `dr² + w(r)² g_fiber` on `r ∈ r_interval`.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedSpec {
    pub fiber: Fiber,
    pub fiber_dim: usize,
    /// Expression in the single variable `r` (index 0).
    pub warp: Expr,
    pub r_interval: (f64, f64),
}

impl WarpedSpec {
    pub fn new(fiber: Fiber, fiber_dim: usize, warp: &str, r_interval: (f64, f64)) -> Result<WarpedSpec> {
        Ok(WarpedSpec {
            fiber,
            fiber_dim,
            warp: parse(warp, &["r"])?.simplify(),
            r_interval,
        })
    }
}

fn fiber_parts(fiber: &Fiber, n: usize) -> Result<(Vec<String>, Vec<String>, Vec<(f64, f64)>)> {
    Ok(match fiber {
        Fiber::Flat => (
            (1..=n).map(|i| format!("y{i}")).collect(),
            vec!["1".into(); n],
            vec![(-0.5, 0.5); n],
        ),
        Fiber::Sphere => {
            let coords: Vec<String> = (1..=n).map(|i| format!("t{i}")).collect();
            let diag = (0..n)
                .map(|k| {
                    if k == 0 {
                        "1".to_string()
                    } else {
                        coords[..k].iter().map(|c| format!("sin({c})^2")).collect::<Vec<_>>().join("*")
                    }
                })
                .collect();
            (coords, diag, vec![(POLE_MARGIN, PI - POLE_MARGIN); n])
        }
        Fiber::Hyperbolic => {
            let coords: Vec<String> = (1..=n).map(|i| format!("y{i}")).collect();
            let diag = vec![format!("1/y{n}^2"); n];
            let mut domain = vec![(-0.5, 0.5); n];
            domain[n - 1] = (0.5, 1.5);
            (coords, diag, domain)
        }
        Fiber::Declared { coords, diag, domain } => {
            if coords.len() != n || diag.len() != n || domain.len() != n {
                return Err(GeomError::InvalidChart(format!(
                    "declared fiber needs {n} coordinates, entries and intervals"
                )));
            }
            (coords.clone(), diag.clone(), domain.clone())
        }
    })
}

/// Chart for `dr² + w(r)² g_fiber` with coordinates `(r, fiber...)`.
pub fn warped_chart(spec: &WarpedSpec) -> Result<Chart> {
    let n = spec.fiber_dim;
    if n == 0 {
        return Err(GeomError::Dimension("fiber dimension must be positive".into()));
    }
    if spec.warp.max_var().is_some_and(|v| v > 0) {
        return Err(GeomError::InvalidChart("warp may depend on r only".into()));
    }
    let (a, b) = spec.r_interval;
    for k in 0..=64 {
        let r = a + (b - a) * k as f64 / 64.0;
        let value = spec.warp.eval(&[r])?;
        if !(value > 0.0) {
            return Err(GeomError::NonpositiveWarp { r, value });
        }
    }
    let (fcoords, fdiag, fdomain) = fiber_parts(&spec.fiber, n)?;
    let mut coords = vec!["r".to_string()];
    coords.extend(fcoords);
    let w2 = spec.warp.clone().powi(2);
    let mut diag = vec![Expr::one()];
    for d in &fdiag {
        diag.push(Expr::mul(w2.clone(), parse(d, &coords)?).simplify());
    }
    let mut domain = vec![spec.r_interval];
    domain.extend(fdomain);
    Chart::diagonal(coords, diag, Domain::new(domain)?)
}

/// Unit round sphere `S^m` in geodesic polar coordinates.
pub fn sphere(m: usize) -> Result<Chart> {
    warped_chart(&WarpedSpec::new(Fiber::Sphere, m - 1, "sin(r)", (POLE_MARGIN, PI - POLE_MARGIN))?)
}

/// Unit hyperbolic space `H^m` in geodesic polar coordinates.
pub fn hyperbolic(m: usize) -> Result<Chart> {
    warped_chart(&WarpedSpec::new(Fiber::Sphere, m - 1, "sinh(r)", (0.3, 1.5))?)
}

pub fn flat(m: usize) -> Chart {
    Chart::euclidean(m)
}

/// Structure with constant `f`, checking only the Einstein condition.
pub fn einstein_structure(chart: Chart) -> Result<EinsteinTypeStructure> {
    EinsteinTypeStructure::from_preset(Preset::Einstein, Arc::new(chart), Expr::zero(), Expr::zero())
}

/// Warped chart and `α = 0` structure `Hess f + μ df⊗df = φ g` with
/// warp `f'(r)/f'(0) e^{μ f(r)}` and `φ = (Δf + μ|∇f|²)/m`.
pub fn alpha0_warped_structure(
    f: &str,
    mu: Coefficient,
    fiber: Fiber,
    fiber_dim: usize,
    r_interval: (f64, f64),
) -> Result<EinsteinTypeStructure> {
    let fr = parse(f, &["r"])?.simplify();
    let df = fr.diff(0).simplify();
    let slope0 = df.eval(&[0.0])?;
    if slope0 == 0.0 {
        return Err(GeomError::ZeroInitialSlope);
    }
    let (a, b) = r_interval;
    for k in 0..=256 {
        let r = a + (b - a) * k as f64 / 256.0;
        if df.eval(&[r])? * slope0 <= 0.0 {
            return Err(GeomError::SignChange { r });
        }
    }
    let warp = Expr::mul(
        Expr::div(df, Expr::constant(slope0)),
        Expr::mul(Expr::constant(mu.value()), fr.clone()).exp(),
    )
    .simplify();
    let chart = warped_chart(&WarpedSpec {
        fiber,
        fiber_dim,
        warp,
        r_interval,
    })?;
    let m = chart.dim() as f64;
    let phi = Expr::div(
        Expr::add(
            chart.laplacian_expr(&fr),
            Expr::mul(Expr::constant(mu.value()), chart.grad_norm2_expr(&fr)),
        ),
        Expr::constant(m),
    )
    .simplify();
    let c = Coefficient::integer;
    EinsteinTypeStructure::new(Arc::new(chart), [c(0), c(1), mu, c(0)], phi, fr)
}

/// Flat `ℝ^m`, `f = λ₀|x|²/2`, `Ric + Hess f = λ₀ g`.
pub fn gaussian_soliton(m: usize, lambda0: Coefficient) -> Result<EinsteinTypeStructure> {
    if m < 3 {
        return Err(GeomError::Dimension("gaussian soliton needs m >= 3".into()));
    }
    let chart = Chart::euclidean(m);
    let r2 = Expr::sum((0..m).map(|i| Expr::var(i).powi(2)));
    let f = Expr::mul(Expr::constant(lambda0.value() / 2.0), r2).simplify();
    EinsteinTypeStructure::from_preset(Preset::RicciSoliton, Arc::new(chart), Expr::constant(lambda0.value()), f)
}

/// Max scaled `|Ric − (S/m) g|` over the sample points.
pub fn einstein_deviation(chart: &Chart, points: &[Vec<f64>]) -> Result<(f64, f64)> {
    let m = chart.dim() as f64;
    let mut dev = 0.0f64;
    let mut lam = 0.0;
    for (k, p) in points.iter().enumerate() {
        let geo = LocalGeometry::at(chart, p)?;
        let t = geo.ricci.axpy(-geo.scalar / m, &geo.metric.g)?;
        dev = dev.max(t.max_abs() / geo.ricci.max_abs().max(1.0));
        if k == 0 {
            lam = geo.scalar / m;
        }
    }
    Ok((dev, lam))
}

/// Degenerate structure on `g = e^{−2af} g_E` where `g_E` is Einstein with
/// `Ric = Λ g_E`: `α = 1`, `β = −(m−2)a`, `μ = (m−2)a²`, `ρ = 1/(m−1)` and
/// `λ = −aΔf − Λ e^{2af}/(m−1)`, with `Δ` taken in `g`.
pub fn degenerate_from_einstein(einstein: &Chart, f: &Expr, a: Coefficient) -> Result<EinsteinTypeStructure> {
    let m = einstein.dim();
    if m < 3 {
        return Err(GeomError::Dimension("degenerate structures need m >= 3".into()));
    }
    let points = Sampler::default().sample(einstein.domain(), 8);
    let (dev, big_lambda) = einstein_deviation(einstein, &points)?;
    if dev > 1e-8 {
        return Err(GeomError::NotEinstein { deviation: dev });
    }
    let av = a.value();
    let factor = Expr::mul(Expr::constant(-2.0 * av), f.clone()).exp();
    let chart = einstein.conformal(&factor)?;
    let mm2 = Coefficient::integer(m as i64 - 2);
    let beta = -(mm2 * a);
    let mu = mm2 * a * a;
    let rho = Coefficient::ratio(1, m as i64 - 1);
    let lambda = Expr::sub(
        Expr::mul(Expr::constant(-av), chart.laplacian_expr(f)),
        Expr::mul(
            Expr::constant(big_lambda / (m as f64 - 1.0)),
            Expr::mul(Expr::constant(2.0 * av), f.clone()).exp(),
        ),
    )
    .simplify();
    EinsteinTypeStructure::new(Arc::new(chart), [Coefficient::integer(1), beta, mu, rho], lambda, f.clone())
}

/// Product `S^k × ℝ^j` with `f = |x|²/2` on the flat factor, a shrinking
/// Ricci soliton with `λ = 1` when the sphere has radius `√(k−1)`.
pub fn cylinder_soliton(k: usize, j: usize) -> Result<EinsteinTypeStructure> {
    let radius2 = (k - 1) as f64;
    let mut coords: Vec<String> = (1..=k).map(|i| format!("t{i}")).collect();
    coords.extend((1..=j).map(|i| format!("x{i}")));
    let mut diag = Vec::new();
    for s in 0..k {
        let mut e = format!("{radius2}");
        for c in &coords[..s] {
            e.push_str(&format!("*sin({c})^2"));
        }
        diag.push(e);
    }
    diag.extend(std::iter::repeat("1".to_string()).take(j));
    let mut domain = vec![(POLE_MARGIN, PI - POLE_MARGIN); k];
    domain.extend(std::iter::repeat((-1.0, 1.0)).take(j));
    let cs: Vec<&str> = coords.iter().map(String::as_str).collect();
    let ds: Vec<&str> = diag.iter().map(String::as_str).collect();
    let chart = Chart::from_diagonal_strs(&cs, &ds, domain)?;
    let f = coords[k..].iter().map(|c| format!("{c}^2")).collect::<Vec<_>>().join(" + ");
    let f = chart.parse(&format!("({f})/2"))?.simplify();
    EinsteinTypeStructure::from_preset(Preset::RicciSoliton, Arc::new(chart), Expr::one(), f)
}

/// `dr² + e^{2r} g_{S^n}` with `f = −e^{−r}`: `Ric + (n−1) df⊗df = λ g`
/// with `λ = (n−1)e^{−2r} − n`, a `β = 0` structure.
pub fn beta_zero_warped(m: usize) -> Result<EinsteinTypeStructure> {
    let n = m - 1;
    let chart = warped_chart(&WarpedSpec::new(Fiber::Sphere, n, "exp(r)", (0.2, 1.2))?)?;
    let lambda = chart.parse(&format!("{}*exp(-2*r) - {n}", n - 1))?.simplify();
    let f = chart.parse("-exp(-r)")?.simplify();
    let c = Coefficient::integer;
    EinsteinTypeStructure::new(Arc::new(chart), [c(1), c(0), c(n as i64 - 1), c(0)], lambda, f)
}

/// Structure on a given chart from formula strings.
fn on_chart(chart: Chart, preset: Preset, lambda: &str, f: &str) -> Result<EinsteinTypeStructure> {
    let l = chart.parse(lambda)?.simplify();
    let f = chart.parse(f)?.simplify();
    EinsteinTypeStructure::from_preset(preset, Arc::new(chart), l, f)
}

/// `S² × ℝ` fiber, which is not conformally flat once warped.
fn product_fiber() -> Fiber {
    Fiber::Declared {
        coords: vec!["t1".into(), "t2".into(), "z".into()],
        diag: vec!["1".into(), "sin(t1)^2".into(), "4".into()],
        domain: vec![(POLE_MARGIN, PI - POLE_MARGIN), (POLE_MARGIN, PI - POLE_MARGIN), (-0.5, 0.5)],
    }
}

/// A named corpus structure.
pub struct CorpusEntry {
    pub name: &'static str,
    /// Which special case or statement the entry exercises.
    pub case: &'static str,
    pub build: fn() -> Result<EinsteinTypeStructure>,
}

impl std::fmt::Debug for CorpusEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CorpusEntry").field("name", &self.name).finish()
    }
}

fn half() -> Coefficient {
    Coefficient::ratio(1, 2)
}

static CORPUS: &[CorpusEntry] = &[
    CorpusEntry {
        name: "alpha0_warp_cubic",
        case: "alpha = 0 warped form, f = r + r^3/3, mu = 0, S2 x R fiber",
        build: || alpha0_warped_structure("r + r^3/3", Coefficient::integer(0), product_fiber(), 3, (0.2, 1.2)),
    },
    CorpusEntry {
        name: "alpha0_warp_cubic_mu",
        case: "alpha = 0 warped form, f = r + r^3/3, mu = 1/2, S2 x R fiber",
        build: || alpha0_warped_structure("r + r^3/3", half(), product_fiber(), 3, (0.2, 1.2)),
    },
    CorpusEntry {
        name: "alpha0_warp_exp",
        case: "alpha = 0 warped form (conformal gradient soliton), f = e^r - 1, mu = 0",
        build: || alpha0_warped_structure("exp(r) - 1", Coefficient::integer(0), Fiber::Sphere, 3, (0.2, 1.2)),
    },
    CorpusEntry {
        name: "alpha0_warp_exp_mu",
        case: "alpha = 0 warped form, f = e^r - 1, mu = 1/2",
        build: || alpha0_warped_structure("exp(r) - 1", half(), Fiber::Sphere, 3, (0.2, 1.2)),
    },
    CorpusEntry {
        name: "beta0_warp3",
        case: "beta = 0, warped e^r over S2 with f = -e^-r",
        build: || beta_zero_warped(3),
    },
    CorpusEntry {
        name: "beta0_warp4",
        case: "beta = 0, warped e^r over S3 with f = -e^-r",
        build: || beta_zero_warped(4),
    },
    CorpusEntry {
        name: "cylinder3",
        case: "Ricci soliton S2 x R, D != 0",
        build: || cylinder_soliton(2, 1),
    },
    CorpusEntry {
        name: "cylinder4",
        case: "Ricci soliton S2 x R2, D != 0",
        build: || cylinder_soliton(2, 2),
    },
    CorpusEntry {
        name: "flat3",
        case: "Einstein manifold, flat R3",
        build: || einstein_structure(flat(3)),
    },
    CorpusEntry {
        name: "flat4",
        case: "Einstein manifold, flat R4",
        build: || einstein_structure(flat(4)),
    },
    CorpusEntry {
        name: "flat4_degenerate",
        case: "conformally Einstein (degenerate) from flat R4, f = x1, a = 1",
        build: || {
            let e = flat(4);
            let f = e.parse("x1")?;
            degenerate_from_einstein(&e, &f, Coefficient::integer(1))
        },
    },
    CorpusEntry {
        name: "gaussian3",
        case: "Ricci soliton, Gaussian shrinker on R3",
        build: || gaussian_soliton(3, half()),
    },
    CorpusEntry {
        name: "gaussian4",
        case: "Ricci soliton, Gaussian shrinker on R4",
        build: || gaussian_soliton(4, half()),
    },
    CorpusEntry {
        name: "hyperbolic3",
        case: "Einstein manifold, unit H3",
        build: || einstein_structure(hyperbolic(3)?),
    },
    CorpusEntry {
        name: "quasi_einstein_hyperbolic3",
        case: "quasi-Einstein, H3 with f = -2 log cosh r, k = 2",
        build: || on_chart(hyperbolic(3)?, Preset::QuasiEinstein { k: 2 }, "-4", "-2*log(cosh(r))"),
    },
    CorpusEntry {
        name: "rho_einstein_gaussian3",
        case: "rho-Einstein soliton, rho = 1/4, Gaussian on R3",
        build: || {
            let chart = Arc::new(flat(3));
            let f = chart.parse("(x1^2 + x2^2 + x3^2)/4")?;
            EinsteinTypeStructure::from_preset(
                Preset::RhoEinstein { rho: Coefficient::ratio(1, 4) },
                chart,
                Expr::constant(0.5),
                f,
            )
        },
    },
    CorpusEntry {
        name: "ricci_almost_sphere4",
        case: "Ricci almost soliton, S4 with f = cos r",
        build: || on_chart(sphere(4)?, Preset::RicciAlmostSoliton, "3 - cos(r)", "cos(r)"),
    },
    CorpusEntry {
        name: "sphere3",
        case: "Einstein manifold, unit S3",
        build: || einstein_structure(sphere(3)?),
    },
    CorpusEntry {
        name: "sphere4",
        case: "Einstein manifold, unit S4",
        build: || einstein_structure(sphere(4)?),
    },
    CorpusEntry {
        name: "sphere4_degenerate",
        case: "conformally Einstein (degenerate) from S4, f = cos r, a = 1",
        build: || {
            let e = sphere(4)?;
            let f = e.parse("cos(r)")?;
            degenerate_from_einstein(&e, &f, Coefficient::integer(1))
        },
    },
    CorpusEntry {
        name: "yamabe_flat3",
        case: "Yamabe soliton, flat R3 with f = |x|^2/2",
        build: || on_chart(flat(3), Preset::YamabeSoliton, "1", "(x1^2 + x2^2 + x3^2)/2"),
    },
    CorpusEntry {
        name: "yamabe_quasi_hyperbolic3",
        case: "Yamabe quasi-soliton, H3 with f = -2 log cosh r, k = 2",
        build: || on_chart(hyperbolic(3)?, Preset::YamabeQuasiSoliton { k: 2 }, "4", "-2*log(cosh(r))"),
    },
];

/// The corpus, sorted by name.
pub fn corpus() -> &'static [CorpusEntry] {
    CORPUS
}

pub fn corpus_entry(name: &str) -> Option<&'static CorpusEntry> {
    CORPUS.iter().find(|e| e.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::{riemann_at, scalar_at};
    use crate::einstein_type::StructureClass;

    #[test]
    fn corpus_sorted_and_unique() {
        let names: Vec<_> = CORPUS.iter().map(|e| e.name).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(names, sorted);
    }

    #[test]
    fn space_form_scalars() {
        for (chart, s) in [(sphere(3).unwrap(), 6.0), (sphere(4).unwrap(), 12.0), (hyperbolic(3).unwrap(), -6.0)] {
            let p = chart.domain().center();
            assert!((scalar_at(&chart, &p).unwrap() - s).abs() < 1e-9);
        }
    }

    #[test]
    fn trivial_warp_is_flat() {
        let c = warped_chart(&WarpedSpec::new(Fiber::Flat, 2, "1", (0.0, 1.0)).unwrap()).unwrap();
        assert!(riemann_at(&c, &[0.5, 0.0, 0.0]).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn warp_guards() {
        assert!(matches!(
            warped_chart(&WarpedSpec::new(Fiber::Flat, 2, "r - 0.5", (0.0, 1.0)).unwrap()),
            Err(GeomError::NonpositiveWarp { .. })
        ));
        assert!(matches!(
            alpha0_warped_structure("r^2", Coefficient::integer(0), Fiber::Flat, 2, (0.2, 1.0)),
            Err(GeomError::ZeroInitialSlope)
        ));
        assert!(matches!(
            alpha0_warped_structure("r - r^2", Coefficient::integer(0), Fiber::Flat, 2, (0.2, 1.0)),
            Err(GeomError::SignChange { .. })
        ));
        let s = sphere(3).unwrap().conformal(&Expr::var(1).exp()).unwrap();
        assert!(matches!(
            degenerate_from_einstein(&s, &Expr::var(0), Coefficient::integer(1)),
            Err(GeomError::NotEinstein { .. })
        ));
    }

    #[test]
    fn corpus_structures_hold() {
        for e in corpus() {
            let s = (e.build)().unwrap_or_else(|err| panic!("{}: {err}", e.name));
            for p in Sampler::default().sample(s.chart().domain(), 6) {
                let sp = s.at_light(&p).unwrap();
                assert!(sp.structure_gate() <= 1e-8, "{} at {p:?}: {}", e.name, sp.structure_gate());
            }
        }
    }

    #[test]
    fn degenerate_round_trip() {
        let s = (corpus_entry("sphere4_degenerate").unwrap().build)().unwrap();
        assert_eq!(s.classify().unwrap(), StructureClass::Degenerate);
        let p = s.chart().domain().center();
        assert!(s.conformal_einstein_residual_at(&p).unwrap().max_abs() < 1e-8);
    }
}

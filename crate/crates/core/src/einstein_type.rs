//! Gradient Einstein-type structures
//! `α Ric + β Hess f + μ df ⊗ df = (ρ S + λ) g` and their identities.

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_rational::Rational64;

use crate::chart::Chart;
use crate::curvature::{
    bach_from, curvature_fd, rel_diff, FunctionJet, LocalGeometry, ScalarFunction, SecondOrder,
};
use crate::error::{GeomError, Result};
use crate::expr::{parse, Expr, Tape};
use crate::report::{scaled, CheckReport, Observation, Tally, Tolerances};
use crate::tensorfield::{covariant_derivative, FnField, MetricAt, PointTensor, Variance};

const L: Variance = Variance::Lower;

/// Structural identities are asserted only where the scaled structure
/// residual is at most this.
pub const STRUCTURE_GATE: f64 = 1e-6;
/// `B(∇f, ·)` must be at most this for the `|D|² = div Y` form.
pub const BACH_GATE: f64 = 1e-6;
/// Relative slack for the degeneracy test when a constant is not exact.
pub const DEGENERACY_EPS: f64 = 1e-12;

/// A real constant, kept exactly when it was declared as a rational.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficient {
    exact: Option<Rational64>,
    value: f64,
}

impl Coefficient {
    pub fn ratio(num: i64, den: i64) -> Coefficient {
        let r = Rational64::new(num, den);
        Coefficient {
            exact: Some(r),
            value: *r.numer() as f64 / *r.denom() as f64,
        }
    }

    pub fn integer(n: i64) -> Coefficient {
        Coefficient::ratio(n, 1)
    }

    /// Floats are exact only when they hold an integer.
    pub fn from_f64(v: f64) -> Coefficient {
        let exact = (v.fract() == 0.0 && v.abs() < 9.0e15).then(|| Rational64::from_integer(v as i64));
        Coefficient { exact, value: v }
    }

    /// Parses `"p/q"`, an integer or a decimal exactly; other float
    /// syntaxes are accepted inexactly.
    pub fn parse(s: &str) -> std::result::Result<Coefficient, String> {
        let t = s.trim();
        if let Some((n, d)) = t.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| format!("bad numerator in `{s}`"))?;
            let d: i64 = d.trim().parse().map_err(|_| format!("bad denominator in `{s}`"))?;
            if d == 0 {
                return Err(format!("zero denominator in `{s}`"));
            }
            return Ok(Coefficient::ratio(n, d));
        }
        if let Ok(n) = t.parse::<i64>() {
            return Ok(Coefficient::integer(n));
        }
        let value: f64 = t.parse().map_err(|_| format!("`{s}` is not a number"))?;
        if !value.is_finite() {
            return Err(format!("`{s}` is not finite"));
        }
        let unsigned = t.trim_start_matches(['-', '+']);
        if let Some((ip, fp)) = unsigned.split_once('.') {
            let digits = format!("{ip}{fp}");
            if fp.len() <= 15 && digits.chars().all(|c| c.is_ascii_digit()) {
                if let Ok(n) = digits.parse::<i64>() {
                    let sign = if t.starts_with('-') { -1 } else { 1 };
                    let c = Coefficient::ratio(sign * n, 10i64.pow(fp.len() as u32));
                    return Ok(Coefficient { value, ..c });
                }
            }
        }
        Ok(Coefficient { exact: None, value })
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn exact(&self) -> Option<Rational64> {
        self.exact
    }

    pub fn is_zero(&self) -> bool {
        match self.exact {
            Some(r) => r == Rational64::from_integer(0),
            None => self.value == 0.0,
        }
    }
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.exact {
            Some(r) if *r.denom() == 1 => write!(f, "{}", r.numer()),
            Some(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            None => write!(f, "{}", self.value),
        }
    }
}

impl std::ops::Mul for Coefficient {
    type Output = Coefficient;

    fn mul(self, o: Coefficient) -> Coefficient {
        match (self.exact, o.exact) {
            (Some(a), Some(b)) => Coefficient::ratio(*(a * b).numer(), *(a * b).denom()),
            _ => Coefficient { exact: None, value: self.value * o.value },
        }
    }
}

impl std::ops::Neg for Coefficient {
    type Output = Coefficient;

    fn neg(self) -> Coefficient {
        Coefficient { exact: self.exact.map(|r| -r), value: -self.value }
    }
}

impl From<i64> for Coefficient {
    fn from(n: i64) -> Self {
        Coefficient::integer(n)
    }
}

/// Classification label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StructureClass {
    /// `f` is constant, so the equation only constrains the metric.
    TrivialCheck,
    Degenerate,
    Nondegenerate,
    BetaZero,
    AlphaZero,
}

impl StructureClass {
    pub fn name(self) -> &'static str {
        match self {
            StructureClass::TrivialCheck => "trivial-check",
            StructureClass::Degenerate => "degenerate",
            StructureClass::Nondegenerate => "nondegenerate",
            StructureClass::BetaZero => "beta_zero",
            StructureClass::AlphaZero => "alpha_zero",
        }
    }
}

impl fmt::Display for StructureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `β² = (m−2)αμ`, exactly when all three constants are exact.
pub fn degeneracy_holds(m: usize, alpha: Coefficient, beta: Coefficient, mu: Coefficient) -> bool {
    if let (Some(a), Some(b), Some(u)) = (alpha.exact, beta.exact, mu.exact) {
        // cross-multiplied in i128 so small rationals never overflow
        let w = |x: i64| x as i128;
        let lhs = w(*b.numer()).checked_mul(w(*b.numer())).and_then(|x| x.checked_mul(w(*a.denom()) * w(*u.denom())));
        let rhs = (w(m as i64 - 2) * w(*a.numer()) * w(*u.numer())).checked_mul(w(*b.denom()) * w(*b.denom()));
        if let (Some(l), Some(r)) = (lhs, rhs) {
            return l == r;
        }
    }
    let lhs = beta.value * beta.value;
    let rhs = (m as f64 - 2.0) * alpha.value * mu.value;
    (lhs - rhs).abs() <= DEGENERACY_EPS * lhs.abs().max(rhs.abs()).max(1.0)
}

/// Label from the constants alone.
pub fn parameter_class(
    m: usize,
    alpha: Coefficient,
    beta: Coefficient,
    mu: Coefficient,
) -> Result<StructureClass> {
    if alpha.is_zero() && beta.is_zero() && mu.is_zero() {
        return Err(GeomError::InvalidParameters);
    }
    Ok(if beta.is_zero() {
        StructureClass::BetaZero
    } else if alpha.is_zero() {
        StructureClass::AlphaZero
    } else if degeneracy_holds(m, alpha, beta, mu) {
        StructureClass::Degenerate
    } else {
        StructureClass::Nondegenerate
    })
}

/// The named special cases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preset {
    Einstein,
    RicciSoliton,
    RicciAlmostSoliton,
    YamabeSoliton,
    /// `μ = −1/k`
    YamabeQuasiSoliton { k: i64 },
    ConformalGradientSoliton,
    /// `μ = −1/k`
    QuasiEinstein { k: i64 },
    RhoEinstein { rho: Coefficient },
}

impl Preset {
    pub const NAMES: [&'static str; 8] = [
        "einstein",
        "ricci_soliton",
        "ricci_almost_soliton",
        "yamabe_soliton",
        "yamabe_quasi_soliton",
        "conformal_gradient_soliton",
        "quasi_einstein",
        "rho_einstein",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Einstein => "einstein",
            Preset::RicciSoliton => "ricci_soliton",
            Preset::RicciAlmostSoliton => "ricci_almost_soliton",
            Preset::YamabeSoliton => "yamabe_soliton",
            Preset::YamabeQuasiSoliton { .. } => "yamabe_quasi_soliton",
            Preset::ConformalGradientSoliton => "conformal_gradient_soliton",
            Preset::QuasiEinstein { .. } => "quasi_einstein",
            Preset::RhoEinstein { .. } => "rho_einstein",
        }
    }

    /// `(α, β, μ, ρ)` in dimension `m`.
    pub fn parameters(&self, m: usize) -> [Coefficient; 4] {
        let c = Coefficient::integer;
        match *self {
            Preset::Einstein => [c(1), c(0), c(0), Coefficient::ratio(1, m as i64)],
            Preset::RicciSoliton | Preset::RicciAlmostSoliton => [c(1), c(1), c(0), c(0)],
            Preset::YamabeSoliton => [c(0), c(1), c(0), c(1)],
            Preset::YamabeQuasiSoliton { k } => [c(0), c(1), Coefficient::ratio(-1, k), c(1)],
            Preset::ConformalGradientSoliton => [c(0), c(1), c(0), c(0)],
            Preset::QuasiEinstein { k } => [c(1), c(1), Coefficient::ratio(-1, k), c(0)],
            Preset::RhoEinstein { rho } => [c(1), c(1), c(0), rho],
        }
    }

    /// Whether the preset requires a constant `λ`.
    pub fn constant_lambda(&self) -> bool {
        !matches!(self, Preset::RicciAlmostSoliton | Preset::ConformalGradientSoliton)
    }
}

/// `λ` with its gradient compiled for evaluation.
#[derive(Debug, Clone)]
struct LambdaFn {
    expr: Expr,
    tape: Tape,
}

impl LambdaFn {
    fn new(expr: Expr, m: usize) -> LambdaFn {
        let mut all = vec![expr.clone()];
        all.extend((0..m).map(|i| expr.diff(i)));
        LambdaFn {
            tape: Tape::compile(&all),
            expr,
        }
    }
}

/// `(g, f, α, β, μ, ρ, λ)` on a chart.
#[derive(Debug)]
pub struct EinsteinTypeStructure {
    chart: Arc<Chart>,
    pub alpha: Coefficient,
    pub beta: Coefficient,
    pub mu: Coefficient,
    pub rho: Coefficient,
    f: ScalarFunction,
    lambda: LambdaFn,
    conformal: OnceLock<std::result::Result<Chart, String>>,
}

impl Clone for EinsteinTypeStructure {
    fn clone(&self) -> Self {
        EinsteinTypeStructure {
            chart: self.chart.clone(),
            alpha: self.alpha,
            beta: self.beta,
            mu: self.mu,
            rho: self.rho,
            f: self.f.clone(),
            lambda: self.lambda.clone(),
            conformal: OnceLock::new(),
        }
    }
}

impl EinsteinTypeStructure {
    pub fn new(
        chart: Arc<Chart>,
        params: [Coefficient; 4],
        lambda: Expr,
        f: Expr,
    ) -> Result<EinsteinTypeStructure> {
        let [alpha, beta, mu, rho] = params;
        let m = chart.dim();
        parameter_class(m, alpha, beta, mu)?;
        for (what, e) in [("lambda", &lambda), ("f", &f)] {
            if let Some(v) = e.max_var() {
                if v >= m {
                    return Err(GeomError::InvalidChart(format!(
                        "{what} references coordinate index {v} beyond dimension {m}"
                    )));
                }
            }
        }
        Ok(EinsteinTypeStructure {
            f: ScalarFunction::new(f, m),
            lambda: LambdaFn::new(lambda, m),
            chart,
            alpha,
            beta,
            mu,
            rho,
            conformal: OnceLock::new(),
        })
    }

    /// Structure from formula strings over the chart coordinates.
    pub fn from_strs(chart: Arc<Chart>, params: [Coefficient; 4], lambda: &str, f: &str) -> Result<Self> {
        let l = parse(lambda, chart.coords())?.simplify();
        let f = parse(f, chart.coords())?.simplify();
        EinsteinTypeStructure::new(chart, params, l, f)
    }

    pub fn from_preset(preset: Preset, chart: Arc<Chart>, lambda: Expr, f: Expr) -> Result<Self> {
        if preset.constant_lambda() && !lambda.is_constant() {
            return Err(GeomError::WrongClass(format!("{} needs a constant lambda", preset.name())));
        }
        let params = preset.parameters(chart.dim());
        EinsteinTypeStructure::new(chart, params, lambda, f)
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn chart_arc(&self) -> Arc<Chart> {
        self.chart.clone()
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn f(&self) -> &Expr {
        self.f.expr()
    }

    pub fn lambda(&self) -> &Expr {
        &self.lambda.expr
    }

    pub fn params(&self) -> [Coefficient; 4] {
        [self.alpha, self.beta, self.mu, self.rho]
    }

    /// Label; `trivial-check` when `f` is constant.
    pub fn classify(&self) -> Result<StructureClass> {
        let by_params = parameter_class(self.dim(), self.alpha, self.beta, self.mu)?;
        if self.f().is_constant() {
            return Ok(StructureClass::TrivialCheck);
        }
        Ok(by_params)
    }

    pub fn parameter_class(&self) -> StructureClass {
        parameter_class(self.dim(), self.alpha, self.beta, self.mu).expect("validated at construction")
    }

    pub fn is_degenerate(&self) -> bool {
        !self.beta.is_zero() && !self.alpha.is_zero() && degeneracy_holds(self.dim(), self.alpha, self.beta, self.mu)
    }

    /// `β − (m−2)αμ/β`
    pub fn bracket(&self) -> Result<f64> {
        if self.beta.is_zero() {
            return Err(GeomError::BetaZero);
        }
        if self.is_degenerate() {
            return Ok(0.0);
        }
        let (a, b, u) = (self.alpha.value, self.beta.value, self.mu.value);
        Ok(b - (self.dim() as f64 - 2.0) * a * u / b)
    }

    /// Everything needed at a point, including `∇Rm`.
    pub fn at(&self, p: &[f64]) -> Result<StructurePoint<'_>> {
        self.point(p, true)
    }

    /// Point data without curvature derivatives.
    pub fn at_light(&self, p: &[f64]) -> Result<StructurePoint<'_>> {
        self.point(p, false)
    }

    fn point(&self, p: &[f64], deriv: bool) -> Result<StructurePoint<'_>> {
        let geo = if deriv {
            LocalGeometry::with_derivatives(&self.chart, p)?
        } else {
            LocalGeometry::at(&self.chart, p)?
        };
        let jet = geo.function_jet(&self.f)?;
        let vals = self.lambda.tape.eval(p)?;
        Ok(StructurePoint {
            s: self,
            lambda: vals[0],
            dlambda: vals[1..].to_vec(),
            grad_up: jet.grad_up(&geo.metric),
            geo,
            jet,
        })
    }

    pub fn residual_at(&self, p: &[f64]) -> Result<PointTensor> {
        Ok(self.at_light(p)?.residual())
    }

    pub fn traced_residual_at(&self, p: &[f64]) -> Result<f64> {
        Ok(self.at_light(p)?.traced_residual())
    }

    pub fn d_tensor_at(&self, p: &[f64], form: DForm) -> Result<DTensor> {
        self.at_light(p)?.d_tensor(form)
    }

    pub fn integrability1_residual_at(&self, p: &[f64]) -> Result<PointTensor> {
        self.at(p)?.integrability1()
    }

    pub fn integrability2_residual_at(&self, p: &[f64]) -> Result<PointTensor> {
        let sp = self.at(p)?;
        let second = SecondOrder::at(self.chart(), &sp.geo)?;
        sp.integrability2(&second)
    }

    pub fn sk_identity_residual_at(&self, p: &[f64]) -> Result<PointTensor> {
        self.at(p)?.sk_identity()
    }

    pub fn y_field_at(&self, p: &[f64]) -> Result<PointTensor> {
        self.y_point(p)?.y()
    }

    fn y_point(&self, p: &[f64]) -> Result<StructurePoint<'_>> {
        if self.alpha.is_zero() {
            self.at(p)
        } else {
            self.at_light(p)
        }
    }

    /// `div Y` by finite differences of the `Y` field.
    pub fn div_y_at(&self, p: &[f64]) -> Result<f64> {
        let field = FnField::new(self.dim(), move |q: &[f64]| self.y_field_at(q));
        let ny = covariant_derivative(&field, self.chart(), p, curvature_fd())?;
        let metric = MetricAt::at(self.chart(), p)?;
        Ok(ny.trace(Some(&metric))?)
    }

    /// `D_ijk,k` by finite differences of the `D` field (Ricci form).
    pub fn div_d_at(&self, p: &[f64]) -> Result<PointTensor> {
        let field = FnField::new(self.dim(), move |q: &[f64]| Ok(self.d_tensor_at(q, DForm::Ricci)?.components));
        let nd = covariant_derivative(&field, self.chart(), p, curvature_fd())?;
        let metric = MetricAt::at(self.chart(), p)?;
        nd.contract(2, 3, Some(&metric))
    }

    /// Residual of `((m−2)/2)|D|² = div Y` (only meaningful where
    /// `B(∇f, ·) = 0`), scaled.
    pub fn d_norm_identity_residual_at(&self, p: &[f64]) -> Result<f64> {
        let sp = self.at_light(p)?;
        let d = sp.d_tensor(DForm::Ricci)?;
        let lhs = 0.5 * (self.dim() as f64 - 2.0) * d.components.norm2(&sp.geo.metric)?;
        let div = self.div_y_at(p)?;
        Ok(scaled((lhs - div).abs(), lhs.abs().max(div.abs())))
    }

    /// The rescaled chart `exp(2af) g` with `a = −β/((m−2)α)`.
    pub fn conformal_chart(&self) -> Result<&Chart> {
        if !self.is_degenerate() {
            return Err(GeomError::NotDegenerate);
        }
        let r = self.conformal.get_or_init(|| {
            let a = -self.beta.value / ((self.dim() as f64 - 2.0) * self.alpha.value);
            let factor = Expr::mul(Expr::constant(2.0 * a), self.f().clone()).exp();
            self.chart.conformal(&factor).map_err(|e| e.to_string())
        });
        r.as_ref().map_err(|e| GeomError::InvalidChart(e.clone()))
    }

    /// `Ric~ − (S~/m) g~` for the rescaled metric.
    pub fn conformal_einstein_residual_at(&self, p: &[f64]) -> Result<PointTensor> {
        let chart = self.conformal_chart()?;
        let geo = LocalGeometry::at(chart, p)?;
        geo.ricci.axpy(-geo.scalar / self.dim() as f64, &geo.metric.g)
    }

    /// The identities that apply when `β = 0`.
    pub fn beta_zero_identities_at(&self, p: &[f64]) -> Result<CheckReport> {
        if !self.beta.is_zero() {
            return Err(GeomError::WrongClass("beta_zero identities need beta = 0".into()));
        }
        let mut t = Tally::new();
        t.observe_all(self.observations_at(p, true).into_iter().filter(|o| o.name.starts_with("beta_zero")));
        Ok(t.finish(&Tolerances::default()))
    }

    /// Every structure check that applies to this structure, at one point.
    /// `with_fd` enables the checks that need finite differences of
    /// curvature fields.
    pub fn observations_at(&self, p: &[f64], with_fd: bool) -> Vec<Observation> {
        let mut out = Vec::new();
        let sp = match self.at(p) {
            Ok(sp) => sp,
            Err(e) => {
                out.push(Observation::error("structure_residual", e));
                return out;
            }
        };
        sp.observe(&mut out, with_fd);
        out
    }
}

/// Which expression of `D` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DForm {
    /// Curvature of `g` through Ricci and `S`.
    Ricci,
    /// Schouten and Einstein tensors.
    Schouten,
    /// Hessian of `f` with a `β/α` prefactor.
    Hessian,
}

/// `D_ijk` at a point and the expression that produced it.
#[derive(Debug, Clone)]
pub struct DTensor {
    pub components: PointTensor,
    pub form: DForm,
}

/// Structure data at one point.
pub struct StructurePoint<'a> {
    pub s: &'a EinsteinTypeStructure,
    pub geo: LocalGeometry,
    pub jet: FunctionJet,
    pub lambda: f64,
    pub dlambda: Vec<f64>,
    /// `f^i`
    pub grad_up: Vec<f64>,
}

impl<'a> StructurePoint<'a> {
    fn m(&self) -> usize {
        self.geo.dim()
    }

    fn mf(&self) -> f64 {
        self.m() as f64
    }

    /// `α Ric + β Hess f + μ df⊗df − (ρS + λ) g`
    pub fn residual(&self) -> PointTensor {
        let s = self.s;
        let m = self.m();
        let f = self.jet.grad.data();
        let c = s.rho.value * self.geo.scalar + self.lambda;
        PointTensor::from_fn(m, vec![L; 2], |x| {
            let (i, j) = (x[0], x[1]);
            s.alpha.value * self.geo.ricci.get(x) + s.beta.value * self.jet.hess.get(x) + s.mu.value * f[i] * f[j]
                - c * self.geo.metric.g(i, j)
        })
    }

    fn residual_scale(&self) -> f64 {
        let s = self.s;
        let f2 = self.jet.grad.max_abs().powi(2);
        let g = self.geo.metric.g.max_abs();
        (s.alpha.value.abs() * self.geo.ricci.max_abs())
            .max(s.beta.value.abs() * self.jet.hess.max_abs())
            .max(s.mu.value.abs() * f2)
            .max((s.rho.value * self.geo.scalar + self.lambda).abs() * g)
    }

    /// Scaled max-norm of the structure residual.
    pub fn structure_gate(&self) -> f64 {
        scaled(self.residual().max_abs(), self.residual_scale())
    }

    /// `(α − mρ)S + βΔf + μ|∇f|² − mλ`
    pub fn traced_residual(&self) -> f64 {
        let s = self.s;
        let m = self.mf();
        (s.alpha.value - m * s.rho.value) * self.geo.scalar
            + s.beta.value * self.jet.laplacian(&self.geo.metric)
            + s.mu.value * self.jet.grad_norm2(&self.geo.metric)
            - m * self.lambda
    }

    /// `f^t T_tk` for a rank-2 lower tensor.
    fn f_contract(&self, t: &PointTensor) -> Vec<f64> {
        let m = self.m();
        (0..m).map(|k| (0..m).map(|a| self.grad_up[a] * t.get(&[a, k])).sum()).collect()
    }

    pub fn d_tensor(&self, form: DForm) -> Result<DTensor> {
        let m = self.m();
        if m < 3 {
            return Err(GeomError::Dimension("D needs dimension >= 3".into()));
        }
        let mf = self.mf();
        let c1 = 1.0 / (mf - 2.0);
        let c2 = 1.0 / ((mf - 1.0) * (mf - 2.0));
        let f = self.jet.grad.data();
        let g = &self.geo.metric;
        let comps = match form {
            DForm::Ricci => {
                let r = &self.geo.ricci;
                let fr = self.f_contract(r);
                let s = self.geo.scalar;
                PointTensor::from_fn(m, vec![L; 3], |x| {
                    let (i, j, k) = (x[0], x[1], x[2]);
                    c1 * (f[k] * r.get(&[i, j]) - f[j] * r.get(&[i, k]))
                        + c2 * (fr[k] * g.g(i, j) - fr[j] * g.g(i, k))
                        - s * c2 * (f[k] * g.g(i, j) - f[j] * g.g(i, k))
                })
            }
            DForm::Schouten => {
                let a = self.geo.schouten()?;
                let e = self.geo.einstein()?;
                let fe = self.f_contract(&e);
                PointTensor::from_fn(m, vec![L; 3], |x| {
                    let (i, j, k) = (x[0], x[1], x[2]);
                    c1 * (f[k] * a.get(&[i, j]) - f[j] * a.get(&[i, k])) + c2 * (fe[k] * g.g(i, j) - fe[j] * g.g(i, k))
                })
            }
            DForm::Hessian => {
                if self.s.alpha.is_zero() {
                    return Err(GeomError::AlphaZero);
                }
                let ba = self.s.beta.value / self.s.alpha.value;
                let h = &self.jet.hess;
                let fh = self.f_contract(h);
                let lap = self.jet.laplacian(g);
                PointTensor::from_fn(m, vec![L; 3], |x| {
                    let (i, j, k) = (x[0], x[1], x[2]);
                    ba * (c1 * (f[j] * h.get(&[i, k]) - f[k] * h.get(&[i, j]))
                        + c2 * (fh[j] * g.g(i, k) - fh[k] * g.g(i, j))
                        - lap * c2 * (f[j] * g.g(i, k) - f[k] * g.g(i, j)))
                })
            }
        };
        Ok(DTensor {
            components: comps,
            form,
        })
    }

    /// `Y_k = (β/α) f^i f^j D_ijk`, or `f^i f^j C_ijk` when `α = 0`.
    pub fn y(&self) -> Result<PointTensor> {
        let m = self.m();
        let (t, c) = if self.s.alpha.is_zero() {
            (self.geo.cotton()?, 1.0)
        } else {
            (
                self.d_tensor(DForm::Ricci)?.components,
                self.s.beta.value / self.s.alpha.value,
            )
        };
        let fu = &self.grad_up;
        Ok(PointTensor::from_fn(m, vec![L], |x| {
            let mut acc = 0.0;
            for i in 0..m {
                for j in 0..m {
                    acc += fu[i] * fu[j] * t.get(&[i, j, x[0]]);
                }
            }
            c * acc
        }))
    }

    /// `αC_ijk + β f^t W_tijk − [β − (m−2)αμ/β] D_ijk`
    pub fn integrability1(&self) -> Result<PointTensor> {
        let k = self.s.bracket()?;
        let m = self.m();
        let c = self.geo.cotton()?;
        let w = self.geo.weyl()?;
        let d = self.d_tensor(DForm::Ricci)?.components;
        let (a, b) = (self.s.alpha.value, self.s.beta.value);
        let fu = &self.grad_up;
        Ok(PointTensor::from_fn(m, vec![L; 3], |x| {
            let (i, j, kk) = (x[0], x[1], x[2]);
            let fw: f64 = (0..m).map(|t| fu[t] * w.get(&[t, i, j, kk])).sum();
            a * c.get(x) + b * fw - k * d.get(x)
        }))
    }

    fn integrability1_scale(&self) -> Result<f64> {
        let c = self.geo.cotton()?;
        let d = self.d_tensor(DForm::Ricci)?.components;
        let w = self.geo.weyl()?;
        let fmax = self.jet.grad.max_abs();
        Ok((self.s.alpha.value.abs() * c.max_abs())
            .max(self.s.beta.value.abs() * fmax * w.max_abs() * self.m() as f64)
            .max(self.s.bracket()?.abs() * d.max_abs()))
    }

    /// `αB_ij − (1/(m−2)){[..] D_ijk,k + β((m−3)/(m−2)) f^t C_jit − μ f^t f^k W_itjk}`
    pub fn integrability2(&self, second: &SecondOrder) -> Result<PointTensor> {
        Ok(self.integrability2_terms(second)?.0)
    }

    fn integrability2_terms(&self, second: &SecondOrder) -> Result<(PointTensor, f64)> {
        let kb = self.s.bracket()?;
        let m = self.m();
        let mf = self.mf();
        let bach = bach_from(&self.geo, second)?;
        let c = self.geo.cotton()?;
        let w = self.geo.weyl()?;
        let div_d = self.s.div_d_at(&self.geo.point)?;
        let (a, b, u) = (self.s.alpha.value, self.s.beta.value, self.s.mu.value);
        let fu = &self.grad_up;
        let mut scale = 0.0f64;
        let out = PointTensor::from_fn(m, vec![L; 2], |x| {
            let (i, j) = (x[0], x[1]);
            let mut fc = 0.0;
            let mut ffw = 0.0;
            for t in 0..m {
                fc += fu[t] * c.get(&[j, i, t]);
                for k in 0..m {
                    ffw += fu[t] * fu[k] * w.get(&[i, t, j, k]);
                }
            }
            let terms = [
                a * bach.get(x),
                kb * div_d.get(x) / (mf - 2.0),
                b * (mf - 3.0) / (mf - 2.0).powi(2) * fc,
                u * ffw / (mf - 2.0),
            ];
            scale = terms.iter().fold(scale, |s, v| s.max(v.abs()));
            terms[0] - terms[1] - terms[2] + terms[3]
        });
        Ok((out, scale))
    }

    /// `[α − 2ρ(m−1)]S_k − 2(β + αμ/β) f^tR_tk − 2(m−1)λ_k
    ///  + (2μ/β)[α − ρ(m−1)] S f_k − (2μ/β)(m−1) λ f_k`
    pub fn sk_identity(&self) -> Result<PointTensor> {
        Ok(self.sk_terms()?.0)
    }

    fn sk_terms(&self) -> Result<(PointTensor, f64)> {
        if self.s.beta.is_zero() {
            return Err(GeomError::BetaZero);
        }
        let m = self.m();
        let mf = self.mf();
        let (a, b, u, r) = (self.s.alpha.value, self.s.beta.value, self.s.mu.value, self.s.rho.value);
        let ds = self
            .geo
            .derivatives
            .as_ref()
            .ok_or_else(|| GeomError::Dimension("curvature derivatives were not computed".into()))?
            .scalar
            .clone();
        let fr = self.f_contract(&self.geo.ricci);
        let f = self.jet.grad.data();
        let s = self.geo.scalar;
        let mut scale = 0.0f64;
        let out = PointTensor::from_fn(m, vec![L], |x| {
            let k = x[0];
            let terms = [
                (a - 2.0 * r * (mf - 1.0)) * ds.data()[k],
                2.0 * (b + a * u / b) * fr[k],
                2.0 * (mf - 1.0) * self.dlambda[k],
                2.0 * u / b * (a - r * (mf - 1.0)) * s * f[k],
                2.0 * u / b * (mf - 1.0) * self.lambda * f[k],
            ];
            scale = terms.iter().fold(scale, |s, v| s.max(v.abs()));
            terms[0] - terms[1] - terms[2] + terms[3] - terms[4]
        });
        Ok((out, scale))
    }

    /// `f^i D_ijk − (f^t f_k R_tj − f^t f_j R_tk)/(m−1)`
    fn d_contraction(&self, d: &PointTensor) -> (f64, f64) {
        let m = self.m();
        let fu = &self.grad_up;
        let f = self.jet.grad.data();
        let fr = self.f_contract(&self.geo.ricci);
        let mut diff = 0.0f64;
        let mut scale = 0.0f64;
        for j in 0..m {
            for k in 0..m {
                let lhs: f64 = (0..m).map(|i| fu[i] * d.get(&[i, j, k])).sum();
                let rhs = (fr[j] * f[k] - fr[k] * f[j]) / (self.mf() - 1.0);
                scale = scale.max(lhs.abs()).max(rhs.abs());
                diff = diff.max((lhs - rhs).abs());
            }
        }
        (diff, scale)
    }

    /// `f^i f^j B_ij` and `max_j |f^i B_ij|`.
    fn bach_along_f(&self, bach: &PointTensor) -> (f64, f64) {
        let fb = self.f_contract(bach);
        let ffb: f64 = fb.iter().zip(&self.grad_up).map(|(a, b)| a * b).sum();
        (ffb, fb.iter().fold(0.0, |m, v| m.max(v.abs())))
    }

    fn observe(&self, out: &mut Vec<Observation>, with_fd: bool) {
        let s = self.s;
        let m = self.m();
        let mf = self.mf();
        let gate = self.structure_gate();
        let gate_ok = gate <= STRUCTURE_GATE;
        let gate_msg = || format!("structure residual {gate:.3e} above {STRUCTURE_GATE:e}");
        out.push(Observation::value("structure_residual", gate));
        let tr = self.residual().trace(Some(&self.geo.metric)).unwrap_or(f64::NAN);
        let traced = self.traced_residual();
        out.push(Observation::value("traced_residual", scaled((tr - traced).abs(), self.residual_scale())));
        if m < 3 {
            return;
        }
        let beta_zero = s.beta.is_zero();
        let alpha_zero = s.alpha.is_zero();

        let d1 = match self.d_tensor(DForm::Ricci) {
            Ok(d) => d.components,
            Err(e) => {
                out.push(Observation::error("d_skew", e));
                return;
            }
        };
        let dscale = d1.max_abs().max(self.jet.grad.max_abs() * self.geo.ricci.max_abs());
        let mut skew = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    skew = skew.max((d1.get(&[i, j, k]) + d1.get(&[i, k, j])).abs());
                }
            }
        }
        out.push(Observation::value("d_skew", scaled(skew, dscale)));
        let mut trace = 0.0f64;
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            if let Ok(t) = d1.contract(a, b, Some(&self.geo.metric)) {
                trace = trace.max(t.max_abs());
            }
        }
        out.push(Observation::value("d_trace", scaled(trace, dscale)));
        match self.d_tensor(DForm::Schouten) {
            Ok(d2) => out.push(Observation::value("d_forms", rel_diff(d1.data(), d2.components.data()))),
            Err(e) => out.push(Observation::error("d_forms", e)),
        }
        if alpha_zero {
            out.push(Observation::not_applicable("d_form3", "alpha = 0"));
        } else if !gate_ok {
            out.push(Observation::gated("d_form3", gate_msg()));
        } else {
            match self.d_tensor(DForm::Hessian) {
                Ok(d3) => out.push(Observation::value("d_form3", rel_diff(d1.data(), d3.components.data()))),
                Err(e) => out.push(Observation::error("d_form3", e)),
            }
        }
        let (dc, dcs) = self.d_contraction(&d1);
        out.push(Observation::value("d_contraction", scaled(dc, dcs)));

        // Y and its orthogonality to ∇f
        let y = self.y();
        match &y {
            Ok(y) => {
                let gy: f64 = y.data().iter().zip(&self.grad_up).map(|(a, b)| a * b).sum();
                let ny = y.norm2(&self.geo.metric).unwrap_or(f64::NAN).sqrt();
                let nf = self.jet.grad_norm2(&self.geo.metric).sqrt();
                out.push(Observation::value("y_orthogonality", scaled(gy.abs(), ny * nf)));
            }
            Err(e) => out.push(Observation::error("y_orthogonality", e)),
        }
        let ricci_soliton = !alpha_zero
            && s.alpha == s.beta
            && s.mu.is_zero()
            && s.rho.is_zero()
            && s.lambda().is_constant();
        if ricci_soliton {
            if !gate_ok {
                out.push(Observation::gated("y_ricci_soliton_form", gate_msg()));
            } else if let (Ok(y), Some(d)) = (&y, &self.geo.derivatives) {
                let ds_up: Vec<f64> = (0..m)
                    .map(|i| (0..m).map(|j| self.geo.metric.inv(i, j) * d.scalar.data()[j]).sum())
                    .collect();
                let sf: f64 = ds_up.iter().zip(self.jet.grad.data()).map(|(a, b)| a * b).sum();
                let f2 = self.jet.grad_norm2(&self.geo.metric);
                let alt: Vec<f64> = (0..m)
                    .map(|k| (sf * self.jet.grad.data()[k] - f2 * d.scalar.data()[k]) / (2.0 * (mf - 1.0)))
                    .collect();
                out.push(Observation::value("y_ricci_soliton_form", rel_diff(y.data(), &alt)));
            }
        }

        if beta_zero {
            self.observe_beta_zero(out, &d1, gate_ok, gate, with_fd);
        } else {
            if !gate_ok {
                for n in ["integrability_1", "sk_identity"] {
                    out.push(Observation::gated(n, gate_msg()));
                }
            } else {
                match self.integrability1().and_then(|r| Ok((r, self.integrability1_scale()?))) {
                    Ok((r, sc)) => out.push(Observation::value("integrability_1", scaled(r.max_abs(), sc))),
                    Err(e) => out.push(Observation::error("integrability_1", e)),
                }
                match self.sk_terms() {
                    Ok((r, sc)) => out.push(Observation::value("sk_identity", scaled(r.max_abs(), sc))),
                    Err(e) => out.push(Observation::error("sk_identity", e)),
                }
            }
            if s.is_degenerate() {
                match s.conformal_einstein_residual_at(&self.geo.point) {
                    Ok(r) => out.push(Observation::value("conformal_einstein", r.max_abs())),
                    Err(e) => out.push(Observation::error("conformal_einstein", e)),
                }
            }
            if with_fd {
                self.observe_fd(out, &d1, gate_ok, gate);
            }
        }
    }

    fn observe_fd(&self, out: &mut Vec<Observation>, d1: &PointTensor, gate_ok: bool, gate: f64) {
        let s = self.s;
        let m = self.m();
        let mf = self.mf();
        let gate_msg = || format!("structure residual {gate:.3e} above {STRUCTURE_GATE:e}");
        let names = ["integrability_2", "d_norm_bach", "d_norm_div_y"];
        if !gate_ok {
            for n in names {
                out.push(Observation::gated(n, gate_msg()));
            }
            return;
        }
        let second = match SecondOrder::at(s.chart(), &self.geo) {
            Ok(x) => x,
            Err(e) => {
                for n in names {
                    out.push(Observation::error(n, &e));
                }
                return;
            }
        };
        match self.integrability2_terms(&second) {
            Ok((r, sc)) => out.push(Observation::value("integrability_2", scaled(r.max_abs(), sc))),
            Err(e) => out.push(Observation::error("integrability_2", e)),
        }
        if s.is_degenerate() {
            for n in ["d_norm_bach", "d_norm_div_y"] {
                out.push(Observation::not_applicable(n, "degenerate structure"));
            }
            return;
        }
        let bach = match bach_from(&self.geo, &second) {
            Ok(b) => b,
            Err(e) => {
                out.push(Observation::error("d_norm_bach", e));
                return;
            }
        };
        let div_y = match s.div_y_at(&self.geo.point) {
            Ok(v) => v,
            Err(e) => {
                out.push(Observation::error("d_norm_bach", e));
                return;
            }
        };
        let d2 = d1.norm2(&self.geo.metric).unwrap_or(f64::NAN);
        let (ffb, bf) = self.bach_along_f(&bach);
        let (lhs, terms) = if s.alpha.is_zero() {
            let lhs = 0.5 * (mf - 2.0) * d2;
            (lhs, [-(mf - 2.0) * ffb, div_y])
        } else {
            let k = s.bracket().unwrap_or(f64::NAN);
            let lhs = 0.5 * (mf - 2.0) * k * d2;
            (lhs, [-s.beta.value * (mf - 2.0) * ffb, k * div_y])
        };
        let sc = lhs.abs().max(terms[0].abs()).max(terms[1].abs());
        out.push(Observation::value("d_norm_bach", scaled((lhs - terms[0] - terms[1]).abs(), sc)));
        let f_scale = self.jet.grad.max_abs().max(1.0);
        if scaled(bf, f_scale * bach.max_abs()) <= BACH_GATE || bf <= BACH_GATE {
            let lhs = 0.5 * (mf - 2.0) * d2;
            out.push(Observation::value(
                "d_norm_div_y",
                scaled((lhs - div_y).abs(), lhs.abs().max(div_y.abs())),
            ));
        } else {
            out.push(Observation::gated("d_norm_div_y", format!("|B(grad f, .)| = {bf:.3e}")));
        }
        let _ = m;
    }

    fn observe_beta_zero(&self, out: &mut Vec<Observation>, d1: &PointTensor, gate_ok: bool, gate: f64, with_fd: bool) {
        let s = self.s;
        let m = self.m();
        let mf = self.mf();
        let names = ["beta_zero_d", "beta_zero_cotton", "beta_zero_bach", "beta_zero_cotton_norm"];
        if s.alpha.is_zero() {
            for n in names {
                out.push(Observation::not_applicable(n, "beta = 0 needs alpha != 0"));
            }
            return;
        }
        if !gate_ok {
            let msg = format!("no exact structure: residual {gate:.3e} above {STRUCTURE_GATE:e}");
            for n in names {
                out.push(Observation::gated(n, msg.clone()));
            }
            return;
        }
        let dscale = self.jet.grad.max_abs() * self.geo.ricci.max_abs();
        out.push(Observation::value("beta_zero_d", scaled(d1.max_abs(), dscale)));
        let (a, u) = (s.alpha.value, s.mu.value);
        let c = match self.geo.cotton() {
            Ok(c) => c,
            Err(e) => {
                out.push(Observation::error("beta_zero_cotton", e));
                return;
            }
        };
        let f = self.jet.grad.data();
        let h = &self.jet.hess;
        let fh = self.f_contract(h);
        let lap = self.jet.laplacian(&self.geo.metric);
        let g = &self.geo.metric;
        let mut diff = 0.0f64;
        let mut sc = 0.0f64;
        for_each3(m, |i, j, k| {
            let terms = [
                a * c.get(&[i, j, k]),
                -u * (f[j] * h.get(&[i, k]) - f[k] * h.get(&[i, j])),
                -u / (mf - 1.0) * (fh[j] * g.g(i, k) - fh[k] * g.g(i, j)),
                u * lap / (mf - 1.0) * (f[j] * g.g(i, k) - f[k] * g.g(i, j)),
            ];
            sc = terms.iter().fold(sc, |s, v| s.max(v.abs()));
            diff = diff.max((terms[0] - terms[1] - terms[2] - terms[3]).abs());
        });
        out.push(Observation::value("beta_zero_cotton", scaled(diff, sc)));
        if !with_fd {
            return;
        }
        let second = match SecondOrder::at(s.chart(), &self.geo) {
            Ok(x) => x,
            Err(e) => {
                out.push(Observation::error("beta_zero_bach", e));
                return;
            }
        };
        let bach = match bach_from(&self.geo, &second) {
            Ok(b) => b,
            Err(e) => {
                out.push(Observation::error("beta_zero_bach", e));
                return;
            }
        };
        let w = self.geo.weyl().expect("m >= 3");
        let div_c = second.cotton_divergence(g);
        let fu = &self.grad_up;
        let mut diff = 0.0f64;
        let mut sc = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                let mut ffw = 0.0;
                for t in 0..m {
                    for k in 0..m {
                        ffw += fu[t] * fu[k] * w.get(&[i, t, j, k]);
                    }
                }
                let terms = [a * bach.get(&[i, j]), a * div_c.get(&[i, j]) / (mf - 2.0), u * ffw / (mf - 2.0)];
                sc = terms.iter().fold(sc, |s, v| s.max(v.abs()));
                diff = diff.max((terms[0] - terms[1] + terms[2]).abs());
            }
        }
        out.push(Observation::value("beta_zero_bach", scaled(diff, sc)));
        if u == 0.0 {
            out.push(Observation::not_applicable("beta_zero_cotton_norm", "mu = 0"));
            return;
        }
        match s.div_y_at(&self.geo.point) {
            Ok(div) => {
                // with β = 0 the Y field is (β/α) f f D = 0, so use f f C directly
                let _ = div;
            }
            Err(e) => {
                out.push(Observation::error("beta_zero_cotton_norm", e));
                return;
            }
        }
        let ffc_field = FnField::new(m, move |q: &[f64]| {
            let sp = s.at(q)?;
            let c = sp.geo.cotton()?;
            let fu = sp.grad_up.clone();
            Ok(PointTensor::from_fn(m, vec![L], |x| {
                let mut acc = 0.0;
                for i in 0..m {
                    for j in 0..m {
                        acc += fu[i] * fu[j] * c.get(&[i, j, x[0]]);
                    }
                }
                acc
            }))
        });
        let div_ffc = covariant_derivative(&ffc_field, s.chart(), &self.geo.point, curvature_fd())
            .and_then(|t| Ok(t.trace(Some(g))?));
        match (div_ffc, c.norm2(g)) {
            (Ok(div), Ok(c2)) => {
                let (ffb, _) = self.bach_along_f(&bach);
                let lhs = a / (2.0 * u) * c2;
                let rhs = [(mf - 2.0) * ffb, div];
                let sc = lhs.abs().max(rhs[0].abs()).max(rhs[1].abs());
                out.push(Observation::value("beta_zero_cotton_norm", scaled((lhs - rhs[0] + rhs[1]).abs(), sc)));
            }
            (Err(e), _) | (_, Err(e)) => out.push(Observation::error("beta_zero_cotton_norm", e)),
        }
    }
}

fn for_each3(m: usize, mut f: impl FnMut(usize, usize, usize)) {
    for i in 0..m {
        for j in 0..m {
            for k in 0..m {
                f(i, j, k);
            }
        }
    }
}

/// Runs every structure check over the points.
pub fn structure_suite(s: &EinsteinTypeStructure, points: &[Vec<f64>], with_fd: bool, tol: &Tolerances) -> CheckReport {
    let mut t = Tally::new();
    for p in points {
        t.observe_all(s.observations_at(p, with_fd));
    }
    t.finish(tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::Sampler;

    fn c(n: i64) -> Coefficient {
        Coefficient::integer(n)
    }

    #[test]
    fn coefficient_parsing() {
        assert_eq!(Coefficient::parse("-1/3").unwrap().exact(), Some(Rational64::new(-1, 3)));
        assert_eq!(Coefficient::parse("0.25").unwrap().exact(), Some(Rational64::new(1, 4)));
        assert_eq!(Coefficient::parse("-0.5").unwrap().exact(), Some(Rational64::new(-1, 2)));
        assert_eq!(Coefficient::parse("2").unwrap().value(), 2.0);
        assert!(Coefficient::parse("1e-3").unwrap().exact().is_none());
        assert!(Coefficient::parse("1/0").is_err());
        assert!(Coefficient::parse("abc").is_err());
    }

    #[test]
    fn classification_examples() {
        assert_eq!(parameter_class(3, c(1), c(1), c(0)).unwrap(), StructureClass::Nondegenerate);
        assert_eq!(parameter_class(4, c(1), c(-2), c(2)).unwrap(), StructureClass::Degenerate);
        assert_eq!(
            parameter_class(3, c(0), c(1), Coefficient::ratio(-1, 3)).unwrap(),
            StructureClass::AlphaZero
        );
        assert!(matches!(parameter_class(3, c(0), c(0), c(0)), Err(GeomError::InvalidParameters)));
        // inexact floats fall back to a relative epsilon
        let b = Coefficient::from_f64(2f64.sqrt());
        assert_eq!(
            parameter_class(4, Coefficient::from_f64(1.0), b, Coefficient::parse("1").unwrap()).unwrap(),
            StructureClass::Degenerate
        );
    }

    #[test]
    fn presets_map_to_labels() {
        let expected = [
            ("einstein", StructureClass::BetaZero),
            ("ricci_soliton", StructureClass::Nondegenerate),
            ("ricci_almost_soliton", StructureClass::Nondegenerate),
            ("yamabe_soliton", StructureClass::AlphaZero),
            ("yamabe_quasi_soliton", StructureClass::AlphaZero),
            ("conformal_gradient_soliton", StructureClass::AlphaZero),
            ("quasi_einstein", StructureClass::Nondegenerate),
            ("rho_einstein", StructureClass::Nondegenerate),
        ];
        let presets = [
            Preset::Einstein,
            Preset::RicciSoliton,
            Preset::RicciAlmostSoliton,
            Preset::YamabeSoliton,
            Preset::YamabeQuasiSoliton { k: 2 },
            Preset::ConformalGradientSoliton,
            Preset::QuasiEinstein { k: 3 },
            Preset::RhoEinstein { rho: Coefficient::ratio(1, 4) },
        ];
        for (p, (name, class)) in presets.iter().zip(expected) {
            assert_eq!(p.name(), name);
            let [a, b, u, _] = p.parameters(4);
            assert_eq!(parameter_class(4, a, b, u).unwrap(), class, "{name}");
        }
        assert_eq!(Preset::NAMES.len(), presets.len());
    }

    fn gaussian(m: usize) -> EinsteinTypeStructure {
        let chart = Arc::new(Chart::euclidean(m));
        let f = (1..=m).map(|i| format!("x{i}^2")).collect::<Vec<_>>().join(" + ");
        EinsteinTypeStructure::from_strs(chart, [c(1), c(1), c(0), c(0)], "1/2", &format!("({f})/4")).unwrap()
    }

    #[test]
    fn gaussian_soliton_is_exact() {
        let s = gaussian(3);
        let p = [0.3, -0.2, 0.5];
        assert!(s.residual_at(&p).unwrap().max_abs() <= 1e-12);
        for form in [DForm::Ricci, DForm::Schouten, DForm::Hessian] {
            assert!(s.d_tensor_at(&p, form).unwrap().components.max_abs() <= 1e-9);
        }
        assert!(s.integrability1_residual_at(&p).unwrap().max_abs() <= 1e-6);
        assert!(s.y_field_at(&p).unwrap().max_abs() <= 1e-12);
        assert_eq!(s.classify().unwrap(), StructureClass::Nondegenerate);
    }

    #[test]
    fn wrong_lambda_shifts_trace() {
        let chart = Arc::new(Chart::euclidean(3));
        let s = EinsteinTypeStructure::from_strs(chart, [c(1), c(1), c(0), c(0)], "1/2 + 0.1", "(x1^2+x2^2+x3^2)/4")
            .unwrap();
        let p = [0.1, 0.2, 0.3];
        let r = s.residual_at(&p).unwrap();
        assert!((r.get(&[0, 0]) + 0.1).abs() < 1e-12);
        assert!((s.traced_residual_at(&p).unwrap() + 0.3).abs() < 1e-12);
    }

    #[test]
    fn alpha_zero_has_no_hessian_form() {
        let chart = Arc::new(Chart::euclidean(3));
        let s = EinsteinTypeStructure::from_strs(chart, [c(0), c(1), c(0), c(0)], "0", "x1").unwrap();
        assert!(matches!(s.d_tensor_at(&[0.0; 3], DForm::Hessian), Err(GeomError::AlphaZero)));
        assert!(matches!(s.conformal_einstein_residual_at(&[0.0; 3]), Err(GeomError::NotDegenerate)));
    }

    #[test]
    fn beta_zero_needs_class() {
        let s = gaussian(3);
        assert!(matches!(s.beta_zero_identities_at(&[0.0; 3]), Err(GeomError::WrongClass(_))));
    }

    #[test]
    fn beta_zero_on_flat_with_linear_f_is_gated() {
        let chart = Arc::new(Chart::euclidean(3));
        let s = EinsteinTypeStructure::from_strs(chart, [c(1), c(0), c(1), c(0)], "1", "x1").unwrap();
        let r = s.beta_zero_identities_at(&[0.1, 0.0, 0.0]).unwrap();
        assert!(r.entries.iter().all(|e| e.status == crate::report::Status::Gated));
    }

    #[test]
    fn gaussian_suite_passes() {
        let s = gaussian(4);
        let pts = Sampler::new(1, 0.05).sample(s.chart().domain(), 2);
        let r = structure_suite(&s, &pts, true, &Tolerances::default());
        assert!(r.all_pass(), "{:#?}", r.failures());
    }
}

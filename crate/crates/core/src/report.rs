//! Residual bookkeeping: per-point observations folded into a sorted report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Outcome of one check at one point.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    /// Residual, already scaled.
    Value(f64),
    /// A precondition did not hold; the check was not asserted here.
    Gated(String),
    /// The check does not apply to this input at all.
    NotApplicable(String),
    /// Evaluation failed.
    Error(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub name: String,
    pub outcome: Outcome,
}

impl Observation {
    pub fn value(name: &str, v: f64) -> Observation {
        Observation {
            name: name.to_string(),
            outcome: Outcome::Value(v),
        }
    }

    pub fn gated(name: &str, why: impl Into<String>) -> Observation {
        Observation {
            name: name.to_string(),
            outcome: Outcome::Gated(why.into()),
        }
    }

    pub fn not_applicable(name: &str, why: impl Into<String>) -> Observation {
        Observation {
            name: name.to_string(),
            outcome: Outcome::NotApplicable(why.into()),
        }
    }

    pub fn error(name: &str, why: impl std::fmt::Display) -> Observation {
        Observation {
            name: name.to_string(),
            outcome: Outcome::Error(why.to_string()),
        }
    }

    /// `Value` on success, `Error` otherwise.
    pub fn from_result<E: std::fmt::Display>(name: &str, r: Result<f64, E>) -> Observation {
        match r {
            Ok(v) => Observation::value(name, v),
            Err(e) => Observation::error(name, e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    Gated,
    NotApplicable,
}

/// Aggregated statistics for one named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub anchor: String,
    pub points: usize,
    pub gated_points: usize,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    pub tolerance: f64,
    pub status: Status,
    pub gate: Option<String>,
    pub message: Option<String>,
    pub wall_time_ms: Option<f64>,
}

/// Named checks sorted by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub entries: Vec<CheckEntry>,
}

impl CheckReport {
    pub fn get(&self, name: &str) -> Option<&CheckEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// No entry failed.
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.status != Status::Fail)
    }

    pub fn failures(&self) -> Vec<&CheckEntry> {
        self.entries.iter().filter(|e| e.status == Status::Fail).collect()
    }

    /// Adds entries, replacing any with the same name, and keeps the order.
    pub fn extend(&mut self, other: CheckReport) {
        for e in other.entries {
            self.entries.retain(|x| x.name != e.name);
            self.entries.push(e);
        }
        self.entries.sort_by(|a, b| a.name.cmp(&b.name));
    }

    /// Removes timing information (for reproducibility comparisons).
    pub fn without_timing(&self) -> CheckReport {
        let mut r = self.clone();
        for e in &mut r.entries {
            e.wall_time_ms = None;
        }
        r
    }
}

/// Per-check tolerance table with a global scale factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    overrides: BTreeMap<String, f64>,
    scale: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            overrides: BTreeMap::new(),
            scale: 1.0,
        }
    }
}

impl Tolerances {
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn set(&mut self, name: &str, tol: f64) {
        self.overrides.insert(name.to_string(), tol);
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Effective tolerance for a check.
    pub fn get(&self, name: &str) -> f64 {
        let base = self
            .overrides
            .get(name)
            .copied()
            .or_else(|| catalog(name).map(|c| c.tolerance))
            .unwrap_or(1e-8);
        base * self.scale
    }

    /// Effective tolerances for the given names, sorted.
    pub fn table<'a>(&self, names: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, f64> {
        names.into_iter().map(|n| (n.to_string(), self.get(n))).collect()
    }
}

/// Static description of a check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckInfo {
    pub name: &'static str,
    pub anchor: &'static str,
    pub tolerance: f64,
}

macro_rules! checks {
    ($( $name:literal => ($tol:expr, $anchor:literal) ),* $(,)?) => {
        /// Every known check, sorted by name.
        pub const CATALOG: &[CheckInfo] = &[
            $( CheckInfo { name: $name, anchor: $anchor, tolerance: $tol } ),*
        ];
    };
}

checks! {
    "bach_symmetry" => (1e-8, "B_ij = B_ji"),
    "bach_trace" => (1e-8, "B_tt = 0"),
    "bach_zero" => (1e-4, "B = 0"),
    "beta_zero_bach" => (1e-4, "a B_ij = (a C_ijk,k - mu f_t f_k W_itjk)/(m-2)"),
    "beta_zero_cotton" => (1e-4, "a C_ijk from mu and Hess f"),
    "beta_zero_cotton_norm" => (1e-4, "(a/2mu)|C|^2 = (m-2) f_i f_j B_ij - (f_i f_j C_ijk)_k"),
    "beta_zero_d" => (1e-9, "D = 0 when beta = 0"),
    "christoffel_symmetry" => (1e-15, "G^k_ij = G^k_ji"),
    "conformal_einstein" => (1e-6, "Ric~ - (S~/m) g~ = 0 for g~ = exp(2af) g"),
    "cotton_cyclic" => (1e-6, "C_ijk + C_jki + C_kij = 0"),
    "cotton_divergence_formula" => (1e-5, "C_ijk,k = R_ij,kk - (m-2)/(2(m-1)) S_ij + R_tk R_itjk - R_it R_tj - dS g_ij/(2(m-1))"),
    "cotton_divergence_symmetry" => (1e-6, "C_ijk,k = C_jik,k"),
    "cotton_null_divergence" => (1e-4, "C_kij,k = 0"),
    "cotton_skew" => (1e-9, "C_ijk = -C_ikj"),
    "cotton_trace" => (1e-6, "C_iik = C_iki = 0"),
    "cotton_weyl_divergence" => (1e-5, "C_ijk = (m-2)/(m-3) W_tikj,t"),
    "cotton_zero" => (1e-6, "C = 0"),
    "d2_levelset" => (1e-6, "|D|^2 = (b/a)^2 2|df|^4/(m-2)^2 |h - h g|^2 + 2|df|^2/((m-1)(m-2)) R_am R_am"),
    "d2_rhs_nonnegative" => (0.0, "right side of the |D|^2 level-set identity is >= 0"),
    "d_contraction" => (1e-8, "f_i D_ijk = (f_t f_k R_tj - f_t f_j R_tk)/(m-1)"),
    "d_form3" => (1e-8, "D (Hessian form) = D (Ricci form)"),
    "d_forms" => (1e-8, "D (Ricci form) = D (Schouten form)"),
    "d_norm_bach" => (1e-4, "(m-2)/2 [..] |D|^2 = -b(m-2) f f B + (b/a)[..] (f f D)_k"),
    "d_norm_div_y" => (1e-4, "(m-2)/2 |D|^2 = div Y where B(grad f, .) = 0"),
    "d_skew" => (1e-9, "D_ijk = -D_ikj"),
    "d_trace" => (1e-9, "D_iik = D_iki = 0"),
    "einstein_constant" => (1e-9, "Ric = (S/m) g"),
    "first_bianchi" => (1e-6, "R_ijkt + R_iktj + R_itjk = 0"),
    "frame_orthonormality" => (1e-10, "g(e_a, e_b) = delta_ab, e_m = grad f/|grad f|"),
    "h_frame_independence" => (1e-10, "|h - h g|^2 independent of the tangent frame"),
    "h_routes" => (1e-6, "-f_ab/|df| = (a R_ab - (rho S + lambda) delta_ab)/(b |df|)"),
    "hessian_symmetry" => (1e-10, "f_ij = f_ji"),
    "integrability_1" => (1e-5, "a C_ijk + b f_t W_tijk = [b - (m-2) a mu / b] D_ijk"),
    "integrability_2" => (1e-4, "a B_ij = ([..] D_ijk,k + b (m-3)/(m-2) f_t C_jit - mu f_t f_k W_itjk)/(m-2)"),
    "kulkarni_nomizu" => (1e-9, "R = W + A (KN) g/(m-2)"),
    "level_cotton" => (1e-6, "C = 0 on the level set"),
    "level_fiber_einstein" => (1e-6, "level set is Einstein in the induced metric"),
    "level_grad_spread" => (1e-6, "|grad f|^2 constant on the level set"),
    "level_lambda_spread" => (1e-6, "lambda constant on the level set"),
    "level_mean_curvature_spread" => (1e-6, "h constant on the level set"),
    "level_ram" => (1e-6, "R_am = 0"),
    "level_scalar_spread" => (1e-6, "S constant on the level set"),
    "level_tangential_ricci" => (1e-6, "R_ab = (S - L1)/(m-1) delta_ab"),
    "level_umbilic" => (1e-6, "h_ab = h delta_ab"),
    "level_weyl" => (1e-4, "W = 0 on the level set (m = 4)"),
    "metric_compatibility" => (1e-9, "g_ij,k = 0"),
    "ricci_commutation" => (1e-5, "R_ij,kt - R_ij,tk = R_likt R_lj + R_ljkt R_li"),
    "ricci_route_agreement" => (1e-6, "chain-rule grad Ric = finite-difference grad Ric"),
    "riemann_symmetries" => (1e-9, "R_ijkt = -R_jikt = -R_ijtk = R_ktij"),
    "scalar_curvature" => (1e-9, "S = expected value"),
    "schouten_trace" => (1e-9, "A_tt = (m-2) S/(2(m-1))"),
    "schur" => (1e-5, "S_i = 2 R_ik,k"),
    "second_bianchi" => (1e-6, "R_ijkl,t + R_ijlt,k + R_ijtk,l = 0"),
    "sk_identity" => (1e-5, "[a - 2 rho (m-1)] S_k = 2(b + a mu/b) f_t R_tk + 2(m-1) lambda_k - .."),
    "structure_residual" => (1e-6, "a Ric + b Hess f + mu df df - (rho S + lambda) g = 0"),
    "third_derivative_commutation" => (1e-8, "f_ijk - f_ikj = f_t R_tijk"),
    "traced_commutation" => (1e-8, "f_itt = f_tti + f_t R_ti"),
    "traced_residual" => (1e-10, "trace of the residual = (a - m rho) S + b Lap f + mu |df|^2 - m lambda"),
    "weyl_trace_free" => (1e-9, "W_tjkt = 0 and all other traces"),
    "weyl_zero" => (1e-9, "W = 0"),
    "y_orthogonality" => (1e-9, "g(Y, grad f) = 0"),
    "y_ricci_soliton_form" => (1e-6, "Y = [g(dS, df) df - |df|^2 dS]/(2(m-1))"),
}

pub fn catalog(name: &str) -> Option<&'static CheckInfo> {
    CATALOG.iter().find(|c| c.name == name)
}

#[derive(Debug, Default, Clone)]
struct Acc {
    values: Vec<f64>,
    gated: Vec<String>,
    not_applicable: Vec<String>,
    errors: Vec<String>,
    wall_ms: f64,
}

/// Folds observations from many points into a [`CheckReport`].
#[derive(Debug, Default, Clone)]
pub struct Tally {
    accs: BTreeMap<String, Acc>,
}

impl Tally {
    pub fn new() -> Tally {
        Tally::default()
    }

    pub fn observe(&mut self, obs: Observation) {
        let acc = self.accs.entry(obs.name).or_default();
        match obs.outcome {
            Outcome::Value(v) if v.is_finite() => acc.values.push(v),
            Outcome::Value(v) => acc.errors.push(format!("non-finite residual {v}")),
            Outcome::Gated(g) => acc.gated.push(g),
            Outcome::NotApplicable(w) => acc.not_applicable.push(w),
            Outcome::Error(e) => acc.errors.push(e),
        }
    }

    pub fn observe_all(&mut self, obs: impl IntoIterator<Item = Observation>) {
        for o in obs {
            self.observe(o);
        }
    }

    /// Attributes wall time to every named check.
    pub fn add_time(&mut self, names: &[&str], ms: f64) {
        for n in names {
            if let Some(a) = self.accs.get_mut(*n) {
                a.wall_ms += ms / names.len() as f64;
            }
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.accs.keys().cloned().collect()
    }

    pub fn finish(&self, tol: &Tolerances) -> CheckReport {
        let entries = self
            .accs
            .iter()
            .map(|(name, acc)| {
                let tolerance = tol.get(name);
                let anchor = catalog(name).map(|c| c.anchor).unwrap_or("").to_string();
                let points = acc.values.len();
                let max = acc.values.iter().copied().reduce(f64::max);
                let mean = (points > 0).then(|| acc.values.iter().sum::<f64>() / points as f64);
                let gate = acc.gated.first().cloned();
                let (status, message) = if !acc.errors.is_empty() {
                    (
                        Status::Fail,
                        Some(format!("{} error(s): {}", acc.errors.len(), acc.errors[0])),
                    )
                } else if let Some(mx) = max {
                    let status = if mx <= tolerance { Status::Pass } else { Status::Fail };
                    let message = (!acc.gated.is_empty())
                        .then(|| format!("{} point(s) gated", acc.gated.len()));
                    (status, message)
                } else if !acc.gated.is_empty() {
                    (Status::Gated, None)
                } else {
                    (Status::NotApplicable, acc.not_applicable.first().cloned())
                };
                CheckEntry {
                    name: name.clone(),
                    anchor,
                    points,
                    gated_points: acc.gated.len(),
                    max,
                    mean,
                    tolerance,
                    status,
                    gate,
                    message,
                    wall_time_ms: Some(acc.wall_ms),
                }
            })
            .collect();
        CheckReport { entries }
    }
}

/// `diff / max(1, scale)`.
pub fn scaled(diff: f64, scale: f64) -> f64 {
    diff / scale.abs().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_is_sorted_and_unique() {
        for w in CATALOG.windows(2) {
            assert!(w[0].name < w[1].name, "{} / {}", w[0].name, w[1].name);
        }
    }

    #[test]
    fn status_follows_tolerance() {
        let mut t = Tally::new();
        t.observe(Observation::value("weyl_zero", 1e-12));
        t.observe(Observation::value("weyl_zero", 5e-10));
        t.observe(Observation::value("cotton_zero", 1e-3));
        t.observe(Observation::gated("integrability_1", "structure residual 1e-2"));
        t.observe(Observation::not_applicable("bach_zero", "m = 3"));
        t.observe(Observation::error("schur", "boom"));
        let r = t.finish(&Tolerances::default());
        assert_eq!(r.get("weyl_zero").unwrap().status, Status::Pass);
        assert_eq!(r.get("weyl_zero").unwrap().points, 2);
        assert_eq!(r.get("cotton_zero").unwrap().status, Status::Fail);
        assert_eq!(r.get("integrability_1").unwrap().status, Status::Gated);
        assert_eq!(r.get("bach_zero").unwrap().status, Status::NotApplicable);
        assert_eq!(r.get("schur").unwrap().status, Status::Fail);
        let names: Vec<_> = r.entries.iter().map(|e| e.name.as_str()).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
    }

    #[test]
    fn scale_and_override() {
        let mut tol = Tolerances::default().with_scale(10.0);
        assert_eq!(tol.get("weyl_zero"), 1e-8);
        tol.set("weyl_zero", 1.0);
        assert_eq!(tol.get("weyl_zero"), 10.0);
    }
}

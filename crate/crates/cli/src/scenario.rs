//! Scenario files: a chart, an optional structure, the checks to run and
//! how to sample.

use std::collections::BTreeMap;
use std::ops::Range;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use etgeom::chart::{Chart, Domain};
use etgeom::constructions::corpus_entry;
use etgeom::einstein_type::{Coefficient, EinsteinTypeStructure, Preset};
use etgeom::expr::{parse, Expr, ExprError};
use etgeom::report::catalog;

use crate::groups::{is_group, GROUPS};

/// Bad input: unreadable file, TOML syntax, or schema/content errors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InputError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("line {line}: `{key}`: {message}")]
    Schema { line: usize, key: String, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    corpus: Option<Spanned<String>>,
    checks: Option<Vec<Spanned<String>>>,
    chart: Option<BTreeMap<String, Spanned<toml::Value>>>,
    structure: Option<RawStructure>,
    sampling: Option<RawSampling>,
    tolerances: Option<BTreeMap<String, Spanned<f64>>>,
    expect: Option<RawExpect>,
    levelset: Option<RawLevel>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStructure {
    preset: Option<Spanned<String>>,
    k: Option<i64>,
    alpha: Option<Spanned<toml::Value>>,
    beta: Option<Spanned<toml::Value>>,
    mu: Option<Spanned<toml::Value>>,
    rho: Option<Spanned<toml::Value>>,
    lambda: Option<Spanned<String>>,
    f: Spanned<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampling {
    count: Option<usize>,
    seed: Option<u64>,
    margin: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExpect {
    scalar: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLevel {
    value: Option<f64>,
    count: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sampling {
    pub count: usize,
    pub seed: u64,
    pub margin: f64,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            count: 16,
            seed: 1,
            margin: 0.05,
        }
    }
}

/// A fully parsed scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub chart: Arc<Chart>,
    pub structure: Option<EinsteinTypeStructure>,
    /// Group or check names.
    pub checks: Vec<String>,
    pub sampling: Sampling,
    pub tolerances: BTreeMap<String, f64>,
    pub expected_scalar: Option<f64>,
    pub level_value: Option<f64>,
    pub level_count: usize,
}

/// 1-based line and column of a byte offset.
fn line_col(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

struct Ctx<'a> {
    src: &'a str,
}

impl Ctx<'_> {
    fn schema(&self, span: Range<usize>, key: &str, message: impl Into<String>) -> InputError {
        InputError::Schema {
            line: line_col(self.src, span.start).0,
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// Parses a formula, reporting errors at their position in the file.
    fn expr(&self, s: &Spanned<String>, key: &str, coords: &[String]) -> Result<Expr, InputError> {
        parse(s.get_ref(), coords).map(|e| e.simplify()).map_err(|e| {
            let offset = match &e {
                ExprError::Syntax { offset, .. } | ExprError::UnknownIdentifier { offset, .. } => Some(*offset),
                _ => None,
            };
            match offset {
                // +1 skips the opening quote
                Some(o) => {
                    let (line, column) = line_col(self.src, s.span().start + 1 + o);
                    InputError::Syntax {
                        line,
                        column,
                        message: format!("in `{key}`: {e}"),
                    }
                }
                None => self.schema(s.span(), key, e.to_string()),
            }
        })
    }

    fn coefficient(&self, v: &Spanned<toml::Value>, key: &str) -> Result<Coefficient, InputError> {
        match v.get_ref() {
            toml::Value::Integer(n) => Ok(Coefficient::integer(*n)),
            toml::Value::Float(x) => Ok(Coefficient::from_f64(*x)),
            toml::Value::String(s) => Coefficient::parse(s).map_err(|m| self.schema(v.span(), key, m)),
            _ => Err(self.schema(v.span(), key, "expected a number or a \"p/q\" string")),
        }
    }
}

fn parse_chart(ctx: &Ctx<'_>, raw: &BTreeMap<String, Spanned<toml::Value>>) -> Result<Chart, InputError> {
    let first_span = raw.values().next().map(|v| v.span()).unwrap_or(0..0);
    let coords: Vec<String> = match raw.get("coords") {
        Some(v) => match v.get_ref() {
            toml::Value::Array(a) => a
                .iter()
                .map(|x| x.as_str().map(str::to_string))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| ctx.schema(v.span(), "coords", "expected an array of names"))?,
            _ => return Err(ctx.schema(v.span(), "coords", "expected an array of names")),
        },
        None => return Err(ctx.schema(first_span.clone(), "chart", "missing `coords`")),
    };
    let m = coords.len();
    if m == 0 {
        return Err(ctx.schema(first_span.clone(), "coords", "no coordinates"));
    }
    let mut domain = None;
    let mut entries: Vec<Vec<Option<Expr>>> = vec![vec![None; m]; m];
    for (key, v) in raw {
        match key.as_str() {
            "coords" => {}
            "dim" => {
                if v.get_ref().as_integer() != Some(m as i64) {
                    return Err(ctx.schema(v.span(), key, format!("must equal the number of coordinates ({m})")));
                }
            }
            "domain" => {
                let bad = || ctx.schema(v.span(), key, "expected one [lo, hi] pair per coordinate");
                let arr = v.get_ref().as_array().ok_or_else(bad)?;
                let mut iv = Vec::new();
                for pair in arr {
                    let p = pair.as_array().ok_or_else(bad)?;
                    let num = |x: &toml::Value| x.as_float().or_else(|| x.as_integer().map(|n| n as f64));
                    match p.as_slice() {
                        [a, b] => iv.push((num(a).ok_or_else(bad)?, num(b).ok_or_else(bad)?)),
                        _ => return Err(bad()),
                    }
                }
                if iv.len() != m {
                    return Err(bad());
                }
                domain = Some(Domain::new(iv).map_err(|e| ctx.schema(v.span(), key, e.to_string()))?);
            }
            k if k.starts_with("g_") => {
                let idx: Vec<usize> = k[2..].split('_').filter_map(|s| s.parse().ok()).collect();
                let (i, j) = match idx.as_slice() {
                    [i, j] if (1..=m).contains(i) && (1..=m).contains(j) => (i - 1, j - 1),
                    _ => return Err(ctx.schema(v.span(), key, format!("expected g_i_j with 1 <= i, j <= {m}"))),
                };
                let e = match v.get_ref() {
                    toml::Value::String(s) => ctx.expr(&Spanned::new(v.span(), s.clone()), key, &coords)?,
                    toml::Value::Integer(n) => Expr::constant(*n as f64),
                    toml::Value::Float(x) => Expr::constant(*x),
                    _ => return Err(ctx.schema(v.span(), key, "expected a formula string or a number")),
                };
                if entries[i][j].is_some() || entries[j][i].is_some() {
                    return Err(ctx.schema(v.span(), key, "entry given twice"));
                }
                entries[i][j] = Some(e);
            }
            _ => return Err(ctx.schema(v.span(), key, "unknown key in [chart]")),
        }
    }
    let domain = domain.ok_or_else(|| ctx.schema(first_span.clone(), "chart", "missing `domain`"))?;
    let mut full = vec![vec![Expr::zero(); m]; m];
    for i in 0..m {
        for j in 0..m {
            if let Some(e) = entries[i][j].clone().or_else(|| entries[j][i].clone()) {
                full[i][j] = e;
            } else if i == j {
                return Err(ctx.schema(first_span.clone(), "chart", format!("missing diagonal entry g_{}_{}", i + 1, i + 1)));
            }
        }
    }
    Chart::new(coords, full, domain).map_err(|e| ctx.schema(first_span.clone(), "chart", e.to_string()))
}

fn parse_structure(ctx: &Ctx<'_>, chart: Arc<Chart>, raw: &RawStructure) -> Result<EinsteinTypeStructure, InputError> {
    let coords = chart.coords().to_vec();
    let f = ctx.expr(&raw.f, "f", &coords)?;
    let lambda = match &raw.lambda {
        Some(l) => ctx.expr(l, "lambda", &coords)?,
        None => Expr::zero(),
    };
    let span = raw.f.span();
    let err = |e: etgeom::GeomError| ctx.schema(span.clone(), "structure", e.to_string());
    if let Some(p) = &raw.preset {
        if raw.alpha.is_some() || raw.beta.is_some() || raw.mu.is_some() {
            return Err(ctx.schema(p.span(), "preset", "give either a preset or alpha/beta/mu, not both"));
        }
        let need_k = || {
            raw.k
                .filter(|k| *k != 0)
                .ok_or_else(|| ctx.schema(p.span(), "preset", "this preset needs a nonzero integer `k`"))
        };
        let preset = match p.get_ref().as_str() {
            "einstein" => Preset::Einstein,
            "ricci_soliton" => Preset::RicciSoliton,
            "ricci_almost_soliton" => Preset::RicciAlmostSoliton,
            "yamabe_soliton" => Preset::YamabeSoliton,
            "yamabe_quasi_soliton" => Preset::YamabeQuasiSoliton { k: need_k()? },
            "conformal_gradient_soliton" => Preset::ConformalGradientSoliton,
            "quasi_einstein" => Preset::QuasiEinstein { k: need_k()? },
            "rho_einstein" => {
                let rho = raw
                    .rho
                    .as_ref()
                    .ok_or_else(|| ctx.schema(p.span(), "preset", "rho_einstein needs `rho`"))?;
                Preset::RhoEinstein {
                    rho: ctx.coefficient(rho, "rho")?,
                }
            }
            other => {
                return Err(ctx.schema(
                    p.span(),
                    "preset",
                    format!("unknown preset `{other}` (known: {})", Preset::NAMES.join(", ")),
                ))
            }
        };
        if raw.rho.is_some() && !matches!(preset, Preset::RhoEinstein { .. }) {
            return Err(ctx.schema(p.span(), "rho", "only rho_einstein takes `rho`"));
        }
        return EinsteinTypeStructure::from_preset(preset, chart, lambda, f).map_err(err);
    }
    let get = |v: &Option<Spanned<toml::Value>>, key: &str| match v {
        Some(v) => ctx.coefficient(v, key),
        None => Ok(Coefficient::integer(0)),
    };
    let params = [
        get(&raw.alpha, "alpha")?,
        get(&raw.beta, "beta")?,
        get(&raw.mu, "mu")?,
        get(&raw.rho, "rho")?,
    ];
    EinsteinTypeStructure::new(chart, params, lambda, f).map_err(err)
}

/// Parses a scenario from TOML text.
pub fn parse_scenario(src: &str) -> Result<Scenario, InputError> {
    let raw: RawScenario = toml::from_str(src).map_err(|e| {
        let (line, column) = e.span().map(|s| line_col(src, s.start)).unwrap_or((0, 0));
        InputError::Syntax {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let ctx = Ctx { src };
    let (name, chart, structure) = match (&raw.corpus, &raw.chart) {
        (Some(c), None) => {
            if raw.structure.is_some() {
                return Err(ctx.schema(c.span(), "corpus", "a corpus scenario cannot also declare [structure]"));
            }
            let entry = corpus_entry(c.get_ref())
                .ok_or_else(|| ctx.schema(c.span(), "corpus", format!("unknown corpus entry `{}`", c.get_ref())))?;
            let s = (entry.build)().map_err(|e| ctx.schema(c.span(), "corpus", e.to_string()))?;
            (c.get_ref().clone(), s.chart_arc(), Some(s))
        }
        (None, Some(ch)) => {
            let chart = Arc::new(parse_chart(&ctx, ch)?);
            let structure = match &raw.structure {
                Some(s) => Some(parse_structure(&ctx, chart.clone(), s)?),
                None => None,
            };
            (raw.name.clone().unwrap_or_else(|| "scenario".into()), chart, structure)
        }
        (Some(c), Some(_)) => {
            return Err(ctx.schema(c.span(), "corpus", "give either `corpus` or [chart], not both"));
        }
        (None, None) => return Err(InputError::Invalid("scenario needs `corpus` or a [chart] block".into())),
    };
    let name = raw.name.clone().unwrap_or(name);
    let mut tolerances = BTreeMap::new();
    for (k, v) in raw.tolerances.iter().flatten() {
        if catalog(k).is_none() {
            return Err(ctx.schema(v.span(), k, "unknown check name in [tolerances]"));
        }
        if !(*v.get_ref() >= 0.0) {
            return Err(ctx.schema(v.span(), k, "tolerance must be non-negative"));
        }
        tolerances.insert(k.clone(), *v.get_ref());
    }
    let mut checks = Vec::new();
    for c in raw.checks.iter().flatten() {
        if !is_group(c.get_ref()) && catalog(c.get_ref()).is_none() {
            let groups: Vec<&str> = GROUPS.iter().map(|g| g.name).collect();
            return Err(ctx.schema(
                c.span(),
                "checks",
                format!("unknown check `{}` (groups: {})", c.get_ref(), groups.join(", ")),
            ));
        }
        checks.push(c.get_ref().clone());
    }
    let expect = raw.expect.unwrap_or_default();
    if checks.is_empty() {
        checks.push("identities".into());
        if structure.is_some() {
            checks.push("structure".into());
            checks.push("levelset".into());
        }
        if expect.scalar.is_some() {
            checks.push("space_form".into());
        }
    }
    let s = raw.sampling.unwrap_or_default();
    let d = Sampling::default();
    let sampling = Sampling {
        count: s.count.unwrap_or(d.count),
        seed: s.seed.unwrap_or(d.seed),
        margin: s.margin.unwrap_or(d.margin),
    };
    if !(0.0..0.5).contains(&sampling.margin) {
        return Err(InputError::Invalid("sampling.margin must lie in [0, 0.5)".into()));
    }
    let level = raw.levelset.unwrap_or_default();
    Ok(Scenario {
        name,
        chart,
        structure,
        checks,
        sampling,
        tolerances,
        expected_scalar: expect.scalar,
        level_value: level.value,
        level_count: level.count.unwrap_or(12),
    })
}

/// Reads and parses a scenario file.
pub fn load_scenario(path: &std::path::Path) -> Result<Scenario, InputError> {
    let src = std::fs::read_to_string(path).map_err(|e| InputError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_scenario(&src)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GAUSSIAN: &str = r#"
name = "gaussian by hand"
[chart]
coords = ["x", "y", "z"]
domain = [[-1, 1], [-1, 1], [-1, 1]]
g_1_1 = "1"
g_2_2 = "1"
g_3_3 = 1
[structure]
alpha = 1
beta = "1"
lambda = "1/2"
f = "(x^2 + y^2 + z^2)/4"
"#;

    #[test]
    fn parses_explicit_structure() {
        let s = parse_scenario(GAUSSIAN).unwrap();
        assert_eq!(s.name, "gaussian by hand");
        assert_eq!(s.chart.dim(), 3);
        assert_eq!(s.checks, ["identities", "structure", "levelset"]);
        let st = s.structure.unwrap();
        assert_eq!(st.params()[0].value(), 1.0);
    }

    #[test]
    fn syntax_errors_carry_location() {
        let bad = GAUSSIAN.replace("g_2_2 = \"1\"", "g_2_2 = \"1 + * y\"");
        match parse_scenario(&bad) {
            Err(InputError::Syntax { line, column, .. }) => {
                assert_eq!(line, 7);
                assert!(column > 9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = GAUSSIAN.replace("[structure]", "[structure]\ngamma = 2");
        assert!(matches!(parse_scenario(&bad), Err(InputError::Syntax { .. })));
        let bad = GAUSSIAN.replace("g_3_3 = 1", "g_3_3 = 1\nh_1_1 = 2");
        assert!(matches!(parse_scenario(&bad), Err(InputError::Schema { line: 9, .. })));
    }

    #[test]
    fn corpus_and_presets() {
        let s = parse_scenario("corpus = \"sphere4_degenerate\"\n[sampling]\ncount = 3").unwrap();
        assert_eq!(s.sampling.count, 3);
        assert!(parse_scenario("corpus = \"nope\"").is_err());
        let p = GAUSSIAN.replace("alpha = 1\nbeta = \"1\"", "preset = \"quasi_einstein\"");
        assert!(matches!(parse_scenario(&p), Err(InputError::Schema { .. })));
        let p = GAUSSIAN.replace("alpha = 1\nbeta = \"1\"", "preset = \"quasi_einstein\"\nk = 3");
        let s = parse_scenario(&p).unwrap();
        assert!((s.structure.unwrap().params()[2].value() + 1.0 / 3.0).abs() < 1e-15);
    }
}

//! Runs a scenario's checks and assembles the report.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use etgeom::chart::Sampler;
use etgeom::curvature::{identity_suite, random_test_function, space_form_observations_at};
use etgeom::einstein_type::structure_suite;
use etgeom::levelset::{levelset_property_report, levelset_suite, sample_level};
use etgeom::report::{CheckEntry, CheckReport, Status, Tally, Tolerances};

use crate::groups::{group, group_of};
use crate::scenario::{InputError, Scenario};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("{0}")]
    Geometry(#[from] etgeom::GeomError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// Command-line overrides of the scenario's own settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub points: Option<usize>,
    pub seed: Option<u64>,
    pub tol_scale: f64,
    /// Restricts the run to these groups or check names.
    pub checks: Option<Vec<String>>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            points: None,
            seed: None,
            tol_scale: 1.0,
            checks: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub pass: usize,
    pub fail: usize,
    pub gated: usize,
    pub not_applicable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub class: String,
    pub seed: u64,
    pub points: usize,
    pub tolerance_scale: f64,
    pub tolerances: BTreeMap<String, f64>,
    pub checks: Vec<CheckEntry>,
    pub summary: Summary,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.summary.fail > 0 {
            1
        } else {
            0
        }
    }

    pub fn without_timing(&self) -> RunReport {
        let mut r = self.clone();
        for c in &mut r.checks {
            c.wall_time_ms = None;
        }
        r
    }

    pub fn get(&self, name: &str) -> Option<&CheckEntry> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// One line per check.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{} ({}) seed {} points {}\n",
            self.scenario, self.class, self.seed, self.points
        );
        for c in &self.checks {
            let status = match c.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::Gated => "gated",
                Status::NotApplicable => "n/a",
            };
            let max = c.max.map_or("-".to_string(), |m| format!("{m:.2e}"));
            s.push_str(&format!("{status:>5}  {:<30} max {max:>9}  tol {:.0e}", c.name, c.tolerance));
            if let Some(msg) = c.message.as_ref().or(c.gate.as_ref()) {
                s.push_str(&format!("  ({msg})"));
            }
            s.push('\n');
        }
        let t = &self.summary;
        s.push_str(&format!(
            "{} pass, {} fail, {} gated, {} not applicable\n",
            t.pass, t.fail, t.gated, t.not_applicable
        ));
        s
    }
}

fn timed(f: impl FnOnce() -> CheckReport) -> CheckReport {
    let start = std::time::Instant::now();
    let mut r = f();
    let ms = start.elapsed().as_secs_f64() * 1e3;
    let n = r.entries.len().max(1) as f64;
    for e in &mut r.entries {
        e.wall_time_ms = Some(ms / n);
    }
    r
}

/// Median of `f` over the sample points; the centre of a symmetric
/// domain is often a critical point.
fn median_level(f: &etgeom::expr::Expr, points: &[Vec<f64>]) -> Result<f64, RunError> {
    let mut v = points
        .iter()
        .map(|p| f.eval(p))
        .collect::<Result<Vec<_>, _>>()
        .map_err(etgeom::GeomError::from)?;
    v.sort_by(f64::total_cmp);
    Ok(v[v.len() / 2])
}

/// Runs the scenario.
pub fn run_scenario(sc: &Scenario, opts: &RunOptions) -> Result<RunReport, RunError> {
    let seed = opts.seed.unwrap_or(sc.sampling.seed);
    let count = opts.points.unwrap_or(sc.sampling.count);
    if count == 0 {
        return Err(InputError::Invalid("need at least one sample point".into()).into());
    }
    if !(opts.tol_scale > 0.0) {
        return Err(InputError::Invalid("tolerance scale must be positive".into()).into());
    }
    let mut tol = Tolerances::default().with_scale(opts.tol_scale);
    for (k, v) in &sc.tolerances {
        tol.set(k, *v);
    }
    let requested = opts.checks.clone().unwrap_or_else(|| sc.checks.clone());
    let mut groups = BTreeSet::new();
    let mut only: BTreeSet<&str> = BTreeSet::new();
    let mut whole_groups = false;
    for r in &requested {
        if let Some(g) = group(r) {
            groups.insert(g.name);
            whole_groups = true;
        } else if let Some(g) = group_of(r) {
            groups.insert(g.name);
            only.insert(r.as_str());
        } else {
            return Err(InputError::Invalid(format!("unknown check or group `{r}`")).into());
        }
    }
    let needs_structure = groups.contains("structure") || groups.contains("levelset");
    if needs_structure && sc.structure.is_none() {
        return Err(InputError::Invalid("structure and levelset checks need a [structure] block".into()).into());
    }

    let chart = &sc.chart;
    let points = Sampler::new(seed, sc.sampling.margin).sample(chart.domain(), count);
    chart.check_positive_definite(&points)?;

    let mut report = CheckReport::default();
    if groups.contains("identities") {
        let f = random_test_function(chart.dim(), seed);
        report.extend(timed(|| identity_suite(chart, &points, &f, &tol)));
    }
    if groups.contains("space_form") {
        report.extend(timed(|| {
            let mut t = Tally::new();
            for p in &points {
                t.observe_all(space_form_observations_at(chart, p, sc.expected_scalar));
            }
            t.finish(&tol)
        }));
    }
    if let Some(s) = &sc.structure {
        if groups.contains("structure") {
            report.extend(timed(|| structure_suite(s, &points, true, &tol)));
        }
        if groups.contains("levelset") {
            report.extend(timed(|| levelset_suite(s, &points, &tol)));
            let c = match sc.level_value {
                Some(c) => c,
                None => median_level(s.f(), &points)?,
            };
            let level = sample_level(s, c, sc.level_count, seed).unwrap_or_default();
            report.extend(timed(|| levelset_property_report(s, &level, &tol)));
        }
    }
    // a check named on its own narrows the report unless its whole group was asked for
    if !only.is_empty() {
        report.entries.retain(|e| {
            only.contains(e.name.as_str())
                || (whole_groups && group_of(&e.name).is_some_and(|g| requested.iter().any(|r| r == g.name)))
        });
    }

    let mut summary = Summary::default();
    for e in &report.entries {
        match e.status {
            Status::Pass => summary.pass += 1,
            Status::Fail => summary.fail += 1,
            Status::Gated => summary.gated += 1,
            Status::NotApplicable => summary.not_applicable += 1,
        }
    }
    let class = match &sc.structure {
        Some(s) => s.classify().map(|c| c.name()).unwrap_or_else(|_| s.parameter_class().name()),
        None => "chart",
    };
    Ok(RunReport {
        tool: "etgeom".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario: sc.name.clone(),
        class: class.to_string(),
        seed,
        points: count,
        tolerance_scale: opts.tol_scale,
        tolerances: tol.table(report.entries.iter().map(|e| e.name.as_str())),
        checks: report.entries,
        summary,
    })
}

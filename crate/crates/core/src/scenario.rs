//! Scenario files: one TOML document describing a complete run.
//!
//! ```toml
//! schema_version = 1
//! name = "kb-exact"
//!
//! [bkm]
//! n = 2
//! m = [-1.0]            # ascending coefficients m₀, m₁, …
//! lambda = "inf"        # or a number
//! chart = "kb-form"
//!
//! [reduction]
//! N = 2
//! c = [0, 0, 1, 0, -2, 0, 1]   # ascending; or `c_roots = [...]`
//!
//! [start]
//! w = [0.0, 0.0]        # or `eigenvalues` (+ optional `momentum_signs`)
//! p = [0.0, 0.0]
//!
//! [grid]
//! t = { min = -1.0, max = 1.0, count = 41 }
//! x = { min = -3.0, max = 3.0, count = 101 }
//! ```

use crate::error::{Error, Result};
use crate::flow::{FlowConfig, GridOrder};
use crate::operator::{BkmSpec, Chart, Lambda};
use crate::poly::Poly;
use crate::stackel::{PhasePoint, StackelSystem};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub bkm: BkmSection,
    pub reduction: ReductionSection,
    pub start: StartSection,
    pub grid: GridSection,
    #[serde(default)]
    pub flow: FlowConfig<f64>,
    #[serde(default)]
    pub checks: Checks,
    #[serde(default = "default_outputs")]
    pub outputs: Vec<OutputKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BkmSection {
    pub n: usize,
    /// Ascending coefficients of m(μ).
    pub m: Vec<f64>,
    pub lambda: Lambda<f64>,
    #[serde(default)]
    pub chart: Chart,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionSection {
    #[serde(rename = "N")]
    pub big_n: usize,
    /// Ascending coefficients of the monic c(μ).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    /// Alternatively, the roots of c (with multiplicity).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_roots: Option<Vec<f64>>,
}

/// Start point, either in companion coordinates (w, p) or as eigenvalues of
/// M(w) placed on the zero level set of the unrepaired c.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eigenvalues: Option<Vec<f64>>,
    /// Signs of the eigen-momenta (default all +1).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub momentum_signs: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn nodes(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let h = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.min + h * i as f64).collect()
    }

    fn validate(&self, path: &str) -> Result<()> {
        if self.count == 0 {
            return Err(Error::config(format!("{path}.count"), "must be at least 1"));
        }
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::config(path, "min and max must be finite"));
        }
        if self.count > 1 && !(self.max > self.min) {
            return Err(Error::config(path, "max must exceed min"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub t: AxisSpec,
    pub x: AxisSpec,
    #[serde(default)]
    pub order: GridOrder,
}

/// Acceptance thresholds; a failed threshold makes the run exit non-zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Checks {
    /// Bound on |a_k| at the start after repair.
    pub max_level_set: f64,
    /// Bound on |a_k| over the whole grid.
    pub max_drift: f64,
    pub bkm_residual: Option<f64>,
    pub base_residual: Option<f64>,
    pub solitonic_residual: Option<f64>,
    pub separation_residual: Option<f64>,
    /// μ values for the base and solitonic residuals.
    pub mu_samples: Vec<f64>,
    /// Compare u against the closed-form Kaup–Boussinesq soliton.
    pub closed_form_kb: Option<f64>,
    /// |u(t, ±x_max) − u(0, x_max)| bound at every t node.
    pub asymptotic: Option<f64>,
}

impl Default for Checks {
    fn default() -> Self {
        Checks {
            max_level_set: 1e-9,
            max_drift: 1e-7,
            bkm_residual: None,
            base_residual: None,
            solitonic_residual: None,
            separation_residual: None,
            mu_samples: vec![-2.0, -0.5, 0.5, 2.0],
            closed_form_kb: None,
            asymptotic: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputKind {
    /// solution.csv with columns t, x, u_1..u_n, q.
    Csv,
    /// frames/frame_NNNN.csv, one per t node.
    Frames,
}

fn default_outputs() -> Vec<OutputKind> {
    vec![OutputKind::Csv]
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let path = e
                .span()
                .map(|s| format!("line {}", text[..s.start].lines().count().max(1)))
                .unwrap_or_else(|| "<document>".into());
            Error::config(path, msg)
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// c(μ) from either `c` or `c_roots`.
    pub fn c_poly(&self) -> Result<Poly<f64>> {
        match (&self.reduction.c, &self.reduction.c_roots) {
            (Some(c), None) => Ok(Poly::new(c.clone())),
            (None, Some(r)) => Ok(Poly::from_roots(r)),
            _ => Err(Error::config("reduction", "give exactly one of `c` and `c_roots`")),
        }
    }

    pub fn bkm_spec(&self) -> Result<BkmSpec<f64>> {
        BkmSpec::new(
            self.bkm.n,
            Poly::new(self.bkm.m.clone()),
            self.bkm.lambda,
            self.bkm.chart,
        )
    }

    /// Start point in companion coordinates.
    pub fn start_point(&self) -> Result<PhasePoint<f64>> {
        let s = &self.start;
        let big_n = self.reduction.big_n;
        match (&s.w, &s.p, &s.eigenvalues) {
            (Some(w), p, None) => {
                if s.momentum_signs.is_some() {
                    return Err(Error::config("start.momentum_signs", "only valid with `eigenvalues`"));
                }
                let p = p.clone().unwrap_or_else(|| vec![0.0; big_n]);
                if w.len() != big_n {
                    return Err(Error::config("start.w", format!("expected {big_n} entries, got {}", w.len())));
                }
                if p.len() != big_n {
                    return Err(Error::config("start.p", format!("expected {big_n} entries, got {}", p.len())));
                }
                PhasePoint::new(w.clone(), p)
            }
            (None, None, Some(q)) => {
                if q.len() != big_n {
                    return Err(Error::config(
                        "start.eigenvalues",
                        format!("expected {big_n} entries, got {}", q.len()),
                    ));
                }
                let signs = s.momentum_signs.clone().unwrap_or_else(|| vec![1.0; big_n]);
                if signs.len() != big_n {
                    return Err(Error::config("start.momentum_signs", format!("expected {big_n} entries")));
                }
                let sys = StackelSystem::new(self.c_poly()?, Poly::new(self.bkm.m.clone()));
                sys.level_set_point(q, &signs)
                    .map_err(|e| Error::config("start.eigenvalues", e.to_string()))
            }
            _ => Err(Error::config("start", "give either `w` (and optionally `p`) or `eigenvalues`")),
        }
    }

    /// Checks everything that can be checked without numerical work.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if self.name.trim().is_empty() {
            return Err(Error::config("name", "must not be empty"));
        }
        if self.bkm.m.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("bkm.m", "coefficients must be finite"));
        }
        self.bkm_spec()?;
        if self.reduction.big_n == 0 {
            return Err(Error::config("reduction.N", "must be positive"));
        }
        let c = self.c_poly()?;
        let field = if self.reduction.c.is_some() { "reduction.c" } else { "reduction.c_roots" };
        if c.coeffs().iter().any(|v| !v.is_finite()) {
            return Err(Error::config(field, "coefficients must be finite"));
        }
        let want = 2 * self.reduction.big_n + self.bkm.n;
        if c.degree() != want {
            return Err(Error::config(
                field,
                format!("deg c = {} but 2N + n = {want}", c.degree()),
            ));
        }
        if !c.is_monic(1e-12) {
            return Err(Error::config(field, "c must be monic"));
        }
        self.start_point()?;
        self.grid.t.validate("grid.t")?;
        self.grid.x.validate("grid.x")?;
        self.flow.validate()?;
        let ch = &self.checks;
        for (name, v) in [
            ("checks.max_level_set", Some(ch.max_level_set)),
            ("checks.max_drift", Some(ch.max_drift)),
            ("checks.bkm_residual", ch.bkm_residual),
            ("checks.base_residual", ch.base_residual),
            ("checks.solitonic_residual", ch.solitonic_residual),
            ("checks.separation_residual", ch.separation_residual),
            ("checks.closed_form_kb", ch.closed_form_kb),
            ("checks.asymptotic", ch.asymptotic),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::config(name, "threshold must be positive"));
                }
            }
        }
        if ch.closed_form_kb.is_some() && (self.bkm.n != 2 || self.reduction.big_n != 2) {
            return Err(Error::config("checks.closed_form_kb", "requires n = 2 and N = 2"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KB: &str = r#"
schema_version = 1
name = "kb"
[bkm]
n = 2
m = [-1.0]
lambda = "inf"
chart = "kb-form"
[reduction]
N = 2
c = [0, 0, 1, 0, -2, 0, 1]
[start]
w = [0.0, 0.0]
[grid]
t = { min = -1.0, max = 1.0, count = 5 }
x = { min = -3.0, max = 3.0, count = 7 }
"#;

    #[test]
    fn parses_minimal_scenario() {
        let sc = Scenario::from_toml_str(KB).unwrap();
        assert_eq!(sc.bkm.lambda, Lambda::Infinity);
        assert_eq!(sc.bkm.chart, Chart::KbForm);
        assert_eq!(sc.start_point().unwrap(), PhasePoint::zero(2));
        assert_eq!(sc.grid.x.nodes()[3], 0.0);
        assert_eq!(sc.outputs, vec![OutputKind::Csv]);
    }

    #[test]
    fn roundtrips_through_toml() {
        let sc = Scenario::from_toml_str(KB).unwrap();
        let back = Scenario::from_toml_str(&sc.to_toml_string()).unwrap();
        assert_eq!(sc, back);
    }

    #[test]
    fn wrong_degree_names_the_field() {
        let bad = KB.replace("c = [0, 0, 1, 0, -2, 0, 1]", "c = [0, 1, 0, -2, 0, 1]");
        match Scenario::from_toml_str(&bad) {
            Err(Error::Config { path, message }) => {
                assert_eq!(path, "reduction.c");
                assert!(message.contains("2N + n"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_field_is_rejected() {
        let bad = KB.replace("n = 2\n", "n = 2\nsize = 3\n");
        let err = Scenario::from_toml_str(&bad).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("size"));
    }

    #[test]
    fn schema_version_is_enforced() {
        let bad = KB.replace("schema_version = 1", "schema_version = 7");
        assert!(matches!(
            Scenario::from_toml_str(&bad),
            Err(Error::Config { path, .. }) if path == "schema_version"
        ));
    }

    #[test]
    fn start_length_mismatch() {
        let bad = KB.replace("w = [0.0, 0.0]", "w = [0.0]");
        assert!(matches!(
            Scenario::from_toml_str(&bad),
            Err(Error::Config { path, .. }) if path == "start.w"
        ));
    }

    #[test]
    fn eigenvalue_start() {
        let text = KB
            .replace("c = [0, 0, 1, 0, -2, 0, 1]", "c_roots = [-1, -1, 0, 0, 1, 1]")
            .replace("w = [0.0, 0.0]", "eigenvalues = [-1.0, 1.0]");
        let sc = Scenario::from_toml_str(&text).unwrap();
        let pt = sc.start_point().unwrap();
        assert!((pt.w[0]).abs() < 1e-15 && (pt.w[1] + 1.0).abs() < 1e-15);
    }
}

//! JSON problem-file schema, validation, and conversion into the library
//! problem types.

use std::collections::HashSet;
use std::path::Path;

use serde::Deserialize;

use crate::exprdsl::{control_vars, variational_vars, Expr};
use crate::fracops::{FracOrder, Grid};
use crate::noether::SymmetryGenerators;
use crate::optctrl::{ControlGenerators, ControlProblem};
use crate::variational::VariationalProblem;

use super::CliError;

/// Parsed and schema-validated problem file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub schema: u32,
    pub kind: String,
    pub interval: Interval,
    pub alpha: f64,
    pub grid: GridSpec,
    pub lagrangian: String,
    #[serde(default)]
    pub dynamics: Option<Vec<String>>,
    pub boundary: Boundary,
    #[serde(default)]
    pub generators: Option<GeneratorsSpec>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(rename = "N", default)]
    pub n: Option<usize>,
    #[serde(rename = "N_list", default)]
    pub n_list: Option<Vec<usize>>,
}

/// Boundary data; scalar entries are accepted as shorthand for
/// one-component problems.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Boundary {
    pub qa: OneOrMany,
    #[serde(default)]
    pub qb: Option<OneOrMany>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(vs) => vs.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorsSpec {
    #[serde(default)]
    pub tau: Option<String>,
    #[serde(default)]
    pub xi: Option<Vec<String>>,
    #[serde(default)]
    pub rho: Option<Vec<String>>,
    #[serde(default)]
    pub sigma: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default)]
    pub format: Option<String>,
}

impl ProblemFile {
    /// Reads and validates a problem file.
    pub fn load(path: &Path) -> Result<ProblemFile, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("reading {}: {e}", path.display())))?;
        let file: ProblemFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("parsing {}: {e}", path.display())))?;
        file.validate()?;
        Ok(file)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.schema != 1 {
            return Err(CliError::Validation(format!(
                "unsupported schema version {} (expected 1)",
                self.schema
            )));
        }
        match self.kind.as_str() {
            "variational" => {
                if self.dynamics.is_some() {
                    return Err(CliError::Validation(
                        "variational problems take no dynamics".into(),
                    ));
                }
            }
            "control" => {
                if self.dynamics.as_ref().is_none_or(|d| d.is_empty()) {
                    return Err(CliError::Validation(
                        "control problems need a non-empty dynamics list".into(),
                    ));
                }
            }
            other => {
                return Err(CliError::Validation(format!(
                    "unknown kind `{other}` (expected variational or control)"
                )));
            }
        }
        if self.grid.n.is_none() && self.grid.n_list.as_ref().is_none_or(|l| l.is_empty()) {
            return Err(CliError::Validation(
                "grid needs N or a non-empty N_list".into(),
            ));
        }
        // Surface bad interval / alpha / N values before any computation.
        Grid::new(self.interval.a, self.interval.b, self.n_list(None)[0])?;
        FracOrder::new(self.alpha)?;
        Ok(())
    }

    /// Grid sizes to process: the command-line override wins, then
    /// `N_list`, then `N`.
    pub fn n_list(&self, cli_override: Option<&[usize]>) -> Vec<usize> {
        if let Some(ns) = cli_override {
            return ns.to_vec();
        }
        if let Some(list) = &self.grid.n_list {
            if !list.is_empty() {
                return list.clone();
            }
        }
        vec![self.grid.n.unwrap_or(129)]
    }

    pub fn order(&self, cli_override: Option<f64>) -> Result<FracOrder, CliError> {
        Ok(FracOrder::new(cli_override.unwrap_or(self.alpha))?)
    }

    pub fn grid(&self, n: usize) -> Result<Grid, CliError> {
        Ok(Grid::new(self.interval.a, self.interval.b, n)?)
    }

    fn n_components(&self) -> usize {
        self.boundary.qa.to_vec().len()
    }

    /// Builds the variational problem on an `n`-node grid.
    pub fn variational(
        &self,
        n: usize,
        alpha: Option<f64>,
    ) -> Result<VariationalProblem, CliError> {
        if self.kind != "variational" {
            return Err(CliError::Validation(format!(
                "kind is `{}`, expected variational",
                self.kind
            )));
        }
        let n_components = self.n_components();
        let lagrangian = parse_expr(&self.lagrangian, &variational_vars(n_components))?;
        Ok(VariationalProblem::new(
            self.grid(n)?,
            self.order(alpha)?,
            n_components,
            lagrangian,
            self.boundary.qa.to_vec(),
            self.boundary.qb.as_ref().map(OneOrMany::to_vec),
        )?)
    }

    /// Builds the control problem on an `n`-node grid. The number of
    /// controls is inferred from the `u` indices used by the cost and
    /// dynamics expressions.
    pub fn control(&self, n: usize, alpha: Option<f64>) -> Result<ControlProblem, CliError> {
        if self.kind != "control" {
            return Err(CliError::Validation(format!(
                "kind is `{}`, expected control",
                self.kind
            )));
        }
        let dynamics_text = self.dynamics.as_deref().unwrap_or(&[]);
        let n_states = self.n_components();
        let n_controls = infer_controls(
            std::iter::once(self.lagrangian.as_str()).chain(dynamics_text.iter().map(String::as_str)),
        );
        let vars = control_vars(n_states, n_controls);
        let lagrangian = parse_expr(&self.lagrangian, &vars)?;
        let dynamics = dynamics_text
            .iter()
            .map(|d| parse_expr(d, &vars))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ControlProblem::new(
            self.grid(n)?,
            self.order(alpha)?,
            n_states,
            n_controls,
            lagrangian,
            dynamics,
            self.boundary.qa.to_vec(),
            self.boundary.qb.as_ref().map(OneOrMany::to_vec),
        )?)
    }

    /// Symmetry generators for the variational Noether checks; missing
    /// entries default to zero.
    pub fn symmetry_generators(&self) -> Result<SymmetryGenerators, CliError> {
        let section = self.generators.as_ref().ok_or_else(|| {
            CliError::Validation("problem file has no generators section".into())
        })?;
        let n_components = self.n_components();
        let vars = generator_vars(n_components);
        let tau = parse_expr(section.tau.as_deref().unwrap_or("0"), &vars)?;
        let xi = parse_list(section.xi.as_deref(), n_components, "xi", &vars)?;
        if section.rho.is_some() || section.sigma.is_some() {
            return Err(CliError::Validation(
                "rho and sigma generators apply to control problems only".into(),
            ));
        }
        Ok(SymmetryGenerators::new(tau, xi)?)
    }

    /// Generators for the Hamiltonian-form Noether check; missing entries
    /// default to zero.
    pub fn control_generators(
        &self,
        n_states: usize,
        n_controls: usize,
    ) -> Result<ControlGenerators, CliError> {
        let section = self.generators.as_ref().ok_or_else(|| {
            CliError::Validation("problem file has no generators section".into())
        })?;
        let vars = control_vars(n_states, n_controls);
        let tau = parse_expr(section.tau.as_deref().unwrap_or("0"), &vars)?;
        let xi = parse_list(section.xi.as_deref(), n_states, "xi", &vars)?;
        let rho = parse_list(section.rho.as_deref(), n_controls, "rho", &vars)?;
        let sigma = parse_list(section.sigma.as_deref(), n_states, "sigma", &vars)?;
        Ok(ControlGenerators::new(tau, xi, rho, sigma)?)
    }
}

/// Variables admissible in variational symmetry generators: `t` and the
/// configuration components.
fn generator_vars(n_components: usize) -> HashSet<String> {
    let mut vars = HashSet::new();
    vars.insert("t".to_string());
    for c in 0..n_components {
        vars.insert(format!("q{c}"));
    }
    vars
}

fn parse_expr(text: &str, vars: &HashSet<String>) -> Result<Expr, CliError> {
    Expr::parse_with_vars(text, vars)
        .map_err(|e| CliError::Validation(format!("in expression `{text}`: {e}")))
}

fn parse_list(
    texts: Option<&[String]>,
    len: usize,
    name: &str,
    vars: &HashSet<String>,
) -> Result<Vec<Expr>, CliError> {
    match texts {
        None => Ok(vec![Expr::constant(0.0); len]),
        Some(texts) => {
            if texts.len() != len {
                return Err(CliError::Validation(format!(
                    "{name} has {} entries, expected {len}",
                    texts.len()
                )));
            }
            texts.iter().map(|t| parse_expr(t, vars)).collect()
        }
    }
}

/// Smallest control count covering every `u<k>` variable referenced.
fn infer_controls<'a>(exprs: impl Iterator<Item = &'a str>) -> usize {
    let mut max_index = 0usize;
    for text in exprs {
        // Cheap scan: parse is deferred to the typed builders; here any
        // u<digits> token bumps the inferred control count.
        let bytes = text.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'u'
                && (i == 0 || !bytes[i - 1].is_ascii_alphanumeric())
                && i + 1 < bytes.len()
                && bytes[i + 1].is_ascii_digit()
            {
                let mut j = i + 1;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if let Ok(idx) = text[i + 1..j].parse::<usize>() {
                    max_index = max_index.max(idx + 1);
                }
                i = j;
            } else {
                i += 1;
            }
        }
    }
    max_index.max(1)
}

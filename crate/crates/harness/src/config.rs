//! TOML configuration for suite and case-study runs.
//!
//! A file holds exactly one `[suite]` or `[case]` table. Unknown keys are
//! rejected, omitted keys take the documented defaults, and relative paths
//! are resolved against the directory of the config file.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use berm_core::selection::{LambdaMode, MethodOptions, DEFAULT_ALPHA, DEFAULT_LEVEL, DEFAULT_REPLICATES};
use berm_core::simgen::{CovarianceSpec, Scenario};
use berm_core::solver::{CvOptions, CvRule, DEFAULT_FOLDS, DEFAULT_N_LAMBDA};
use berm_core::MethodTag;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CvRuleName {
    #[default]
    MinError,
    OneSe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaModeName {
    #[default]
    PerReplicate,
    FullData,
}

/// Tuning shared by every method in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FittingConfig {
    /// Bootstrap resamples in the BERM screening step.
    pub bootstrap_replicates: usize,
    /// Mixing weight used by both BERM steps.
    pub alpha: f64,
    /// Coverage of the percentile intervals.
    pub level: f64,
    pub folds: usize,
    pub n_lambda: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_ratio: Option<f64>,
    pub cv_rule: CvRuleName,
    pub lambda_mode: LambdaModeName,
    pub tune_alpha: bool,
}

impl Default for FittingConfig {
    fn default() -> Self {
        Self {
            bootstrap_replicates: DEFAULT_REPLICATES,
            alpha: DEFAULT_ALPHA,
            level: DEFAULT_LEVEL,
            folds: DEFAULT_FOLDS,
            n_lambda: DEFAULT_N_LAMBDA,
            lambda_ratio: None,
            cv_rule: CvRuleName::MinError,
            lambda_mode: LambdaModeName::PerReplicate,
            tune_alpha: false,
        }
    }
}

impl FittingConfig {
    pub fn method_options(&self) -> MethodOptions {
        let cv = CvOptions {
            folds: self.folds,
            n_lambda: self.n_lambda,
            lambda_ratio: self.lambda_ratio,
            rule: match self.cv_rule {
                CvRuleName::MinError => CvRule::MinError,
                CvRuleName::OneSe => CvRule::OneStandardError,
            },
            ..CvOptions::default()
        };
        let mut o = MethodOptions::with_cv(cv);
        o.berm.bootstrap.replicates = self.bootstrap_replicates;
        o.berm.bootstrap.alpha = self.alpha;
        o.berm.bootstrap.level = self.level;
        o.berm.bootstrap.lambda_mode = match self.lambda_mode {
            LambdaModeName::PerReplicate => LambdaMode::PerReplicate,
            LambdaModeName::FullData => LambdaMode::FullData,
        };
        o.berm.tune_alpha = self.tune_alpha;
        o.baseline.tune_alpha = self.tune_alpha;
        o
    }

    fn validate(&self, prefix: &str) -> Result<()> {
        let key = |k: &str| format!("{prefix}.fitting.{k}");
        if self.bootstrap_replicates < 1 {
            return Err(HarnessError::schema(key("bootstrap_replicates"), "must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(HarnessError::schema(key("alpha"), format!("{} is outside (0, 1]", self.alpha)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(HarnessError::schema(key("level"), format!("{} is outside (0, 1)", self.level)));
        }
        if self.folds < 2 {
            return Err(HarnessError::schema(key("folds"), "must be at least 2"));
        }
        if self.n_lambda < 1 {
            return Err(HarnessError::schema(key("n_lambda"), "must be at least 1"));
        }
        if let Some(r) = self.lambda_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(HarnessError::schema(key("lambda_ratio"), format!("{r} is outside (0, 1)")));
            }
        }
        Ok(())
    }
}

/// A single value or a list of values to cross with the other grid axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    One(f64),
    Many(Vec<f64>),
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::One(v) => vec![*v],
            Grid::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariancePreset {
    /// Ten-block structure for 60 predictors.
    Moderate,
    /// Block structure for 500 predictors.
    HighDimensional,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovarianceChoice {
    Preset(CovariancePreset),
    Inline(CovarianceSpec),
}

impl CovarianceChoice {
    pub fn spec(&self, p: usize) -> CovarianceSpec {
        match self {
            CovarianceChoice::Preset(CovariancePreset::Moderate) => CovarianceSpec::moderate(),
            CovarianceChoice::Preset(CovariancePreset::HighDimensional) => CovarianceSpec::high_dimensional(),
            CovarianceChoice::Preset(CovariancePreset::Identity) => CovarianceSpec::identity(p),
            CovarianceChoice::Inline(s) => s.clone(),
        }
    }
}

fn default_sigma() -> Grid {
    Grid::One(1.0)
}

fn default_covariance() -> CovarianceChoice {
    CovarianceChoice::Preset(CovariancePreset::Identity)
}

/// One `[[suite.scenarios]]` entry. `sparsity` and `sigma` may be lists,
/// in which case the entry expands to their cross product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub id: String,
    pub n: usize,
    pub p: usize,
    pub sparsity: Grid,
    #[serde(default = "default_sigma")]
    pub sigma: Grid,
    #[serde(default = "default_covariance")]
    pub covariance: CovarianceChoice,
    #[serde(default)]
    pub target_skewness: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_kurtosis: Option<f64>,
    #[serde(default)]
    pub simple: bool,
}

/// A scenario after grid expansion; `scenario.seed` is still unset.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteScenario {
    pub id: String,
    pub scenario: Scenario,
}

fn all_methods() -> Vec<MethodTag> {
    MethodTag::ALL.to_vec()
}

fn default_suite_replicates() -> usize {
    DEFAULT_REPLICATES
}

fn default_suite_dir() -> PathBuf {
    PathBuf::from("suite_results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    #[serde(default = "all_methods")]
    pub methods: Vec<MethodTag>,
    #[serde(default = "default_suite_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_suite_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Draw the coefficient vector once per scenario instead of once per
    /// replicate.
    #[serde(default)]
    pub fix_coefficients: bool,
    #[serde(default)]
    pub fitting: FittingConfig,
    pub scenarios: Vec<ScenarioConfig>,
}

fn grid_label(v: f64) -> String {
    format!("{v}")
}

impl SuiteConfig {
    /// Cross every scenario entry with its sparsity and noise lists.
    /// Expanded ids are `{id}_sp{sparsity}_sd{sigma}` unless both axes hold
    /// a single value.
    pub fn expand(&self) -> Result<Vec<SuiteScenario>> {
        let mut out = Vec::new();
        for (i, s) in self.scenarios.iter().enumerate() {
            let (sparsities, sigmas) = (s.sparsity.values(), s.sigma.values());
            let single = sparsities.len() == 1 && sigmas.len() == 1;
            for &sp in &sparsities {
                for &sd in &sigmas {
                    let id = if single {
                        s.id.clone()
                    } else {
                        format!("{}_sp{}_sd{}", s.id, grid_label(sp), grid_label(sd))
                    };
                    let scenario = Scenario {
                        n: s.n,
                        p: s.p,
                        sparsity: sp,
                        sigma: sd,
                        covariance: s.covariance.spec(s.p),
                        target_skewness: s.target_skewness,
                        target_kurtosis: s.target_kurtosis,
                        simple: s.simple,
                        seed: 0,
                        coefficient_seed: None,
                    };
                    scenario
                        .validate()
                        .map_err(|e| HarnessError::schema(format!("suite.scenarios[{i}]"), e.to_string()))?;
                    out.push(SuiteScenario { id, scenario });
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 1 {
            return Err(HarnessError::schema("suite.replicates", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::schema("suite.methods", "list at least one method"));
        }
        let unique: HashSet<_> = self.methods.iter().collect();
        if unique.len() != self.methods.len() {
            return Err(HarnessError::schema("suite.methods", "methods repeat"));
        }
        if self.threads == Some(0) {
            return Err(HarnessError::schema("suite.threads", "must be at least 1"));
        }
        if self.scenarios.is_empty() {
            return Err(HarnessError::schema("suite.scenarios", "list at least one scenario"));
        }
        self.fitting.validate("suite")?;
        for (i, s) in self.scenarios.iter().enumerate() {
            let key = |k: &str| format!("suite.scenarios[{i}].{k}");
            if s.id.trim().is_empty() {
                return Err(HarnessError::schema(key("id"), "must not be empty"));
            }
            for v in s.sparsity.values() {
                if !(0.0..=1.0).contains(&v) {
                    return Err(HarnessError::schema(key("sparsity"), format!("{v} is outside [0, 1]")));
                }
            }
            if s.sparsity.values().is_empty() {
                return Err(HarnessError::schema(key("sparsity"), "empty list"));
            }
            for v in s.sigma.values() {
                if !(v.is_finite() && v > 0.0) {
                    return Err(HarnessError::schema(key("sigma"), format!("{v} must be positive")));
                }
            }
            if s.sigma.values().is_empty() {
                return Err(HarnessError::schema(key("sigma"), "empty list"));
            }
            if !s.simple && s.covariance.spec(s.p).dim() != s.p {
                return Err(HarnessError::schema(
                    key("covariance"),
                    format!("covers {} predictors, scenario has p = {}", s.covariance.spec(s.p).dim(), s.p),
                ));
            }
        }
        let mut seen = HashSet::new();
        for s in self.expand()? {
            if !seen.insert(s.id.clone()) {
                return Err(HarnessError::schema("suite.scenarios", format!("scenario id `{}` repeats", s.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupTest {
    #[default]
    Welch,
    MannWhitney,
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_case_method() -> MethodTag {
    MethodTag::Berm
}

fn default_case_dir() -> PathBuf {
    PathBuf::from("case_results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseStudyConfig {
    pub data_path: PathBuf,
    pub response_column: String,
    /// Without a group column every row belongs to the fit group.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_group: Option<String>,
    #[serde(default)]
    pub eval_groups: Vec<String>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Only individuals with a response below this value enter the group
    /// comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_threshold: Option<f64>,
    #[serde(default = "default_case_method")]
    pub method: MethodTag,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub group_test: GroupTest,
    /// Copied into `predictions.csv` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id_column: Option<String>,
    /// Columns that are neither predictors nor any of the named columns.
    #[serde(default)]
    pub exclude_columns: Vec<String>,
    #[serde(default = "default_case_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub fitting: FittingConfig,
}

impl CaseStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(HarnessError::schema(
                "case.test_fraction",
                format!("{} is outside (0, 1)", self.test_fraction),
            ));
        }
        if self.response_column.is_empty() {
            return Err(HarnessError::schema("case.response_column", "must not be empty"));
        }
        match (&self.group_column, &self.fit_group) {
            (Some(_), None) => {
                return Err(HarnessError::schema("case.fit_group", "required when group_column is set"));
            }
            (None, Some(_)) => {
                return Err(HarnessError::schema("case.group_column", "required when fit_group is set"));
            }
            (None, None) if !self.eval_groups.is_empty() => {
                return Err(HarnessError::schema("case.group_column", "required when eval_groups is set"));
            }
            _ => {}
        }
        if let (Some(fit), true) = (&self.fit_group, !self.eval_groups.is_empty()) {
            if self.eval_groups.contains(fit) {
                return Err(HarnessError::schema("case.eval_groups", format!("`{fit}` is the fit group")));
            }
        }
        if let Some(t) = self.age_threshold {
            if !t.is_finite() {
                return Err(HarnessError::schema("case.age_threshold", "must be finite"));
            }
        }
        self.fitting.validate("case")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    suite: Option<SuiteConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    case: Option<CaseStudyConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Config {
    Suite(SuiteConfig),
    Case(CaseStudyConfig),
}

impl Config {
    pub fn to_toml(&self) -> String {
        let file = match self {
            Config::Suite(s) => ConfigFile { suite: Some(s.clone()), case: None },
            Config::Case(c) => ConfigFile { suite: None, case: Some(c.clone()) },
        };
        toml::to_string(&file).expect("config serializes")
    }
}

pub fn parse_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    parse_config_str(&text, base)
}

/// Parses and validates a config; relative paths are joined onto `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<Config> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start].matches('\n').count() + 1);
        let key = line
            .and_then(|l| text.lines().nth(l - 1))
            .map(|l| l.split('=').next().unwrap_or("").trim().to_string())
            .unwrap_or_default();
        HarnessError::SchemaViolation { key, line, message: e.message().trim().to_string() }
    })?;
    let locate = |e: HarnessError| match e {
        HarnessError::SchemaViolation { key, line: None, message } => {
            let line = locate_key(text, &key);
            HarnessError::SchemaViolation { key, line, message }
        }
        other => other,
    };
    match (file.suite, file.case) {
        (Some(mut s), None) => {
            s.validate().map_err(locate)?;
            s.output_dir = base.join(&s.output_dir);
            Ok(Config::Suite(s))
        }
        (None, Some(mut c)) => {
            c.validate().map_err(locate)?;
            c.data_path = base.join(&c.data_path);
            c.output_dir = base.join(&c.output_dir);
            Ok(Config::Case(c))
        }
        (Some(_), Some(_)) => Err(HarnessError::schema("", "a config holds either [suite] or [case], not both")),
        (None, None) => Err(HarnessError::schema("", "expected a [suite] or [case] table")),
    }
}

/// Best-effort line of a dotted key such as `suite.scenarios[1].sparsity`
/// in a file written with standard table headers.
fn locate_key(text: &str, key: &str) -> Option<usize> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop()?;
    let (header, index) = match parts.last().and_then(|p| p.split_once('[')) {
        Some((name, rest)) => {
            let i: usize = rest.trim_end_matches(']').parse().ok()?;
            let mut h: Vec<&str> = parts[..parts.len() - 1].to_vec();
            h.push(name);
            (format!("[[{}]]", h.join(".")), i)
        }
        None => (format!("[{}]", parts.join(".")), 0),
    };
    let lines: Vec<&str> = text.lines().collect();
    let start = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.trim() == header)
        .nth(index)
        .map(|(i, _)| i)?;
    let leaf = leaf.split('[').next()?;
    for (i, l) in lines.iter().enumerate().skip(start + 1) {
        let t = l.trim();
        if t.starts_with('[') {
            break;
        }
        if t.split('=').next().map(str::trim) == Some(leaf) {
            return Some(i + 1);
        }
    }
    Some(start + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[suite]
[[suite.scenarios]]
id = "tiny"
n = 50
p = 5
sparsity = 0.5
"#;

    fn suite(text: &str) -> SuiteConfig {
        match parse_config_str(text, Path::new("")).unwrap() {
            Config::Suite(s) => s,
            Config::Case(_) => panic!("expected a suite"),
        }
    }

    #[test]
    fn minimal_suite_fills_defaults_and_round_trips() {
        let s = suite(MINIMAL);
        assert_eq!(s.replicates, 100);
        assert_eq!(s.methods, MethodTag::ALL.to_vec());
        assert_eq!(s.fitting, FittingConfig::default());
        assert_eq!(s.fitting.bootstrap_replicates, 100);
        assert_eq!(s.fitting.alpha, 0.5);
        assert_eq!(s.fitting.folds, 10);
        assert_eq!(s.fitting.n_lambda, 100);
        assert_eq!(s.scenarios[0].sigma, Grid::One(1.0));

        let text = Config::Suite(s.clone()).to_toml();
        assert_eq!(suite(&text), s);
    }

    #[test]
    fn grid_expansion() {
        let s = suite(
            r#"
[suite]
methods = ["berm", "lasso"]
[[suite.scenarios]]
id = "m"
n = 300
p = 60
sparsity = [0.25, 0.5, 0.75]
sigma = [1, 3, 5]
covariance = "moderate"
target_skewness = 5000
target_kurtosis = 25000
"#,
        );
        let cells = s.expand().unwrap();
        assert_eq!(cells.len(), 9);
        assert_eq!(cells[0].id, "m_sp0.25_sd1");
        assert_eq!(cells[8].id, "m_sp0.75_sd5");
        assert_eq!(cells[4].scenario.sigma, 3.0);
        assert_eq!(cells[4].scenario.covariance, CovarianceSpec::moderate());
        let text = Config::Suite(s.clone()).to_toml();
        assert_eq!(suite(&text), s);
    }

    #[test]
    fn inline_covariance() {
        let s = suite(
            r#"
[suite]
[[suite.scenarios]]
id = "blocks"
n = 40
p = 4
sparsity = 0.5
[[suite.scenarios.covariance.blocks]]
kind = "constant"
size = 2
value = 0.5
[[suite.scenarios.covariance.blocks]]
kind = "identity"
size = 2
"#,
        );
        assert_eq!(s.expand().unwrap()[0].scenario.covariance.dim(), 4);
    }

    #[test]
    fn out_of_range_sparsity_is_a_schema_violation() {
        let bad = MINIMAL.replace("sparsity = 0.5", "sparsity = 1.5");
        match parse_config_str(&bad, Path::new("")) {
            Err(HarnessError::SchemaViolation { key, line, .. }) => {
                assert_eq!(key, "suite.scenarios[0].sparsity");
                assert_eq!(line, Some(7));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let bad = MINIMAL.replace("p = 5", "p = 5\nnoise = 2");
        match parse_config_str(&bad, Path::new("")) {
            Err(HarnessError::SchemaViolation { key, line, message }) => {
                assert_eq!(line, Some(7));
                assert_eq!(key, "noise");
                assert!(message.contains("noise"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let bad = MINIMAL.replace("[suite]", "[suite]\nmethods = [\"ridge\"]");
        assert!(matches!(parse_config_str(&bad, Path::new("")), Err(HarnessError::SchemaViolation { .. })));
    }

    #[test]
    fn duplicate_ids_and_mismatched_covariance() {
        let dup = format!("{MINIMAL}{}", MINIMAL.replace("[suite]\n", ""));
        assert!(parse_config_str(&dup, Path::new("")).is_err());
        let bad = MINIMAL.replace("p = 5", "p = 5\ncovariance = \"moderate\"");
        assert!(parse_config_str(&bad, Path::new("")).is_err());
    }

    #[test]
    fn case_config_requirements() {
        let ok = r#"
[case]
data_path = "data.csv"
response_column = "age"
group_column = "group"
fit_group = "CTR"
eval_groups = ["T1D"]
age_threshold = 30
"#;
        let c = match parse_config_str(ok, Path::new("/data")).unwrap() {
            Config::Case(c) => c,
            Config::Suite(_) => panic!(),
        };
        assert_eq!(c.data_path, PathBuf::from("/data/data.csv"));
        assert_eq!(c.test_fraction, 0.2);
        assert_eq!(c.method, MethodTag::Berm);
        assert_eq!(c.group_test, GroupTest::Welch);

        let missing = ok.replace("response_column = \"age\"\n", "");
        match parse_config_str(&missing, Path::new("")) {
            Err(HarnessError::SchemaViolation { message, .. }) => assert!(message.contains("response_column")),
            other => panic!("unexpected {other:?}"),
        }
        let bad = ok.replace("age_threshold = 30", "test_fraction = 1.0");
        assert!(parse_config_str(&bad, Path::new("")).is_err());
        let bad = ok.replace("fit_group = \"CTR\"\n", "");
        assert!(parse_config_str(&bad, Path::new("")).is_err());
    }

    #[test]
    fn exactly_one_table() {
        assert!(parse_config_str("", Path::new("")).is_err());
        let both = format!("{MINIMAL}\n[case]\ndata_path = \"a\"\nresponse_column = \"y\"\n");
        assert!(parse_config_str(&both, Path::new("")).is_err());
    }
}

//! Run configuration: JSON schema, physical checks and diagnostics.

use std::fmt;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use serde_json::{Map, Value};

use spinctl_core::evolution::{drift_for_target, TargetRotation};
use spinctl_core::fidelity::SpinNumber;
use spinctl_core::noise::{kernel_registry, NoiseKernel};
use spinctl_core::optimizer::{gradient_registry, Tolerances};
use spinctl_core::{EpsilonStrength, PureQuat, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Solve,
    Sweep,
    McValidate,
    MagnusCheck,
    KernelTable,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Solve => "solve",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::McValidate => "mc-validate",
            ExperimentKind::MagnusCheck => "magnus-check",
            ExperimentKind::KernelTable => "kernel-table",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: String,
    #[serde(default = "empty_object")]
    pub params: Value,
}

fn empty_object() -> Value {
    Value::Object(Map::new())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    #[serde(default)]
    pub axis: Option<[f64; 3]>,
    pub angle: f64,
    #[serde(default)]
    pub winding: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub n_steps: usize,
    /// Reporting grid is `n_steps · refine`.
    pub refine: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { n_steps: 512, refine: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    pub kernel: KernelSpec,
    pub target: TargetSpec,
    pub tau: f64,
    #[serde(default = "default_lambda_inv")]
    pub lambda_inv: Vec<f64>,
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default = "default_two_s")]
    pub two_s: Vec<u32>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_gradient")]
    pub gradient: String,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_output")]
    pub output: String,
}

fn default_lambda_inv() -> Vec<f64> {
    vec![0.0]
}

fn default_two_s() -> Vec<u32> {
    vec![1]
}

fn default_samples() -> usize {
    10_000
}

fn default_gradient() -> String {
    "adjoint".to_string()
}

fn default_output() -> String {
    "spinctl-out".to_string()
}

const FIELDS: [&str; 13] = [
    "kind",
    "kernel",
    "target",
    "tau",
    "lambda_inv",
    "epsilon",
    "two_s",
    "grid",
    "seed",
    "samples",
    "gradient",
    "tolerances",
    "output",
];

const REQUIRED: [&str; 4] = ["kind", "kernel", "target", "tau"];

/// One problem found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

/// Every violation found, in source order where known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<Diagnostic>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem{}):", self.0.len(), if self.0.len() == 1 { "" } else { "s" })?;
        for d in &self.0 {
            writeln!(f, "  {d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl ConfigErrors {
    pub fn mentions(&self, field: &str) -> bool {
        self.0.iter().any(|d| d.field == field)
    }
}

/// Line of the first `"key":` in the text, 1-based.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines()
        .position(|l| l.find(&needle).is_some_and(|i| l[i + needle.len()..].trim_start().starts_with(':')))
        .map(|i| i + 1)
}

struct Collector<'a> {
    text: &'a str,
    out: Vec<Diagnostic>,
}

impl Collector<'_> {
    fn push(&mut self, field: &str, message: impl Into<String>) {
        let key = field.rsplit('.').next().unwrap_or(field);
        self.out.push(Diagnostic { line: line_of(self.text, key), field: field.to_string(), message: message.into() });
    }

    fn field<T: DeserializeOwned>(&mut self, obj: &Map<String, Value>, key: &str) -> Option<T> {
        let v = obj.get(key)?;
        match serde_json::from_value(v.clone()) {
            Ok(t) => Some(t),
            Err(e) => {
                self.push(key, e.to_string());
                None
            }
        }
    }
}

/// Parses and checks a configuration, reporting every violation at once.
pub fn validate_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let root: Value = serde_json::from_str(text).map_err(|e| {
        ConfigErrors(vec![Diagnostic { line: Some(e.line()), field: "<document>".into(), message: e.to_string() }])
    })?;
    let Value::Object(obj) = root else {
        return Err(ConfigErrors(vec![Diagnostic {
            line: Some(1),
            field: "<document>".into(),
            message: "expected a JSON object".into(),
        }]));
    };
    let mut c = Collector { text, out: Vec::new() };
    for key in obj.keys() {
        if !FIELDS.contains(&key.as_str()) {
            c.push(key, format!("unknown field, expected one of {}", FIELDS.join(", ")));
        }
    }
    for key in REQUIRED {
        if !obj.contains_key(key) {
            c.out.push(Diagnostic { line: None, field: key.into(), message: "missing required field".into() });
        }
    }
    // each field on its own so one bad value does not hide the others
    let kind: Option<ExperimentKind> = c.field(&obj, "kind");
    let kernel: Option<KernelSpec> = c.field(&obj, "kernel");
    let target: Option<TargetSpec> = c.field(&obj, "target");
    let tau: Option<f64> = c.field(&obj, "tau");
    let lambda_inv: Option<Vec<f64>> = c.field(&obj, "lambda_inv");
    let epsilon: Option<Vec<f64>> = c.field(&obj, "epsilon");
    let two_s: Option<Vec<u32>> = c.field(&obj, "two_s");
    let grid: Option<GridSpec> = c.field(&obj, "grid");
    let seed: Option<u64> = c.field::<Option<u64>>(&obj, "seed").flatten();
    let samples: Option<usize> = c.field(&obj, "samples");
    let gradient: Option<String> = c.field(&obj, "gradient");
    let tolerances: Option<Tolerances> = c.field(&obj, "tolerances");
    let output: Option<String> = c.field(&obj, "output");

    if let Some(t) = tau {
        if !(t > 0.0 && t.is_finite()) {
            c.push("tau", format!("must be positive and finite, got {t}"));
        }
    }
    if let Some(k) = &kernel {
        if let Err(e) = build_kernel(k) {
            c.push("kernel.params", e);
        }
    }
    if let (Some(t), Some(tau)) = (&target, tau.filter(|t| *t > 0.0)) {
        match build_target(t) {
            Ok(target) => {
                if let Err(e) = drift_for_target(&target, tau) {
                    c.push("target", e.to_string());
                }
            }
            Err(e) => c.push("target", e),
        }
    }
    if let Some(l) = &lambda_inv {
        if l.is_empty() {
            c.push("lambda_inv", "needs at least one value");
        }
        if l.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            c.push("lambda_inv", "values must be finite and non-negative");
        }
        if l.windows(2).any(|w| w[1] <= w[0]) {
            c.push("lambda_inv", "values must be strictly increasing (they are a continuation path)");
        }
    }
    if let Some(e) = &epsilon {
        for v in e {
            if let Err(err) = EpsilonStrength::new(*v) {
                c.push("epsilon", err.to_string());
            }
        }
    }
    if let Some(s) = &two_s {
        if s.is_empty() {
            c.push("two_s", "needs at least one value");
        }
        for v in s {
            if SpinNumber::new(*v).is_err() {
                c.push("two_s", format!("two_s must be at least 1, got {v}"));
            }
        }
    }
    if let Some(g) = &grid {
        if g.n_steps < 8 {
            c.push("grid.n_steps", format!("must be at least 8, got {}", g.n_steps));
        }
        if g.refine == 0 {
            c.push("grid.refine", "must be at least 1");
        }
    }
    if let Some(g) = &gradient {
        if !gradient_registry().contains(g) {
            c.push(
                "gradient",
                format!("unknown gradient method `{g}`, expected one of {}", gradient_registry().names().join(", ")),
            );
        }
    }
    if let Some(n) = samples {
        if n < 2 {
            c.push("samples", format!("need at least 2 samples, got {n}"));
        }
    }
    if let Some(k) = kind {
        let needs_seed = matches!(k, ExperimentKind::McValidate | ExperimentKind::MagnusCheck);
        if needs_seed && seed.is_none() && !obj.get("seed").is_some_and(|v| !v.is_null()) {
            c.out.push(Diagnostic {
                line: None,
                field: "seed".into(),
                message: format!("{} needs an explicit seed", k.name()),
            });
        }
        if needs_seed {
            match &epsilon {
                Some(e) if e.is_empty() => c.push("epsilon", "needs at least one value"),
                None if !obj.contains_key("epsilon") => c.out.push(Diagnostic {
                    line: None,
                    field: "epsilon".into(),
                    message: format!("{} needs epsilon values", k.name()),
                }),
                _ => {}
            }
        }
    }

    if !c.out.is_empty() {
        return Err(ConfigErrors(c.out));
    }
    Ok(RunConfig {
        kind: kind.expect("checked"),
        kernel: kernel.expect("checked"),
        target: target.expect("checked"),
        tau: tau.expect("checked"),
        lambda_inv: lambda_inv.unwrap_or_else(default_lambda_inv),
        epsilon: epsilon.unwrap_or_default(),
        two_s: two_s.unwrap_or_else(default_two_s),
        grid: grid.unwrap_or_default(),
        seed,
        samples: samples.unwrap_or_else(default_samples),
        gradient: gradient.unwrap_or_else(default_gradient),
        tolerances: tolerances.unwrap_or_default(),
        output: output.unwrap_or_else(default_output),
    })
}

pub fn build_kernel(k: &KernelSpec) -> Result<NoiseKernel, String> {
    let reg = kernel_registry();
    let family = reg.get(&k.family).map_err(|e| e.to_string())?;
    family.build(&k.params).map_err(|e| e.to_string())
}

pub fn build_target(t: &TargetSpec) -> Result<TargetRotation, String> {
    TargetRotation::new(t.axis.map(PureQuat::from_array), t.angle, t.winding).map_err(|e| e.to_string())
}

impl RunConfig {
    pub fn kernel(&self) -> NoiseKernel {
        build_kernel(&self.kernel).expect("validated")
    }

    pub fn target(&self) -> TargetRotation {
        build_target(&self.target).expect("validated")
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::new(self.tau, self.grid.n_steps).expect("validated")
    }

    pub fn spins(&self) -> Vec<SpinNumber> {
        self.two_s.iter().map(|s| SpinNumber::new(*s).expect("validated")).collect()
    }

    pub fn epsilons(&self) -> Vec<EpsilonStrength> {
        self.epsilon.iter().map(|e| EpsilonStrength::new(*e).expect("validated")).collect()
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

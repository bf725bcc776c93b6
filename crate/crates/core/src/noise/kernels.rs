use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::special::e1_difference;
use super::NoiseError;
use crate::quat::PureQuat;
use crate::registry::{Named, Registry};

pub type Mat3 = [[f64; 3]; 3];

/// Stationary, time-reversal invariant covariance `N_ij(s)`, `s = |t − t′|`.
pub trait CovarianceKernel: Send + Sync + fmt::Debug {
    /// Registry name of the kernel family.
    fn family(&self) -> &str;

    fn eval(&self, s: f64) -> Mat3;

    /// Scalar profile reported in kernel tables: the xx entry in the
    /// kernel's own frame.
    fn profile(&self, s: f64) -> f64 {
        self.eval(s)[0][0]
    }

    /// Parameters as JSON, for run reports.
    fn describe(&self) -> Value;
}

pub type NoiseKernel = Arc<dyn CovarianceKernel>;

/// 1/f noise along a fixed axis: a log-uniform mixture of exponential decays
/// between `gamma_lo` and `gamma_hi`,
/// `k(s) = ξ ∫ dγ/γ e^{−γ s} = ξ [E1(γ_lo s) − E1(γ_hi s)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OneOverF {
    pub xi: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
}

fn default_axis() -> [f64; 3] {
    [1.0, 0.0, 0.0]
}

impl OneOverF {
    pub fn new(xi: f64, gamma_lo: f64, gamma_hi: f64, axis: [f64; 3]) -> Result<Self, NoiseError> {
        let k = OneOverF { xi, gamma_lo, gamma_hi, axis };
        k.validated()
    }

    fn validated(mut self) -> Result<Self, NoiseError> {
        let mut problems = Vec::new();
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            problems.push(format!("xi must be positive, got {}", self.xi));
        }
        if !(self.gamma_lo > 0.0 && self.gamma_lo.is_finite()) {
            problems.push(format!("gamma_lo must be positive, got {}", self.gamma_lo));
        }
        if !(self.gamma_hi > self.gamma_lo && self.gamma_hi.is_finite()) {
            problems.push(format!(
                "cutoffs out of order: gamma_lo ({}) must be below gamma_hi ({})",
                self.gamma_lo, self.gamma_hi
            ));
        }
        match PureQuat::from_array(self.axis).normalized() {
            Some(a) => self.axis = a.to_array(),
            None => problems.push("axis must be a non-zero vector".to_string()),
        }
        if problems.is_empty() {
            Ok(self)
        } else {
            Err(NoiseError::InvalidParameter(problems.join("; ")))
        }
    }

    /// Scalar correlation `k(s)`.
    pub fn scalar(&self, s: f64) -> f64 {
        let s = s.abs();
        if s == 0.0 {
            return self.xi * (self.gamma_hi / self.gamma_lo).ln();
        }
        self.xi * e1_difference(self.gamma_lo * s, self.gamma_hi * s)
    }

    /// Power spectrum `∫ k(s) e^{iνs} ds = (2ξ/ν)[atan(γ_hi/ν) − atan(γ_lo/ν)]`.
    pub fn spectrum(&self, nu: f64) -> f64 {
        let nu = nu.abs();
        2.0 * self.xi / nu * ((self.gamma_hi / nu).atan() - (self.gamma_lo / nu).atan())
    }
}

impl CovarianceKernel for OneOverF {
    fn family(&self) -> &str {
        "one_over_f"
    }

    fn eval(&self, s: f64) -> Mat3 {
        let k = self.scalar(s);
        let a = self.axis;
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = k * (a[i] * a[j]);
            }
        }
        m
    }

    fn profile(&self, s: f64) -> f64 {
        self.scalar(s)
    }

    fn describe(&self) -> Value {
        json!({
            "family": self.family(),
            "xi": self.xi,
            "gamma_lo": self.gamma_lo,
            "gamma_hi": self.gamma_hi,
            "axis": self.axis,
        })
    }
}

/// Time-independent diagonal covariance `diag(κ_x, κ_y, κ_z)`, i.e. quasi-static noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagonalConstant {
    pub kappa: [f64; 3],
}

impl DiagonalConstant {
    pub fn new(kappa: [f64; 3]) -> Result<Self, NoiseError> {
        if kappa.iter().any(|k| !(*k >= 0.0 && k.is_finite())) {
            return Err(NoiseError::InvalidParameter(format!("kappa entries must be non-negative, got {kappa:?}")));
        }
        Ok(DiagonalConstant { kappa })
    }
}

impl CovarianceKernel for DiagonalConstant {
    fn family(&self) -> &str {
        "diagonal_constant"
    }

    fn eval(&self, _s: f64) -> Mat3 {
        let k = self.kappa;
        [[k[0], 0.0, 0.0], [0.0, k[1], 0.0], [0.0, 0.0, k[2]]]
    }

    fn describe(&self) -> Value {
        json!({ "family": self.family(), "kappa": self.kappa })
    }
}

/// Kernel supplied as a closure of `s ≥ 0`. Symmetry is the caller's
/// responsibility; positivity is checked when the covariance is factorized.
#[derive(Clone)]
pub struct UserMatrix {
    label: String,
    f: Arc<dyn Fn(f64) -> Mat3 + Send + Sync>,
}

impl UserMatrix {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> Mat3 + Send + Sync + 'static) -> Self {
        UserMatrix { label: label.into(), f: Arc::new(f) }
    }

    /// The identically zero kernel.
    pub fn zero() -> Self {
        UserMatrix::new("zero", |_| [[0.0; 3]; 3])
    }
}

impl fmt::Debug for UserMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserMatrix").field("label", &self.label).finish()
    }
}

impl CovarianceKernel for UserMatrix {
    fn family(&self) -> &str {
        "user_matrix"
    }

    fn eval(&self, s: f64) -> Mat3 {
        (self.f)(s.abs())
    }

    fn describe(&self) -> Value {
        json!({ "family": self.family(), "label": self.label })
    }
}

/// Builds a kernel of one family from its JSON parameters.
pub trait KernelFamily: Named + Send + Sync {
    fn build(&self, params: &Value) -> Result<NoiseKernel, NoiseError>;
}

struct OneOverFFamily;
struct DiagonalConstantFamily;
struct ZeroFamily;

fn parse<T: for<'de> Deserialize<'de>>(params: &Value) -> Result<T, NoiseError> {
    serde_json::from_value(params.clone()).map_err(|e| NoiseError::InvalidParameter(e.to_string()))
}

impl Named for OneOverFFamily {
    fn name(&self) -> &str {
        "one_over_f"
    }
}

impl KernelFamily for OneOverFFamily {
    fn build(&self, params: &Value) -> Result<NoiseKernel, NoiseError> {
        Ok(Arc::new(parse::<OneOverF>(params)?.validated()?))
    }
}

impl Named for DiagonalConstantFamily {
    fn name(&self) -> &str {
        "diagonal_constant"
    }
}

impl KernelFamily for DiagonalConstantFamily {
    fn build(&self, params: &Value) -> Result<NoiseKernel, NoiseError> {
        let k: DiagonalConstant = parse(params)?;
        Ok(Arc::new(DiagonalConstant::new(k.kappa)?))
    }
}

impl Named for ZeroFamily {
    fn name(&self) -> &str {
        "zero"
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoParams {}

impl KernelFamily for ZeroFamily {
    fn build(&self, params: &Value) -> Result<NoiseKernel, NoiseError> {
        let _: NoParams = parse(params)?;
        Ok(Arc::new(UserMatrix::zero()))
    }
}

/// Families constructible from configuration: `one_over_f`,
/// `diagonal_constant`, `zero`. Closure kernels are library-only.
pub fn kernel_registry() -> Registry<dyn KernelFamily> {
    let mut r: Registry<dyn KernelFamily> = Registry::new("kernel family");
    r.register(Box::new(OneOverFFamily));
    r.register(Box::new(DiagonalConstantFamily));
    r.register(Box::new(ZeroFamily));
    r
}

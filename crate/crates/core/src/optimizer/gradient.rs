use rayon::prelude::*;

use super::transcription::{flatten, unflatten, Transcription};
use crate::quat::PureQuat;
use crate::registry::{Named, Registry};

/// A route to `∂S_c/∂δΩ̃_k`.
pub trait GradientMethod: Named + Send + Sync {
    fn evaluate(&self, tr: &Transcription, x: &[PureQuat]) -> (f64, Vec<PureQuat>);
}

/// One forward and one backward sweep.
pub struct Adjoint;

/// Central differences, one pair of objective evaluations per coordinate.
pub struct FiniteDifference {
    pub step: f64,
}

impl Named for Adjoint {
    fn name(&self) -> &str {
        "adjoint"
    }
}

impl GradientMethod for Adjoint {
    fn evaluate(&self, tr: &Transcription, x: &[PureQuat]) -> (f64, Vec<PureQuat>) {
        let (fwd, g) = tr.value_and_gradient(x);
        (fwd.parts.total(), g)
    }
}

impl Named for FiniteDifference {
    fn name(&self) -> &str {
        "finite-difference"
    }
}

impl GradientMethod for FiniteDifference {
    fn evaluate(&self, tr: &Transcription, x: &[PureQuat]) -> (f64, Vec<PureQuat>) {
        let flat = flatten(x);
        let g: Vec<f64> = (0..flat.len())
            .into_par_iter()
            .map(|i| {
                let h = self.step * flat[i].abs().max(1.0);
                let mut p = flat.clone();
                p[i] += h;
                let fp = tr.value(&unflatten(&p));
                p[i] = flat[i] - h;
                let fm = tr.value(&unflatten(&p));
                (fp - fm) / (2.0 * h)
            })
            .collect();
        (tr.value(x), unflatten(&g))
    }
}

/// `adjoint` (default) and `finite-difference`.
pub fn gradient_registry() -> Registry<dyn GradientMethod> {
    let mut r: Registry<dyn GradientMethod> = Registry::new("gradient method");
    r.register(Box::new(Adjoint));
    r.register(Box::new(FiniteDifference { step: 1e-6 }));
    r
}

use super::NoiseError;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E1(x) = ∫_x^∞ e^{−t}/t dt`.
///
/// Power series for `x ≤ 1`, Lentz continued fraction above.
pub fn exp_integral_e1(x: f64) -> Result<f64, NoiseError> {
    if !(x > 0.0) {
        return Err(NoiseError::DomainError(x));
    }
    if x <= 1.0 {
        Ok(-EULER_GAMMA - x.ln() + series_tail(x))
    } else {
        Ok(continued_fraction(x))
    }
}

/// `Σ_{k≥1} (−1)^{k+1} x^k / (k·k!)`.
fn series_tail(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 1..60 {
        term *= -x / k as f64;
        let c = -term / k as f64;
        sum += c;
        if c.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn continued_fraction(x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-x).exp()
}

/// `E1(a) − E1(b)` for `0 < a ≤ b`, avoiding the `ln` cancellation when both
/// arguments are small.
pub(crate) fn e1_difference(a: f64, b: f64) -> f64 {
    if b <= 1.0 {
        (b / a).ln() + series_tail(a) - series_tail(b)
    } else {
        exp_integral_e1(a).expect("a > 0") - exp_integral_e1(b).expect("b > 0")
    }
}

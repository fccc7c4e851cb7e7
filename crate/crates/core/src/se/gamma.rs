//! Regularized incomplete gamma functions.

use statrs::function::gamma::ln_gamma;

use crate::{Error, Result};

const MAX_TERMS: usize = 100_000;
const EPS: f64 = 1e-16;

/// Regularized lower and upper incomplete gamma `(P(s, x), Q(s, x))`.
///
/// Series expansion below `x = s + 1`, Lentz continued fraction above.
pub fn reg_gamma(s: f64, x: f64) -> Result<(f64, f64)> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!("gamma shape must be positive, got {s}")));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("gamma argument must be nonnegative, got {x}")));
    }
    if x == 0.0 {
        return Ok((0.0, 1.0));
    }
    if x == f64::INFINITY {
        return Ok((1.0, 0.0));
    }
    let log_prefix = -x + s * x.ln() - ln_gamma(s);
    if x < s + 1.0 {
        let p = (series(s, x) + log_prefix).exp().min(1.0);
        Ok((p, 1.0 - p))
    } else {
        let q = (continued_fraction(s, x) + log_prefix).exp().min(1.0);
        Ok((1.0 - q, q))
    }
}

/// `ln sum_n x^n / (s (s+1) ... (s+n))`.
fn series(s: f64, x: f64) -> f64 {
    let mut term = 1.0 / s;
    let mut sum = term;
    let mut a = s;
    for _ in 0..MAX_TERMS {
        a += 1.0;
        term *= x / a;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum.ln()
}

/// `ln` of the continued fraction `1/(x+1-s- 1(1-s)/(x+3-s- ...))`.
fn continued_fraction(s: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let mut b = x + 1.0 - s;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_TERMS {
        let an = -(i as f64) * (i as f64 - s);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h.ln()
}

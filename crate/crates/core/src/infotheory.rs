//! Binary information-theoretic primitives.
//!
//! Everything here works in bits (base-2 logarithms). Quantities that can
//! underflow for realistic widths (`2^{-m(H+D)}` with `m` in the tens) have a
//! `log2_*` variant; the linear-space value is only produced on request.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A probability in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Probability(value))
        } else {
            Err(Error::domain("probability", value, "[0, 1]"))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Probability::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// Per-bit probability of a one in the key, restricted to `(0, 1/2]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct BiasParam(f64);

impl BiasParam {
    pub fn new(p: f64) -> Result<Self> {
        if p > 0.0 && p <= 0.5 {
            Ok(BiasParam(p))
        } else {
            Err(Error::domain("p", p, "(0, 1/2]"))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for BiasParam {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        BiasParam::new(value)
    }
}

impl From<BiasParam> for f64 {
    fn from(p: BiasParam) -> f64 {
        p.0
    }
}

/// Moment order of the guesswork; the matching Rényi order is `1/(1+rho)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RhoOrder(f64);

impl RhoOrder {
    pub fn new(rho: f64) -> Result<Self> {
        if rho >= 0.0 && rho.is_finite() {
            Ok(RhoOrder(rho))
        } else {
            Err(Error::domain("rho", rho, "[0, inf)"))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for RhoOrder {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        RhoOrder::new(value)
    }
}

impl From<RhoOrder> for f64 {
    fn from(r: RhoOrder) -> f64 {
        r.0
    }
}

fn check_unit(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::domain(name, v, "[0, 1]"))
    }
}

fn check_bias(p: f64) -> Result<()> {
    BiasParam::new(p).map(|_| ())
}

/// `x * log2(x / y)` with the convention `0 * log(0 / y) = 0`.
fn xlogx_over_y(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if y == 0.0 {
        f64::INFINITY
    } else {
        x * (x / y).log2()
    }
}

/// Binary Shannon entropy `H(q)` in bits.
pub fn binary_entropy(q: f64) -> Result<f64> {
    check_unit("q", q)?;
    let term = |x: f64| if x == 0.0 { 0.0 } else { -x * x.log2() };
    // Evaluate symmetrically so that H(q) and H(1-q) are bit-identical.
    let (a, b) = if q <= 0.5 { (q, 1.0 - q) } else { (1.0 - q, q) };
    Ok(term(a) + term(b))
}

/// Binary Kullback-Leibler divergence `D(q || p)` in bits.
///
/// When `p` is 0 or 1 and `q` puts mass where `p` has none, the result is
/// `+inf`; it is never NaN.
pub fn kl_divergence(q: f64, p: f64) -> Result<f64> {
    check_unit("q", q)?;
    check_unit("p", p)?;
    let d = xlogx_over_y(q, p) + xlogx_over_y(1.0 - q, 1.0 - p);
    // Rounding can leave a tiny negative residue near q == p.
    Ok(if d < 0.0 { 0.0 } else { d })
}

/// `H(q) + D(q || p)`, i.e. `q log(1/p) + (1-q) log(1/(1-p))`.
///
/// This is the per-bin exponent: a bin of type `q` has key probability
/// `2^{-m (H(q) + D(q||p))}`. It is maximised at `q = 1` with value
/// `log2(1/p)` because `p <= 1/2`.
pub fn cross_entropy_identity(q: f64, p: f64) -> Result<f64> {
    check_unit("q", q)?;
    check_bias(p)?;
    // Direct form avoids the cancellation between H and D.
    let one = if q == 0.0 { 0.0 } else { -q * p.log2() };
    let zero = if q == 1.0 { 0.0 } else { -(1.0 - q) * (1.0 - p).log2() };
    Ok(one + zero)
}

/// Rényi entropy of order `1/(1+rho)` of a Bernoulli(`p`) bit.
///
/// `rho = 0` returns the Shannon limit `H(p)`.
pub fn renyi_entropy_bernoulli(p: f64, rho: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain("p", p, "(0, 1)"));
    }
    let rho = RhoOrder::new(rho)?.get();
    if rho == 0.0 {
        return binary_entropy(p);
    }
    // log2(p^a + (1-p)^a) with a = 1/(1+rho), written as log1p of
    // p (p^{a-1} - 1) + (1-p) ((1-p)^{a-1} - 1) so small rho keeps precision.
    let b = -rho / (1.0 + rho);
    let q = 1.0 - p;
    let excess = p * (b * p.ln()).exp_m1() + q * (b * q.ln()).exp_m1();
    Ok((1.0 + rho) / rho * excess.ln_1p() / std::f64::consts::LN_2)
}

/// Checks that `q * m` is (within 1e-9) an integer and returns that integer.
pub fn realizable_count(m: u32, q: f64) -> Result<u32> {
    check_unit("q", q)?;
    if m == 0 {
        return Err(Error::domain("m", 0.0, "positive integer"));
    }
    let k = (q * m as f64).round();
    if (k / m as f64 - q).abs() <= 1e-9 {
        Ok(k as u32)
    } else {
        Err(Error::NotRealizable { q, m })
    }
}

/// `log2` of the probability of one particular length-`m` sequence of type `q`.
pub fn log2_type_class_probability(m: u32, q: f64, p: f64) -> Result<f64> {
    realizable_count(m, q)?;
    Ok(-(m as f64) * cross_entropy_identity(q, p)?)
}

/// Probability of one particular sequence of type `q`: `2^{-m (H(q) + D(q||p))}`.
///
/// Multiply by the binomial coefficient to get the probability of the whole
/// type class.
pub fn type_class_probability(m: u32, q: f64, p: f64) -> Result<f64> {
    Ok(log2_type_class_probability(m, q, p)?.exp2())
}

/// Method-of-types bounds `(2^{mH(q)} / (m+1)^2, 2^{mH(q)})` on the number of
/// sequences of type `q`.
pub fn type_class_size_bounds(m: u32, q: f64) -> Result<(f64, f64)> {
    realizable_count(m, q)?;
    let upper = (m as f64 * binary_entropy(q)?).exp2();
    let lower = upper / ((m as f64 + 1.0) * (m as f64 + 1.0));
    Ok((lower, upper))
}

/// Solves `1 + D(1/2 || p0) = alpha` for `p0` in `(0, 1/2]`.
///
/// `D(1/2 || p0) = -1 - log2(p0 (1 - p0)) / 2`, so `p0 (1 - p0) = 2^{-2 alpha}`
/// and `p0` is the smaller root of that quadratic.
pub fn solve_bias_for_alpha(alpha: f64) -> Result<BiasParam> {
    if !(alpha >= 1.0 && alpha.is_finite()) {
        return Err(Error::domain("alpha", alpha, "[1, inf)"));
    }
    let c = (-2.0 * alpha).exp2();
    let disc = (1.0 - 4.0 * c).max(0.0);
    // Rationalised smaller root; no cancellation for large alpha.
    let p0 = 2.0 * c / (1.0 + disc.sqrt());
    BiasParam::new(p0.min(0.5))
}

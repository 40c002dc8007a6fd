//! Closed-form growth rates (bits per output bit) and finite-size
//! expectations.
//!
//! A rate `r` means the quantity grows like `2^{r m}`. Functions returning
//! rates never return guess counts and vice versa.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infotheory::{
    binary_entropy, cross_entropy_identity, kl_divergence, realizable_count,
    renyi_entropy_bernoulli, BiasParam,
};

/// Which branch of a piecewise formula produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    /// `s > 1 - p` in the online allocated rate.
    AboveCritical,
    /// `s < 1 - p` in the online allocated rate.
    BelowCritical,
    /// Exactly on a breakpoint; both branches agree.
    Boundary,
    /// `1 - s <= p`: the user shell lies inside the likely types.
    UsersInsideBias,
    /// `1 - s > p`: the rate collapses to zero.
    UsersBeyondBias,
    PasswordDominated,
    HashDominated,
    Indeterminate,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Region::AboveCritical => "s>1-p",
            Region::BelowCritical => "s<1-p",
            Region::Boundary => "boundary",
            Region::UsersInsideBias => "1-s<=p",
            Region::UsersBeyondBias => "1-s>p",
            Region::PasswordDominated => "password-dominated",
            Region::HashDominated => "hash-dominated",
            Region::Indeterminate => "indeterminate",
        };
        f.write_str(s)
    }
}

/// One closed-form rate, optionally with bounds and the branch that fired.
///
/// For pure bounds (no point value) `rate` equals `lower`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub scenario: String,
    pub rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<Region>,
}

impl RateReport {
    fn point(scenario: &str, rate: f64) -> Self {
        RateReport {
            scenario: scenario.to_string(),
            rate,
            lower: None,
            upper: None,
            region: None,
        }
    }

    fn bounds(scenario: &str, lower: f64, upper: f64) -> Self {
        RateReport {
            scenario: scenario.to_string(),
            rate: lower,
            lower: Some(lower),
            upper: Some(upper),
            region: None,
        }
    }

    fn with_region(mut self, region: Region) -> Self {
        self.region = Some(region);
        self
    }
}

/// Parameters of one password-storage scenario.
///
/// `s` sets the number of users to `floor(2^{H(s) m - 1})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub s: f64,
    pub p: f64,
    pub m: u32,
    pub n: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

/// Largest password width supported; guess counts are `u64`.
pub const MAX_PASSWORD_BITS: u32 = 63;

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        check_s(self.s)?;
        BiasParam::new(self.p)?;
        if self.m == 0 || self.m > 62 {
            return Err(Error::domain("m", self.m as f64, "[1, 62]"));
        }
        if self.n <= self.m || self.n > MAX_PASSWORD_BITS {
            return Err(Error::config(
                "n",
                format!("need m < n <= {MAX_PASSWORD_BITS}, got m = {}, n = {}", self.m, self.n),
            ));
        }
        if let Some(theta) = self.theta {
            if !(theta > 0.0 && theta < 1.0) {
                return Err(Error::domain("theta", theta, "(0, 1)"));
            }
        }
        Ok(())
    }

    /// Number of users `floor(2^{H(s) m - 1})`, at least one.
    pub fn user_count(&self) -> Result<u64> {
        user_count(self.m, self.s)
    }
}

/// `floor(2^{H(s) m - 1})`, clamped below at one user.
pub fn user_count(m: u32, s: f64) -> Result<u64> {
    check_s(s)?;
    let e = binary_entropy(s)? * m as f64 - 1.0;
    Ok((e.exp2().floor() as u64).max(1))
}

/// Smallest password width with `n >= (1 + eps) m (log2(1/p) + H(s))`,
/// capped at the supported maximum.
pub fn password_bits_for(m: u32, s: f64, p: f64, eps: f64) -> Result<u32> {
    check_s(s)?;
    BiasParam::new(p)?;
    let need = (1.0 + eps) * m as f64 * ((1.0 / p).log2() + binary_entropy(s)?);
    Ok((need.ceil() as u32).clamp(m + 1, MAX_PASSWORD_BITS))
}

fn check_s(s: f64) -> Result<()> {
    if (0.5..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::domain("s", s, "[1/2, 1]"))
    }
}

fn check_sp(s: f64, p: f64) -> Result<()> {
    check_s(s)?;
    BiasParam::new(p)?;
    Ok(())
}

const TIE: f64 = 1e-12;

/// Online attack on allocated users: `H(s) + D(s||p)` for `s >= 1 - p`,
/// `2H(p) + D(1-p||p) - H(s)` below.
pub fn online_rate_allocated(s: f64, p: f64) -> Result<RateReport> {
    check_sp(s, p)?;
    let critical = 1.0 - p;
    let above = binary_entropy(s)? + kl_divergence(s, p)?;
    let below = 2.0 * binary_entropy(p)? + kl_divergence(critical, p)? - binary_entropy(s)?;
    let (rate, region) = if (s - critical).abs() <= TIE {
        (above, Region::Boundary)
    } else if s > critical {
        (above, Region::AboveCritical)
    } else {
        (below, Region::BelowCritical)
    };
    Ok(RateReport::point("online-allocated", rate).with_region(region))
}

/// Offline attack on allocated users (any stored bin): `D(s||p)`.
pub fn offline_rate_allocated(s: f64, p: f64) -> Result<RateReport> {
    check_sp(s, p)?;
    Ok(RateReport::point("offline-allocated", kl_divergence(s, p)?))
}

/// Offline attack without allocation: lower `D(1-s||p)` (zero once
/// `1 - s > p`), upper `D(s||p)`.
pub fn offline_rate_bounds_unallocated(s: f64, p: f64) -> Result<RateReport> {
    check_sp(s, p)?;
    let u = 1.0 - s;
    let (lower, region) = if u <= p + TIE {
        (kl_divergence(u, p)?, Region::UsersInsideBias)
    } else {
        (0.0, Region::UsersBeyondBias)
    };
    let upper = kl_divergence(s, p)?;
    Ok(RateReport::bounds("offline-unallocated", lower, upper).with_region(region))
}

/// Online attack without allocation: lower `H(s) + D(1-s||p)`, upper the
/// allocated online rate.
pub fn online_rate_bounds_unallocated(s: f64, p: f64) -> Result<RateReport> {
    let upper = online_rate_allocated(s, p)?;
    let lower = binary_entropy(s)? + kl_divergence(1.0 - s, p)?;
    let mut r = RateReport::bounds("online-unallocated", lower, upper.rate);
    r.region = upper.region;
    Ok(r)
}

/// Offline rate when every user lands in the most likely type `q = p`:
/// `H(p) - H(1-s)` if `1 - s <= p`, else zero.
pub fn most_likely_rate_offline(s: f64, p: f64) -> Result<RateReport> {
    check_sp(s, p)?;
    // The user count is 2^{H(u) m} with u = 1 - s; H is symmetric so the
    // value is the same whichever of s, 1 - s is quoted.
    let u = 1.0 - s;
    let r = if u <= p + TIE {
        RateReport::point("most-likely-offline", binary_entropy(p)? - binary_entropy(u)?)
            .with_region(Region::UsersInsideBias)
    } else {
        RateReport::point("most-likely-offline", 0.0).with_region(Region::UsersBeyondBias)
    };
    Ok(r)
}

/// Online rate when the user's bin has the most likely type: `H(p)`.
pub fn most_likely_rate_online(p: f64) -> Result<RateReport> {
    BiasParam::new(p)?;
    Ok(RateReport::point("most-likely-online", binary_entropy(p)?))
}

/// Exponents describing how fast the probability that all users fall into
/// distinct bins of type `q` decays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeProbabilityExponents {
    /// `2H(1-s) - H(q)`: the doubly exponential term is `e^{-2^{m x}}`.
    pub doubly_exp_exponent: f64,
    /// `D(q||p) 2^{H(1-s) m}`: the singly exponential term is `2^{-m x}`.
    pub singly_exp_rate: f64,
}

/// Exponents for the event that all `2^{H(1-s) m}` users land in distinct
/// bins of type `q`, for `1 - s < q <= p`.
///
/// Only the region is checked, not whether `q m` is an integer, so the
/// exponents can be read off for any `q` in the region.
pub fn most_likely_type_probability_exponents(
    m: u32,
    s: f64,
    q: f64,
    p: f64,
) -> Result<TypeProbabilityExponents> {
    check_sp(s, p)?;
    if m == 0 {
        return Err(Error::domain("m", 0.0, "positive integer"));
    }
    let u = 1.0 - s;
    if !(q > u && q <= p) {
        return Err(Error::Region {
            q,
            region: format!("({u}, {p}]"),
        });
    }
    let hu = binary_entropy(u)?;
    Ok(TypeProbabilityExponents {
        doubly_exp_exponent: 2.0 * hu - binary_entropy(q)?,
        singly_exp_rate: kl_divergence(q, p)? * (hu * m as f64).exp2(),
    })
}

/// The biased-password race analysis for one bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasedPasswordRate {
    /// `None` when the type falls between the two thresholds.
    pub rate: Option<f64>,
    pub region: Region,
    /// `H(q) + D(q||p)` for the bin.
    pub hash_rate: f64,
    /// `(n/m) H_{1/2}(theta)`.
    pub password_rate: f64,
    /// The password arm wins when `2 (n/m) H(t*)` is below the hash rate.
    pub password_threshold: f64,
    /// The hash arm wins when `(n/m) H(theta)` is above the hash rate.
    pub hash_threshold: f64,
    /// `t* = sqrt(theta) / (sqrt(theta) + sqrt(1 - theta))`, the type that
    /// dominates the guesswork of a biased password.
    pub critical_type: f64,
}

/// Critical type `sqrt(theta) / (sqrt(theta) + sqrt(1 - theta))`.
pub fn critical_password_type(theta: f64) -> Result<f64> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::domain("theta", theta, "(0, 1)"));
    }
    let a = theta.sqrt();
    Ok(a / (a + (1.0 - theta).sqrt()))
}

/// Rate of the guesswork for bin type `q_b` when passwords are i.i.d.
/// Bernoulli(`theta`) and guessed in descending probability.
pub fn biased_password_rate(scenario: &ScenarioParams, q_b: f64) -> Result<BiasedPasswordRate> {
    scenario.validate()?;
    let theta = scenario
        .theta
        .ok_or_else(|| Error::config("theta", "required for biased passwords"))?;
    realizable_count(scenario.m, q_b)?;
    let ratio = scenario.n as f64 / scenario.m as f64;
    let hash_rate = cross_entropy_identity(q_b, scenario.p)?;
    let critical_type = critical_password_type(theta)?;
    let password_threshold = 2.0 * ratio * binary_entropy(critical_type)?;
    let hash_threshold = ratio * binary_entropy(theta)?;
    let password_rate = ratio * renyi_entropy_bernoulli(theta, 1.0)?;
    let (rate, region) = if password_threshold < hash_rate {
        (Some(password_rate), Region::PasswordDominated)
    } else if hash_threshold > hash_rate {
        (Some(hash_rate), Region::HashDominated)
    } else {
        (None, Region::Indeterminate)
    };
    Ok(BiasedPasswordRate {
        rate,
        region,
        hash_rate,
        password_rate,
        password_threshold,
        hash_threshold,
        critical_type,
    })
}

/// Growth rate of the `rho`-th guesswork moment when the attacker knows a
/// preimage of every bin: `rho H_{1/(1+rho)}(p)`.
pub fn moment_rate_broken_hash(p: f64, rho: f64) -> Result<RateReport> {
    BiasParam::new(p)?;
    let r = if p == 0.5 {
        rho
    } else {
        rho * renyi_entropy_bernoulli(p, rho)?
    };
    Ok(RateReport::point("broken-hash-moment", r))
}

/// Ratio between the sizes of an unbiased and a biased key: `H(s) + D(s||p)`.
pub fn key_size_ratio(s: f64, p: f64) -> Result<f64> {
    check_sp(s, p)?;
    cross_entropy_identity(s, p)
}

/// `E[G(b)]` for one bin: the first of `2^n` i.i.d. trials with success
/// probability `P = 2^{-m (H(q) + D(q||p))}`, zero if none succeeds.
///
/// Closed form `1/P - (1-P)^N (1/P + N)` with `N = 2^n`.
pub fn expected_guesses_per_bin(m: u32, n: u32, q_b: f64, p: f64) -> Result<f64> {
    realizable_count(m, q_b)?;
    if n == 0 || n > MAX_PASSWORD_BITS + 1 {
        return Err(Error::domain("n", n as f64, "[1, 64]"));
    }
    let log2_prob = -(m as f64) * cross_entropy_identity(q_b, p)?;
    Ok(truncated_geometric_mean(log2_prob.exp2(), (n as f64).exp2()))
}

/// Mean of the first success index among `trials` Bernoulli(`prob`) trials,
/// counting zero when all fail.
pub fn truncated_geometric_mean(prob: f64, trials: f64) -> f64 {
    if prob <= 0.0 || trials <= 0.0 {
        return 0.0;
    }
    if prob >= 1.0 {
        return 1.0;
    }
    let big_n = trials;
    if big_n * prob < 0.5 {
        // Series in P: sum_j (-1)^j (j+1) P^{j+1} C(N+1, j+2). Closed form
        // cancels catastrophically here.
        let mut term = prob * big_n * (big_n + 1.0) / 2.0;
        let mut sum = 0.0f64;
        let mut j = 0.0;
        while term.abs() > sum.abs() * 1e-17 && j < big_n {
            sum += term;
            term *= -(j + 2.0) / (j + 1.0) * prob * (big_n - j - 1.0) / (j + 3.0);
            j += 1.0;
        }
        return sum;
    }
    // x = N ln(1-P); (1-P)^N = e^x.
    let x = big_n * (-prob).ln_1p();
    (-x.exp_m1()) / prob - big_n * x.exp()
}

/// Upper bound on `P(G(b) < 2^{m l})`: `1 - exp(-2 * 2^{-(H(q)+D(q||p) - l) m})`.
pub fn concentration_bound(m: u32, q_b: f64, p: f64, l: f64) -> Result<f64> {
    realizable_count(m, q_b)?;
    if l.is_nan() {
        return Err(Error::domain("l", l, "real"));
    }
    let gap = cross_entropy_identity(q_b, p)? - l;
    let inner = 2.0 * (-gap * m as f64).exp2();
    Ok((-(-inner).exp_m1()).clamp(0.0, 1.0))
}

/// Maximiser of `2H(q) + D(q||p)` over `q` in `[s, 1]`.
///
/// Unconstrained the optimum is `q = 1 - p`; the constraint moves it to
/// `max(s, 1 - p)`.
pub fn guesswork_argmax_type(s: f64, p: f64) -> Result<(f64, f64)> {
    check_sp(s, p)?;
    let q = s.max(1.0 - p);
    Ok((q, 2.0 * binary_entropy(q)? + kl_divergence(q, p)?))
}

/// Decay exponent `eps1 log2(1/p)` of the probability of undershooting the
/// allocated mean by a factor `2^{-eps1 (H(s)+D(s||p)) m}`.
pub fn concentration_exponent_allocated(epsilon1: f64, p: f64) -> Result<f64> {
    if !(epsilon1 > 0.0 && epsilon1 < 1.0) {
        return Err(Error::domain("epsilon1", epsilon1, "(0, 1)"));
    }
    BiasParam::new(p)?;
    Ok(epsilon1 * (1.0 / p).log2())
}

/// One recomputed cell of the reference rate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub p: f64,
    pub one_minus_s: f64,
    pub column: String,
    pub computed: f64,
    pub reference: f64,
    /// Decimal places the reference value is printed with.
    pub printed_decimals: u32,
    pub delta: f64,
}

impl TableCell {
    /// Whether the computed value rounds to the printed reference value.
    pub fn matches_printed_precision(&self) -> bool {
        let scale = 10f64.powi(self.printed_decimals as i32);
        ((self.computed * scale).round() - (self.reference * scale).round()).abs() < 0.5
    }
}

/// Recomputes the reference table of most-likely rates and offline bounds:
/// rows `(p, 1-s)` and columns `H(p)-H(1-s)`, `D(1-s||p)`, `D(s||p)`.
pub fn table_one() -> Result<Vec<TableCell>> {
    // (p, 1-s, [(reference, printed decimals); 3])
    let rows: [(f64, f64, [(f64, u32); 3]); 4] = [
        (0.5, 0.0, [(1.0, 0), (1.0, 0), (1.0, 0)]),
        (0.45, 0.0, [(0.9948, 4), (0.8625, 4), (1.15, 2)]),
        (0.5, 0.2, [(0.2781, 4), (0.2781, 4), (0.2781, 4)]),
        (0.21, 0.1, [(0.2725, 4), (0.0622, 4), (1.5914, 4)]),
    ];
    let mut cells = Vec::with_capacity(12);
    for (p, u, refs) in rows {
        let s = 1.0 - u;
        let computed = [
            binary_entropy(p)? - binary_entropy(u)?,
            kl_divergence(u, p)?,
            kl_divergence(s, p)?,
        ];
        let names = ["H(p)-H(1-s)", "D(1-s||p)", "D(s||p)"];
        for i in 0..3 {
            cells.push(TableCell {
                p,
                one_minus_s: u,
                column: names[i].to_string(),
                computed: computed[i],
                reference: refs[i].0,
                printed_decimals: refs[i].1,
                delta: (computed[i] - refs[i].0).abs(),
            });
        }
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn online_allocated_examples() {
        let r = online_rate_allocated(1.0, 0.45).unwrap();
        assert!(close(r.rate, 1.152003093445050, 1e-12));
        assert_eq!(r.region, Some(Region::AboveCritical));
        for s in [0.5, 0.7, 0.9, 1.0] {
            assert!(close(online_rate_allocated(s, 0.5).unwrap().rate, 1.0, 1e-12));
        }
        let r = online_rate_allocated(0.5, 0.3).unwrap();
        assert!(close(r.rate, 1.251538766995964, 1e-12));
        assert_eq!(r.region, Some(Region::BelowCritical));
        assert_eq!(online_rate_allocated(0.7, 0.3).unwrap().region, Some(Region::Boundary));
        assert!(online_rate_allocated(0.4, 0.3).is_err());
        assert!(online_rate_allocated(0.8, 0.6).is_err());
    }

    #[test]
    fn offline_allocated_examples() {
        assert!(close(offline_rate_allocated(0.9, 0.21).unwrap().rate, 1.5914, 5e-5));
        assert_eq!(offline_rate_allocated(0.5, 0.5).unwrap().rate, 0.0);
        assert!(close(offline_rate_allocated(1.0, 0.45).unwrap().rate, 1.152, 5e-4));
    }

    #[test]
    fn offline_unallocated_examples() {
        let r = offline_rate_bounds_unallocated(1.0, 0.45).unwrap();
        assert!(close(r.lower.unwrap(), 0.8625, 5e-5));
        assert!(close(r.upper.unwrap(), 1.152, 5e-4));
        let r = offline_rate_bounds_unallocated(0.8, 0.5).unwrap();
        assert!(close(r.lower.unwrap(), 0.2781, 5e-5));
        assert!(close(r.lower.unwrap(), r.upper.unwrap(), 1e-12));
        let r = offline_rate_bounds_unallocated(0.6, 0.2).unwrap();
        assert_eq!(r.lower.unwrap(), 0.0);
        assert_eq!(r.region, Some(Region::UsersBeyondBias));
        assert!(close(r.upper.unwrap(), 0.550977500432694, 1e-12));
    }

    #[test]
    fn online_unallocated_examples() {
        let r = online_rate_bounds_unallocated(1.0, 0.45).unwrap();
        assert!(close(r.lower.unwrap(), 0.862496476250065, 1e-12));
        assert!(close(r.upper.unwrap(), 1.152003093445050, 1e-12));
        for s in [0.5, 0.8, 1.0] {
            let r = online_rate_bounds_unallocated(s, 0.5).unwrap();
            assert!(close(r.lower.unwrap(), 1.0, 1e-12));
            assert!(close(r.upper.unwrap(), 1.0, 1e-12));
        }
        let r = online_rate_bounds_unallocated(0.9, 0.21).unwrap();
        assert!(close(r.lower.unwrap(), 0.531221774137456, 1e-12));
        assert!(close(r.upper.unwrap(), 2.060392434456130, 1e-12));
    }

    #[test]
    fn most_likely_examples() {
        let r = most_likely_rate_offline(0.9, 0.21).unwrap();
        assert!(close(r.rate, 0.2725, 5e-5));
        assert!(close(r.rate, 0.272487146341992, 1e-12));
        let r = most_likely_rate_offline(1.0, 0.45).unwrap();
        assert!(close(r.rate, 0.992774453987808, 1e-12));
        let r = most_likely_rate_offline(0.6, 0.3).unwrap();
        assert_eq!(r.rate, 0.0);
        assert_eq!(r.region, Some(Region::UsersBeyondBias));
        assert_eq!(most_likely_rate_online(0.5).unwrap().rate, 1.0);
        assert!(close(most_likely_rate_online(0.21).unwrap().rate, 0.7415, 5e-5));
        assert!(close(most_likely_rate_online(0.3).unwrap().rate, 0.8813, 5e-5));
    }

    #[test]
    fn type_probability_exponent_examples() {
        let e = most_likely_type_probability_exponents(8, 0.9, 0.21, 0.21).unwrap();
        assert_eq!(e.singly_exp_rate, 0.0);
        let h01 = binary_entropy(0.1).unwrap();
        let h021 = binary_entropy(0.21).unwrap();
        assert!(close(e.doubly_exp_exponent, 2.0 * h01 - h021, 1e-15));
        let e = most_likely_type_probability_exponents(8, 0.9, 0.15, 0.21).unwrap();
        assert!(close(e.doubly_exp_exponent, 0.328150882462162, 1e-12));
        assert!(close(e.singly_exp_rate, 0.0169546356909727 * 13.47267805786017, 1e-12));
        let e = most_likely_type_probability_exponents(8, 1.0, 0.3, 0.3).unwrap();
        assert!(close(e.doubly_exp_exponent, -0.881290899230693, 1e-12));
        assert!(most_likely_type_probability_exponents(8, 0.9, 0.05, 0.21).is_err());
        assert!(most_likely_type_probability_exponents(8, 0.9, 0.3, 0.21).is_err());
    }

    #[test]
    fn biased_password_examples() {
        let sc = ScenarioParams {
            s: 0.9,
            p: 0.3,
            m: 8,
            n: 24,
            theta: Some(0.5),
        };
        let r = biased_password_rate(&sc, 1.0).unwrap();
        assert_eq!(r.region, Region::HashDominated);
        assert!(close(r.rate.unwrap(), (1.0f64 / 0.3).log2(), 1e-12));
        assert_eq!(r.critical_type, 0.5);

        assert!(close(critical_password_type(0.25).unwrap(), 0.366025403784439, 1e-12));
        let sc = ScenarioParams { theta: Some(0.25), ..sc };
        let r = biased_password_rate(&sc, 1.0).unwrap();
        assert!(close(r.password_rate / 3.0, 0.899968626952992, 1e-12));

        // Strongly biased passwords lose the race.
        let sc = ScenarioParams { theta: Some(0.001), ..sc };
        let r = biased_password_rate(&sc, 1.0).unwrap();
        assert_eq!(r.region, Region::PasswordDominated);

        // Between the thresholds the rate is left undefined.
        let sc = ScenarioParams { theta: Some(0.1), n: 9, ..sc };
        let r = biased_password_rate(&sc, 0.5).unwrap();
        assert!(r.password_threshold >= r.hash_rate && r.hash_threshold <= r.hash_rate);
        assert_eq!(r.region, Region::Indeterminate);
        assert_eq!(r.rate, None);

        let sc = ScenarioParams { theta: None, ..sc };
        assert!(biased_password_rate(&sc, 0.5).is_err());
    }

    #[test]
    fn broken_hash_and_key_ratio_examples() {
        assert_eq!(moment_rate_broken_hash(0.5, 1.0).unwrap().rate, 1.0);
        assert!(close(moment_rate_broken_hash(0.25, 1.0).unwrap().rate, 0.899968626952992, 1e-12));
        assert!(close(moment_rate_broken_hash(0.3, 2.0).unwrap().rate, 1.917243376860673, 1e-12));
        assert_eq!(key_size_ratio(0.5, 0.5).unwrap(), 1.0);
        let p0 = crate::infotheory::solve_bias_for_alpha(2.0).unwrap().get();
        assert!(close(key_size_ratio(0.5, p0).unwrap(), 2.0, 1e-12));
        let p = 0.2;
        assert!(close(
            key_size_ratio(0.5, p).unwrap(),
            1.0 + kl_divergence(0.5, p).unwrap(),
            1e-12
        ));
    }

    #[test]
    fn expected_guesses_examples() {
        assert!(close(expected_guesses_per_bin(1, 1, 1.0, 0.5).unwrap(), 1.0, 1e-15));
        let e = expected_guesses_per_bin(8, 32, 1.0, 0.25).unwrap();
        assert!((e - 65536.0).abs() / 65536.0 < 1e-6);
        let e = expected_guesses_per_bin(6, 24, 1.0, 0.3).unwrap();
        assert!(close(e, 1371.742112482853, 1e-6));
        // Direct summation at a size where it is cheap.
        let (prob, n) = (0.05f64, 6u32);
        let mut direct = 0.0;
        for k in 1..=(1u32 << n) {
            direct += k as f64 * prob * (1.0 - prob).powi(k as i32 - 1);
        }
        let e = truncated_geometric_mean(prob, (n as f64).exp2());
        assert!(close(e, direct, 1e-12));
        // Deep truncation, where the series branch is used.
        let (prob, n) = (1e-9f64, 10u32);
        let big = (n as f64).exp2();
        let direct: f64 = (1..=1024).map(|k| k as f64 * prob * (1.0 - prob).powi(k - 1)).sum();
        assert!((truncated_geometric_mean(prob, big) - direct).abs() / direct < 1e-12);
        assert!(expected_guesses_per_bin(8, 32, 0.3, 0.25).is_err());
    }

    #[test]
    fn concentration_examples() {
        let ce = cross_entropy_identity(1.0, 0.3).unwrap();
        assert!(close(concentration_bound(10, 1.0, 0.3, ce).unwrap(), 0.864664716763387, 1e-12));
        let b = concentration_bound(10, 1.0, 0.3, ce - 1.0).unwrap();
        assert!(close(b, 1.951219e-3, 1e-8));
        assert_eq!(concentration_bound(10, 1.0, 0.3, -1e6).unwrap(), 0.0);
        assert!(close(concentration_exponent_allocated(0.5, 0.25).unwrap(), 1.0, 1e-15));
        assert!(close(concentration_exponent_allocated(0.3, 0.5).unwrap(), 0.3, 1e-15));
        assert!(concentration_exponent_allocated(0.0, 0.5).is_err());
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(guesswork_argmax_type(0.5, 0.5).unwrap(), (0.5, 2.0));
        let (q, v) = guesswork_argmax_type(0.5, 0.3).unwrap();
        assert!(close(q, 0.7, 1e-15));
        assert!(close(v, 2.251538766995964, 1e-12));
        let grid_best = (0..=10_000)
            .map(|i| i as f64 / 10_000.0)
            .map(|q| 2.0 * binary_entropy(q).unwrap() + kl_divergence(q, 0.3).unwrap())
            .fold(f64::MIN, f64::max);
        assert!(close(grid_best, v, 1e-7));
        assert_eq!(guesswork_argmax_type(0.8, 0.3).unwrap().0, 0.8);
    }

    #[test]
    fn table_cells() {
        let cells = table_one().unwrap();
        assert_eq!(cells.len(), 12);
        let d = cells.iter().find(|c| c.p == 0.21 && c.column == "D(s||p)").unwrap();
        assert!(d.delta < 5e-5);
        let h = cells.iter().find(|c| c.p == 0.45 && c.column == "H(p)-H(1-s)").unwrap();
        assert!(h.delta > 1e-3 && h.delta < 2.5e-3);
        assert!(!h.matches_printed_precision());
    }

    #[test]
    fn user_count_and_password_width() {
        assert_eq!(user_count(10, 0.9).unwrap(), 12);
        assert_eq!(user_count(8, 0.9).unwrap(), 6);
        assert_eq!(user_count(10, 0.8).unwrap(), 74);
        assert_eq!(password_bits_for(14, 0.9, 0.3, 0.25).unwrap(), 39);
        assert_eq!(password_bits_for(60, 0.9, 0.01, 0.25).unwrap(), MAX_PASSWORD_BITS);
    }
}

//! Exponent-rate regression over a list of widths.

use serde::{Deserialize, Serialize};

use super::{run_experiment, Engine, ExperimentConfig, Mode};
use crate::error::{Error, Result};
use crate::infotheory::{kl_divergence, renyi_entropy_bernoulli};
use crate::rates::{
    biased_password_rate, offline_rate_bounds_unallocated, online_rate_allocated,
    online_rate_bounds_unallocated,
};
use crate::stats::least_squares;

/// One width of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub m: u32,
    pub n: u32,
    pub users: u64,
    pub engine: Engine,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub realized_min_type: Option<f64>,
    pub mean: f64,
    pub log2_mean: f64,
    /// 95% half width of `log2_mean` (delta method).
    pub ci: f64,
    pub trials: u64,
    pub failures: u64,
    /// `m` times the closed-form rate at this point's realized type.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theory_log2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TheoryKind {
    /// Slope of the closed form evaluated at each point's realized type.
    Regression,
    /// The slope should fall inside `[lower, upper]`.
    Bounds,
    /// A single limiting rate.
    Constant,
}

/// What a fitted slope is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryTarget {
    pub kind: TheoryKind,
    /// Point target; for bounds, the lower end.
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
}

impl TheoryTarget {
    pub fn point(kind: TheoryKind, value: f64) -> Self {
        TheoryTarget {
            kind,
            value,
            lower: None,
            upper: None,
        }
    }

    pub fn bounds(lower: f64, upper: f64) -> Self {
        TheoryTarget {
            kind: TheoryKind::Bounds,
            value: lower,
            lower: Some(lower),
            upper: Some(upper),
        }
    }

    /// Whether `slope` is within `tol` of the target (or of the interval).
    pub fn accepts(&self, slope: f64, tol: f64) -> bool {
        match (self.lower, self.upper) {
            (Some(lo), Some(hi)) => slope >= lo - tol && slope <= hi + tol,
            _ => (slope - self.value).abs() <= tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub mode: Mode,
    pub points: Vec<SweepPoint>,
    pub fitted_rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theory: Option<TheoryTarget>,
}

/// Smallest number of widths accepted for a fit.
pub const MIN_SWEEP_POINTS: usize = 3;

pub(crate) fn sweep_widths(cfg: &ExperimentConfig) -> Result<&[u32]> {
    let widths = cfg
        .m_sweep
        .as_deref()
        .ok_or_else(|| Error::config("m_sweep", "a sweep needs a list of widths"))?;
    if widths.len() < MIN_SWEEP_POINTS {
        return Err(Error::config(
            "m_sweep",
            format!("need at least {MIN_SWEEP_POINTS} widths, got {}", widths.len()),
        ));
    }
    Ok(widths)
}

/// Runs `cfg` at every width of `cfg.m_sweep` and fits `log2(mean)`
/// against `m`.
///
/// Each width gets its own password width (from `n_epsilon`) and its own
/// seed namespace.
pub fn sweep_rate(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let widths = sweep_widths(cfg)?;
    let mut points = Vec::with_capacity(widths.len());
    for &m in widths {
        let point_cfg = cfg.at_width(m)?;
        let out = run_experiment(&point_cfg)?;
        let theory_log2 = point_theory(&point_cfg, out.realized_min_type)?;
        points.push(SweepPoint {
            m,
            n: out.n,
            users: out.users,
            engine: out.engine,
            realized_min_type: out.realized_min_type,
            mean: out.estimate.mean,
            log2_mean: out.log2_mean,
            ci: out.estimate.log2_half_width(),
            trials: out.estimate.trials,
            failures: out.estimate.failures,
            theory_log2,
        });
    }
    finish(cfg.mode, points, |pts| sweep_theory(cfg, pts))
}

pub(crate) fn finish(
    mode: Mode,
    points: Vec<SweepPoint>,
    theory: impl FnOnce(&[SweepPoint]) -> Result<Option<TheoryTarget>>,
) -> Result<SweepResult> {
    let xs: Vec<f64> = points.iter().map(|p| p.m as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.log2_mean).collect();
    let fit = least_squares(&xs, &ys)?;
    let theory = theory(&points)?;
    Ok(SweepResult {
        mode,
        points,
        fitted_rate: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        theory,
    })
}

/// `m` times the closed-form rate at one sweep point, where one exists.
fn point_theory(cfg: &ExperimentConfig, q_real: Option<f64>) -> Result<Option<f64>> {
    let p = cfg.scenario.p;
    let mf = cfg.scenario.m as f64;
    let rate = match (cfg.mode, q_real) {
        (Mode::AllocatedOnline, Some(q)) => Some(online_rate_allocated(q.max(0.5), p)?.rate),
        (Mode::AllocatedOffline, Some(q)) => Some(kl_divergence(q, p)?),
        (Mode::BiasedPassword, Some(q)) => {
            let mut sc = cfg.scenario;
            sc.s = q.max(0.5);
            biased_password_rate(&sc, q)?.rate
        }
        (Mode::NoAllocationKeyed, _) => Some(1.0),
        (Mode::BrokenHash, _) => Some(cfg.rho * renyi_entropy_bernoulli(p, cfg.rho)?),
        _ => None,
    };
    Ok(rate.map(|r| r * mf))
}

fn sweep_theory(cfg: &ExperimentConfig, points: &[SweepPoint]) -> Result<Option<TheoryTarget>> {
    let (s, p) = (cfg.scenario.s, cfg.scenario.p);
    Ok(match cfg.mode {
        Mode::UnallocatedOnline => {
            let r = online_rate_bounds_unallocated(s, p)?;
            r.lower.zip(r.upper).map(|(lo, hi)| TheoryTarget::bounds(lo, hi))
        }
        Mode::UnallocatedOffline => {
            let r = offline_rate_bounds_unallocated(s, p)?;
            r.lower.zip(r.upper).map(|(lo, hi)| TheoryTarget::bounds(lo, hi))
        }
        Mode::NoAllocationKeyed => Some(TheoryTarget::point(TheoryKind::Constant, 1.0)),
        Mode::BrokenHash => Some(TheoryTarget::point(
            TheoryKind::Constant,
            cfg.rho * renyi_entropy_bernoulli(p, cfg.rho)?,
        )),
        _ => {
            let pairs: Option<Vec<(f64, f64)>> =
                points.iter().map(|pt| pt.theory_log2.map(|t| (pt.m as f64, t))).collect();
            match pairs {
                Some(pairs) => {
                    let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
                    let fit = least_squares(&xs, &ys)?;
                    Some(TheoryTarget::point(TheoryKind::Regression, fit.slope))
                }
                None => None,
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::ScenarioParams;

    #[test]
    fn broken_hash_exact_sweep() {
        let sc = ScenarioParams {
            s: 0.9,
            p: 0.25,
            m: 8,
            n: 20,
            theta: None,
        };
        let mut cfg = ExperimentConfig::new(Mode::BrokenHash, sc);
        cfg.engine = Engine::Exact;
        cfg.m_sweep = Some(vec![8, 10, 12, 14]);
        let r = sweep_rate(&cfg).unwrap();
        assert!(r.points.iter().all(|p| p.engine == Engine::Exact));
        let t = r.theory.unwrap();
        assert!((t.value - 0.899968626952992).abs() < 1e-12);
        assert!(t.accepts(r.fitted_rate, 0.05), "slope {}", r.fitted_rate);
    }

    #[test]
    fn too_few_widths_is_a_config_error() {
        let sc = ScenarioParams {
            s: 0.9,
            p: 0.3,
            m: 8,
            n: 20,
            theta: None,
        };
        let mut cfg = ExperimentConfig::new(Mode::AllocatedOnline, sc);
        cfg.m_sweep = Some(vec![8, 10]);
        assert!(matches!(sweep_rate(&cfg), Err(Error::Config { field: "m_sweep", .. })));
    }

    #[test]
    fn bounds_accept_with_slack() {
        let t = TheoryTarget::bounds(0.2, 0.8);
        assert!(t.accepts(0.5, 0.0));
        assert!(t.accepts(0.84, 0.05));
        assert!(!t.accepts(0.9, 0.05));
    }
}

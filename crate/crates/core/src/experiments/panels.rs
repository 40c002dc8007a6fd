//! Comparison panels: concentration, most-likely profiles, key sizes and
//! backdoor preservation.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::engine::{first_hit, geometric, random_bin, Setup};
use super::sweep::{finish, sweep_widths, SweepPoint, SweepResult, TheoryKind, TheoryTarget};
use super::{run_parallel, run_with_setup, Engine, ExperimentConfig, Mode, EXHAUSTIVE_WORK_LIMIT};
use crate::allocation::{allocate_bins, backdoor_install, draw_backdoor, PasswordSource};
use crate::error::{Error, Result};
use crate::hashmodel::{BinLabel, HashFunction, KeyedHashModel};
use crate::infotheory::{binary_entropy, realizable_count, solve_bias_for_alpha};
use crate::rates::{
    concentration_bound, key_size_ratio, most_likely_rate_offline, most_likely_rate_online,
    truncated_geometric_mean,
};
use crate::seed::derive_seed;
use crate::stats::{CompensatedSum, EstimateWithCI};

/// One threshold of a concentration report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub l: f64,
    /// `floor(2^{m l})`, at least one guess.
    pub threshold: u64,
    /// Fraction of trials with `G <= threshold`.
    pub empirical: f64,
    pub half_width_95: f64,
    pub sigma: f64,
    pub bound: f64,
    /// `1 - (1 - P)^threshold`, the exact key-averaged value.
    pub exact_cdf: f64,
    /// `empirical <= bound + 3 sigma`.
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub m: u32,
    pub n: u32,
    pub p: f64,
    pub q: f64,
    pub engine: Engine,
    pub trials: u64,
    /// `log2` of the mean guesswork, over `m`.
    pub mean_exponent: f64,
    pub rows: Vec<ConcentrationRow>,
}

/// Empirical `P(G(b) <= 2^{m l})` for a bin of type `q`, next to the
/// concentration bound.
pub fn concentration_report(
    cfg: &ExperimentConfig,
    q: f64,
    l_values: &[f64],
) -> Result<ConcentrationReport> {
    cfg.validate()?;
    let sc = &cfg.scenario;
    let (m, n, p) = (sc.m, sc.n, sc.p);
    let k = realizable_count(m, q)?;
    if l_values.is_empty() {
        return Err(Error::config("l", "need at least one threshold"));
    }
    let max_l = n as f64 / m as f64;
    for &l in l_values {
        if !(l >= 0.0 && l < max_l) {
            return Err(Error::config("l", format!("need 0 <= l < n/m = {max_l}, got {l}")));
        }
    }
    let bin = BinLabel::with_weight(m, k)?;
    let prob = bin.key_probability(p);
    let budget = cfg.budget.unwrap_or(1u64 << n);
    let thresholds: Vec<u64> = l_values
        .iter()
        .map(|&l| ((m as f64 * l).exp2().floor() as u64).clamp(1, budget))
        .collect();
    let horizon = *thresholds.iter().max().expect("non-empty");
    let engine = match cfg.engine {
        Engine::Auto => {
            let work = cfg.trials as f64 * truncated_geometric_mean(prob, horizon as f64).max(1.0);
            if work <= EXHAUSTIVE_WORK_LIMIT {
                Engine::Exhaustive
            } else {
                Engine::Sampled
            }
        }
        Engine::Exact => return Err(Error::config("engine", "exact summation exists only for broken-hash")),
        e => e,
    };
    let geo = geometric(prob)?;
    let hits: Vec<Option<u64>> = run_parallel(cfg.workers, cfg.trials, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, t));
        Ok(match engine {
            Engine::Exhaustive => {
                let model = KeyedHashModel::new(m, n, p, rng.next_u64())?;
                (0..horizon).position(|pw| model.maps_to(pw, bin.bits())).map(|i| i as u64 + 1)
            }
            _ => first_hit(&mut rng, &geo, &[], |_| false, horizon).map(|i| i + 1),
        })
    })?;
    let trials = cfg.trials as f64;
    let mut rows = Vec::with_capacity(l_values.len());
    for (&l, &threshold) in l_values.iter().zip(&thresholds) {
        let count = hits.iter().filter(|h| h.is_some_and(|g| g <= threshold)).count();
        let empirical = count as f64 / trials;
        let sigma = (empirical * (1.0 - empirical) / trials).sqrt();
        let bound = concentration_bound(m, q, p, l)?;
        let exact_cdf = -(threshold as f64 * (-prob).ln_1p()).exp_m1();
        rows.push(ConcentrationRow {
            l,
            threshold,
            empirical,
            half_width_95: 1.96 * sigma,
            sigma,
            bound,
            exact_cdf,
            within_bound: empirical <= bound + 3.0 * sigma,
        });
    }
    Ok(ConcentrationReport {
        m,
        n,
        p,
        q,
        engine,
        trials: cfg.trials,
        mean_exponent: truncated_geometric_mean(prob, budget as f64).log2() / m as f64,
        rows,
    })
}

/// Users whose bins fell into the most likely shell, and how hard they
/// are to attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MostLikelyPanel {
    pub mode: Mode,
    pub m: u32,
    pub n: u32,
    pub p: f64,
    pub s: f64,
    pub users: u64,
    /// Weight of the most probable shell, `floor((m + 1) p)`.
    pub modal_weight: u32,
    pub modal_type: f64,
    /// Realizable type closest to `p`.
    pub nearest_type: f64,
    pub modal_is_nearest: bool,
    /// Most frequent user-bin weight over the unconditional trials.
    pub empirical_modal_weight: u32,
    /// Fraction of user bins per weight, over the unconditional trials.
    pub weight_histogram: Vec<f64>,
    /// Fraction of unconditional trials in which every user landed in the
    /// modal shell.
    pub modal_profile_frequency: f64,
    /// Guesswork conditioned on every user sitting in the modal shell.
    pub conditional: EstimateWithCI,
    pub conditional_log2_mean: f64,
    pub engine: Engine,
    /// Limiting rate of the conditional guesswork.
    pub theory_rate: f64,
}

/// `floor(2^{H(1-s) m})` users, at least one.
pub fn most_likely_user_count(m: u32, s: f64) -> Result<u64> {
    let e = binary_entropy(1.0 - s)? * m as f64;
    Ok((e.exp2().floor() as u64).max(1))
}

/// Profiles users' bins without allocation and measures guesswork
/// conditioned on the most likely profile.
pub fn most_likely_panel(cfg: &ExperimentConfig) -> Result<MostLikelyPanel> {
    cfg.validate()?;
    if !matches!(cfg.mode, Mode::UnallocatedOnline | Mode::UnallocatedOffline) {
        return Err(Error::config("mode", "the most-likely panel needs an unallocated mode"));
    }
    let sc = &cfg.scenario;
    let (m, p) = (sc.m, sc.p);
    let users = match cfg.users {
        Some(u) => u,
        None => most_likely_user_count(m, sc.s)?,
    };
    let modal_weight = (((m + 1) as f64 * p).floor() as u32).min(m);
    let nearest_weight = (m as f64 * p).round() as u32;
    let shell = crate::attack::binomial(m, modal_weight);
    if users > shell {
        return Err(Error::config(
            "users",
            format!("{users} users do not fit the modal shell of {shell} bins"),
        ));
    }

    // Unconditional profiles: users redraw until their bins are distinct.
    let profiles: Vec<Vec<u32>> = run_parallel(cfg.workers, cfg.trials, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed ^ PROFILE_SALT, t));
        let mut seen = std::collections::HashSet::new();
        let mut weights = Vec::with_capacity(users as usize);
        let mut attempts = 0u64;
        while (weights.len() as u64) < users {
            attempts += 1;
            if attempts > users.saturating_mul(4096).max(1 << 20) {
                return Err(Error::Resource {
                    what: "password redraws for distinct bins",
                    value: attempts,
                    cap: users.saturating_mul(4096).max(1 << 20),
                });
            }
            let b = random_bin(m, p, &mut rng);
            if seen.insert(b) {
                weights.push(b.count_ones());
            }
        }
        Ok(weights)
    })?;
    let mut counts = vec![0u64; m as usize + 1];
    let mut all_modal = 0u64;
    for prof in &profiles {
        for &w in prof {
            counts[w as usize] += 1;
        }
        if prof.iter().all(|&w| w == modal_weight) {
            all_modal += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    let weight_histogram: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let empirical_modal_weight = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(w, _)| w as u32)
        .unwrap_or(0);

    let setup = Setup::shell(cfg, users, modal_weight)?;
    let out = run_with_setup(cfg, &setup)?;
    let theory_rate = if cfg.mode.is_offline() {
        most_likely_rate_offline(sc.s, p)?.rate
    } else {
        most_likely_rate_online(p)?.rate
    };
    Ok(MostLikelyPanel {
        mode: cfg.mode,
        m,
        n: sc.n,
        p,
        s: sc.s,
        users,
        modal_weight,
        modal_type: modal_weight as f64 / m as f64,
        nearest_type: nearest_weight as f64 / m as f64,
        modal_is_nearest: modal_weight == nearest_weight,
        empirical_modal_weight,
        weight_histogram,
        modal_profile_frequency: all_modal as f64 / cfg.trials as f64,
        conditional: out.estimate,
        conditional_log2_mean: out.log2_mean,
        engine: out.engine,
        theory_rate,
    })
}

const PROFILE_SALT: u64 = 0x9E0F_11E5;

/// [`most_likely_panel`] at every width of `cfg.m_sweep`, fitting the
/// conditional `log2` mean against `m`.
pub fn most_likely_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let widths = sweep_widths(cfg)?;
    let mut points = Vec::with_capacity(widths.len());
    let mut theory = 0.0;
    for &m in widths {
        let mut point_cfg = cfg.at_width(m)?;
        point_cfg.users = cfg.users;
        let panel = most_likely_panel(&point_cfg)?;
        theory = panel.theory_rate;
        points.push(SweepPoint {
            m,
            n: panel.n,
            users: panel.users,
            engine: panel.engine,
            realized_min_type: Some(panel.modal_type),
            mean: panel.conditional.mean,
            log2_mean: panel.conditional_log2_mean,
            ci: panel.conditional.log2_half_width(),
            trials: panel.conditional.trials,
            failures: panel.conditional.failures,
            theory_log2: None,
        });
    }
    finish(cfg.mode, points, |_| {
        Ok(Some(TheoryTarget::point(TheoryKind::Constant, theory)))
    })
}

/// Key sizes for one key-size ratio `alpha`.
///
/// Sizes are `factor * 2^exponent` bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeySizeRow {
    pub alpha: f64,
    pub p0: f64,
    pub uniform_factor: f64,
    pub uniform_exponent: f64,
    pub biased_factor: f64,
    pub biased_exponent: f64,
    /// Uniform over biased key size.
    pub size_ratio: f64,
    /// `H(1/2) + D(1/2||p0)`; equals `alpha`.
    pub storage_ratio: f64,
    /// `H(p0) m`: bits per segment once the biased key is entropy coded.
    pub entropy_coded_factor: f64,
}

/// For each `alpha`, the bias `p0` whose key matches a uniform key `alpha`
/// times larger, at output width `m`.
pub fn keysize_panel(alphas: &[f64], m: u32) -> Result<Vec<KeySizeRow>> {
    if m == 0 {
        return Err(Error::domain("m", 0.0, "[1, 62]"));
    }
    let mf = m as f64;
    alphas
        .iter()
        .map(|&alpha| {
            let p0 = solve_bias_for_alpha(alpha)?.get();
            let uniform_factor = alpha * mf;
            let biased_factor = mf;
            Ok(KeySizeRow {
                alpha,
                p0,
                uniform_factor,
                uniform_exponent: alpha * mf,
                biased_factor,
                biased_exponent: alpha * mf,
                size_ratio: uniform_factor / biased_factor,
                storage_ratio: key_size_ratio(0.5, p0)?,
                entropy_coded_factor: binary_entropy(p0)? * mf,
            })
        })
        .collect()
}

/// Per-bin comparison of guesswork with and without a backdoor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinPreservation {
    pub bin: BinLabel,
    pub trials: u64,
    pub mean_without: f64,
    pub mean_with: f64,
    pub relative_difference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackdoorPreservation {
    pub m: u32,
    pub n: u32,
    pub users: u64,
    pub trials: u64,
    pub mean_without: f64,
    pub mean_with: f64,
    pub relative_difference: f64,
    /// Paired per-trial difference `G_with - G_without`.
    pub difference: EstimateWithCI,
    pub per_bin: Vec<BinPreservation>,
    pub max_bin_relative_difference: f64,
    pub installs: u64,
    pub install_collisions: u64,
    /// Every planted password evaluates to its user's final bin.
    pub installs_consistent: bool,
    /// No password was planted twice.
    pub plants_unique: bool,
    /// Every reassignment moved a user to a bin at most as likely.
    pub reassignments_monotone: bool,
}

/// Online guesswork of allocated users with the backdoor planted versus the
/// same key without it.
///
/// Both arms see the same natural preimages (common random numbers), so the
/// paired difference isolates the planted passwords. `installs` real
/// installations into keyed models additionally check the planting
/// invariants; they run at `install_n` bits so collisions actually occur.
pub fn backdoor_preservation(
    cfg: &ExperimentConfig,
    installs: u64,
    install_n: u32,
) -> Result<BackdoorPreservation> {
    cfg.validate()?;
    let sc = &cfg.scenario;
    let (m, n, p) = (sc.m, sc.n, sc.p);
    let users = match cfg.users {
        Some(u) => u,
        None => sc.user_count()?,
    };
    let plan = allocate_bins(m, p, users)?;
    let limit = 1u64 << n;
    let pairs: Vec<(u64, u64, u64)> = run_parallel(cfg.workers, cfg.trials, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, t));
        let out = draw_backdoor(&plan, n, PasswordSource::Uniform, &mut rng)?;
        let user = rng.random_range(0..out.credentials.len());
        let target = out.credentials[user].bin;
        let geo = geometric(target.key_probability(p))?;
        let mut planted: Vec<(u64, u64)> =
            out.planted.iter().map(|pl| (pl.password, pl.bin.bits())).collect();
        planted.sort_unstable();
        let own = planted.iter().find(|r| r.1 == target.bits()).map(|r| r.0);
        // Walk the natural hits once: the first is the unplanted answer,
        // the first not overwritten by a plant competes with `own`.
        let mut pos = 0u64;
        let mut without = None;
        let mut natural = None;
        loop {
            let cand = pos.saturating_add(rand_distr::Distribution::sample(&geo, &mut rng));
            if cand >= limit {
                break;
            }
            without.get_or_insert(cand);
            if planted.binary_search_by_key(&cand, |r| r.0).is_ok() {
                pos = cand + 1;
                continue;
            }
            natural = Some(cand);
            break;
        }
        let with = match (natural, own) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        let g = |x: Option<u64>| x.map_or(0, |i| i + 1);
        Ok((target.bits(), g(without), g(with)))
    })?;

    let mut per: BTreeMap<u64, (u64, CompensatedSum, CompensatedSum)> = BTreeMap::new();
    let mut diffs = Vec::with_capacity(pairs.len());
    let (mut sum0, mut sum1) = (CompensatedSum::new(), CompensatedSum::new());
    for &(bin, g0, g1) in &pairs {
        let e = per.entry(bin).or_default();
        e.0 += 1;
        e.1.add(g0 as f64);
        e.2.add(g1 as f64);
        sum0.add(g0 as f64);
        sum1.add(g1 as f64);
        diffs.push(g1 as f64 - g0 as f64);
    }
    let trials = pairs.len() as f64;
    let mean_without = sum0.value() / trials;
    let mean_with = sum1.value() / trials;
    let per_bin: Vec<BinPreservation> = per
        .into_iter()
        .map(|(bits, (count, s0, s1))| {
            let (a, b) = (s0.value() / count as f64, s1.value() / count as f64);
            BinPreservation {
                bin: BinLabel::new(bits, m).expect("bin from the plan"),
                trials: count,
                mean_without: a,
                mean_with: b,
                relative_difference: (b - a) / a,
            }
        })
        .collect();
    let max_bin_relative_difference = per_bin
        .iter()
        .map(|b| b.relative_difference.abs())
        .fold(0.0, f64::max);

    let mut install_collisions = 0;
    let mut installs_consistent = true;
    let mut plants_unique = true;
    let mut reassignments_monotone = true;
    for i in 0..installs {
        let mut model = KeyedHashModel::new(m, install_n, p, derive_seed(cfg.seed ^ INSTALL_SALT, 2 * i))?;
        let out = backdoor_install(&mut model, &plan, derive_seed(cfg.seed ^ INSTALL_SALT, 2 * i + 1))?;
        install_collisions += out.collision_count;
        for c in &out.credentials {
            installs_consistent &= model.eval(c.password)? == c.bin;
        }
        let mut pws: Vec<u64> = out.planted.iter().map(|pl| pl.password).collect();
        pws.sort_unstable();
        pws.dedup();
        plants_unique &= pws.len() == out.planted.len();
        for r in &out.reassigned {
            reassignments_monotone &= r.bin.key_probability(p) <= r.original.key_probability(p);
        }
    }

    Ok(BackdoorPreservation {
        m,
        n,
        users,
        trials: cfg.trials,
        mean_without,
        mean_with,
        relative_difference: (mean_with - mean_without) / mean_without,
        difference: EstimateWithCI::from_samples(&diffs, 0)?,
        per_bin,
        max_bin_relative_difference,
        installs,
        install_collisions,
        installs_consistent,
        plants_unique,
        reassignments_monotone,
    })
}

const INSTALL_SALT: u64 = 0x01A5_7A11;

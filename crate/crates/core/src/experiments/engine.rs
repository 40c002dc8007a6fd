//! Per-trial computation.
//!
//! The exhaustive engine builds the keyed model and evaluates guesses one at
//! a time. The sampled engine uses the fact that, with the key averaged out,
//! every password whose hash has not been looked at is an independent
//! Bernoulli(`P`) hit for a bin of probability `P`. Passwords that the setup
//! already revealed (planted passwords, or passwords users drew, including
//! rejected redraws) keep their known bins; the gaps between the remaining
//! hits are geometric. Both engines draw the same passwords and users from
//! the trial seed, so they differ only in how the key is realised.

use std::collections::{HashMap, HashSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};

use super::{Engine, ExperimentConfig, Mode, TrialRecord};
use crate::allocation::{allocate_bins, draw_backdoor, AllocationPlan, PasswordSource};
use crate::attack::{
    bernoulli_moment_exact, broken_hash_moment, offline_attack_any, online_attack,
    password_race, AttackResult, GuessStrategy, PasswordOrder, RaceArm, MAX_EXACT_MOMENT_BITS,
};
use crate::error::{Error, Result};
use crate::hashmodel::{
    sample_table_hash, BinLabel, BinSet, HashFunction, KeyedHashModel, MAX_TABLE_BITS,
};
use crate::rates::{offline_rate_bounds_unallocated, online_rate_allocated, truncated_geometric_mean};

/// `Auto` picks the exhaustive engine when `trials * E[guesses]` is at most
/// this many hash evaluations.
pub const EXHAUSTIVE_WORK_LIMIT: f64 = 2e8;

/// Smallest per-guess hit probability the sampled engine accepts. Below it
/// the geometric sampler cannot resolve `1 - P` from one.
pub const MIN_SAMPLED_PROBABILITY: f64 = 1e-15;

/// Each user gets this many redraws on average before an unallocated setup
/// gives up.
const REDRAWS_PER_USER: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Population {
    /// Least likely bins, one per user, passwords planted.
    Allocated,
    /// Users hash their own passwords and redraw until bins are distinct.
    Unallocated,
    /// Distinct bins drawn uniformly from the weight-`weight` shell,
    /// passwords planted.
    Shell { weight: u32 },
    /// Every bin's preimage is known.
    Broken,
}

pub(crate) struct Setup {
    m: u32,
    n: u32,
    p: f64,
    budget: u64,
    users: u64,
    offline: bool,
    race: bool,
    rho: f64,
    population: Population,
    order: PasswordOrder,
    source: PasswordSource,
    plan: Option<AllocationPlan>,
    plan_set: Option<PlanSet>,
    /// `P_K(b)` by popcount of `b`.
    weight_prob: Vec<f64>,
    weight_geo: Vec<Option<Geometric>>,
}

/// The allocated bins as an offline target.
struct PlanSet {
    bits: Vec<u64>,
    prob: f64,
}

impl Setup {
    pub(crate) fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let population = match cfg.mode {
            Mode::AllocatedOnline | Mode::AllocatedOffline | Mode::BiasedPassword => {
                Population::Allocated
            }
            Mode::UnallocatedOnline | Mode::UnallocatedOffline | Mode::NoAllocationKeyed => {
                Population::Unallocated
            }
            Mode::BrokenHash => Population::Broken,
        };
        let users = match cfg.mode {
            Mode::NoAllocationKeyed | Mode::BrokenHash => 1,
            _ => match cfg.users {
                Some(u) => u,
                None => cfg.scenario.user_count()?,
            },
        };
        Setup::build(cfg, population, users)
    }

    /// Setup for users conditioned to land in distinct bins of one weight.
    pub(crate) fn shell(cfg: &ExperimentConfig, users: u64, weight: u32) -> Result<Self> {
        Setup::build(cfg, Population::Shell { weight }, users)
    }

    fn build(cfg: &ExperimentConfig, population: Population, users: u64) -> Result<Self> {
        let sc = &cfg.scenario;
        let (m, n, p) = (sc.m, sc.n, sc.p);
        let race = cfg.mode == Mode::BiasedPassword;
        let (strategy, source) = match (race, sc.theta) {
            (true, Some(theta)) => (
                GuessStrategy::ProbabilityDescending { theta },
                PasswordSource::Bernoulli { theta },
            ),
            (true, None) => return Err(Error::config("theta", "the biased-password mode needs theta")),
            (false, _) => (cfg.strategy, PasswordSource::Uniform),
        };
        let order = PasswordOrder::new(strategy, n)?;
        if let Population::Shell { weight } = population {
            if weight > m {
                return Err(Error::config("weight", format!("{weight} exceeds m = {m}")));
            }
            let shell = crate::attack::binomial(m, weight);
            if users > shell {
                return Err(Error::config(
                    "users",
                    format!("{users} users do not fit in a shell of {shell} bins"),
                ));
            }
        }
        if users == 0 || (population != Population::Broken && users > 1u64 << m) {
            return Err(Error::config("users", format!("need 1 <= users <= 2^m, got {users}")));
        }
        let weight_prob: Vec<f64> = (0..=m)
            .map(|k| BinLabel::from_raw(crate::hashmodel::low_mask(k), m).key_probability(p))
            .collect();
        let weight_geo = weight_prob.iter().map(|&q| geometric(q).ok()).collect();
        let plan = match population {
            Population::Allocated => Some(allocate_bins(m, p, users)?),
            _ => None,
        };
        let plan_set = plan.as_ref().map(|pl| {
            let mut bits: Vec<u64> = pl.bins().map(|b| b.bits()).collect();
            bits.sort_unstable();
            let prob = bits.iter().map(|b| weight_prob[b.count_ones() as usize]).sum();
            PlanSet { bits, prob }
        });
        Ok(Setup {
            m,
            n,
            p,
            budget: cfg.budget.unwrap_or(1u64 << n),
            users,
            offline: cfg.mode.is_offline(),
            race,
            rho: cfg.rho,
            population,
            order,
            source,
            plan,
            plan_set,
            weight_prob,
            weight_geo,
        })
    }

    pub(crate) fn users(&self) -> u64 {
        self.users
    }

    pub(crate) fn realized_min_type(&self) -> Option<f64> {
        self.plan.as_ref().map(|p| p.realized_min_type())
    }

    pub(crate) fn strategy_label(&self, cfg: &ExperimentConfig) -> String {
        match (self.race, cfg.scenario.theta) {
            (true, Some(theta)) => GuessStrategy::ProbabilityDescending { theta }.label(),
            _ => cfg.strategy.label(),
        }
    }

    /// Replaces `Auto` by a concrete engine and rejects impossible choices.
    pub(crate) fn resolve_engine(&self, cfg: &ExperimentConfig) -> Result<Engine> {
        if self.population == Population::Broken {
            return match cfg.engine {
                Engine::Auto if self.m <= MAX_EXACT_MOMENT_BITS => Ok(Engine::Exact),
                Engine::Auto => Ok(Engine::Sampled),
                e => Ok(e),
            };
        }
        match cfg.engine {
            Engine::Auto => {
                if self.offline && self.m > MAX_TABLE_BITS {
                    return Ok(Engine::Sampled);
                }
                let work = cfg.trials as f64 * self.expected_guesses(cfg)?;
                Ok(if work <= EXHAUSTIVE_WORK_LIMIT {
                    Engine::Exhaustive
                } else {
                    Engine::Sampled
                })
            }
            Engine::Exact => Err(Error::config("engine", "exact summation exists only for broken-hash")),
            e => Ok(e),
        }
    }

    /// Rough mean guess count, used only to choose an engine.
    fn expected_guesses(&self, cfg: &ExperimentConfig) -> Result<f64> {
        let big_n = self.budget as f64;
        let m = self.m as f64;
        let sc = &cfg.scenario;
        let est = match (self.population, self.offline) {
            (Population::Allocated, false) => {
                let plan = self.plan.as_ref().expect("allocated setup has a plan");
                plan.bins()
                    .map(|b| truncated_geometric_mean(self.weight_prob[b.popcount() as usize], big_n))
                    .sum::<f64>()
                    / plan.len() as f64
            }
            (Population::Allocated, true) => {
                let set = self.plan_set.as_ref().expect("allocated setup has a plan");
                truncated_geometric_mean(set.prob, big_n)
            }
            (Population::Unallocated, _) if self.users == 1 => m.exp2(),
            (Population::Unallocated, false) => (m * online_rate_allocated(sc.s, sc.p)?.rate).exp2(),
            (Population::Unallocated, true) => {
                let upper = offline_rate_bounds_unallocated(sc.s, sc.p)?.upper.unwrap_or(1.0);
                (m * upper).exp2()
            }
            (Population::Shell { weight }, offline) => {
                let e = truncated_geometric_mean(self.weight_prob[weight as usize], big_n);
                if offline {
                    e / self.users as f64
                } else {
                    e
                }
            }
            (Population::Broken, _) => 0.0,
        };
        Ok(est.min(big_n))
    }

    /// The single record of an exact broken-hash run.
    pub(crate) fn exact_record(&self) -> Result<TrialRecord> {
        let value = bernoulli_moment_exact(self.m, self.p, self.rho)?;
        Ok(TrialRecord {
            trial_seed: 0,
            user: None,
            bin: None,
            guesses: 0,
            value,
            success: true,
            arm: None,
        })
    }

    pub(crate) fn trial(&self, engine: Engine, trial_seed: u64) -> Result<TrialRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        if self.population == Population::Broken {
            let table = sample_table_hash(self.m, self.n, self.p, rng.next_u64())?;
            let value = broken_hash_moment(&table.effective_distribution(), self.rho)?;
            return Ok(TrialRecord {
                trial_seed,
                user: None,
                bin: None,
                guesses: 0,
                value,
                success: true,
                arm: None,
            });
        }
        // Drawn first so both engines see the same passwords and users.
        let key_seed = rng.next_u64();
        let draw = self.draw_users(engine, key_seed, &mut rng)?;
        let user = rng.random_range(0..draw.bins.len() as u64) as usize;
        let target = BinLabel::from_raw(draw.bins[user], self.m);
        let result = match engine {
            Engine::Exhaustive => self.exhaustive(&draw, key_seed, user, target)?,
            _ => self.sampled(&draw, user, target, &mut rng)?,
        };
        Ok(TrialRecord {
            trial_seed,
            user: (!self.offline).then_some(user as u32),
            bin: (!self.offline).then_some(target),
            guesses: result.guesses,
            value: result.guesses as f64,
            success: result.success,
            arm: result.arm,
        })
    }

    fn draw_users(&self, engine: Engine, key_seed: u64, rng: &mut ChaCha8Rng) -> Result<UserDraw> {
        match self.population {
            Population::Allocated => {
                let plan = self.plan.as_ref().expect("allocated setup has a plan");
                let out = draw_backdoor(plan, self.n, self.source, rng)?;
                let collided = out.collision_count > 0;
                Ok(UserDraw {
                    bins: out.credentials.iter().map(|c| c.bin.bits()).collect(),
                    passwords: out.credentials.iter().map(|c| c.password).collect(),
                    revealed: out.planted.iter().map(|p| (p.password, p.bin.bits())).collect(),
                    planted: true,
                    collided,
                })
            }
            Population::Unallocated => self.draw_unallocated(engine, key_seed, rng),
            Population::Shell { weight } => self.draw_shell(weight, rng),
            Population::Broken => unreachable!("broken-hash trials draw no users"),
        }
    }

    fn draw_unallocated(&self, engine: Engine, key_seed: u64, rng: &mut ChaCha8Rng) -> Result<UserDraw> {
        let model = match engine {
            Engine::Exhaustive => Some(KeyedHashModel::new(self.m, self.n, self.p, key_seed)?),
            _ => None,
        };
        let cap = REDRAWS_PER_USER.saturating_mul(self.users).max(1 << 20);
        let mut revealed: HashMap<u64, u64> = HashMap::new();
        let mut used: HashSet<u64> = HashSet::new();
        let mut draw = UserDraw::with_capacity(self.users as usize);
        let mut attempts = 0u64;
        while (draw.bins.len() as u64) < self.users {
            attempts += 1;
            if attempts > cap {
                return Err(Error::Resource {
                    what: "password redraws for distinct bins",
                    value: attempts,
                    cap,
                });
            }
            let pw = rng.random_range(0..1u64 << self.n);
            let bin = match &model {
                Some(h) => h.eval_bits(pw),
                None => *revealed
                    .entry(pw)
                    .or_insert_with(|| random_bin(self.m, self.p, rng)),
            };
            if used.insert(bin) {
                draw.bins.push(bin);
                draw.passwords.push(pw);
            }
        }
        draw.revealed = revealed.into_iter().collect();
        Ok(draw)
    }

    fn draw_shell(&self, weight: u32, rng: &mut ChaCha8Rng) -> Result<UserDraw> {
        let mut used: HashSet<u64> = HashSet::new();
        let mut taken: HashSet<u64> = HashSet::new();
        let mut draw = UserDraw::with_capacity(self.users as usize);
        draw.planted = true;
        while (draw.bins.len() as u64) < self.users {
            let bin = random_shell_bin(self.m, weight, rng);
            if !used.insert(bin) {
                continue;
            }
            let pw = loop {
                let pw = rng.random_range(0..1u64 << self.n);
                if taken.insert(pw) {
                    break pw;
                }
            };
            draw.bins.push(bin);
            draw.passwords.push(pw);
            draw.revealed.push((pw, bin));
        }
        Ok(draw)
    }

    fn exhaustive(&self, draw: &UserDraw, key_seed: u64, user: usize, target: BinLabel) -> Result<AttackResult> {
        let mut model = KeyedHashModel::new(self.m, self.n, self.p, key_seed)?;
        if draw.planted {
            for &(pw, bin) in &draw.revealed {
                model.set_override(pw, BinLabel::from_raw(bin, self.m))?;
            }
        }
        if self.race {
            password_race(&model, target, draw.passwords[user], &self.order, self.budget)
        } else if self.offline {
            let labels: Vec<BinLabel> = draw.bins.iter().map(|&b| BinLabel::from_raw(b, self.m)).collect();
            let set = BinSet::from_bins(self.m, &labels)?;
            offline_attack_any(&model, &set, &self.order, self.budget)
        } else {
            online_attack(&model, target, &self.order, self.budget)
        }
    }

    fn sampled(&self, draw: &UserDraw, user: usize, target: BinLabel, rng: &mut ChaCha8Rng) -> Result<AttackResult> {
        let mut revealed: Vec<(u64, u64)> = draw
            .revealed
            .iter()
            .map(|&(pw, bin)| (self.order.position_of(pw), bin))
            .collect();
        revealed.sort_unstable();
        let hit = if self.offline {
            let own;
            let (bits, prob): (&[u64], f64) = match &self.plan_set {
                Some(set) if !draw.collided => (&set.bits, set.prob),
                _ => {
                    let mut b = draw.bins.clone();
                    b.sort_unstable();
                    b.dedup();
                    let prob = b.iter().map(|x| self.weight_prob[x.count_ones() as usize]).sum();
                    own = b;
                    (&own, prob)
                }
            };
            let geo = geometric(prob)?;
            first_hit(rng, &geo, &revealed, |b| bits.binary_search(&b).is_ok(), self.budget)
        } else {
            let k = target.popcount() as usize;
            let geo = self.weight_geo[k]
                .as_ref()
                .ok_or_else(|| Error::domain("bin probability", self.weight_prob[k], ">= 1e-15"))?;
            first_hit(rng, geo, &revealed, |b| b == target.bits(), self.budget)
        };
        let pw_pos = self.race.then(|| self.order.position_of(draw.passwords[user]));
        Ok(match hit {
            Some(pos) => AttackResult {
                guesses: pos + 1,
                success: true,
                target: crate::attack::AttackTarget::Bin { bin: target },
                arm: pw_pos.map(|pp| if pp == pos { RaceArm::Password } else { RaceArm::Hash }),
            },
            None => AttackResult {
                guesses: 0,
                success: false,
                target: crate::attack::AttackTarget::Bin { bin: target },
                arm: None,
            },
        })
    }
}

/// Users' bins and passwords for one trial, plus every password whose hash
/// the setup has fixed.
struct UserDraw {
    bins: Vec<u64>,
    passwords: Vec<u64>,
    revealed: Vec<(u64, u64)>,
    /// Whether `revealed` overrides the key (planted) or merely records it.
    planted: bool,
    collided: bool,
}

impl UserDraw {
    fn with_capacity(n: usize) -> Self {
        UserDraw {
            bins: Vec::with_capacity(n),
            passwords: Vec::with_capacity(n),
            revealed: Vec::with_capacity(n),
            planted: false,
            collided: false,
        }
    }
}

pub(crate) fn geometric(prob: f64) -> Result<Geometric> {
    if !(MIN_SAMPLED_PROBABILITY..=1.0).contains(&prob) {
        return Err(Error::domain("bin probability", prob, "[1e-15, 1]"));
    }
    Geometric::new(prob).map_err(|_| Error::domain("bin probability", prob, "(0, 1]"))
}

/// Zero-based position of the first hit within `limit` guesses.
///
/// `revealed` holds `(position, bin)` pairs sorted by position; those
/// positions hit exactly when `matches(bin)`. Every other position hits
/// independently, with the gaps drawn from `geo`.
pub(crate) fn first_hit<R: Rng + ?Sized>(
    rng: &mut R,
    geo: &Geometric,
    revealed: &[(u64, u64)],
    matches: impl Fn(u64) -> bool,
    limit: u64,
) -> Option<u64> {
    let planted = revealed.iter().find(|r| matches(r.1)).map(|r| r.0);
    let cap = planted.map_or(limit, |p| p.min(limit));
    let mut pos = 0u64;
    loop {
        let cand = pos.saturating_add(geo.sample(rng));
        if cand >= cap {
            return planted.filter(|&p| p < limit);
        }
        if revealed.binary_search_by_key(&cand, |r| r.0).is_ok() {
            pos = cand + 1;
            continue;
        }
        return Some(cand);
    }
}

/// An `m`-bit label with i.i.d. Bernoulli(`p`) bits.
pub(crate) fn random_bin<R: Rng + ?Sized>(m: u32, p: f64, rng: &mut R) -> u64 {
    let mut bits = 0u64;
    for j in 0..m {
        bits |= (rng.random_bool(p) as u64) << j;
    }
    bits
}

/// A uniformly random `m`-bit label of popcount `weight`.
pub(crate) fn random_shell_bin<R: Rng + ?Sized>(m: u32, weight: u32, rng: &mut R) -> u64 {
    let mut idx: Vec<u32> = (0..m).collect();
    let mut bits = 0u64;
    for i in 0..weight as usize {
        let j = rng.random_range(i..m as usize);
        idx.swap(i, j);
        bits |= 1 << idx[i];
    }
    bits
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn first_hit_skips_revealed_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let geo = Geometric::new(1.0).unwrap();
        // Every position hits, but 0 and 1 are revealed with the wrong bin.
        let revealed = [(0, 5), (1, 5)];
        assert_eq!(first_hit(&mut rng, &geo, &revealed, |b| b == 7, 10), Some(2));
        // A revealed match earlier than any natural hit wins.
        let revealed = [(0, 7)];
        let geo = Geometric::new(1e-9).unwrap();
        assert_eq!(first_hit(&mut rng, &geo, &revealed, |b| b == 7, 10), Some(0));
        assert_eq!(first_hit(&mut rng, &geo, &[], |b| b == 7, 10), None);
    }

    #[test]
    fn first_hit_respects_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let geo = Geometric::new(1e-12).unwrap();
        assert_eq!(first_hit(&mut rng, &geo, &[(20, 1)], |b| b == 1, 10), None);
    }

    #[test]
    fn shell_bins_have_the_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            assert_eq!(random_shell_bin(12, 4, &mut rng).count_ones(), 4);
        }
        assert_eq!(random_shell_bin(5, 5, &mut rng), 0b11111);
    }

    #[test]
    fn tiny_probabilities_are_rejected() {
        assert!(geometric(1e-20).is_err());
        assert!(geometric(0.5).is_ok());
    }
}

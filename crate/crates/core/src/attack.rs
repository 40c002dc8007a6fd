//! Guessing strategies and guess counting.
//!
//! Guess counts are 1-based: finding a match on the first guess counts 1.
//! A failed attack reports 0 guesses, and estimators average that 0 in.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocation::{backdoor_install, AllocationPlan, PasswordSource};
use crate::error::{Error, Result};
use crate::hashmodel::{
    low_mask, BinLabel, BinSet, EffectiveDistribution, HashFunction, KeyedHashModel, WeightLayer,
    MAX_PASSWORD_BITS, MAX_TABLE_BITS,
};
use crate::seed::derive_seed;
use crate::stats::{CompensatedSum, EstimateWithCI};

/// The order in which an attacker tries passwords.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GuessStrategy {
    Ascending,
    /// A uniformly random permutation fixed by `seed`.
    SeededPermutation { seed: u64 },
    /// Most probable first for i.i.d. Bernoulli(`theta`) passwords; ties in
    /// ascending numeric order.
    ProbabilityDescending { theta: f64 },
}

impl GuessStrategy {
    pub fn label(&self) -> String {
        match self {
            GuessStrategy::Ascending => "ascending".into(),
            GuessStrategy::SeededPermutation { seed } => format!("permutation:{seed}"),
            GuessStrategy::ProbabilityDescending { theta } => format!("descending:{theta}"),
        }
    }
}

/// Parses the [`GuessStrategy::label`] syntax.
impl std::str::FromStr for GuessStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config("strategy", format!("expected ascending, permutation:SEED or descending:THETA, got `{s}`"));
        match s.split_once(':') {
            None if s == "ascending" => Ok(GuessStrategy::Ascending),
            Some(("permutation", seed)) => Ok(GuessStrategy::SeededPermutation {
                seed: seed.parse().map_err(|_| bad())?,
            }),
            Some(("descending", theta)) => {
                let theta: f64 = theta.parse().map_err(|_| bad())?;
                if !(theta > 0.0 && theta < 1.0) {
                    return Err(Error::domain("theta", theta, "(0, 1)"));
                }
                Ok(GuessStrategy::ProbabilityDescending { theta })
            }
            _ => Err(bad()),
        }
    }
}

/// A strategy resolved for a concrete password width.
#[derive(Debug, Clone)]
pub struct PasswordOrder {
    n: u32,
    kind: OrderKind,
}

#[derive(Debug, Clone)]
enum OrderKind {
    Ascending,
    Permutation { order: Vec<u32>, position: Vec<u32> },
    /// Weight layers, lightest first when `ascending`.
    Layers { ascending: bool },
}

impl PasswordOrder {
    pub fn new(strategy: GuessStrategy, n: u32) -> Result<Self> {
        if n == 0 || n > MAX_PASSWORD_BITS {
            return Err(Error::domain("n", n as f64, "[1, 63]"));
        }
        let kind = match strategy {
            GuessStrategy::Ascending => OrderKind::Ascending,
            GuessStrategy::SeededPermutation { seed } => {
                if n > MAX_TABLE_BITS {
                    return Err(Error::Resource {
                        what: "materialised permutation width n",
                        value: n as u64,
                        cap: MAX_TABLE_BITS as u64,
                    });
                }
                let size = 1usize << n;
                let mut order: Vec<u32> = (0..size as u32).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for i in (1..size).rev() {
                    let j = rng.random_range(0..=i);
                    order.swap(i, j);
                }
                let mut position = vec![0u32; size];
                for (k, &pw) in order.iter().enumerate() {
                    position[pw as usize] = k as u32;
                }
                OrderKind::Permutation { order, position }
            }
            GuessStrategy::ProbabilityDescending { theta } => {
                if !(theta > 0.0 && theta < 1.0) {
                    return Err(Error::domain("theta", theta, "(0, 1)"));
                }
                if theta == 0.5 {
                    OrderKind::Ascending
                } else {
                    OrderKind::Layers {
                        ascending: theta < 0.5,
                    }
                }
            }
        };
        Ok(PasswordOrder { n, kind })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn len(&self) -> u64 {
        1u64 << self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Zero-based position of `pw` in the order.
    pub fn position_of(&self, pw: u64) -> u64 {
        match &self.kind {
            OrderKind::Ascending => pw,
            OrderKind::Permutation { position, .. } => position[pw as usize] as u64,
            OrderKind::Layers { ascending } => {
                let binom = binomial_table();
                let n = self.n as usize;
                let w = pw.count_ones() as usize;
                let before: u64 = if *ascending {
                    (0..w).map(|k| binom[idx(n, k)]).sum()
                } else {
                    (w + 1..=n).map(|k| binom[idx(n, k)]).sum()
                };
                before + colex_rank(pw, binom)
            }
        }
    }

    /// The password at zero-based position `k`.
    pub fn nth(&self, k: u64) -> u64 {
        match &self.kind {
            OrderKind::Ascending => k,
            OrderKind::Permutation { order, .. } => order[k as usize] as u64,
            OrderKind::Layers { ascending } => {
                let binom = binomial_table();
                let n = self.n as usize;
                let mut rest = k;
                let weights: Box<dyn Iterator<Item = usize>> = if *ascending {
                    Box::new(0..=n)
                } else {
                    Box::new((0..=n).rev())
                };
                for w in weights {
                    let size = binom[idx(n, w)];
                    if rest < size {
                        return colex_unrank(rest, w, n, binom);
                    }
                    rest -= size;
                }
                unreachable!("position beyond 2^n")
            }
        }
    }

    /// Passwords in guessing order.
    pub fn iter(&self) -> Box<dyn Iterator<Item = u64> + '_> {
        match &self.kind {
            OrderKind::Ascending => Box::new(0..self.len()),
            OrderKind::Permutation { order, .. } => Box::new(order.iter().map(|&x| x as u64)),
            OrderKind::Layers { ascending, .. } => {
                let n = self.n;
                let weights: Box<dyn Iterator<Item = u32>> = if *ascending {
                    Box::new(0..=n)
                } else {
                    Box::new((0..=n).rev())
                };
                Box::new(weights.flat_map(move |w| WeightLayer::new(n, w)))
            }
        }
    }
}

fn idx(n: usize, k: usize) -> usize {
    n * 65 + k
}

/// `C(a, b)` for `a, b <= 64`, flattened as `a * 65 + b`; entries that do
/// not fit `u64` saturate, but for `a <= 63` none occur.
fn binomial_table() -> &'static [u64] {
    static TABLE: OnceLock<Vec<u64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = vec![0u64; 65 * 65];
        for a in 0..65 {
            t[idx(a, 0)] = 1;
            for b in 1..=a {
                let above = if b < a { t[idx(a - 1, b)] } else { 0 };
                t[idx(a, b)] = t[idx(a - 1, b - 1)].saturating_add(above);
            }
        }
        t
    })
}

/// `C(a, b)` for `a <= 64`, zero when `b > a`.
pub(crate) fn binomial(a: u32, b: u32) -> u64 {
    if b > a || a > 64 {
        return 0;
    }
    binomial_table()[idx(a as usize, b as usize)]
}

/// Rank of `x` among integers of the same popcount in ascending order.
fn colex_rank(x: u64, binom: &[u64]) -> u64 {
    let mut rank = 0u64;
    let mut j = 0usize;
    let mut rest = x;
    while rest != 0 {
        let pos = rest.trailing_zeros() as usize;
        j += 1;
        if pos >= j {
            rank += binom[idx(pos, j)];
        }
        rest &= rest - 1;
    }
    rank
}

fn colex_unrank(mut rank: u64, w: usize, n: usize, binom: &[u64]) -> u64 {
    let mut x = 0u64;
    let mut hi = n;
    for j in (1..=w).rev() {
        // Largest position c < hi with C(c, j) <= rank.
        let mut c = hi - 1;
        while c >= j && binom[idx(c, j)] > rank {
            c -= 1;
        }
        if c < j {
            c = j - 1;
        } else {
            rank -= binom[idx(c, j)];
        }
        x |= 1 << c;
        hi = c;
    }
    x
}

/// What an attack was after.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum AttackTarget {
    Bin { bin: BinLabel },
    AnyOf { bins: usize },
}

/// Which side of the biased-password race finished first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RaceArm {
    /// Some other password hashing to the bin was found first.
    Hash,
    /// The user's own password was guessed.
    Password,
}

impl RaceArm {
    pub fn as_str(&self) -> &'static str {
        match self {
            RaceArm::Hash => "hash",
            RaceArm::Password => "password",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    /// 1-based index of the successful guess, 0 on failure.
    pub guesses: u64,
    pub success: bool,
    pub target: AttackTarget,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arm: Option<RaceArm>,
}

fn check_budget<H: HashFunction + ?Sized>(h: &H, order: &PasswordOrder, budget: u64) -> Result<()> {
    if order.n() != h.n() {
        return Err(Error::Dimension(format!(
            "order over n = {} for a hash with n = {}",
            order.n(),
            h.n()
        )));
    }
    if budget > h.password_count() {
        return Err(Error::config("budget", format!("{budget} exceeds 2^n")));
    }
    Ok(())
}

/// Guesses passwords in `order` until one hashes to `target`.
pub fn online_attack<H: HashFunction + ?Sized>(
    h: &H,
    target: BinLabel,
    order: &PasswordOrder,
    budget: u64,
) -> Result<AttackResult> {
    check_budget(h, order, budget)?;
    if target.width() != h.m() {
        return Err(Error::Dimension(format!(
            "target of width {} for m = {}",
            target.width(),
            h.m()
        )));
    }
    let bits = target.bits();
    let found = order
        .iter()
        .take(budget as usize)
        .position(|pw| h.maps_to(pw, bits));
    Ok(finish(found, AttackTarget::Bin { bin: target }))
}

/// Guesses until any password hashes into `bins`.
pub fn offline_attack_any<H: HashFunction + ?Sized>(
    h: &H,
    bins: &BinSet,
    order: &PasswordOrder,
    budget: u64,
) -> Result<AttackResult> {
    check_budget(h, order, budget)?;
    if bins.is_empty() {
        return Err(Error::config("bins", "the target set is empty"));
    }
    if bins.width() != h.m() {
        return Err(Error::Dimension(format!("set of width {} for m = {}", bins.width(), h.m())));
    }
    let found = order
        .iter()
        .take(budget as usize)
        .position(|pw| h.maps_into(pw, bins));
    Ok(finish(found, AttackTarget::AnyOf { bins: bins.len() }))
}

fn finish(found: Option<usize>, target: AttackTarget) -> AttackResult {
    match found {
        Some(i) => AttackResult {
            guesses: i as u64 + 1,
            success: true,
            target,
            arm: None,
        },
        None => AttackResult {
            guesses: 0,
            success: false,
            target,
            arm: None,
        },
    }
}

/// Mean index of the first of `l` marked items in a uniformly random
/// ordering of `n` items: `(n + 1) / (l + 1)`, or 0 when nothing is marked.
pub fn permutation_average_exact(n: u64, l: u64) -> Result<f64> {
    if n == 0 || l > n {
        return Err(Error::config("preimages", format!("need 0 <= L <= N, N > 0; got L = {l}, N = {n}")));
    }
    if l == 0 {
        return Ok(0.0);
    }
    Ok((n as f64 + 1.0) / (l as f64 + 1.0))
}

/// Online guesswork of one fixed hash, averaged over uniformly random
/// guessing orders. Permutations are drawn lazily (sparse Fisher-Yates), so
/// only the guessed prefix is ever generated.
pub fn strategy_averaged_attack<H: HashFunction + ?Sized>(
    h: &H,
    target: BinLabel,
    samples: u64,
    seed: u64,
) -> Result<EstimateWithCI> {
    if samples == 0 {
        return Err(Error::config("samples", "need at least one permutation"));
    }
    let mut values = Vec::with_capacity(samples as usize);
    let mut failures = 0;
    for s in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, s));
        match random_order_first_hit(h, |pw| h.maps_to(pw, target.bits()), h.password_count(), &mut rng) {
            Some(g) => values.push(g as f64),
            None => {
                failures += 1;
                values.push(0.0);
            }
        }
    }
    EstimateWithCI::from_samples(&values, failures)
}

/// 1-based index of the first password satisfying `hit` in a random order
/// of all `2^n` passwords, stopping after `budget` guesses.
pub(crate) fn random_order_first_hit<H: HashFunction + ?Sized, R: Rng + ?Sized>(
    h: &H,
    hit: impl Fn(u64) -> bool,
    budget: u64,
    rng: &mut R,
) -> Option<u64> {
    let total = h.password_count();
    let mut swapped: HashMap<u64, u64> = HashMap::new();
    for k in 0..budget.min(total) {
        let j = rng.random_range(k..total);
        let at_j = *swapped.get(&j).unwrap_or(&j);
        let at_k = *swapped.get(&k).unwrap_or(&k);
        swapped.insert(j, at_k);
        if hit(at_j) {
            return Some(k + 1);
        }
    }
    None
}

/// `E[G^rho]` when the attacker knows a preimage of every bin and tries bins
/// from most to least likely (ties in ascending numeric order).
pub fn broken_hash_moment(dist: &EffectiveDistribution, rho: f64) -> Result<f64> {
    crate::infotheory::RhoOrder::new(rho)?;
    let mut order: Vec<usize> = (0..dist.fractions.len()).collect();
    order.sort_by(|&a, &b| dist.fractions[b].total_cmp(&dist.fractions[a]).then(a.cmp(&b)));
    let mut sum = CompensatedSum::new();
    for (rank, &b) in order.iter().enumerate() {
        let f = dist.fractions[b];
        if f > 0.0 {
            sum.add(((rank + 1) as f64).powf(rho) * f);
        }
    }
    Ok(sum.value())
}

/// Widest `m` for which [`bernoulli_moment_exact`] sums term by term.
pub const MAX_EXACT_MOMENT_BITS: u32 = 26;

/// [`broken_hash_moment`] of the exact Bernoulli(`p`) key distribution,
/// summed one weight class at a time without building the distribution.
pub fn bernoulli_moment_exact(m: u32, p: f64, rho: f64) -> Result<f64> {
    crate::infotheory::BiasParam::new(p)?;
    crate::infotheory::RhoOrder::new(rho)?;
    if m == 0 || m > MAX_EXACT_MOMENT_BITS {
        return Err(Error::Resource {
            what: "exact moment width m",
            value: m as u64,
            cap: MAX_EXACT_MOMENT_BITS as u64,
        });
    }
    let binom = binomial_table();
    let mut sum = CompensatedSum::new();
    let mut rank = 0u64;
    // Lighter labels are more likely when p < 1/2.
    for k in 0..=m as usize {
        let prob = BinLabel::from_raw(low_mask(k as u32), m).key_probability(p);
        let count = binom[idx(m as usize, k)];
        let mut block = CompensatedSum::new();
        for i in rank + 1..=rank + count {
            block.add((i as f64).powf(rho));
        }
        sum.add(prob * block.value());
        rank += count;
    }
    Ok(sum.value())
}

/// Races the guessing of the user's own `password` against finding any other
/// password that hashes to `target`, in `order`.
pub fn password_race<H: HashFunction + ?Sized>(
    h: &H,
    target: BinLabel,
    password: u64,
    order: &PasswordOrder,
    budget: u64,
) -> Result<AttackResult> {
    check_budget(h, order, budget)?;
    for (i, pw) in order.iter().take(budget as usize).enumerate() {
        let arm = if pw == password {
            Some(RaceArm::Password)
        } else if h.maps_to(pw, target.bits()) {
            Some(RaceArm::Hash)
        } else {
            None
        };
        if arm.is_some() {
            return Ok(AttackResult {
                guesses: i as u64 + 1,
                success: true,
                target: AttackTarget::Bin { bin: target },
                arm,
            });
        }
    }
    Ok(finish(None, AttackTarget::Bin { bin: target }))
}

/// The biased-password attack: the user's password is i.i.d.
/// Bernoulli(`theta`) drawn from `pw_seed`, and the attacker guesses in
/// descending probability.
pub fn biased_password_attack(
    h: &KeyedHashModel,
    b: BinLabel,
    theta: f64,
    pw_seed: u64,
    budget: u64,
) -> Result<AttackResult> {
    let source = PasswordSource::Bernoulli { theta };
    source.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(pw_seed);
    let password = source.draw(h.n(), &mut rng);
    let order = PasswordOrder::new(GuessStrategy::ProbabilityDescending { theta }, h.n())?;
    password_race(h, b, password, &order, budget)
}

/// How the randomness of [`average_guesswork_across_users`] is resampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Averaging {
    /// A fresh key (and fresh passwords) per trial, guessing in ascending
    /// order.
    KeyAveraged,
    /// One fixed key and backdoor; a fresh uniformly random guessing order
    /// per trial.
    StrategyAveraged,
}

/// Mean online guesswork of a uniformly chosen user of `plan`.
pub fn average_guesswork_across_users(
    template: &KeyedHashModel,
    plan: &AllocationPlan,
    averaging: Averaging,
    trials: u64,
    seed: u64,
) -> Result<EstimateWithCI> {
    if plan.is_empty() {
        return Err(Error::config("users", "the plan has no users"));
    }
    if trials == 0 {
        return Err(Error::config("trials", "need at least one trial"));
    }
    let budget = template.password_count();
    let mut values = Vec::with_capacity(trials as usize);
    let mut failures = 0;
    let fixed = match averaging {
        Averaging::StrategyAveraged => {
            let mut h = template.with_seed(derive_seed(seed, u64::MAX));
            let out = backdoor_install(&mut h, plan, derive_seed(seed, u64::MAX - 1))?;
            Some((h, out))
        }
        Averaging::KeyAveraged => None,
    };
    let ascending = PasswordOrder::new(GuessStrategy::Ascending, template.n())?;
    for t in 0..trials {
        let trial_seed = derive_seed(seed, t);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, 2));
        let user = rng.random_range(0..plan.len());
        let guesses = match &fixed {
            None => {
                let mut h = template.with_seed(derive_seed(trial_seed, 0));
                let out = backdoor_install(&mut h, plan, derive_seed(trial_seed, 1))?;
                online_attack(&h, out.credentials[user].bin, &ascending, budget)?.guesses
            }
            Some((h, out)) => {
                let bits = out.credentials[user].bin.bits();
                random_order_first_hit(h, |pw| h.maps_to(pw, bits), budget, &mut rng).unwrap_or(0)
            }
        };
        if guesses == 0 {
            failures += 1;
        }
        values.push(guesses as f64);
    }
    EstimateWithCI::from_samples(&values, failures)
}

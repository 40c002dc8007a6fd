//! Least-likely-first bin allocation and the backdoor that plants each
//! user's password into its allocated bin.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashmodel::{BinLabel, HashFunction, KeyedHashModel, RankedBins, TableHash, MAX_TABLE_BITS};
use crate::infotheory::{binary_entropy, BiasParam};

/// One user and the bin it was allocated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserBin {
    pub user: u32,
    pub bin: BinLabel,
}

/// Users in allocation order, least likely bin first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub m: u32,
    pub p: f64,
    pub users: Vec<UserBin>,
    /// The `s` with `floor(2^{H(s) m - 1})` closest to the user count.
    pub s_effective: f64,
}

impl AllocationPlan {
    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn bins(&self) -> impl Iterator<Item = &BinLabel> + '_ {
        self.users.iter().map(|u| &u.bin)
    }

    /// Smallest type fraction among the allocated bins.
    pub fn realized_min_type(&self) -> f64 {
        self.users
            .iter()
            .map(|u| u.bin.type_fraction())
            .fold(f64::INFINITY, f64::min)
    }
}

/// Allocates the `count` least likely bins, one per user.
pub fn allocate_bins(m: u32, p: f64, count: u64) -> Result<AllocationPlan> {
    BiasParam::new(p)?;
    if m == 0 || m > 62 {
        return Err(Error::domain("m", m as f64, "[1, 62]"));
    }
    if count == 0 || count > 1u64 << m {
        return Err(Error::config("users", format!("need 1 <= users <= 2^m, got {count}")));
    }
    if count > 1u64 << MAX_TABLE_BITS {
        return Err(Error::Resource {
            what: "user count",
            value: count,
            cap: 1 << MAX_TABLE_BITS,
        });
    }
    let users = RankedBins::new(m, p)?
        .take(count as usize)
        .enumerate()
        .map(|(i, bin)| UserBin { user: i as u32, bin })
        .collect();
    Ok(AllocationPlan {
        m,
        p,
        users,
        s_effective: s_for_user_count(m, count)?,
    })
}

/// Inverts `count = floor(2^{H(s) m - 1})` for `s` in `[1/2, 1]` by
/// bisection on `H(s) = (log2 count + 1) / m`. Counts above `2^{m-1}` map
/// to `s = 1/2`.
pub fn s_for_user_count(m: u32, count: u64) -> Result<f64> {
    if count == 0 || m == 0 {
        return Err(Error::config("users", "need at least one user and one bit"));
    }
    let target = ((count as f64).log2() + 1.0) / m as f64;
    if target >= 1.0 {
        return Ok(0.5);
    }
    // H is decreasing on [1/2, 1].
    let (mut lo, mut hi) = (0.5f64, 1.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if binary_entropy(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// How users pick passwords.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PasswordSource {
    /// Uniform over all `2^n` passwords.
    Uniform,
    /// Each of the `n` bits is one with probability `theta`.
    Bernoulli { theta: f64 },
}

impl PasswordSource {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PasswordSource::Uniform => Ok(()),
            PasswordSource::Bernoulli { theta } if theta > 0.0 && theta < 1.0 => Ok(()),
            PasswordSource::Bernoulli { theta } => Err(Error::domain("theta", theta, "(0, 1)")),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, n: u32, rng: &mut R) -> u64 {
        match *self {
            PasswordSource::Uniform => rng.random_range(0..1u64 << n),
            PasswordSource::Bernoulli { theta } => {
                let mut pw = 0u64;
                for j in 0..n {
                    pw |= (rng.random_bool(theta) as u64) << j;
                }
                pw
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Planted {
    pub password: u64,
    pub bin: BinLabel,
}

/// A user whose password was already claimed by a less likely user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reassignment {
    pub user: u32,
    pub original: BinLabel,
    pub bin: BinLabel,
}

/// What a user ends up with after installation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub user: u32,
    pub password: u64,
    pub bin: BinLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackdoorOutcome {
    pub planted: Vec<Planted>,
    pub reassigned: Vec<Reassignment>,
    pub collision_count: u64,
    /// One entry per user, in plan order.
    pub credentials: Vec<Credential>,
}

/// Draws every user's password and resolves collisions, without touching
/// any hash function.
///
/// Users are visited in plan order. The first user to draw a password owns
/// it; a later user drawing the same password is moved to the owner's bin,
/// which is never more likely than its own.
pub fn draw_backdoor<R: Rng + ?Sized>(
    plan: &AllocationPlan,
    n: u32,
    source: PasswordSource,
    rng: &mut R,
) -> Result<BackdoorOutcome> {
    source.validate()?;
    if n == 0 || n > crate::hashmodel::MAX_PASSWORD_BITS {
        return Err(Error::domain("n", n as f64, "[1, 63]"));
    }
    let mut owner: HashMap<u64, BinLabel> = HashMap::with_capacity(plan.len());
    let mut out = BackdoorOutcome {
        planted: Vec::with_capacity(plan.len()),
        reassigned: Vec::new(),
        collision_count: 0,
        credentials: Vec::with_capacity(plan.len()),
    };
    for u in &plan.users {
        let password = source.draw(n, rng);
        let bin = match owner.get(&password) {
            Some(&claimed) => {
                out.collision_count += 1;
                out.reassigned.push(Reassignment {
                    user: u.user,
                    original: u.bin,
                    bin: claimed,
                });
                claimed
            }
            None => {
                owner.insert(password, u.bin);
                out.planted.push(Planted { password, bin: u.bin });
                u.bin
            }
        };
        out.credentials.push(Credential {
            user: u.user,
            password,
            bin,
        });
    }
    Ok(out)
}

fn check_plan<H: HashFunction>(h: &H, plan: &AllocationPlan) -> Result<()> {
    if plan.m != h.m() {
        return Err(Error::Dimension(format!(
            "plan for m = {} applied to a hash with m = {}",
            plan.m,
            h.m()
        )));
    }
    if plan.is_empty() {
        return Err(Error::config("users", "the plan has no users"));
    }
    Ok(())
}

/// Plants uniformly drawn passwords into a keyed model as overrides.
pub fn backdoor_install(
    model: &mut KeyedHashModel,
    plan: &AllocationPlan,
    password_seed: u64,
) -> Result<BackdoorOutcome> {
    backdoor_install_with(model, plan, PasswordSource::Uniform, password_seed)
}

/// As [`backdoor_install`] with an explicit password source.
pub fn backdoor_install_with(
    model: &mut KeyedHashModel,
    plan: &AllocationPlan,
    source: PasswordSource,
    password_seed: u64,
) -> Result<BackdoorOutcome> {
    check_plan(model, plan)?;
    if !model.overrides().is_empty() {
        return Err(Error::config("model", "a backdoor is already installed"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(password_seed);
    let out = draw_backdoor(plan, model.n(), source, &mut rng)?;
    for pl in &out.planted {
        model.set_override(pl.password, pl.bin)?;
    }
    Ok(out)
}

/// Plants uniformly drawn passwords into an explicit table, one entry
/// rewritten per planted password.
pub fn backdoor_install_table(
    h: &mut TableHash,
    plan: &AllocationPlan,
    password_seed: u64,
) -> Result<BackdoorOutcome> {
    check_plan(h, plan)?;
    let mut rng = ChaCha8Rng::seed_from_u64(password_seed);
    let out = draw_backdoor(plan, h.n(), PasswordSource::Uniform, &mut rng)?;
    for pl in &out.planted {
        h.set_entry(pl.password, pl.bin)?;
    }
    Ok(out)
}

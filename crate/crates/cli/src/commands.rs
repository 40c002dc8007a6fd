use std::fs;

use anyhow::Context;
use guesswork_core::experiments::{
    concentration_report, keysize_panel, most_likely_panel, most_likely_sweep, run_experiment, sweep_rate,
    ExperimentConfig, ExperimentOutcome, Mode, SweepResult, TrialRecord,
};
use guesswork_core::infotheory::cross_entropy_identity;
use guesswork_core::rates::{
    biased_password_rate, key_size_ratio, moment_rate_broken_hash, most_likely_rate_offline,
    most_likely_rate_online, offline_rate_allocated, offline_rate_bounds_unallocated, online_rate_allocated,
    online_rate_bounds_unallocated, password_bits_for, table_one,
};
use guesswork_core::{RateReport, ScenarioParams};
use serde::Serialize;

use crate::args::{
    ConcentrationArgs, KeysizeArgs, ModeArgs, OutputArgs, RatesArgs, RunArgs, ScenarioArgs, SimulateArgs,
    SweepArgs, Table1Args,
};
use crate::output::{csv_text, emit, opt, replay, table, Document, UsageError, BITS_PER_M, GUESSES};

type Flags = Vec<(&'static str, Option<String>)>;

fn some(v: impl ToString) -> Option<String> {
    Some(v.to_string())
}

fn seed_text(seed: u64) -> String {
    format!("0x{seed:016x}")
}

fn output_flags(out: &OutputArgs) -> Flags {
    let mut f: Flags = vec![("format", some(out.format.as_str()))];
    f.extend(out.asserts.iter().map(|a| ("assert", some(a.text()))));
    f
}

fn scenario(a: &ScenarioArgs, m: u32) -> anyhow::Result<ScenarioParams> {
    let n = match a.n {
        Some(n) => n,
        None => password_bits_for(m, a.s, a.p, a.n_epsilon)?,
    };
    Ok(ScenarioParams {
        s: a.s,
        p: a.p,
        m,
        n,
        theta: a.theta,
    })
}

fn experiment(mode: &ModeArgs, run: &RunArgs, sc: ScenarioParams, eps: f64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(mode.mode, sc);
    cfg.trials = run.trials;
    cfg.seed = run.seed.resolve();
    cfg.engine = run.engine;
    cfg.rho = mode.rho;
    cfg.strategy = mode.strategy;
    cfg.budget = mode.budget;
    cfg.users = mode.users;
    cfg.n_epsilon = eps;
    cfg.workers = run.workers;
    cfg
}

/// Replay flags shared by the experiment subcommands. `m` is rendered by
/// the caller.
fn experiment_flags(cfg: &ExperimentConfig, m: String, fixed_n: bool, most_likely: bool) -> Flags {
    let sc = &cfg.scenario;
    let mut f: Flags = vec![("p", some(sc.p)), ("s", some(sc.s))];
    if let Some(t) = sc.theta {
        f.push(("theta", some(t)));
    }
    f.push(("m", Some(m)));
    if fixed_n {
        f.push(("n", some(sc.n)));
    } else {
        f.push(("n-epsilon", some(cfg.n_epsilon)));
    }
    f.push(("mode", some(cfg.mode)));
    f.push(("strategy", some(cfg.strategy.label())));
    f.push(("rho", some(cfg.rho)));
    if let Some(b) = cfg.budget {
        f.push(("budget", some(b)));
    }
    if let Some(u) = cfg.users {
        f.push(("users", some(u)));
    }
    f.push(("trials", some(cfg.trials)));
    f.push(("seed", Some(seed_text(cfg.seed))));
    f.push(("engine", some(cfg.engine.as_str())));
    if most_likely {
        f.push(("most-likely", None));
    }
    f
}

/// The echoed configuration of an experiment. The worker count is left
/// out: it never changes the output.
#[derive(Serialize)]
struct ExperimentEcho {
    #[serde(flatten)]
    experiment: ExperimentConfig,
    most_likely: bool,
}

fn echo(cfg: &ExperimentConfig, most_likely: bool) -> ExperimentEcho {
    let mut experiment = cfg.clone();
    experiment.workers = None;
    ExperimentEcho {
        experiment,
        most_likely,
    }
}

fn check_most_likely(mode: Mode) -> anyhow::Result<()> {
    if matches!(mode, Mode::UnallocatedOnline | Mode::UnallocatedOffline) {
        Ok(())
    } else {
        Err(UsageError(format!("--most-likely needs an unallocated mode, got --mode {mode}")).into())
    }
}

fn f6(x: f64) -> String {
    format!("{x:.6}")
}

fn kv_table(rows: &[(&str, String)]) -> String {
    let rows: Vec<Vec<String>> = rows.iter().map(|(k, v)| vec![k.to_string(), v.clone()]).collect();
    table(&["quantity", "value"], &rows)
}

// ---------------------------------------------------------------- rates

#[derive(Serialize)]
struct RatesEcho {
    p: f64,
    s: f64,
    rho: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<u32>,
}

#[derive(Serialize)]
struct RatesResult {
    rates: Vec<RateReport>,
    key_size_ratio: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    biased_password: Option<guesswork_core::rates::BiasedPasswordRate>,
}

pub fn rates(a: &RatesArgs) -> anyhow::Result<()> {
    let (s, p) = (a.scenario.s, a.scenario.p);
    let reports = vec![
        online_rate_allocated(s, p)?,
        offline_rate_allocated(s, p)?,
        online_rate_bounds_unallocated(s, p)?,
        offline_rate_bounds_unallocated(s, p)?,
        most_likely_rate_online(p)?,
        most_likely_rate_offline(s, p)?,
        moment_rate_broken_hash(p, a.rho)?,
    ];
    let ratio = key_size_ratio(s, p)?;
    let biased = match (a.m, a.scenario.theta) {
        (Some(m), Some(_)) => {
            let sc = scenario(&a.scenario, m)?;
            // The bin attacked is the allocated one of type s.
            Some(biased_password_rate(&sc, (s * m as f64).round() / m as f64)?)
        }
        (None, Some(_)) => return Err(UsageError("--theta needs --m for the biased-password analysis".into()).into()),
        _ => None,
    };
    let n = match (a.m, &biased) {
        (Some(m), Some(_)) => Some(scenario(&a.scenario, m)?.n),
        _ => None,
    };
    let cfg = RatesEcho {
        p,
        s,
        rho: a.rho,
        theta: a.scenario.theta,
        m: a.m,
        n,
    };
    let mut flags: Flags = vec![("p", some(p)), ("s", some(s)), ("rho", some(a.rho))];
    if let Some(t) = a.scenario.theta {
        flags.push(("theta", some(t)));
    }
    if let Some(m) = a.m {
        flags.push(("m", some(m)));
    }
    if let Some(n) = n {
        flags.push(("n", some(n)));
    }
    flags.extend(output_flags(&a.output));

    let names = [
        "online_allocated",
        "offline_allocated",
        "online_unallocated",
        "offline_unallocated",
        "most_likely_online",
        "most_likely_offline",
        "broken_hash",
    ];
    let mut metrics: Vec<(&'static str, f64)> = Vec::new();
    let bound_names = [
        ("online_unallocated_lower", "online_unallocated_upper"),
        ("offline_unallocated_lower", "offline_unallocated_upper"),
    ];
    for (name, r) in names.iter().zip(&reports) {
        metrics.push((name, r.rate));
    }
    for (i, (lo, hi)) in bound_names.iter().enumerate() {
        let r = &reports[2 + i];
        metrics.push((lo, r.lower.unwrap_or(r.rate)));
        metrics.push((hi, r.upper.unwrap_or(r.rate)));
    }
    metrics.push(("key_size_ratio", ratio));
    if let Some(b) = &biased {
        metrics.push(("biased_password_hash_rate", b.hash_rate));
        metrics.push(("biased_password_rate", b.password_rate));
        if let Some(r) = b.rate {
            metrics.push(("biased_password", r));
        }
    }

    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.scenario.clone(),
                f6(r.rate),
                opt(r.lower),
                opt(r.upper),
                r.region.map(|g| g.to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    let header = ["scenario", "rate", "lower", "upper", "region"];
    let mut text = table(&header, &rows);
    text.push_str(&format!("key size ratio H(s)+D(s||p): {}\n", f6(ratio)));
    if let Some(b) = &biased {
        text.push_str(&format!(
            "biased password: rate {} ({}) hash {} password {} critical type {}\n",
            opt(b.rate),
            b.region,
            f6(b.hash_rate),
            f6(b.password_rate),
            f6(b.critical_type)
        ));
    }
    let csv = csv_text(&header, &rows)?;
    let result = RatesResult {
        rates: reports,
        key_size_ratio: ratio,
        biased_password: biased,
    };
    emit(
        &a.output,
        Document {
            command: "rates",
            units: BITS_PER_M,
            config: &cfg,
            replay: replay("rates", &flags),
            result: &result,
            text,
            csv,
            metrics,
        },
    )
}

// ------------------------------------------------------------- simulate

const TRIAL_HEADER: [&str; 7] = ["trial_seed", "user", "bin", "strategy", "guesses", "success", "arm"];

fn trial_rows(records: &[TrialRecord], strategy: &str) -> Vec<Vec<String>> {
    records
        .iter()
        .map(|r| {
            vec![
                seed_text(r.trial_seed),
                r.user.map(|u| u.to_string()).unwrap_or_default(),
                r.bin.map(|b| b.to_binary_string()).unwrap_or_default(),
                strategy.to_string(),
                r.guesses.to_string(),
                r.success.to_string(),
                r.arm.map(|a| a.as_str().to_string()).unwrap_or_default(),
            ]
        })
        .collect()
}

fn outcome_metrics(out: &ExperimentOutcome) -> Vec<(&'static str, f64)> {
    let e = &out.estimate;
    let mut m = vec![
        ("mean", e.mean),
        ("half_width", e.half_width_95),
        ("log2_mean", out.log2_mean),
        ("rate", out.rate),
        ("trials", e.trials as f64),
        ("failures", e.failures as f64),
        ("failure_rate", e.failures as f64 / e.trials as f64),
        ("users", out.users as f64),
        ("n", out.n as f64),
    ];
    if let Some(f) = out.password_arm_fraction {
        m.push(("password_arm_fraction", f));
    }
    if let Some(q) = out.realized_min_type {
        m.push(("realized_min_type", q));
    }
    m
}

pub fn simulate(a: &SimulateArgs) -> anyhow::Result<()> {
    let sc = scenario(&a.scenario, a.m)?;
    let cfg = experiment(&a.mode, &a.run, sc, a.scenario.n_epsilon);
    let ml = a.mode.most_likely;
    let mut flags = experiment_flags(&cfg, a.m.to_string(), true, ml);
    if let Some(path) = &a.log {
        flags.push(("log", some(path.display())));
    }
    flags.extend(output_flags(&a.output));
    let replay = replay("simulate", &flags);
    let config = echo(&cfg, ml);

    if ml {
        check_most_likely(cfg.mode)?;
        if a.log.is_some() {
            return Err(UsageError("--log is not available with --most-likely".into()).into());
        }
        let panel = most_likely_panel(&cfg)?;
        let rate = panel.conditional_log2_mean / panel.m as f64;
        let text = kv_table(&[
            ("mode", panel.mode.to_string()),
            ("engine", panel.engine.as_str().into()),
            ("m, n", format!("{}, {}", panel.m, panel.n)),
            ("users", panel.users.to_string()),
            ("modal weight", panel.modal_weight.to_string()),
            ("modal type", f6(panel.modal_type)),
            ("nearest type", f6(panel.nearest_type)),
            ("empirical modal weight", panel.empirical_modal_weight.to_string()),
            ("modal profile frequency", f6(panel.modal_profile_frequency)),
            (
                "conditional mean guesses",
                format!("{:.4} +- {:.4}", panel.conditional.mean, panel.conditional.half_width_95),
            ),
            ("log2 mean", f6(panel.conditional_log2_mean)),
            ("rate", f6(rate)),
            ("theory rate", f6(panel.theory_rate)),
        ]);
        let hist: Vec<Vec<String>> = panel
            .weight_histogram
            .iter()
            .enumerate()
            .map(|(w, f)| vec![w.to_string(), f6(*f)])
            .collect();
        let csv = csv_text(&["weight", "fraction"], &hist)?;
        let metrics = vec![
            ("mean", panel.conditional.mean),
            ("half_width", panel.conditional.half_width_95),
            ("log2_mean", panel.conditional_log2_mean),
            ("rate", rate),
            ("theory_rate", panel.theory_rate),
            ("modal_weight", panel.modal_weight as f64),
            ("empirical_modal_weight", panel.empirical_modal_weight as f64),
            ("modal_profile_frequency", panel.modal_profile_frequency),
        ];
        return emit(
            &a.output,
            Document {
                command: "simulate",
                units: GUESSES,
                config: &config,
                replay,
                result: &panel,
                text,
                csv,
                metrics,
            },
        );
    }

    let out = run_experiment(&cfg)?;
    let rows = trial_rows(&out.records, &out.strategy);
    let csv = csv_text(&TRIAL_HEADER, &rows)?;
    if let Some(path) = &a.log {
        fs::write(path, &csv).with_context(|| format!("writing trial log {}", path.display()))?;
    }
    let e = &out.estimate;
    let mut kv = vec![
        ("mode", out.mode.to_string()),
        ("engine", out.engine.as_str().into()),
        ("m, n", format!("{}, {}", out.m, out.n)),
        ("users", out.users.to_string()),
        ("strategy", out.strategy.clone()),
        ("mean guesses", format!("{:.4} +- {:.4}", e.mean, e.half_width_95)),
        ("trials, failures", format!("{}, {}", e.trials, e.failures)),
        ("log2 mean", f6(out.log2_mean)),
        ("rate", f6(out.rate)),
    ];
    if let Some(q) = out.realized_min_type {
        kv.push(("realized min type", f6(q)));
    }
    if let Some(f) = out.password_arm_fraction {
        kv.push(("password arm fraction", f6(f)));
    }
    emit(
        &a.output,
        Document {
            command: "simulate",
            units: GUESSES,
            config: &config,
            replay,
            result: &out,
            text: kv_table(&kv),
            csv,
            metrics: outcome_metrics(&out),
        },
    )
}

// ---------------------------------------------------------------- sweep

fn sweep_metrics(r: &SweepResult) -> Vec<(&'static str, f64)> {
    let mut m = vec![
        ("slope", r.fitted_rate),
        ("rate", r.fitted_rate),
        ("intercept", r.intercept),
        ("r_squared", r.r_squared),
        ("points", r.points.len() as f64),
        ("failures", r.points.iter().map(|p| p.failures as f64).sum()),
    ];
    if let Some(t) = &r.theory {
        m.push(("theory", t.value));
        if let (Some(lo), Some(hi)) = (t.lower, t.upper) {
            m.push(("theory_lower", lo));
            m.push(("theory_upper", hi));
        }
    }
    m
}

pub fn sweep(a: &SweepArgs) -> anyhow::Result<()> {
    if a.scenario.n.is_some() {
        return Err(UsageError("--n is chosen per width in a sweep; use --n-epsilon".into()).into());
    }
    let first = *a.m.first().ok_or_else(|| UsageError("--m needs at least one width".into()))?;
    let sc = scenario(&a.scenario, first)?;
    let mut cfg = experiment(&a.mode, &a.run, sc, a.scenario.n_epsilon);
    cfg.m_sweep = Some(a.m.clone());
    let ml = a.mode.most_likely;
    let widths: Vec<String> = a.m.iter().map(u32::to_string).collect();
    let mut flags = experiment_flags(&cfg, widths.join(","), false, ml);
    flags.extend(output_flags(&a.output));
    let result = if ml {
        check_most_likely(cfg.mode)?;
        most_likely_sweep(&cfg)?
    } else {
        sweep_rate(&cfg)?
    };

    let rows: Vec<Vec<String>> = result
        .points
        .iter()
        .map(|p| {
            vec![
                p.m.to_string(),
                p.n.to_string(),
                p.users.to_string(),
                p.engine.as_str().into(),
                format!("{:.4}", p.mean),
                f6(p.log2_mean),
                f6(p.ci),
                p.failures.to_string(),
                opt(p.theory_log2),
            ]
        })
        .collect();
    let mut text = table(
        &["m", "n", "users", "engine", "mean", "log2_mean", "ci", "failures", "theory_log2"],
        &rows,
    );
    text.push_str(&format!(
        "slope {} intercept {} r^2 {}\n",
        f6(result.fitted_rate),
        f6(result.intercept),
        f6(result.r_squared)
    ));
    if let Some(t) = &result.theory {
        match (t.lower, t.upper) {
            (Some(lo), Some(hi)) => text.push_str(&format!("theory: slope in [{}, {}]\n", f6(lo), f6(hi))),
            _ => text.push_str(&format!("theory: slope {}\n", f6(t.value))),
        }
    }
    let csv_rows: Vec<Vec<String>> = result
        .points
        .iter()
        .map(|p| vec![p.m.to_string(), p.log2_mean.to_string(), p.ci.to_string()])
        .collect();
    let csv = csv_text(&["m", "log2_mean", "ci"], &csv_rows)?;
    emit(
        &a.output,
        Document {
            command: "sweep",
            units: BITS_PER_M,
            config: &echo(&cfg, ml),
            replay: replay("sweep", &flags),
            metrics: sweep_metrics(&result),
            result: &result,
            text,
            csv,
        },
    )
}

// -------------------------------------------------------- concentration

#[derive(Serialize)]
struct ConcentrationEcho {
    #[serde(flatten)]
    experiment: ExperimentConfig,
    q: f64,
    l: Vec<f64>,
}

/// Thresholds around the mean exponent, kept inside `[0, n/m)`.
fn default_thresholds(q: f64, p: f64, m: u32, n: u32) -> anyhow::Result<Vec<f64>> {
    let e = cross_entropy_identity(q, p)?;
    let max = n as f64 / m as f64;
    let mut ls: Vec<f64> = [0.5 * e, e - 0.25, e - 0.1, e, e + 0.1]
        .into_iter()
        .map(|l| (l * 1e4).round() / 1e4)
        .filter(|&l| l >= 0.0 && l < max)
        .collect();
    ls.sort_by(f64::total_cmp);
    ls.dedup();
    Ok(ls)
}

pub fn concentration(a: &ConcentrationArgs) -> anyhow::Result<()> {
    let sc = scenario(&a.scenario, a.m)?;
    let mode = ModeArgs {
        mode: Mode::AllocatedOnline,
        strategy: guesswork_core::attack::GuessStrategy::Ascending,
        rho: 1.0,
        budget: None,
        users: None,
        most_likely: false,
    };
    let cfg = experiment(&mode, &a.run, sc, a.scenario.n_epsilon);
    let l = if a.l.is_empty() {
        default_thresholds(a.q, sc.p, sc.m, sc.n)?
    } else {
        a.l.clone()
    };
    let report = concentration_report(&cfg, a.q, &l)?;

    let sc = &cfg.scenario;
    let lt: Vec<String> = l.iter().map(f64::to_string).collect();
    let mut flags: Flags = vec![
        ("p", some(sc.p)),
        ("s", some(sc.s)),
        ("m", some(sc.m)),
        ("n", some(sc.n)),
        ("q", some(a.q)),
        ("l", Some(lt.join(","))),
        ("trials", some(cfg.trials)),
        ("seed", Some(seed_text(cfg.seed))),
        ("engine", some(cfg.engine.as_str())),
    ];
    flags.extend(output_flags(&a.output));
    let mut experiment = cfg.clone();
    experiment.workers = None;
    let config = ConcentrationEcho { experiment, q: a.q, l };

    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.l.to_string(),
                r.threshold.to_string(),
                f6(r.empirical),
                f6(r.half_width_95),
                f6(r.bound),
                f6(r.exact_cdf),
                r.within_bound.to_string(),
            ]
        })
        .collect();
    let header = ["l", "threshold", "empirical", "half_width_95", "bound", "exact_cdf", "within_bound"];
    let mut text = table(&header, &rows);
    text.push_str(&format!(
        "bin type {} engine {} mean exponent {}\n",
        report.q,
        report.engine.as_str(),
        f6(report.mean_exponent)
    ));
    let csv = csv_text(&header, &rows)?;
    let max_excess = report.rows.iter().map(|r| r.empirical - r.bound).fold(f64::NEG_INFINITY, f64::max);
    let max_z = report
        .rows
        .iter()
        .map(|r| {
            let sd = (r.exact_cdf * (1.0 - r.exact_cdf) / report.trials as f64).sqrt();
            if sd > 0.0 {
                (r.empirical - r.exact_cdf).abs() / sd
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max);
    let metrics = vec![
        ("mean_exponent", report.mean_exponent),
        ("max_excess", max_excess),
        ("max_z_exact", max_z),
        ("within_bound", f64::from(u8::from(report.rows.iter().all(|r| r.within_bound)))),
    ];
    emit(
        &a.output,
        Document {
            command: "concentration",
            units: BITS_PER_M,
            config: &config,
            replay: replay("concentration", &flags),
            result: &report,
            text,
            csv,
            metrics,
        },
    )
}

// -------------------------------------------------------------- keysize

#[derive(Serialize)]
struct KeysizeEcho {
    alpha: Vec<f64>,
    m: u32,
}

pub fn keysize(a: &KeysizeArgs) -> anyhow::Result<()> {
    let rows = keysize_panel(&a.alpha, a.m)?;
    let alphas: Vec<String> = a.alpha.iter().map(f64::to_string).collect();
    let mut flags: Flags = vec![("alpha", Some(alphas.join(","))), ("m", some(a.m))];
    flags.extend(output_flags(&a.output));

    let header = [
        "alpha",
        "p0",
        "uniform_bits",
        "biased_bits",
        "size_ratio",
        "storage_ratio",
        "entropy_coded_factor",
    ];
    let table_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.alpha.to_string(),
                f6(r.p0),
                format!("{}*2^{}", r.uniform_factor, r.uniform_exponent),
                format!("{}*2^{}", r.biased_factor, r.biased_exponent),
                f6(r.size_ratio),
                f6(r.storage_ratio),
                f6(r.entropy_coded_factor),
            ]
        })
        .collect();
    let text = table(&header, &table_rows);
    let csv = csv_text(&header, &table_rows)?;
    let mut metrics = vec![(
        "max_ratio_error",
        rows.iter().map(|r| (r.storage_ratio - r.alpha).abs()).fold(0.0, f64::max),
    )];
    if let [r] = rows.as_slice() {
        metrics.push(("p0", r.p0));
        metrics.push(("ratio", r.storage_ratio));
    }
    emit(
        &a.output,
        Document {
            command: "keysize",
            units: BITS_PER_M,
            config: &KeysizeEcho {
                alpha: a.alpha.clone(),
                m: a.m,
            },
            replay: replay("keysize", &flags),
            result: &rows,
            text,
            csv,
            metrics,
        },
    )
}

// --------------------------------------------------------------- table1

#[derive(Serialize)]
struct Table1Echo {}

pub fn table1(a: &Table1Args) -> anyhow::Result<()> {
    let cells = table_one()?;
    let header = ["p", "1-s", "column", "computed", "reference", "delta", "matches"];
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                c.p.to_string(),
                c.one_minus_s.to_string(),
                c.column.clone(),
                format!("{:.4}", c.computed),
                format!("{:.*}", c.printed_decimals as usize, c.reference),
                format!("{:.1e}", c.delta),
                c.matches_printed_precision().to_string(),
            ]
        })
        .collect();
    let text = table(&header, &rows);
    let csv = csv_text(&header, &rows)?;
    let metrics = vec![
        ("max_delta", cells.iter().map(|c| c.delta).fold(0.0, f64::max)),
        (
            "mismatches",
            cells.iter().filter(|c| !c.matches_printed_precision()).count() as f64,
        ),
    ];
    emit(
        &a.output,
        Document {
            command: "table1",
            units: BITS_PER_M,
            config: &Table1Echo {},
            replay: replay("table1", &output_flags(&a.output)),
            result: &cells,
            text,
            csv,
            metrics,
        },
    )
}

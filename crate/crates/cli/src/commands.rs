use std::io::Write;
use std::path::{Path, PathBuf};

use pairsurv::closed_testing::closed_test;
use pairsurv::mvn::MvnOptions;
use pairsurv::rand_test::{score_test, sensitivity_value, SensitivityStatus, SensitivityTarget, SensitivityValue};
use pairsurv::sim_engine::{design_sensitivity_study, power_study, power_test_names, Calibration, PowerTable};
use pairsurv::survival::{km_estimate, pair_differences, ScoreSet};
use pairsurv::{overall_test, Direction, Gamma, Method, OverallMethod, OverallResult, PairedSample, ScoreKind, TestResult, TimeGrid};
use serde::Serialize;
use serde_json::json;

use crate::exit::{Failure, Kind};
use crate::manifest::{write_document, RunManifest};
use crate::{config, input, DirectionArg, MethodArg, ScoreArg, DEFAULT_SEED};
use crate::{ClosedArgs, KmArgs, OverallArgs, SensArgs, StudyArgs, TestArgs};

pub struct Context {
    pub seed_flag: Option<u64>,
    pub env_seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl Context {
    fn seed(&self) -> u64 {
        self.seed_flag.or(self.env_seed).unwrap_or(DEFAULT_SEED)
    }

    fn manifest<A: Serialize>(&self, command: &str, args: &A, seeds: serde_json::Value) -> anyhow::Result<RunManifest> {
        let mut options = serde_json::to_value(args)?;
        options["threads"] = json!(self.threads);
        Ok(RunManifest::start(command, options, seeds))
    }

    fn finish<T: Serialize>(&self, manifest: RunManifest, result: &T) -> anyhow::Result<()> {
        match &self.out {
            Some(path) => write_document(path, manifest, result),
            None => Ok(()),
        }
    }
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    Failure::new(Kind::Config, msg).into()
}

fn gamma(v: f64) -> anyhow::Result<Gamma> {
    Ok(Gamma::new(v)?)
}

fn grid(v: &[f64]) -> anyhow::Result<TimeGrid> {
    Ok(TimeGrid::new(v.to_vec())?)
}

fn fmt3(x: f64) -> String {
    if x.is_nan() {
        "NA".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.3}")
    }
}

fn fmt_p(p: f64) -> String {
    if p < 0.0005 {
        "<0.001".into()
    } else {
        fmt3(p)
    }
}

fn direction(arg: DirectionArg, kind: ScoreKind) -> Direction {
    let upper = matches!(arg, DirectionArg::Benefit) == kind.benefit_is_upper();
    if upper {
        Direction::Upper
    } else {
        Direction::Lower
    }
}

fn time_method(arg: MethodArg, draws: u64, seed: u64) -> Method {
    match arg {
        MethodArg::Normal => Method::Normal,
        MethodArg::Exact => Method::Exact,
        MethodArg::Montecarlo => Method::MonteCarlo { draws, seed },
    }
}

fn mvn(tol: f64, seed: u64) -> anyhow::Result<MvnOptions> {
    if !(tol > 0.0) {
        return Err(config_err(format!("--mvn-tol {tol} must be positive")));
    }
    Ok(MvnOptions {
        abs_tol: tol,
        ..MvnOptions::default().with_seed(seed)
    })
}

fn print_result(label: &str, r: &TestResult) {
    println!("{label}");
    println!("  gamma      {}", fmt3(r.gamma.value()));
    println!("  method     {}", r.method.name());
    println!("  statistic  {}", fmt3(r.statistic));
    println!("  null mean  {}", fmt3(r.null_mean));
    println!("  null sd    {}", fmt3(r.null_sd));
    println!("  p-value    {}", fmt_p(r.p_value));
}

fn pair_label(sample: &PairedSample, i: usize) -> String {
    match sample.pair_ids() {
        Some(ids) => ids[i].clone(),
        None => (i + 1).to_string(),
    }
}

// ---------------------------------------------------------------- test

#[derive(Serialize)]
struct TestDocument {
    score: ScoreKind,
    result: TestResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<ScoreSet>,
}

pub fn test(ctx: &Context, a: TestArgs) -> anyhow::Result<()> {
    let seed = ctx.seed();
    let manifest = ctx.manifest("test", &a, json!({ "montecarlo": seed }))?;
    let kind = match a.score {
        ScoreArg::Pseudo => ScoreKind::Pseudo,
        ScoreArg::Logrank => ScoreKind::Logrank,
        ScoreArg::Pw => ScoreKind::Pw,
    };
    if kind == ScoreKind::Pseudo && a.tau.is_none() {
        return Err(config_err("--tau is required for pseudo-observation scores"));
    }
    let sample = input::read_sample(&a.data)?;
    let scores = pair_differences(&sample, kind, a.tau)?;
    let dir = direction(a.direction, kind);
    let result = score_test(&scores, &sample, gamma(a.gamma)?, time_method(a.method, a.draws, seed), dir)?;

    let label = match a.tau {
        Some(t) if kind == ScoreKind::Pseudo => format!("time-specific test, tau = {t}, {} pairs", sample.len()),
        _ => format!("{kind:?} score test, {} pairs", sample.len()),
    };
    print_result(&label, &result);
    if a.verbose {
        println!();
        println!("{:>8} {:>5} {:>8} {:>8} {:>8}", "pair", "V", "q1", "q2", "d");
        let signs = sample.signs();
        for (i, (q, d)) in scores.q.iter().zip(&scores.d).enumerate() {
            println!(
                "{:>8} {:>5} {:>8} {:>8} {:>8}",
                pair_label(&sample, i),
                signs[i],
                fmt3(q[0]),
                fmt3(q[1]),
                fmt3(*d)
            );
        }
    }
    let doc = TestDocument {
        score: kind,
        result,
        scores: a.verbose.then_some(scores),
    };
    ctx.finish(manifest, &doc)
}

// ---------------------------------------------------------------- overall

fn overall_method(arg: MethodArg, draws: u64, seed: u64, tol: f64) -> anyhow::Result<OverallMethod> {
    match arg {
        MethodArg::Normal => Ok(OverallMethod::Normal(mvn(tol, seed)?)),
        MethodArg::Montecarlo => Ok(OverallMethod::MonteCarlo { draws, seed }),
        MethodArg::Exact => Err(config_err("the overall test has no exact method; use normal or montecarlo")),
    }
}

fn check_accuracy(r: &OverallResult) -> anyhow::Result<()> {
    match r.mvn {
        Some(e) if !e.converged => Err(Failure::new(
            Kind::Numeric,
            format!("multivariate normal integration did not reach its tolerance (error {:.2e})", e.error),
        )
        .into()),
        _ => Ok(()),
    }
}

pub fn overall(ctx: &Context, a: OverallArgs) -> anyhow::Result<()> {
    let seed = ctx.seed();
    let manifest = ctx.manifest("overall", &a, json!({ "integration": seed }))?;
    let method = overall_method(a.method, a.draws, seed, a.mvn_tol)?;
    let g = grid(&a.grid)?;
    let gam = gamma(a.gamma)?;
    let sample = input::read_sample(&a.data)?;
    let r = overall_test(&sample, &g, gam, a.include_ppw, method)?;

    print_result(&format!("overall max test, {} times, {} pairs", g.len(), sample.len()), &r.result);
    println!();
    println!("{:>10} {:>9} {:>9} {:>9}", "column", "T", "sigma", "T/sigma");
    for c in &r.columns {
        println!(
            "{:>10} {:>9} {:>9} {:>9}",
            c.label.to_string(),
            fmt3(c.t),
            fmt3(c.sigma),
            fmt3(c.standardized)
        );
    }
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    if r.floored_at_randomization {
        println!("  (bound raised to the Gamma = 1 p-value)");
    }
    ctx.finish(manifest, &r)?;
    check_accuracy(&r)
}

// ---------------------------------------------------------------- sens

#[derive(Serialize)]
struct GammaRow {
    gamma: f64,
    p_value: f64,
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum SensDocument {
    Table { alpha: f64, rows: Vec<GammaRow> },
    Search { alpha: f64, value: SensitivityValue },
}

pub fn sens(ctx: &Context, a: SensArgs) -> anyhow::Result<()> {
    let seed = ctx.seed();
    let manifest = ctx.manifest("sens", &a, json!({ "integration": seed }))?;
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(config_err(format!("--alpha {} must lie in (0, 1)", a.alpha)));
    }
    let opts = mvn(a.mvn_tol, seed)?;
    let target = match (&a.tau, &a.grid) {
        (Some(tau), None) => SensitivityTarget::Time {
            tau: *tau,
            method: match a.method {
                MethodArg::Montecarlo => return Err(config_err("sens supports --method normal or exact")),
                m => time_method(m, 0, seed),
            },
            direction: direction(DirectionArg::Benefit, ScoreKind::Pseudo),
        },
        (None, Some(gr)) => SensitivityTarget::Overall {
            grid: grid(gr)?,
            include_ppw: a.include_ppw,
            mvn: opts,
        },
        _ => return Err(config_err("give exactly one of --tau and --grid")),
    };
    let sample = input::read_sample(&a.data)?;

    let doc = if a.search {
        let v = sensitivity_value(&sample, &target, a.alpha, a.tol, a.gamma_max)?;
        let verdict = match v.status {
            SensitivityStatus::Bracketed => format!("{} (bracket [{}, {}])", fmt3(v.gamma), fmt3(v.lower), fmt3(v.upper)),
            SensitivityStatus::AlreadySensitive => "1 (already_sensitive: p > alpha at Gamma = 1)".into(),
            SensitivityStatus::Insensitive => format!(">= {} (insensitive up to --gamma-max)", fmt3(v.gamma)),
        };
        println!("sensitivity value at alpha = {}: {verdict}", a.alpha);
        SensDocument::Search {
            alpha: a.alpha,
            value: v,
        }
    } else {
        let gammas = a.gamma_grid.clone().unwrap_or_default();
        if gammas.is_empty() {
            return Err(config_err("--gamma-grid is empty"));
        }
        let p_at: Box<dyn Fn(Gamma) -> anyhow::Result<f64>> = match &target {
            SensitivityTarget::Time { tau, method, direction } => {
                let scores = pair_differences(&sample, ScoreKind::Pseudo, Some(*tau))?;
                let (method, direction) = (*method, *direction);
                let sample = &sample;
                Box::new(move |g| Ok(score_test(&scores, sample, g, method, direction)?.p_value))
            }
            SensitivityTarget::Overall { grid, include_ppw, mvn } => {
                let (grid, ppw, m) = (grid.clone(), *include_ppw, *mvn);
                let sample = &sample;
                Box::new(move |g| {
                    let r = overall_test(sample, &grid, g, ppw, OverallMethod::Normal(m))?;
                    check_accuracy(&r)?;
                    Ok(r.result.p_value)
                })
            }
        };
        println!("{:>8} {:>9} {:>7}", "gamma", "p", "reject");
        let mut rows = Vec::with_capacity(gammas.len());
        for gv in gammas {
            let p = p_at(gamma(gv)?)?;
            println!("{:>8} {:>9} {:>7}", fmt3(gv), fmt_p(p), if p <= a.alpha { "yes" } else { "no" });
            rows.push(GammaRow { gamma: gv, p_value: p });
        }
        SensDocument::Table { alpha: a.alpha, rows }
    };
    ctx.finish(manifest, &doc)
}

// ---------------------------------------------------------------- closed

pub fn closed(ctx: &Context, a: ClosedArgs) -> anyhow::Result<()> {
    let seed = ctx.seed();
    let manifest = ctx.manifest("closed", &a, json!({ "integration": seed }))?;
    let opts = mvn(a.mvn_tol, seed)?;
    let g = grid(&a.grid)?;
    let gam = gamma(a.gamma)?;
    let sample = input::read_sample(&a.data)?;
    let r = closed_test(&sample, &g, a.alpha, gam, &opts)?;
    println!("closed testing, gamma = {}, alpha = {}", fmt3(gam.value()), a.alpha);
    println!("{:>8} {:>11} {:>9} {:>7}", "tau", "unadjusted", "adjusted", "reject");
    for e in &r.entries {
        println!(
            "{:>8} {:>11} {:>9} {:>7}",
            e.tau,
            fmt_p(e.unadjusted_p),
            fmt_p(e.adjusted_p),
            if e.rejected { "yes" } else { "no" }
        );
    }
    println!("global p {}", fmt_p(r.global_p));
    ctx.finish(manifest, &r)
}

// ---------------------------------------------------------------- simulate

#[derive(Serialize)]
struct PowerCsvRow<'a> {
    scenario: &'a str,
    test: &'a str,
    gamma: f64,
    rejections: usize,
    replications: usize,
    rate: f64,
    mc_se: f64,
    pairs: usize,
    b: f64,
    censoring_rate: Option<f64>,
}

fn csv_sink(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|e| Failure::new(Kind::Input, format!("{}: {e}", p.display())))?),
        None => Box::new(std::io::stdout()),
    })
}

fn achieved(c: &Option<Calibration>) -> Option<f64> {
    c.as_ref().map(|c| c.achieved_rate)
}

pub fn simulate(ctx: &Context, a: StudyArgs) -> anyhow::Result<()> {
    let study = config::load(&a.config, ctx.seed_flag, ctx.env_seed, a.replications)?;
    let manifest = ctx.manifest("simulate", &a, json!({ "master": study.base.seed }))?;
    let tables: Vec<PowerTable> = study
        .scenarios
        .iter()
        .map(|&id| power_study(&study.for_scenario(id)))
        .collect::<pairsurv::Result<_>>()?;

    let mut w = csv::Writer::from_writer(csv_sink(a.csv.as_deref())?);
    for t in &tables {
        for r in &t.rows {
            w.serialize(PowerCsvRow {
                scenario: t.scenario.id.name(),
                test: &r.test,
                gamma: r.gamma,
                rejections: r.rejections,
                replications: r.replications,
                rate: r.rate,
                mc_se: r.mc_se,
                pairs: t.pairs,
                b: t.scenario.b,
                censoring_rate: achieved(&t.calibration),
            })?;
        }
    }
    w.flush()?;

    if a.csv.is_some() {
        let names = power_test_names(&study.base.grid, study.base.closed_testing);
        print!("{:<10} {:>6}", "scenario", "gamma");
        for n in &names {
            print!(" {n:>10}");
        }
        println!();
        for t in &tables {
            for &g in &study.base.gammas {
                print!("{:<10} {:>6}", t.scenario.id.name(), fmt3(g));
                for n in &names {
                    print!(" {:>10}", t.rate(n, g).map_or("NA".into(), fmt3));
                }
                println!();
            }
        }
    }
    ctx.finish(manifest, &json!({ "study": study, "tables": tables }))
}

// ---------------------------------------------------------------- design-sens

#[derive(Serialize)]
struct DesignCsvRow<'a> {
    scenario: &'a str,
    column: String,
    design_sensitivity: f64,
    pairs: usize,
    b: f64,
    censoring_rate: Option<f64>,
}

fn fmt_design(v: f64) -> String {
    if v < 1.0 {
        "<1".into()
    } else {
        fmt3(v)
    }
}

pub fn design_sens(ctx: &Context, a: StudyArgs) -> anyhow::Result<()> {
    let study = config::load(&a.config, ctx.seed_flag, ctx.env_seed, a.replications)?;
    let manifest = ctx.manifest("design-sens", &a, json!({ "master": study.base.seed }))?;
    let results = study
        .scenarios
        .iter()
        .map(|&id| design_sensitivity_study(&study.for_scenario(id)))
        .collect::<pairsurv::Result<Vec<_>>>()?;
    for w in results.iter().flat_map(|r| &r.warnings).collect::<std::collections::BTreeSet<_>>() {
        eprintln!("warning: {w}");
    }

    let mut w = csv::Writer::from_writer(csv_sink(a.csv.as_deref())?);
    for r in &results {
        let res = &r.result;
        let cols = res
            .per_tau
            .iter()
            .map(|e| (e.label.to_string(), e.value))
            .chain(std::iter::once(("overall".to_string(), res.overall)));
        for (column, value) in cols {
            w.serialize(DesignCsvRow {
                scenario: res.scenario.id.name(),
                column,
                design_sensitivity: value,
                pairs: res.sample_size,
                b: res.scenario.b,
                censoring_rate: achieved(&r.calibration),
            })?;
        }
    }
    w.flush()?;

    if a.csv.is_some() {
        print!("{:<10}", "scenario");
        for t in study.base.grid.taus() {
            print!(" {:>7}", format!("tau={t}"));
        }
        println!(" {:>8}", "overall");
        for r in &results {
            print!("{:<10}", r.result.scenario.id.name());
            for e in &r.result.per_tau {
                print!(" {:>7}", fmt_design(e.value));
            }
            println!(" {:>8}", fmt_design(r.result.overall));
        }
    }
    ctx.finish(manifest, &json!({ "study": study, "results": results }))
}

// ---------------------------------------------------------------- km

#[derive(Serialize)]
struct KmRow {
    arm: &'static str,
    time: f64,
    survival: f64,
}

pub fn km(ctx: &Context, a: KmArgs) -> anyhow::Result<()> {
    let manifest = ctx.manifest("km", &a, json!(null))?;
    let sample = input::read_sample(&a.data)?;
    let arms = [
        ("treated", sample.pairs().iter().map(|p| p.treated()).collect::<Vec<_>>()),
        ("control", sample.pairs().iter().map(|p| p.control()).collect()),
    ];
    let mut rows = Vec::new();
    for (arm, units) in &arms {
        let c = km_estimate(units)?;
        rows.push(KmRow {
            arm,
            time: 0.0,
            survival: 1.0,
        });
        for (&time, &survival) in c.knots.iter().zip(&c.values) {
            rows.push(KmRow { arm, time, survival });
        }
    }
    let mut w = csv::Writer::from_writer(csv_sink(a.csv.as_deref())?);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    ctx.finish(manifest, &rows)
}


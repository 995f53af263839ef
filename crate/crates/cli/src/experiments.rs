//! Experiment kinds. Each returns its output files in memory plus its checks.

use cellinfect::analytics::{
    asymptotic_ratio, check_expl_ext, classify_mean_cells, ga, mean_population, regime_map, second_moment_ratio,
    two_point_malthus_boundary, write_regime_map_csv, LaplaceExponent, LinearDivisionParams, RegimeClass,
    RegimeVerdict,
};
use cellinfect::dynamics::{probe_assumptions, PathStatus, ProbeOptions};
use cellinfect::model::{validate_eu, ModelSpec, Rates, SharingKernel};
use cellinfect::montecarlo::{
    equivalence_test, ratio_of_means, replicate, trend_test, write_estimators_csv, Direction, Estimator, SeedPlan,
    Summary, TrendVerdict,
};
use cellinfect::population::{run_population, write_snapshots_csv, PopulationConfig, PopulationRun};
use cellinfect::spine::{HomogeneousSpine, InhomogeneousSpine};
use serde_json::{json, Value};

use crate::config::{
    Experiment, GaParams, InfectedProportionParams, ManyToOneParams, MeanCellsParams, MomentCheckParams,
    ProbeParams, ProportionExpectation, RegimeMapParams, ResolvedConfig, SharingComparisonParams,
};
use crate::{Check, CliError, Outcome, OutputFile};

pub const RESULTS_FILE: &str = "results.json";

pub fn execute(cfg: &ResolvedConfig, threads: usize) -> Result<Outcome, CliError> {
    cfg.validate()?;
    let (mut files, checks, summary) = match &cfg.experiment {
        Experiment::MeanCellsRegime(p) => mean_cells_regime(cfg, p, threads)?,
        Experiment::SharingComparison(p) => sharing_comparison(cfg, p)?,
        Experiment::RegimeMap(p) => regime_map_experiment(p)?,
        Experiment::InfectedProportion(p) => infected_proportion(cfg, p, threads)?,
        Experiment::ManyToOneCheck(p) => many_to_one(cfg, p, threads)?,
        Experiment::MomentCheck(p) => moment_check(cfg, p, threads)?,
        Experiment::GaClassify(p) => ga_classify(cfg, p, threads)?,
        Experiment::AssumptionProbe(p) => assumption_probe(cfg, p)?,
    };
    let results = json!({
        "kind": cfg.kind().as_str(),
        "seed": cfg.seed,
        "replicas": cfg.replicas,
        "k_sigma": cfg.k_sigma,
        "summary": summary,
        "checks": checks,
    });
    let mut bytes = serde_json::to_vec_pretty(&results).map_err(|e| CliError::Runtime(e.to_string()))?;
    bytes.push(b'\n');
    files.push(OutputFile {
        name: RESULTS_FILE.into(),
        bytes,
    });
    Ok(Outcome { files, checks })
}

type Produced = (Vec<OutputFile>, Vec<Check>, Value);

struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(header: &[&str]) -> Result<Self, CliError> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).map_err(csv_error)?;
        Ok(Table { writer })
    }

    fn row(&mut self, fields: &[String]) -> Result<(), CliError> {
        self.writer.write_record(fields).map_err(csv_error)
    }

    fn finish(self, name: &str) -> Result<OutputFile, CliError> {
        let bytes = self.writer.into_inner().map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(OutputFile { name: name.into(), bytes })
    }
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn estimators_file(estimators: &[Estimator]) -> Result<OutputFile, CliError> {
    let mut bytes = Vec::new();
    write_estimators_csv(&mut bytes, estimators)?;
    Ok(OutputFile {
        name: "estimators.csv".into(),
        bytes,
    })
}

fn snapshots_file(runs: &[PopulationRun]) -> Result<OutputFile, CliError> {
    let rows: Vec<(usize, &[_])> = runs.iter().enumerate().map(|(i, r)| (i, r.snapshots.as_slice())).collect();
    let mut bytes = Vec::new();
    write_snapshots_csv(&mut bytes, &rows)?;
    Ok(OutputFile {
        name: "snapshots.csv".into(),
        bytes,
    })
}

fn equivalence_check(name: String, a: Summary, b: Summary, k: f64) -> Check {
    let eq = equivalence_test(a, b, k);
    Check::new(
        name,
        eq.pass,
        format!(
            "{} vs {} (diff {:.3e}, combined se {:.3e}, z {:.2}, k {k})",
            a.mean,
            b.mean,
            eq.difference,
            eq.combined_se,
            eq.z_score()
        ),
    )
}

fn populations(
    spec: &ModelSpec,
    config: &PopulationConfig,
    replicas: usize,
    plan: SeedPlan,
    threads: usize,
) -> Result<Vec<PopulationRun>, CliError> {
    let runs = replicate(replicas, plan, threads, |_, rng| run_population(spec, config, rng))?.into_result()?;
    if let Some(i) = runs.iter().position(|r| r.truncated) {
        return Err(CliError::Runtime(format!(
            "replica {i} exceeded {} cells; raise params.max_cells",
            config.max_cells
        )));
    }
    Ok(runs)
}

fn column(runs: &[PopulationRun], k: usize, name: String, f: impl Fn(&cellinfect::population::PopulationSnapshotStats) -> f64) -> Estimator {
    Estimator::new(name, runs.iter().map(|r| f(&r.snapshots[k])).collect())
}

fn observed_spec(model: &ModelSpec, horizon: f64) -> ModelSpec {
    model.clone().with_horizon(horizon)
}

fn verdict_json(v: &RegimeVerdict) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn trend_check(name: &str, series: &[Summary], direction: Direction, k: f64, allow_flat: bool) -> Result<Check, CliError> {
    let verdict = trend_test(series, direction, k)?;
    let pass = verdict == TrendVerdict::Pass || (allow_flat && verdict == TrendVerdict::Inconclusive);
    Ok(Check::new(
        name,
        pass,
        format!(
            "{direction:?} trend {verdict:?} over {} points ({:.4} -> {:.4})",
            series.len(),
            series[0].mean,
            series[series.len() - 1].mean
        ),
    ))
}

fn mean_cells_regime(cfg: &ResolvedConfig, p: &MeanCellsParams, threads: usize) -> Result<Produced, CliError> {
    let model = cfg.model()?;
    let le = LaplaceExponent::from_model(&model.parasite, &model.policy)?;
    let (r, q) = model
        .policy
        .constant_rates()
        .ok_or_else(|| CliError::Validation("mean-cells-regime needs constant rates".into()))?;
    let verdict = classify_mean_cells(&le, q)?;
    let times = p.times.points();
    let spec = observed_spec(model, *times.last().unwrap_or(&model.horizon));
    let config = PopulationConfig::at_times(times.clone()).with_max_cells(p.max_cells);
    let runs = populations(&spec, &config, cfg.replicas, SeedPlan::new(cfg.seed), threads)?;

    let mut estimators = Vec::new();
    let mut normalized = Vec::new();
    let mut table = Table::new(&["t", "mean_C", "se_C", "normalized_mean", "normalized_se", "mean_exploded"])?;
    for (k, t) in times.iter().enumerate() {
        let c = column(&runs, k, format!("C@{t}"), |s| s.counted as f64);
        let n = column(&runs, k, format!("normalized_C@{t}"), |s| s.counted as f64 * ((q - r) * t).exp());
        let x = column(&runs, k, format!("exploded@{t}"), |s| s.exploded as f64);
        table.row(&[
            t.to_string(),
            c.mean().to_string(),
            c.se().to_string(),
            n.mean().to_string(),
            n.se().to_string(),
            x.mean().to_string(),
        ])?;
        normalized.push(n.summary());
        estimators.extend([c, n, x]);
    }
    // Explosions only remove cells, so the normalized count never increases.
    let flat_allowed = verdict.class == RegimeClass::Grows || verdict.class == RegimeClass::Undetermined;
    let mut checks = Vec::new();
    if times.len() >= 4 {
        checks.push(trend_check(
            &format!("normalized mean cells trend ({})", verdict.class.as_str()),
            &normalized,
            Direction::Decreasing,
            cfg.k_sigma,
            flat_allowed,
        )?);
    }
    let files = vec![table.finish("series.csv")?, estimators_file(&estimators)?, snapshots_file(&runs)?];
    Ok((files, checks, json!({ "verdict": verdict_json(&verdict), "r": r, "q": q })))
}

struct RegionRow {
    region: &'static str,
    g: f64,
    uniform: RegimeVerdict,
    equal: RegimeVerdict,
}

fn compare_key(v: &RegimeVerdict) -> Option<(f64, f64)> {
    Some((v.rate_exponent?, v.polynomial_order?))
}

fn sharing_comparison(_cfg: &ResolvedConfig, p: &SharingComparisonParams) -> Result<Produced, CliError> {
    let (r, q) = (p.r, p.q);
    let classify = |g: f64, kernel: SharingKernel| classify_mean_cells(&LaplaceExponent::new(g, 0.0, r, kernel), q);
    let mut table = Table::new(&[
        "g",
        "uniform_class",
        "uniform_rate",
        "uniform_order",
        "equal_class",
        "equal_rate",
        "equal_order",
    ])?;
    let mut dominated = Vec::new();
    for g in p.g.points() {
        let u = classify(g, SharingKernel::Uniform)?;
        let e = classify(g, SharingKernel::EqualSharing)?;
        table.row(&[
            g.to_string(),
            u.class.as_str().into(),
            opt(u.rate_exponent),
            opt(u.polynomial_order),
            e.class.as_str().into(),
            opt(e.rate_exponent),
            opt(e.polynomial_order),
        ])?;
        if let (Some(a), Some(b)) = (compare_key(&u), compare_key(&e)) {
            let tol = 1e-9 * (1.0 + a.0.abs());
            if a.0 < b.0 - tol || ((a.0 - b.0).abs() <= tol && a.1 < b.1) {
                dominated.push(g);
            }
        }
    }
    let ln2 = std::f64::consts::LN_2;
    let regions: [(&'static str, f64); 5] = [
        ("[0, 2r ln 2)", r * ln2),
        ("2r ln 2", 2.0 * r * ln2),
        ("(2r ln 2, 2r)", r * (1.0 + ln2)),
        ("2r", 2.0 * r),
        ("(2r, inf)", 3.0 * r),
    ];
    let mut rows = Vec::new();
    for (region, g) in regions {
        rows.push(RegionRow {
            region,
            g,
            uniform: classify(g, SharingKernel::Uniform)?,
            equal: classify(g, SharingKernel::EqualSharing)?,
        });
    }
    let kappa_uniform = |g: f64| 2.0 * (2.0 * r * g).sqrt() - g - 2.0 * r;
    let kappa_equal = |g: f64| (g / ln2) * (1.0 + (2.0 * r).ln() - (g / ln2).ln()) - 2.0 * r;
    let expected_orders = [(0.0, 0.0), (0.0, -0.5), (0.0, -1.5), (-0.5, -1.5), (-1.5, -1.5)];
    let expected_rates = |i: usize, g: f64| {
        let u = if i < 4 { r - q } else { kappa_uniform(g) + r - q };
        let e = if i < 2 { r - q } else { kappa_equal(g) + r - q };
        (u, e)
    };
    let mut regions_table = Table::new(&[
        "region",
        "g",
        "uniform_order",
        "uniform_rate",
        "equal_order",
        "equal_rate",
        "uniform_rate_closed_form",
        "equal_rate_closed_form",
    ])?;
    let mut orders_ok = true;
    let mut rates_ok = true;
    for (i, row) in rows.iter().enumerate() {
        let (eu, ee) = expected_rates(i, row.g);
        regions_table.row(&[
            row.region.into(),
            row.g.to_string(),
            opt(row.uniform.polynomial_order),
            opt(row.uniform.rate_exponent),
            opt(row.equal.polynomial_order),
            opt(row.equal.rate_exponent),
            eu.to_string(),
            ee.to_string(),
        ])?;
        orders_ok &= row.uniform.polynomial_order == Some(expected_orders[i].0)
            && row.equal.polynomial_order == Some(expected_orders[i].1);
        let close = |v: Option<f64>, x: f64| v.is_some_and(|v| (v - x).abs() <= 1e-8 * (1.0 + x.abs()));
        rates_ok &= close(row.uniform.rate_exponent, eu) && close(row.equal.rate_exponent, ee);
    }
    let last = &rows[4];
    let strict = match (last.uniform.rate_exponent, last.equal.rate_exponent) {
        (Some(a), Some(b)) => a > b,
        _ => false,
    };
    let checks = vec![
        Check::new(
            "uniform sharing at least as favorable as equal sharing",
            dominated.is_empty(),
            if dominated.is_empty() {
                "holds at every grid point".to_string()
            } else {
                format!("violated at g = {dominated:?}")
            },
        ),
        Check::new(
            "five-row polynomial orders",
            orders_ok,
            "orders (uniform, equal) per region against the reference table",
        ),
        Check::new("five-row exponential rates", rates_ok, "rates against closed forms within 1e-8"),
        Check::new(
            "strict gap for g > 2r",
            strict,
            format!("uniform {:?} vs equal {:?}", last.uniform.rate_exponent, last.equal.rate_exponent),
        ),
    ];
    let files = vec![table.finish("comparison.csv")?, regions_table.finish("regions.csv")?];
    let summary = json!({
        "r": r,
        "q": q,
        "uniform_threshold": cellinfect::analytics::uniform_threshold(r, q)?,
        "equal_sharing_threshold": cellinfect::analytics::equal_sharing_growth_threshold(r, q)?,
    });
    Ok((files, checks, summary))
}

fn regime_map_experiment(p: &RegimeMapParams) -> Result<Produced, CliError> {
    let g = p.g_over_r.points();
    let theta = p.theta0.points();
    let cells = regime_map(p.q_over_r, &g, &theta)?;
    let mut bytes = Vec::new();
    write_regime_map_csv(&mut bytes, &cells)?;

    let mut classes: Vec<&str> = cells.iter().map(|c| c.class.as_str()).collect();
    classes.sort_unstable();
    classes.dedup();
    let three = classes == ["GROWS", "GROWS_SLOW", "MEAN_TO_ZERO"];

    let mut misplaced = Vec::new();
    for c in &cells {
        let b = two_point_malthus_boundary(c.theta0);
        if (c.g_over_r - b).abs() <= 1e-9 * b {
            continue;
        }
        if (c.class == RegimeClass::Grows) != (c.g_over_r < b) {
            misplaced.push((c.g_over_r, c.theta0));
        }
    }

    let (tmin, tmax) = theta
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(*t), b.max(*t)));
    let class_at = |gv: f64, t: f64| cells.iter().find(|c| c.g_over_r == gv && c.theta0 == t).map(|c| c.class);
    let rescued: Vec<f64> = g
        .iter()
        .copied()
        .filter(|gv| {
            class_at(*gv, tmin) == Some(RegimeClass::Grows) && class_at(*gv, tmax) == Some(RegimeClass::MeanToZero)
        })
        .collect();

    let checks = vec![
        Check::new("exactly three classes", three, format!("classes present: {classes:?}")),
        Check::new(
            "GROWS boundary at -ln(theta0 (1 - theta0))",
            misplaced.is_empty(),
            if misplaced.is_empty() {
                format!("{} cells consistent", cells.len())
            } else {
                format!("{} misplaced cells, first {:?}", misplaced.len(), misplaced[0])
            },
        ),
        Check::new(
            "asymmetric division rescues the population",
            !rescued.is_empty(),
            format!(
                "theta0 = {tmin} GROWS where theta0 = {tmax} is MEAN_TO_ZERO at {} grid values of g/r",
                rescued.len()
            ),
        ),
    ];
    let summary = json!({ "q_over_r": p.q_over_r, "cells": cells.len(), "classes": classes });
    Ok((vec![OutputFile { name: "regime_map.csv".into(), bytes }], checks, summary))
}

fn infected_proportion(cfg: &ResolvedConfig, p: &InfectedProportionParams, threads: usize) -> Result<Produced, CliError> {
    let model = cfg.model()?;
    let times = p.times.points();
    let spec = observed_spec(model, *times.last().unwrap_or(&model.horizon));
    let config = PopulationConfig::at_times(times.clone())
        .with_thresholds(vec![p.epsilon])
        .with_max_cells(p.max_cells);
    let runs = populations(&spec, &config, cfg.replicas, SeedPlan::new(cfg.seed), threads)?;
    let mut table = Table::new(&[
        "t",
        "proportion_mean",
        "proportion_se",
        "survival",
        "conditional_mean",
        "conditional_se",
    ])?;
    let mut estimators = Vec::new();
    let mut series = Vec::new();
    for (k, t) in times.iter().enumerate() {
        let prop = column(&runs, k, format!("infected_proportion@{t}"), |s| {
            if s.alive == 0 {
                0.0
            } else {
                s.above[0] as f64 / s.alive as f64
            }
        });
        let surv = column(&runs, k, format!("survival@{t}"), |s| (s.alive > 0) as u8 as f64);
        if surv.mean() == 0.0 {
            return Err(CliError::Runtime(format!("every replica is extinct at t = {t}")));
        }
        let cond = ratio_of_means(prop.values(), surv.values(), 1.0);
        table.row(&[
            t.to_string(),
            prop.mean().to_string(),
            prop.se().to_string(),
            surv.mean().to_string(),
            cond.mean.to_string(),
            cond.se.to_string(),
        ])?;
        series.push(cond);
        estimators.extend([prop, surv]);
    }
    let check = match p.expect {
        ProportionExpectation::Decreasing => {
            trend_check("infected proportion decreasing", &series, Direction::Decreasing, cfg.k_sigma, false)?
        }
        ProportionExpectation::Persistent => {
            let low = series
                .iter()
                .map(|s| s.mean - cfg.k_sigma * s.se)
                .fold(f64::INFINITY, f64::min);
            Check::new(
                "infected proportion bounded away from 0",
                low >= p.floor,
                format!("smallest lower band {low:.4} vs floor {}", p.floor),
            )
        }
    };
    let files = vec![table.finish("proportion.csv")?, estimators_file(&estimators)?, snapshots_file(&runs)?];
    Ok((files, vec![check], json!({ "epsilon": p.epsilon, "expect": p.expect })))
}

fn many_to_one(cfg: &ResolvedConfig, p: &ManyToOneParams, threads: usize) -> Result<Produced, CliError> {
    let model = cfg.model()?;
    let t = p.time;
    let spec = observed_spec(model, t);
    let dt = p.spine_time_step.unwrap_or(model.time_step);
    let config = PopulationConfig::at_times(vec![t])
        .with_thresholds(p.thresholds.clone())
        .with_caps(p.caps.clone())
        .with_max_cells(p.max_cells);
    let plan = SeedPlan::new(cfg.seed);
    let runs = populations(&spec, &config, cfg.replicas, plan.derive(1), threads)?;

    let x0 = model.initial_trait;
    let (factor, ys) = match model.policy.rates {
        Rates::Constant { r, q } => {
            let spine = HomogeneousSpine::from_spec(&spec)?;
            let ys = replicate(cfg.replicas, plan.derive(2), threads, |_, rng| spine.advance(x0, t, dt, rng))?
                .into_result()?;
            (((r - q) * t).exp(), ys)
        }
        Rates::LinearDivision { alpha, beta, q } => {
            let g = model
                .parasite
                .drift
                .as_linear()
                .ok_or_else(|| CliError::Validation("many-to-one-check with linear division needs g(x) = gx".into()))?;
            let spine = InhomogeneousSpine::new(&spec, t)?;
            let ys = replicate(cfg.replicas, plan.derive(2), threads, |_, rng| spine.advance(x0, dt, rng))?
                .into_result()?;
            (mean_population(x0, 0.0, t, LinearDivisionParams::new(alpha, beta, g, q))?, ys)
        }
        Rates::General { .. } => {
            return Err(CliError::Validation(
                "many-to-one-check needs constant or linear-division rates".into(),
            ))
        }
    };
    let finite = |y: f64, s: PathStatus| if s == PathStatus::Exploded { None } else { Some(y) };

    let mut functions: Vec<(String, Estimator, Estimator)> = Vec::new();
    for (j, k) in p.thresholds.iter().enumerate() {
        let name = format!("1{{X > {k}}}");
        let pop = column(&runs, 0, format!("population {name}"), |s| s.above[j] as f64);
        let sp = Estimator::new(
            format!("spine {name}"),
            ys.iter().map(|(y, s)| finite(*y, *s).map_or(0.0, |y| (y > *k) as u8 as f64)).collect(),
        );
        functions.push((name, pop, sp));
    }
    for (j, m) in p.caps.iter().enumerate() {
        let name = format!("min(X, {m})");
        let pop = column(&runs, 0, format!("population {name}"), |s| s.capped_sums[j]);
        let sp = Estimator::new(
            format!("spine {name}"),
            ys.iter().map(|(y, s)| finite(*y, *s).map_or(0.0, |y| y.min(*m))).collect(),
        );
        functions.push((name, pop, sp));
    }

    let mut table = Table::new(&["function", "population_mean", "population_se", "spine_mean", "spine_se", "z"])?;
    let mut checks = Vec::new();
    let mut estimators = Vec::new();
    for (name, pop, sp) in functions {
        let scaled = sp.summary().scale(factor);
        let eq = equivalence_test(pop.summary(), scaled, cfg.k_sigma);
        table.row(&[
            name.clone(),
            pop.mean().to_string(),
            pop.se().to_string(),
            scaled.mean.to_string(),
            scaled.se.to_string(),
            eq.z_score().to_string(),
        ])?;
        checks.push(equivalence_check(format!("many-to-one {name}"), pop.summary(), scaled, cfg.k_sigma));
        estimators.extend([pop, sp]);
    }
    let files = vec![table.finish("many_to_one.csv")?, estimators_file(&estimators)?];
    Ok((files, checks, json!({ "time": t, "mean_cells_factor": factor, "spine_time_step": dt })))
}

fn linear_params(model: &ModelSpec) -> Result<LinearDivisionParams, CliError> {
    let g = model.parasite.drift.as_linear();
    match model.policy.rates {
        Rates::Constant { r, q } => Ok(LinearDivisionParams::new(0.0, r, g.unwrap_or(0.0), q)),
        Rates::LinearDivision { alpha, beta, q } => {
            let g = match g {
                Some(g) => g,
                None if alpha == 0.0 => 0.0,
                None => return Err(CliError::Validation("moment-check with alpha ≠ 0 needs g(x) = gx".into())),
            };
            Ok(LinearDivisionParams::new(alpha, beta, g, q))
        }
        Rates::General { .. } => Err(CliError::Validation(
            "moment-check needs constant or linear-division rates".into(),
        )),
    }
}

fn moment_check(cfg: &ResolvedConfig, p: &MomentCheckParams, threads: usize) -> Result<Produced, CliError> {
    let model = cfg.model()?;
    let params = linear_params(model)?;
    if p.second_moment && params.alpha != 0.0 {
        return Err(CliError::Validation(
            "params.second_moment: the closed form is exact only for alpha = 0".into(),
        ));
    }
    let x0 = model.initial_trait;
    let q = params.q;
    let times = p.times.points();
    let spec = observed_spec(model, *times.last().unwrap_or(&model.horizon));
    let mut config = PopulationConfig::at_times(times.clone()).with_max_cells(p.max_cells);
    if p.death_factorization {
        config = config.with_death_marking();
    }
    let runs = populations(&spec, &config, cfg.replicas, SeedPlan::new(cfg.seed), threads)?;
    let mut table = Table::new(&["t", "quantity", "estimate", "se", "reference", "z"])?;
    let mut checks = Vec::new();
    let mut estimators = Vec::new();
    let k = cfg.k_sigma;
    for (i, &t) in times.iter().enumerate() {
        let n = column(&runs, i, format!("N@{t}"), |s| s.alive as f64);
        if p.mean {
            let exact = mean_population(x0, 0.0, t, params)?;
            let eq = equivalence_test(n.summary(), Summary::exact(exact), k);
            table.row(&[t.to_string(), "mean".into(), n.mean().to_string(), n.se().to_string(), exact.to_string(), eq.z_score().to_string()])?;
            checks.push(equivalence_check(format!("E[N] at t = {t}"), n.summary(), Summary::exact(exact), k));
        }
        if p.second_moment {
            let squares: Vec<f64> = n.values().iter().map(|v| v * v).collect();
            let ratio = ratio_of_means(&squares, n.values(), 2.0);
            let exact = second_moment_ratio(x0, t, params)?;
            let eq = equivalence_test(ratio, Summary::exact(exact), k);
            table.row(&[t.to_string(), "second_moment_ratio".into(), ratio.mean.to_string(), ratio.se.to_string(), exact.to_string(), eq.z_score().to_string()])?;
            checks.push(equivalence_check(format!("E[N^2]/E[N]^2 at t = {t}"), ratio, Summary::exact(exact), k));
        }
        if p.death_factorization {
            let all = column(&runs, i, format!("N_without_death@{t}"), |s| s.unmarked_and_marked as f64);
            let decay = (-q * t).exp();
            let scaled = all.summary().scale(decay);
            let eq = equivalence_test(n.summary(), scaled, k);
            table.row(&[t.to_string(), "death_factorization".into(), n.mean().to_string(), n.se().to_string(), scaled.mean.to_string(), eq.z_score().to_string()])?;
            checks.push(equivalence_check(format!("death factorization MC at t = {t}"), n.summary(), scaled, k));
            let with = mean_population(x0, 0.0, t, params)?;
            let without = mean_population(x0, 0.0, t, LinearDivisionParams { q: 0.0, ..params })?;
            let gap = (with - decay * without).abs();
            checks.push(Check::new(
                format!("death factorization analytic at t = {t}"),
                gap <= 1e-12 * with.abs().max(1.0),
                format!("|m_q - e^(-qt) m_0| = {gap:.3e}"),
            ));
            estimators.push(all);
        }
        estimators.push(n);
    }
    let limit = if p.second_moment { asymptotic_ratio(x0, params).ok() } else { None };
    let files = vec![table.finish("moments.csv")?, estimators_file(&estimators)?];
    Ok((files, checks, json!({ "params": params, "asymptotic_ratio": limit })))
}

fn ga_classify(cfg: &ResolvedConfig, p: &GaParams, threads: usize) -> Result<Produced, CliError> {
    let model = cfg.model()?;
    let (law, policy) = (&model.parasite, &model.policy);
    let criterion = check_expl_ext(p.a, p.gamma, p.gamma_prime, &p.grid.points(), law, policy)?;
    let mut table = Table::new(&["x", "growth", "ga", "holds"])?;
    for pt in &criterion.points {
        table.row(&[pt.x.to_string(), pt.growth.to_string(), pt.ga.to_string(), pt.holds.to_string()])?;
    }
    let mut files = vec![table.finish("ga.csv")?];
    let mut checks = Vec::new();
    let mut probe = Value::Null;
    if let Some(m) = &p.martingale {
        if policy.constant_rates().is_none() {
            return Err(CliError::Validation("params.martingale needs constant rates".into()));
        }
        let x0 = model.initial_trait;
        if !(x0 > 0.0) {
            return Err(CliError::Validation("params.martingale needs initial_trait > 0".into()));
        }
        let a = p.a;
        let dt = m.time_step.unwrap_or(model.time_step);
        let spine = HomogeneousSpine::new(law, policy, model.explosion_cap)?;
        let values = replicate(cfg.replicas, SeedPlan::new(cfg.seed), threads, |_, rng| {
            let mut integral = 0.0;
            let mut prev = (0.0, ga(x0, a, law, policy)?);
            let mut failure = None;
            let (y, status) = spine.advance_observed(x0, m.horizon, dt, rng, |t, y| {
                if failure.is_some() || y <= 0.0 || !y.is_finite() {
                    return;
                }
                match ga(y, a, law, policy) {
                    Ok(v) => {
                        integral += 0.5 * (prev.1 + v) * (t - prev.0);
                        prev = (t, v);
                    }
                    Err(e) => failure = Some(e),
                }
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            match status {
                PathStatus::Running => Ok(y.powf(1.0 - a) * integral.exp()),
                PathStatus::Exploded if a > 1.0 => Ok(0.0),
                other => Err(cellinfect::Error::Precondition(format!(
                    "martingale probe path ended {}",
                    other.as_str()
                ))),
            }
        })?
        .into_result()?;
        let est = Estimator::new("martingale", values);
        let target = x0.powf(1.0 - a);
        checks.push(equivalence_check(
            format!("G_a martingale (a = {a}, T = {})", m.horizon),
            est.summary(),
            Summary::exact(target),
            cfg.k_sigma,
        ));
        probe = json!({ "mean": est.mean(), "se": est.se(), "target": target });
        files.push(estimators_file(&[est])?);
    }
    Ok((files, checks, json!({ "criterion": criterion, "martingale": probe })))
}

fn assumption_probe(cfg: &ResolvedConfig, p: &ProbeParams) -> Result<Produced, CliError> {
    let model = cfg.model()?;
    let defaults = ProbeOptions::default();
    let opts = ProbeOptions {
        a_small: p.a_small.unwrap_or(defaults.a_small),
        a_large: p.a_large.unwrap_or(defaults.a_large),
        eta: p.eta.unwrap_or(defaults.eta),
        tail_fraction: p.tail_fraction.unwrap_or(defaults.tail_fraction),
    };
    let report = probe_assumptions(&model.parasite, Some(&model.policy), &p.grid.points(), opts);
    let eu = validate_eu(model);
    let mut probes = Table::new(&["probe", "x", "lhs", "bound", "holds"])?;
    for pr in &report.probes {
        for pt in &pr.points {
            probes.row(&[pr.name.into(), pt.x.to_string(), pt.lhs.to_string(), pt.bound.to_string(), pt.holds.to_string()])?;
        }
    }
    let mut clauses = Table::new(&["clause", "pass", "detail"])?;
    for c in &eu.clauses {
        clauses.row(&[format!("{:?}", c.clause), c.pass.to_string(), c.detail.clone()])?;
    }
    let satisfied: serde_json::Map<String, Value> =
        report.probes.iter().map(|pr| (pr.name.to_string(), Value::Bool(pr.satisfied))).collect();
    let summary = json!({
        "options": opts,
        "probes_satisfied": satisfied,
        "eu_all_pass": eu.all_pass(),
        "growth_exponent": eu.growth_exponent,
    });
    Ok((vec![probes.finish("probes.csv")?, clauses.finish("eu.csv")?], Vec::new(), summary))
}

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use alphawealth_core::distributions::Alternative;
use alphawealth_core::qpd::QpdVariant;
use alphawealth_core::sim::{
    emit_report, run_qpd_experiment, run_table_experiment, QpdExperiment, Report, ReportFormat, StreamConfig,
    TableExperiment,
};
use alphawealth_core::tradeoff::tradeoff_curve;
use alphawealth_core::{AllocationRule, QpdState, TestRequest, TestSpec};
use alphawealth_service::manager::load_journal;
use alphawealth_service::ServiceConfig;
use anyhow::{Context, Result};
use serde_json::json;

use crate::settings::*;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| usage(format!("--{flag} is required")))
}

pub fn run(cli: Cli) -> Result<()> {
    let file = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::SimulateTables(a) => simulate_tables(merge(file.simulate_tables, a)?),
        Command::SimulateQpd(a) => simulate_qpd(merge(file.simulate_qpd, a)?),
        Command::Tradeoff(a) => tradeoff(merge(file.tradeoff, a)?),
        Command::Quote(a) => quote(merge(file.quote, a)?),
        Command::Serve(a) => serve(file.serve, a),
    }
}

fn format_for(format: Option<Format>, output: Option<&Path>) -> ReportFormat {
    match (format, output) {
        (Some(Format::Csv), _) => ReportFormat::Csv,
        (Some(Format::Json), _) => ReportFormat::Json,
        (None, Some(p)) => ReportFormat::from_path(p),
        (None, None) => ReportFormat::Csv,
    }
}

fn write_report<R: Report>(report: &R, format: ReportFormat, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => emit_report(report, format, path).with_context(|| format!("writing {}", path.display())),
        None => write_stdout(&report.render(format)?),
    }
}

fn write_text(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => write_stdout(text),
    }
}

fn write_stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn simulate_tables(a: TablesArgs) -> Result<()> {
    let stream = StreamConfig {
        p_false_null: a.p_false_null.unwrap_or(0.1),
        effect: a.effect.unwrap_or(2.0),
        ..StreamConfig::new(a.seed.unwrap_or(7))
    };
    let mut rule = match a.scheme.unwrap_or(Scheme::Constant) {
        Scheme::Constant => AllocationRule::constant(),
        Scheme::Relative => AllocationRule::relative(),
        Scheme::RelativeFixedM => AllocationRule::relative_fixed_m(a.fixed_m.unwrap_or(200)),
    };
    if let Some(f) = a.fraction {
        rule.fraction = f;
    }
    let mut exp = TableExperiment::standard(
        a.reps.unwrap_or(10_000),
        stream,
        rule,
        a.alpha.unwrap_or(0.05),
        a.eta.unwrap_or(0.95),
    )?;
    if let Some(keep) = &a.procedures {
        let known: Vec<String> = exp.procedures.iter().map(|p| p.label.clone()).collect();
        if let Some(bad) = keep.iter().find(|k| !known.contains(k)) {
            return Err(usage(format!("unknown procedure {bad:?}; known: {}", known.join(", "))));
        }
        exp.procedures.retain(|p| keep.contains(&p.label));
    }
    let report = run_table_experiment(&exp)?;
    write_report(&report, format_for(a.format, a.output.as_deref()), a.output.as_deref())?;
    if let Some(path) = &a.comparisons {
        write_text(&report.comparisons_csv(), Some(path))?;
    }
    Ok(())
}

fn simulate_qpd(a: QpdArgs) -> Result<()> {
    let mut exp = QpdExperiment::standard(a.reps.unwrap_or(1000), a.seed.unwrap_or(7))?;
    if let Some(t) = a.tests {
        exp.tests = t;
    }
    if let Some(p) = a.p_false_null {
        exp.p_false_null = p;
    }
    if let Some(names) = &a.variants {
        let mut picked = Vec::new();
        for name in names {
            let v = QpdVariant::ALL
                .into_iter()
                .find(|v| v.name() == name)
                .ok_or_else(|| usage(format!("unknown variant {name:?}; known: as, asr, asr_opt")))?;
            picked.extend(exp.variants.iter().filter(|c| c.variant == v).copied());
        }
        exp.variants = picked;
    }
    let report = run_qpd_experiment(&exp)?;
    write_report(&report, format_for(a.format, a.output.as_deref()), a.output.as_deref())?;
    if let Some(path) = &a.summary {
        write_text(&report.summary_csv(), Some(path))?;
    }
    Ok(())
}

/// `points` log-spaced levels from `lo` to `hi`.
fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp().min(hi)).collect()
}

fn tradeoff(a: TradeoffArgs) -> Result<()> {
    let alt = Alternative::Simple(required(a.alt, "alt")?);
    let null = a.null.unwrap_or(0.0);
    let spec = match required(a.family, "family")? {
        FamilyArg::Z => TestSpec::z(null, alt, a.sigma.unwrap_or(1.0), a.n.unwrap_or(1))?,
        FamilyArg::T => TestSpec::t(null, alt, required(a.df, "df")? + 1)?,
    };
    let (lo, hi, points) = (a.grid_min.unwrap_or(1e-6), a.grid_max.unwrap_or(0.999), a.grid_points.unwrap_or(400));
    if !(lo > 0.0 && lo < hi && hi < 1.0 && points >= 2) {
        return Err(usage("grid needs 0 < grid-min < grid-max < 1 and at least 2 points"));
    }
    let curve = tradeoff_curve(&spec, required(a.cost, "cost")?, a.alpha.unwrap_or(0.05), &log_grid(lo, hi, points))?;
    let mut csv = String::from("level,reward,branch\n");
    for p in curve {
        let _ = writeln!(csv, "{},{},{}", p.level, p.reward, p.binding.as_str());
    }
    write_text(&csv, a.output.as_deref())
}

fn quote(a: QuoteArgs) -> Result<()> {
    let state = match (&a.journal, &a.snapshot) {
        (Some(path), None) => load_journal(path).with_context(|| format!("loading {}", path.display()))?.1,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let state: QpdState =
                serde_json::from_str(&text).map_err(|e| usage(format!("snapshot {}: {e}", path.display())))?;
            state.config.validate()?;
            state
        }
        _ => return Err(usage("exactly one of --journal and --snapshot is required")),
    };
    let effect = required(a.effect, "effect")?;
    let power = required(a.power, "power")?;
    let request = match required(a.family, "family")? {
        FamilyArg::Z => TestRequest::z(a.sigma.unwrap_or(1.0), effect, power)?,
        FamilyArg::T => TestRequest::t(effect, power)?,
    };
    let quote = state.quote(&request)?;
    let line = json!({
        "cost": quote.cost,
        "level": quote.level,
        "n_after": quote.n_after,
        "tests_done": quote.tests_done,
        "power_guaranteed": QpdState::power_guarantee_check(&request, &quote),
    });
    write_text(&format!("{line}\n"), a.output.as_deref())
}

fn serve(file: Option<ServeArgs>, flags: ServeArgs) -> Result<()> {
    let mut cfg = ServiceConfig::default();
    let overlay = |cfg: &mut ServiceConfig, a: ServeArgs| {
        if let Some(v) = a.listen {
            cfg.listen = v;
        }
        if let Some(v) = a.data_dir {
            cfg.data_dir = v;
        }
        if let Some(v) = a.max_cost {
            cfg.max_cost = v;
        }
    };
    if let Some(f) = file {
        overlay(&mut cfg, f);
    }
    cfg.apply_env(|k| std::env::var(k).ok())?;
    overlay(&mut cfg, flags);
    if cfg.max_cost == 0 {
        return Err(usage("max-cost must be positive"));
    }
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(alphawealth_service::serve(cfg))?;
    Ok(())
}

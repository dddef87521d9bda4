use std::fs;
use std::io::Write;
use std::path::Path;

use backflow_core::criterion::{condition_value, decide, BackflowVerdict, QuadraticForm};
use backflow_core::dynamics::{certify_flux, current_at_origin, current_series, probability_left, refine_minimum, scan_flux, ScanPoint};
use backflow_core::fluxspec::{bracken_melloy_bound, richardson, BmSummary};
use backflow_core::library_states::{self, random_family_state, FamilySplit};
use backflow_core::regcur::{limit_procedure, ARule};
use backflow_core::states::StateDocument;
use backflow_core::{moments, Complex64, FluxReport, MomentTriple, MomentumProfile, MomentumState, UnitsContext, C_BM};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{self, complex, num, Table};
use crate::{BmArgs, CatalogArgs, Cli, CliError, Command, CurvesArgs, Format, LimitArgs, Rule, ScanArgs, StateArgs};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Certify(args) => certify(cli, args),
        Command::Scan(args) => scan(cli, args),
        Command::BmBound(args) => bm_bound(cli, args),
        Command::Curves(args) => curves(cli, args),
        Command::Limit(args) => limit(cli, args),
        Command::Catalog(args) => catalog(cli, args),
    }
}

struct Loaded {
    name: String,
    state: MomentumState,
    split: Option<FamilySplit>,
}

impl Loaded {
    /// `(a, f)` with `φ ∝ (a − p) f`, if the state has a stored family form.
    fn family_form(&self) -> Option<FamilySplit> {
        if let Some(s) = &self.split {
            return Some(s.clone());
        }
        self.state.family_factor.then(|| FamilySplit {
            a: self.state.a,
            profile: self.state.profile.clone(),
        })
    }
}

fn load(source: &StateArgs) -> Result<Option<Loaded>, CliError> {
    if let Some(path) = &source.state {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let state = MomentumState::from_json(&text)?;
        return Ok(Some(Loaded {
            name: path.display().to_string(),
            state,
            split: None,
        }));
    }
    if let Some(name) = &source.catalog {
        let entry = library_states::lookup(name)?;
        return Ok(Some(Loaded {
            name: entry.name,
            state: entry.state,
            split: entry.split,
        }));
    }
    Ok(None)
}

fn require(source: &StateArgs) -> Result<Loaded, CliError> {
    load(source)?.ok_or_else(|| CliError::usage("a state is required: pass --state FILE or --catalog NAME"))
}

fn family_profile(source: &StateArgs, default: MomentumProfile) -> Result<(MomentumProfile, UnitsContext), CliError> {
    match load(source)? {
        None => Ok((default, UnitsContext::default())),
        Some(l) => match l.family_form() {
            Some(s) => Ok((s.profile, l.state.units)),
            None => Err(CliError::usage(format!("{} has no family form (a − p) f(p)", l.name))),
        },
    }
}

#[derive(Serialize)]
struct CertifyReport {
    state: String,
    family_a: Complex64,
    moments: MomentTriple,
    form: QuadraticForm,
    verdict: BackflowVerdict,
    condition_value: f64,
    current_at_zero: f64,
    flux: FluxReport,
    backflow: bool,
}

fn certify(cli: &Cli, args: &StateArgs) -> Result<(), CliError> {
    let loaded = require(args)?;
    let state = &loaded.state;
    let (family_a, triple) = match loaded.family_form() {
        Some(s) if loaded.split.is_some() => (s.a, moments(&s.profile, &state.units)?.triple),
        Some(s) => (s.a, state.moments()?.triple),
        None => {
            // φ = (a − p) g with a on the negative axis is an exact family form.
            let a = Complex64::new(-state.profile.momentum_scale(), 0.0);
            (a, state.split_moments(a)?)
        }
    };
    let verdict = decide(&triple);
    let cond = condition_value(family_a, &triple);
    let j0 = current_at_origin(state, 0.0)?.j;
    let flux = certify_flux(state)?;
    let backflow = j0 < 0.0 || (flux.window_found && flux.flux < 0.0);
    let report = CertifyReport {
        state: loaded.name.clone(),
        family_a,
        moments: triple,
        form: verdict.form,
        verdict,
        condition_value: cond,
        current_at_zero: j0,
        flux,
        backflow,
    };

    let mut out = output::open(cli.out.as_deref())?;
    if cli.format == Some(Format::Json) {
        return output::write_json(&mut out, &report);
    }
    let opt = |z: Option<Complex64>| z.map(complex).unwrap_or_else(|| "none".into());
    let mut lines = vec![
        format!("state: {}", report.state),
        format!("family_a: {}", complex(family_a)),
        format!(
            "moments: f0 = {}, f1 = {}, f2 = {}",
            complex(triple.f0),
            complex(triple.f1),
            complex(triple.f2)
        ),
        format!(
            "quadratic_form: A = {}, B = {}, C = {}, D = {}",
            num(verdict.form.a),
            complex(verdict.form.b),
            num(verdict.form.c),
            num(verdict.form.discriminant)
        ),
        format!(
            "verdict: {}",
            if verdict.is_backflow { "family admits backflow" } else { "no backflow in family" }
        ),
        format!("witness_a: {}", opt(verdict.witness_a)),
        format!("witness_condition_value: {}", num(verdict.condition_value)),
        format!("optimal_a: {}", opt(verdict.optimal_a)),
        format!("condition_value: {}", num(cond)),
        format!("J(0): {}", num(j0)),
    ];
    if flux.window_found {
        lines.push(format!("negative_window: {} {}", num(flux.t1), num(flux.t2)));
        lines.push(format!("flux: {}", num(flux.flux)));
        lines.push(format!("flux_error: {}", num(flux.error)));
        lines.push(format!("fraction_of_cbm: {}", num(flux.fraction_of_cbm)));
    } else {
        lines.push("negative_window: none".into());
    }
    lines.push(format!("backflow: {}", if backflow { "yes" } else { "no" }));
    for l in lines {
        writeln!(out, "{l}").map_err(|e| CliError::io(Path::new("<output>"), e))?;
    }
    out.flush().map_err(|e| CliError::io(Path::new("<output>"), e))
}

#[derive(Serialize)]
struct ScanOutput {
    points: Vec<ScanPoint>,
    argmin: Option<ScanPoint>,
    refined: Option<ScanPoint>,
}

fn scan(cli: &Cli, args: &ScanArgs) -> Result<(), CliError> {
    if args.points == 0 {
        return Err(CliError::usage("scan grid is empty"));
    }
    if args.imag.is_empty() {
        return Err(CliError::usage("at least one imaginary slice is required"));
    }
    if !(args.from.is_finite() && args.to.is_finite()) || (args.points > 1 && args.from >= args.to) {
        return Err(CliError::usage("scan range must satisfy from < to"));
    }
    if args.gamma0.is_nan() || args.gamma0 <= 0.0 {
        return Err(CliError::usage("gamma0 must be positive"));
    }
    let (profile, units) = family_profile(&args.source, MomentumProfile::GaussianF { gamma0: args.gamma0 })?;
    let scale = match profile {
        MomentumProfile::GaussianF { gamma0 } => 1.0 / gamma0,
        _ => profile.momentum_scale(),
    };
    let step = if args.points > 1 {
        (args.to - args.from) / (args.points - 1) as f64
    } else {
        0.0
    };
    let values: Vec<Complex64> = args
        .imag
        .iter()
        .flat_map(|&im| (0..args.points).map(move |i| Complex64::new(args.from + step * i as f64, im) * scale))
        .collect();
    let points = scan_flux(&profile, &units, &values)?;

    let argmin = points
        .iter()
        .filter(|p| p.a.im == 0.0 && p.window.is_some())
        .min_by(|x, y| x.flux.total_cmp(&y.flux))
        .copied();
    let refined = match (argmin, args.no_refine || step == 0.0) {
        (Some(best), false) => {
            let lo = (best.a.re - step * scale).max(args.from * scale);
            let hi = (best.a.re + step * scale).min(args.to * scale);
            Some(refine_minimum(&profile, &units, lo, hi, args.refine_tol * scale)?)
        }
        _ => None,
    };

    let mut out = output::open(cli.out.as_deref())?;
    if cli.format == Some(Format::Json) {
        return output::write_json(&mut out, &ScanOutput { points, argmin, refined });
    }
    let mut t = Table::new(&["kind", "a_re", "a_im", "t1", "t2", "flux", "fraction_of_cbm"]);
    let row = |kind: &str, p: &ScanPoint| {
        let (t1, t2) = p.window.map(|(a, b)| (num(a), num(b))).unwrap_or_default();
        let frac = if p.flux < 0.0 { -p.flux / C_BM } else { 0.0 };
        vec![kind.into(), num(p.a.re), num(p.a.im), t1, t2, num(p.flux), num(frac)]
    };
    for p in &points {
        t.push(row("grid", p));
    }
    if let Some(p) = &refined {
        t.push(row("refined", p));
    }
    t.write(&mut out)
}

#[derive(Serialize)]
struct BmOutput {
    runs: Vec<BmSummary>,
    richardson: Option<f64>,
    c_bm: f64,
}

fn bm_bound(cli: &Cli, args: &BmArgs) -> Result<(), CliError> {
    if args.n.is_empty() {
        return Err(CliError::usage("at least one matrix size is required"));
    }
    let window = (args.window[0], args.window[1]);
    let units = UnitsContext::default();
    let mut runs = Vec::with_capacity(args.n.len());
    let mut largest: Option<(usize, MomentumState)> = None;
    for &n in &args.n {
        let b = bracken_melloy_bound(n, args.pmax_scale, window, &units)?;
        runs.push(b.summary());
        if largest.as_ref().is_none_or(|(m, _)| n > *m) {
            largest = Some((n, b.state));
        }
    }
    let doubling = args.n.len() > 1 && args.n.windows(2).all(|w| w[1] == 2 * w[0]);
    let extrapolated = if doubling {
        Some(richardson(&runs.iter().map(|r| r.estimate).collect::<Vec<_>>())?)
    } else {
        None
    };
    if let (Some(path), Some((_, state))) = (&args.export_state, &largest) {
        fs::write(path, state.to_json() + "\n").map_err(|e| CliError::io(path, e))?;
    }

    let mut out = output::open(cli.out.as_deref())?;
    if cli.format == Some(Format::Json) {
        return output::write_json(
            &mut out,
            &BmOutput {
                runs,
                richardson: extrapolated,
                c_bm: C_BM,
            },
        );
    }
    let mut t = Table::new(&["kind", "n", "q_max", "estimate", "residual"]);
    for r in &runs {
        t.push(vec![
            "nystrom".into(),
            r.n.to_string(),
            num(r.q_max),
            num(r.estimate),
            num(r.residual),
        ]);
    }
    if let Some(v) = extrapolated {
        t.push(vec!["richardson".into(), String::new(), String::new(), num(v), String::new()]);
    }
    t.write(&mut out)
}

#[derive(Serialize)]
struct ProbabilitySample {
    t: f64,
    #[serde(rename = "P")]
    p: f64,
}

#[derive(Serialize)]
struct CurvesOutput {
    #[serde(rename = "J")]
    j: Vec<backflow_core::CurrentSample>,
    #[serde(rename = "P")]
    p: Vec<ProbabilitySample>,
}

fn curves(cli: &Cli, args: &CurvesArgs) -> Result<(), CliError> {
    let loaded = require(&args.source)?;
    let state = &loaded.state;
    let horizon = match args.horizon {
        Some(h) if h >= 0.0 && h.is_finite() => h,
        Some(_) => return Err(CliError::usage("horizon must be non-negative")),
        None => 5.0 * state.timescale()?,
    };
    let times: Vec<f64> = if horizon == 0.0 || args.points == 0 {
        Vec::new()
    } else if args.points == 1 {
        vec![0.0]
    } else {
        let dt = 2.0 * horizon / (args.points - 1) as f64;
        (0..args.points).map(|i| -horizon + dt * i as f64).collect()
    };
    let j = if times.is_empty() { Vec::new() } else { current_series(state, &times)? };
    let p = times
        .par_iter()
        .map(|&t| Ok(ProbabilitySample { t, p: probability_left(state, t)? }))
        .collect::<backflow_core::Result<Vec<_>>>()?;

    let mut jt = Table::new(&["t", "J"]);
    for s in &j {
        jt.push(vec![num(s.t), num(s.j)]);
    }
    let mut pt = Table::new(&["t", "P"]);
    for s in &p {
        pt.push(vec![num(s.t), num(s.p)]);
    }
    let json = cli.format == Some(Format::Json);
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            if json {
                let mut out = output::open(Some(&dir.join("curves.json")))?;
                output::write_json(&mut out, &CurvesOutput { j, p })
            } else {
                jt.write(&mut output::open(Some(&dir.join("J.csv")))?)?;
                pt.write(&mut output::open(Some(&dir.join("P.csv")))?)
            }
        }
        None => {
            let mut out = output::open(None)?;
            if json {
                return output::write_json(&mut out, &CurvesOutput { j, p });
            }
            jt.write(&mut out)?;
            writeln!(out).map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
            pt.write(&mut out)
        }
    }
}

fn limit(cli: &Cli, args: &LimitArgs) -> Result<(), CliError> {
    let (profile, units) = family_profile(&args.source, MomentumProfile::GaussianF { gamma0: 1.0 })?;
    let rule = match args.rule {
        Rule::Tracked => ARule::Tracked,
        Rule::Fixed => ARule::Fixed,
    };
    let trace = limit_procedure(&profile, args.steps, rule, &units)?;
    let mut out = output::open(cli.out.as_deref())?;
    if cli.format == Some(Format::Json) {
        return output::write_json(&mut out, &trace);
    }
    let mut t = Table::new(&["step", "sigma", "a_re", "a_im", "expectation", "rescaled_expectation", "status"]);
    let last = trace.rows.len() - 1;
    for (i, r) in trace.rows.iter().enumerate() {
        let status = if i == last && trace.degenerate { "degenerate" } else { "ok" };
        t.push(vec![
            r.step.to_string(),
            num(r.sigma),
            num(r.a.re),
            num(r.a.im),
            num(r.expectation),
            num(r.rescaled_expectation),
            status.into(),
        ]);
    }
    t.write(&mut out)
}

#[derive(Serialize)]
struct SplitRecord {
    a: Complex64,
    profile: MomentumProfile,
}

#[derive(Serialize)]
struct CatalogRecord {
    name: String,
    has_backflow: bool,
    notes: String,
    current_at_zero: f64,
    state: StateDocument,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<SplitRecord>,
}

fn catalog(cli: &Cli, args: &CatalogArgs) -> Result<(), CliError> {
    let records: Vec<CatalogRecord> = match args.random {
        Some(count) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
            let states = (0..count)
                .map(|_| random_family_state(&mut rng))
                .collect::<backflow_core::Result<Vec<_>>>()?;
            states
                .into_par_iter()
                .enumerate()
                .map(|(i, state)| {
                    let c = condition_value(state.a, &state.moments()?.triple);
                    Ok(CatalogRecord {
                        name: format!("random_{i:04}"),
                        has_backflow: c < 0.0,
                        notes: format!("seed {}", cli.seed),
                        current_at_zero: current_at_origin(&state, 0.0)?.j,
                        state: state.to_document(),
                        split: None,
                    })
                })
                .collect::<backflow_core::Result<Vec<_>>>()?
        }
        None => library_states::catalog()?
            .into_iter()
            .map(|e| {
                Ok(CatalogRecord {
                    current_at_zero: current_at_origin(&e.state, 0.0)?.j,
                    name: e.name,
                    has_backflow: e.expected.has_backflow,
                    notes: e.expected.notes,
                    state: e.state.to_document(),
                    split: e.split.map(|s| SplitRecord { a: s.a, profile: s.profile }),
                })
            })
            .collect::<backflow_core::Result<Vec<_>>>()?,
    };
    let mut out = output::open(cli.out.as_deref())?;
    if cli.format != Some(Format::Csv) {
        return output::write_json(&mut out, &records);
    }
    let mut t = Table::new(&["name", "has_backflow", "a_re", "a_im", "J0", "notes"]);
    for r in &records {
        t.push(vec![
            r.name.clone(),
            r.has_backflow.to_string(),
            num(r.state.a.re),
            num(r.state.a.im),
            num(r.current_at_zero),
            r.notes.clone(),
        ]);
    }
    t.write(&mut out)
}

//! Subcommand implementations.

use std::fmt::Write as _;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use dyad_core::criteria::near_stability_boundary;
use dyad_core::dde::verdict_grid;
use dyad_core::experiment::{custom_grid, reference_grid, run_protocol, standard_grid};
use dyad_core::freq::{nyquist_points, sweep_response, write_response_csv};
use dyad_core::sysident::{generate_excitation, simulate_measurement, DEFAULT_EXCITATION_OMEGA};
use dyad_core::{
    classify, estimate_ols, estimate_wls, nyquist_encirclements, reference_coupling, AxisDynamics,
    CouplingConfig, ExcitationProfile, FrequencyGrid, IdentificationResult, NyquistResult,
    ResponseClass, StabilityKind, StabilityReport, TrajectoryRecord,
};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigDocument, Format, CONFIG_SCHEMA, DEFAULT_CONFIG};
use crate::output::{resolve_dir, Output};
use crate::svg::{self, HeatCell, LinePlot, Marker, Series};
use crate::{
    ClassifyArgs, Cli, Command, ConfigView, Estimator, ExperimentArgs, FreqArgs, GridChoice,
    IdentifyArgs, SweepArgs,
};

pub fn run(cli: Cli) -> Result<ExitCode> {
    if let Command::Config {
        view: view @ (ConfigView::Default | ConfigView::Schema),
    } = cli.command
    {
        print!(
            "{}",
            if view == ConfigView::Default {
                DEFAULT_CONFIG
            } else {
                CONFIG_SCHEMA
            }
        );
        return Ok(ExitCode::SUCCESS);
    }
    let doc = ConfigDocument::load(cli.config.as_deref())?;
    let mut out = Output::new(resolve_dir(cli.out_dir.as_deref(), &doc.output.directory));
    let code = match cli.command {
        Command::Classify(a) => return classify_cmd(&doc, &a),
        Command::Sweep(a) => sweep_cmd(&doc, &a, &mut out)?,
        Command::Nyquist(a) => nyquist_cmd(&doc, &a, &mut out)?,
        Command::Bode(a) => bode_cmd(&doc, &a, &mut out)?,
        Command::Identify(a) => identify_cmd(&a, &mut out)?,
        Command::Experiment(a) => experiment_cmd(&doc, &a, &mut out)?,
        Command::Config { .. } => {
            println!("{}", serde_json::to_string_pretty(&doc)?);
            ExitCode::SUCCESS
        }
    };
    for p in out.written() {
        eprintln!("wrote {}", p.display());
    }
    Ok(code)
}

fn ms(seconds: Option<f64>) -> String {
    seconds.map_or_else(|| "-".to_string(), |s| format!("{:.1}", s * 1e3))
}

/// JSON emitted by `classify --json`. Feeding `stiffness_Nm` and `delay_ms`
/// back as `--k` and `--delay-ms` reproduces it exactly.
#[derive(Debug, Serialize, Deserialize)]
pub struct ClassifyOutput {
    #[serde(rename = "stiffness_Nm")]
    pub stiffness_nm: f64,
    pub delay_ms: f64,
    pub report: StabilityReport,
}

fn classify_cmd(doc: &ConfigDocument, a: &ClassifyArgs) -> Result<ExitCode> {
    let cfg = doc.coupling(a.coupling.k, a.coupling.delay_ms)?;
    let report = classify(&cfg)?;
    let stable = report.is_stable();
    if a.json {
        let body = ClassifyOutput {
            stiffness_nm: cfg.stiffness(),
            delay_ms: a.coupling.delay_ms.unwrap_or(doc.coupling.delay_ms),
            report,
        };
        println!("{}", serde_json::to_string_pretty(&body)?);
    } else {
        print!("{}", format_report(&report));
    }
    Ok(ExitCode::from(if stable { 0 } else { 2 }))
}

fn format_report(r: &StabilityReport) -> String {
    let mut s = format!(
        "k = {} N/m, delay = {} ms\n{:<6}{:<20}{:>12}{:>16}{:>18}\n",
        r.stiffness,
        ms(Some(r.delay)),
        "axis",
        "kind",
        "k_m [N/m]",
        "delta_m [ms]",
        "omega_c [rad/s]"
    );
    let rows = r
        .axes
        .iter()
        .map(|a| (a.axis.as_str(), &a.verdict))
        .chain(std::iter::once(("all", &r.aggregate)));
    for (axis, v) in rows {
        let _ = writeln!(
            s,
            "{axis:<6}{:<20}{:>12.3}{:>16}{:>18}",
            v.kind.as_str(),
            v.critical_stiffness,
            ms(v.max_delay),
            v.crossing_frequency
                .map_or_else(|| "-".to_string(), |w| format!("{w:.3}"))
        );
    }
    let _ = writeln!(
        s,
        "verdict: {}",
        if r.is_stable() { "stable" } else { "unstable" }
    );
    s
}

fn linspace((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

fn sweep_axes(doc: &ConfigDocument, a: &SweepArgs) -> Result<(Vec<f64>, Vec<f64>)> {
    let base = doc.coupling(None, None)?;
    let n = a.cells as usize;
    let reference = || reference_coupling(&base);
    let ks = if !a.k_values.is_empty() {
        a.k_values.clone()
    } else {
        let range = match a.k_range {
            Some(r) => r,
            None => {
                let r = reference()?;
                (0.5 * r.stiffness, 4.0 * r.stiffness)
            }
        };
        linspace(range, n)
    };
    let ds = if !a.delay_values.is_empty() {
        a.delay_values.clone()
    } else {
        let range = match a.delay_range {
            Some(r) => r,
            None => (0.0, 2.0 * reference()?.delay * 1e3),
        };
        linspace(range, n)
    };
    for &k in &ks {
        if !(k.is_finite() && k > 0.0) {
            bail!("stiffness values must be > 0, got {k}");
        }
    }
    for &d in &ds {
        if !(d.is_finite() && d >= 0.0) {
            bail!("delay values must be >= 0, got {d}");
        }
    }
    Ok((ks, ds))
}

fn kind_color(kind: StabilityKind) -> &'static str {
    match kind {
        StabilityKind::DelayIndependent => "#7fc97f",
        StabilityKind::DelayDependent => "#fdc086",
        StabilityKind::Unstable => "#f0027f",
    }
}

fn class_letter(c: ResponseClass) -> char {
    match c {
        ResponseClass::Stable => 'S',
        ResponseClass::Marginal => 'M',
        ResponseClass::Unstable => 'U',
    }
}

fn sweep_cmd(doc: &ConfigDocument, a: &SweepArgs, out: &mut Output) -> Result<ExitCode> {
    if !(a.band.is_finite() && a.band >= 0.0) {
        bail!("--band must be >= 0, got {}", a.band);
    }
    let (ks, ds_ms) = sweep_axes(doc, a)?;
    let ds: Vec<f64> = ds_ms.iter().map(|d| d / 1e3).collect();
    let base = doc.coupling(None, None)?;
    let cells = verdict_grid(&base, &ks, &ds, &doc.simulation_settings(), a.simulate)?;
    let labels: Vec<&str> = base.axis_labels().collect();

    let mut csv = String::from("k_Nm,delay_ms,analytic,max_delay_ms");
    for l in &labels {
        let _ = write!(csv, ",analytic_{l}");
    }
    if a.simulate {
        for l in &labels {
            let _ = write!(csv, ",simulated_{l},growth_{l},near_boundary_{l}");
        }
    }
    csv.push('\n');

    let (mut compared, mut mismatched, mut mismatched_far, mut unstable) = (0, 0, 0, 0);
    for (i, c) in cells.iter().enumerate() {
        let delay_ms = ds_ms[i % ds_ms.len()];
        unstable += usize::from(!c.analytic.is_stable());
        let _ = write!(
            csv,
            "{},{},{},{}",
            c.stiffness,
            delay_ms,
            c.analytic.aggregate.kind.as_str(),
            c.analytic
                .aggregate
                .max_delay
                .map_or(String::new(), |d| (d * 1e3).to_string())
        );
        for v in &c.analytic.axes {
            let _ = write!(csv, ",{}", v.verdict.kind.as_str());
        }
        if let Some(sim) = &c.simulated {
            for (v, s) in c.analytic.axes.iter().zip(sim) {
                let pair = base.axis(&v.axis)?;
                let near = near_stability_boundary(pair, c.stiffness, c.delay, a.band)?;
                let expected = if v.verdict.kind.is_stable() {
                    ResponseClass::Stable
                } else {
                    ResponseClass::Unstable
                };
                compared += 1;
                if s.class != expected {
                    mismatched += 1;
                    mismatched_far += usize::from(!near);
                }
                let _ = write!(csv, ",{},{},{near}", s.class.as_str(), s.growth_ratio);
            }
        }
        csv.push('\n');
    }
    out.write("sweep.csv", csv.as_bytes())?;

    if a.svg {
        let heat: Vec<HeatCell> = cells
            .iter()
            .map(|c| HeatCell {
                color: kind_color(c.analytic.aggregate.kind),
                label: c
                    .simulated
                    .as_ref()
                    .map(|s| s.iter().map(|x| class_letter(x.class)).collect())
                    .unwrap_or_default(),
            })
            .collect();
        let legend = [
            (
                kind_color(StabilityKind::DelayIndependent),
                "delay-independent",
            ),
            (kind_color(StabilityKind::DelayDependent), "delay-dependent"),
            (kind_color(StabilityKind::Unstable), "unstable"),
        ];
        let title = if a.simulate {
            "Analytic verdict (colour), simulated per axis (S/M/U)"
        } else {
            "Analytic verdict"
        };
        let doc_svg = svg::heat_map(title, "k [N/m]", "delay [ms]", &ks, &ds_ms, &heat, &legend);
        out.write("sweep.svg", doc_svg.as_bytes())?;
    }

    println!(
        "{} cells ({} stiffness x {} delay), {} analytically unstable",
        cells.len(),
        ks.len(),
        ds_ms.len(),
        unstable
    );
    if a.simulate {
        println!(
            "simulated vs analytic: {mismatched} of {compared} axis verdicts differ, {mismatched_far} outside the {:.0}% boundary band",
            a.band * 100.0
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn frequency_grid(a: &FreqArgs) -> Result<FrequencyGrid> {
    Ok(FrequencyGrid::log(a.omega_min, a.omega_max, a.points)?)
}

/// Panels to draw: a single configuration, or the 3x3 reference batch.
fn freq_panels(doc: &ConfigDocument, a: &FreqArgs) -> Result<Vec<(String, CouplingConfig)>> {
    let base = doc.coupling(a.coupling.k, a.coupling.delay_ms)?;
    base.axis(&a.axis)?;
    if !a.batch {
        return Ok(vec![(a.axis.clone(), base)]);
    }
    let r = reference_coupling(&base)?;
    let mut panels = Vec::new();
    for kf in [0.5, 1.0, 2.0] {
        for df in [0.5, 1.0, 2.0] {
            let cfg = base
                .with_stiffness(kf * r.stiffness)?
                .with_delay(df * r.delay)?;
            panels.push((format!("{}_k{kf}_d{df}", a.axis), cfg));
        }
    }
    Ok(panels)
}

#[derive(Serialize)]
struct NyquistPanel {
    name: String,
    #[serde(rename = "stiffness_Nm")]
    stiffness_nm: f64,
    delay_ms: f64,
    result: NyquistResult,
}

fn nyquist_cmd(doc: &ConfigDocument, a: &FreqArgs, out: &mut Output) -> Result<ExitCode> {
    let grid = frequency_grid(a)?;
    let mut panels = Vec::new();
    for (name, cfg) in freq_panels(doc, a)? {
        let result = nyquist_encirclements(&cfg, &a.axis, &grid)?;
        let points = nyquist_points(&cfg, &a.axis, &grid)?;
        let mut csv = String::from("omega,re,im\n");
        for (w, l) in &points {
            let _ = writeln!(csv, "{w},{},{}", l.re, l.im);
        }
        out.write(&format!("nyquist_{name}.csv"), csv.as_bytes())?;
        if doc.wants(Format::Svg) {
            let plot = LinePlot {
                title: format!(
                    "Nyquist, axis {}: k = {:.2} N/m, delay = {} ms, winding {}",
                    a.axis,
                    cfg.stiffness(),
                    ms(Some(cfg.delay())),
                    result.winding
                ),
                x_label: "Re L(j\u{3c9})".into(),
                y_label: "Im L(j\u{3c9})".into(),
                log_x: false,
                equal_aspect: true,
                series: vec![
                    Series {
                        points: points.iter().map(|(_, l)| (l.re, l.im)).collect(),
                        color: "#1f77b4",
                    },
                    Series {
                        points: points.iter().map(|(_, l)| (l.re, -l.im)).collect(),
                        color: "#aaaaaa",
                    },
                ],
                markers: vec![Marker {
                    at: (-1.0, 0.0),
                    label: "(-1, 0)".into(),
                }],
            };
            out.write(
                &format!("nyquist_{name}.svg"),
                svg::stacked(&[plot]).as_bytes(),
            )?;
        }
        panels.push(NyquistPanel {
            name,
            stiffness_nm: cfg.stiffness(),
            delay_ms: cfg.delay() * 1e3,
            result,
        });
    }
    if a.json {
        println!("{}", serde_json::to_string_pretty(&panels)?);
    } else {
        println!(
            "{:<16}{:>12}{:>12}{:>9}{:>14}  verdict",
            "panel", "k [N/m]", "delay [ms]", "winding", "min|L+1|"
        );
        for p in &panels {
            println!(
                "{:<16}{:>12.3}{:>12.1}{:>9}{:>14.3e}  {}",
                p.name,
                p.stiffness_nm,
                p.delay_ms,
                p.result.winding,
                p.result.min_distance,
                if p.result.is_stable() {
                    "stable"
                } else {
                    "unstable"
                }
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn bode_cmd(doc: &ConfigDocument, a: &FreqArgs, out: &mut Output) -> Result<ExitCode> {
    let grid = frequency_grid(a)?;
    for (name, cfg) in freq_panels(doc, a)? {
        let rows = sweep_response(&cfg, &a.axis, &grid)?;
        let mut csv = Vec::new();
        write_response_csv(&mut csv, &rows)?;
        out.write(&format!("bode_{name}.csv"), &csv)?;
        if doc.wants(Format::Svg) {
            let head = format!(
                "axis {}: k = {:.2} N/m, delay = {} ms",
                a.axis,
                cfg.stiffness(),
                ms(Some(cfg.delay()))
            );
            let mag = LinePlot {
                title: format!("Magnitude, {head}"),
                x_label: "\u{3c9} [rad/s]".into(),
                y_label: "|L| [dB]".into(),
                log_x: true,
                equal_aspect: false,
                series: vec![Series {
                    points: rows.iter().map(|r| (r.omega, r.magnitude_db)).collect(),
                    color: "#1f77b4",
                }],
                markers: Vec::new(),
            };
            let phase = LinePlot {
                title: format!("Phase, {head}"),
                x_label: "\u{3c9} [rad/s]".into(),
                y_label: "arg L [deg]".into(),
                log_x: true,
                equal_aspect: false,
                series: vec![Series {
                    points: rows.iter().map(|r| (r.omega, r.phase_deg)).collect(),
                    color: "#d62728",
                }],
                markers: Vec::new(),
            };
            out.write(
                &format!("bode_{name}.svg"),
                svg::stacked(&[mag, phase]).as_bytes(),
            )?;
        }
        if let Some(peak) = rows
            .iter()
            .max_by(|x, y| x.magnitude_db.total_cmp(&y.magnitude_db))
        {
            println!(
                "{name}: peak {:.3} dB at {:.4} rad/s",
                peak.magnitude_db, peak.omega
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IdentifyOutput {
    pub estimator: String,
    pub samples: usize,
    #[serde(flatten)]
    pub result: IdentificationResult,
}

fn parse_synthetic(v: &[String]) -> Result<(AxisDynamics, f64, u64)> {
    let num = |i: usize, name: &str| -> Result<f64> {
        v[i].parse::<f64>()
            .with_context(|| format!("--synthetic {name}: cannot parse `{}`", v[i]))
    };
    let (m, b, noise) = (num(0, "MASS")?, num(1, "DAMPING")?, num(2, "NOISE")?);
    let seed = v[3]
        .parse::<u64>()
        .with_context(|| format!("--synthetic SEED: cannot parse `{}`", v[3]))?;
    Ok((AxisDynamics::new(m, b)?, noise, seed))
}

fn identify_cmd(a: &IdentifyArgs, out: &mut Output) -> Result<ExitCode> {
    let record = match (&a.input, &a.synthetic) {
        (Some(path), _) => {
            let file = std::fs::File::open(path)
                .with_context(|| format!("cannot open {}", path.display()))?;
            TrajectoryRecord::read_csv(std::io::BufReader::new(file))
                .with_context(|| format!("{}", path.display()))?
        }
        (None, Some(v)) => {
            let (dynamics, noise, seed) = parse_synthetic(v)?;
            let profile = ExcitationProfile::standard(DEFAULT_EXCITATION_OMEGA)?;
            let kin = generate_excitation(&profile, a.duration_s, a.dt_ms / 1e3)?;
            let record = simulate_measurement(&dynamics, &kin, noise, seed)?;
            if a.save_record {
                let mut csv = Vec::new();
                record.write_csv(&mut csv)?;
                out.write("identify_record.csv", &csv)?;
            }
            record
        }
        (None, None) => bail!("either an input CSV or --synthetic is required"),
    };
    let result = match a.estimator {
        Estimator::Ols => estimate_ols(&record)?,
        Estimator::Wls => estimate_wls(
            &record,
            dyad_core::sysident::DEFAULT_MAX_ITER,
            dyad_core::sysident::DEFAULT_TOL,
        )?,
    };
    let body = IdentifyOutput {
        estimator: format!("{:?}", a.estimator).to_lowercase(),
        samples: record.len(),
        result,
    };
    println!("{}", serde_json::to_string_pretty(&body)?);
    Ok(ExitCode::SUCCESS)
}

fn experiment_cmd(doc: &ConfigDocument, a: &ExperimentArgs, out: &mut Output) -> Result<ExitCode> {
    let trials = a.trials.map_or(doc.experiment.trials, |t| t as usize);
    let seed = a.seed.unwrap_or(doc.experiment.seed);
    let cfg = doc.coupling(None, None)?;
    let grid = match a.grid {
        GridChoice::Standard => standard_grid(trials, seed)?,
        GridChoice::Reference => reference_grid(&cfg, trials, seed)?,
        GridChoice::Custom => {
            if doc.experiment.grid.is_empty() {
                bail!("`experiment.grid` is empty; --grid custom needs at least one cell");
            }
            let cells = doc
                .experiment
                .grid
                .iter()
                .map(|c| (c.stiffness_nm, c.delay_ms / 1e3));
            custom_grid(cells, trials, seed)?
        }
    };
    let report = run_protocol(&cfg, &grid, &doc.trial_settings()?)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    out.write("experiment.csv", &csv)?;
    let table = report.format_table();
    out.write("experiment_summary.txt", table.as_bytes())?;
    if doc.wants(Format::Json) {
        out.write(
            "experiment.json",
            serde_json::to_string_pretty(&report.rows)?.as_bytes(),
        )?;
    }
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

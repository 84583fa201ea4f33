use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use branchctl_core::adiabatic::{classify_regime, DEFAULT_REGIME_RATIO};
use branchctl_core::config::{parse_document, Document, RunInfo, Scenario};
use branchctl_core::dephasing::EnsembleResult;
use branchctl_core::eigen::{analytic_eigensystem, null_eigenvector, numeric_oracle, resonant_hamiltonian};
use branchctl_core::experiments::{dephasing_study, gamma_sweep, zeno_limit_probe, SweepResult};
use branchctl_core::model::assemble_hamiltonian;
use branchctl_core::output::{
    fmt_num, write_ensemble_mean_csv, write_ensemble_stderr_csv, write_sweep_csv,
    write_trajectory_csv,
};
use branchctl_core::propagator::{basis_state, final_branching, propagate, BRANCHING_FLOOR};

use crate::plots;

pub const MANIFEST: &str = "manifest.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Propagate,
    Eigen,
    SweepGamma,
    TheoryVsExact,
    Dephasing,
    ZenoProbe,
}

impl Kind {
    pub const ALL: [Kind; 6] = [
        Kind::Propagate,
        Kind::Eigen,
        Kind::SweepGamma,
        Kind::TheoryVsExact,
        Kind::Dephasing,
        Kind::ZenoProbe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Propagate => "propagate",
            Kind::Eigen => "eigen",
            Kind::SweepGamma => "sweep-gamma",
            Kind::TheoryVsExact => "theory-vs-exact",
            Kind::Dephasing => "dephasing",
            Kind::ZenoProbe => "zeno-probe",
        }
    }

    fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .with_context(|| format!("unknown subcommand {name:?} in manifest"))
    }
}

/// Collects the files of one run so the manifest can list them.
struct Outputs {
    dir: PathBuf,
    names: Vec<String>,
}

impl Outputs {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        self.names.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        let mut w = self.create(name)?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    fn with<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let mut w = self.create(name)?;
        f(&mut w).with_context(|| format!("writing {name}"))?;
        w.flush()?;
        Ok(())
    }
}

/// Runs one subcommand into `out` and finishes with a manifest.
pub fn execute(kind: Kind, s: &Scenario, xi: Option<f64>, plot: bool, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut o = Outputs {
        dir: out.to_path_buf(),
        names: Vec::new(),
    };
    let summary = match kind {
        Kind::Propagate => run_propagate(s, &mut o, plot)?,
        Kind::Eigen => run_eigen(s, xi.unwrap_or(0.5), &mut o)?,
        Kind::SweepGamma => run_sweep(s, &mut o, plot, false)?,
        Kind::TheoryVsExact => run_sweep(s, &mut o, plot, true)?,
        Kind::Dephasing => run_dephasing(s, &mut o, plot)?,
        Kind::ZenoProbe => run_zeno(s, &mut o)?,
    };
    o.text("summary.txt", &summary)?;
    print!("{summary}");

    let mut doc = s.to_document();
    let seeded = kind == Kind::Dephasing;
    let mut outputs = o.names.clone();
    outputs.push(MANIFEST.to_string());
    doc.run = Some(RunInfo {
        subcommand: kind.name().to_string(),
        xi: if kind == Kind::Eigen { xi } else { None },
        plot,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: seeded.then_some(s.config.dephasing.master_seed),
        outputs,
    });
    o.text(MANIFEST, &doc.to_toml())?;
    println!("wrote {}", out.display());
    Ok(())
}

/// Re-executes a manifest into `out` (default: alongside the manifest).
pub fn rerun(manifest: &Path, out: Option<PathBuf>) -> Result<()> {
    let text = fs::read_to_string(manifest)
        .with_context(|| format!("cannot read {}", manifest.display()))?;
    let doc: Document = parse_document(&text).with_context(|| format!("in {}", manifest.display()))?;
    let Some(run) = doc.run.clone() else {
        bail!("{} has no [run] table; use --config for plain scenario files", manifest.display());
    };
    let s = doc.resolve(None)?;
    let kind = Kind::from_name(&run.subcommand)?;
    let out = out.unwrap_or_else(|| {
        manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    });
    execute(kind, &s, run.xi, run.plot, &out)
}

fn header(s: &Scenario, what: &str) -> String {
    let p = &s.pulses;
    format!(
        "scenario {}: {what}\npeaks P={} S3={} S4={} B3={} B4={}\n",
        s.name, p.peak_p, p.peak_s3, p.peak_s4, p.peak_b3, p.peak_b4
    )
}

fn run_propagate(s: &Scenario, o: &mut Outputs, plot: bool) -> Result<String> {
    let rec = propagate(&s.pulses, &s.config, None, &basis_state(1))?;
    o.with("trajectory.csv", |w| write_trajectory_csv(w, &rec))?;
    if plot {
        o.text("plot_populations.py", &plots::populations(&["trajectory.csv"]))?;
    }
    let fin = rec.final_populations();
    let mut t = header(s, &format!("propagation at gamma={}", s.config.gamma));
    let regime = classify_regime(&s.pulses, s.config.gamma, DEFAULT_REGIME_RATIO);
    writeln!(t, "regime {}", regime.as_str())?;
    for (k, p) in fin.iter().enumerate() {
        writeln!(t, "P{} {}", k + 1, fmt_num(*p))?;
    }
    writeln!(t, "B {}", final_branching(&rec, BRANCHING_FLOOR))?;
    writeln!(t, "max P2 {}", fmt_num(rec.max_intermediate()))?;
    writeln!(t, "norm {}", fmt_num(*rec.norm.last().expect("samples")))?;
    writeln!(t, "config hash {}", rec.config_hash)?;
    if s.config.dephasing.delta > 0.0 {
        writeln!(t, "note: dephasing is ignored here; use the dephasing subcommand")?;
    }
    Ok(t)
}

fn run_eigen(s: &Scenario, xi: f64, o: &mut Outputs) -> Result<String> {
    let mut t = header(s, &format!("resonant spectrum at xi={xi}"));
    let h = resonant_hamiltonian(xi, &s.pulses);
    let sys = analytic_eigensystem(xi, &s.pulses)?;
    let oracle = numeric_oracle(&h)?;
    writeln!(t, "source {}", sys.provenance.as_str())?;
    writeln!(t, "k,lambda,residual,oracle_lambda")?;
    let res = sys.residuals(&h);
    for k in 0..5 {
        let j = oracle.nearest(sys.values[k], -1.0).expect("five values");
        writeln!(
            t,
            "{},{},{},{}",
            k + 1,
            fmt_num(sys.values[k].re),
            fmt_num(res[k]),
            fmt_num(oracle.values[j].re)
        )?;
    }
    let v1 = null_eigenvector(xi, &s.pulses)?;
    let hv = s.pulses.envelopes(xi).resonant_matrix() * v1;
    writeln!(t, "null-state residual {}", fmt_num(hv.norm()))?;
    if s.config.gamma > 0.0 {
        let full = assemble_hamiltonian(xi, &s.pulses, &s.config, None)?;
        let sys = numeric_oracle(&full)?;
        writeln!(t, "full H at gamma={} (numeric)", s.config.gamma)?;
        writeln!(t, "k,re,im,residual")?;
        let res = sys.residuals(&full);
        for k in 0..5 {
            writeln!(
                t,
                "{},{},{},{}",
                k + 1,
                fmt_num(sys.values[k].re),
                fmt_num(sys.values[k].im),
                fmt_num(res[k])
            )?;
        }
    }
    o.text("eigen.txt", &t)?;
    Ok(t)
}

#[derive(Serialize)]
struct SweepSummary {
    scenario: String,
    points: usize,
    failed_points: usize,
    min_p3_gamma: f64,
    min_p3: f64,
    p4_at_min_p3: f64,
    min_p4_gamma: f64,
    min_p4: f64,
    p3_at_min_p4: f64,
    max_dev_p3_100_2000: f64,
    max_dev_p4_100_2000: f64,
}

fn sweep_summary(r: &SweepResult) -> SweepSummary {
    let nan = f64::NAN;
    let pick = |level| {
        r.exact_minimum(level, 0.0, f64::INFINITY).map_or((nan, nan, nan), |row| {
            let e = row.exact.as_ref().expect("exact row");
            let (m, other) = if level == 3 { (e.p3, e.p4) } else { (e.p4, e.p3) };
            (row.gamma, m, other)
        })
    };
    let (g3, m3, o3) = pick(3);
    let (g4, m4, o4) = pick(4);
    let a = r.agreement(100.0, 2000.0);
    SweepSummary {
        scenario: r.scenario.clone(),
        points: r.rows.len(),
        failed_points: r.rows.iter().filter(|x| x.error.is_some()).count(),
        min_p3_gamma: g3,
        min_p3: m3,
        p4_at_min_p3: o3,
        min_p4_gamma: g4,
        min_p4: m4,
        p3_at_min_p4: o4,
        max_dev_p3_100_2000: a.max_dev_p3,
        max_dev_p4_100_2000: a.max_dev_p4,
    }
}

fn run_sweep(s: &Scenario, o: &mut Outputs, plot: bool, deviations: bool) -> Result<String> {
    let r = gamma_sweep(&s.pulses, &s.sweep.grid(), &s.config, &s.name)?;
    o.with("sweep.csv", |w| write_sweep_csv(w, &r))?;
    if deviations {
        o.with("theory_vs_exact.csv", |w| {
            writeln!(w, "gamma,dP3,dP4,regime")?;
            for row in &r.rows {
                let (d3, d4) = match (&row.exact, &row.theory) {
                    (Some(e), Some(t)) => (e.p3 - t.p3, e.p4 - t.p4),
                    _ => (f64::NAN, f64::NAN),
                };
                let regime = classify_regime(&s.pulses, row.gamma, DEFAULT_REGIME_RATIO);
                writeln!(w, "{},{},{},{}", fmt_num(row.gamma), fmt_num(d3), fmt_num(d4), regime.as_str())?;
            }
            Ok(())
        })?;
    }
    if plot {
        o.text("plot_sweep.py", &plots::sweep("sweep.csv"))?;
    }
    let sum = sweep_summary(&r);
    o.text("summary.toml", &toml::to_string(&sum)?)?;
    let mut t = header(s, &format!("gamma sweep over {} points", sum.points));
    writeln!(
        t,
        "min P3 {} at gamma {} (P4 {})",
        fmt_num(sum.min_p3),
        fmt_num(sum.min_p3_gamma),
        fmt_num(sum.p4_at_min_p3)
    )?;
    writeln!(
        t,
        "min P4 {} at gamma {} (P3 {})",
        fmt_num(sum.min_p4),
        fmt_num(sum.min_p4_gamma),
        fmt_num(sum.p3_at_min_p4)
    )?;
    writeln!(
        t,
        "max |exact - theory| for gamma in [100, 2000]: P3 {} P4 {}",
        fmt_num(sum.max_dev_p3_100_2000),
        fmt_num(sum.max_dev_p4_100_2000)
    )?;
    for row in r.rows.iter().filter(|x| x.error.is_some()) {
        writeln!(t, "gamma {}: {}", fmt_num(row.gamma), row.error.as_deref().unwrap_or(""))?;
    }
    Ok(t)
}

#[derive(Serialize)]
struct EnsembleSummary {
    gamma: f64,
    final_p3: f64,
    final_p4: f64,
    final_p3_stderr: f64,
    final_p4_stderr: f64,
    branching: String,
    mean_of_ratios: f64,
    realizations: usize,
    failures: usize,
    master_seed: u64,
}

#[derive(Serialize)]
struct DephasingSummary {
    scenario: String,
    delta: f64,
    tau: f64,
    ensemble: Vec<EnsembleSummary>,
}

fn ensemble_stem(gamma: f64) -> String {
    format!("gamma_{gamma}")
}

fn run_dephasing(s: &Scenario, o: &mut Outputs, plot: bool) -> Result<String> {
    let results: Vec<EnsembleResult> = dephasing_study(&s.pulses, &s.study_gammas, &s.config)?;
    let mut means = Vec::new();
    for r in &results {
        let stem = ensemble_stem(r.gamma);
        o.with(&format!("{stem}_mean.csv"), |w| write_ensemble_mean_csv(w, r))?;
        o.with(&format!("{stem}_stderr.csv"), |w| write_ensemble_stderr_csv(w, r))?;
        means.push(format!("{stem}_mean.csv"));
    }
    if plot {
        let names: Vec<&str> = means.iter().map(String::as_str).collect();
        o.text("plot_populations.py", &plots::populations(&names))?;
    }
    let d = &s.config.dephasing;
    let sum = DephasingSummary {
        scenario: s.name.clone(),
        delta: d.delta,
        tau: d.tau,
        ensemble: results
            .iter()
            .map(|r| EnsembleSummary {
                gamma: r.gamma,
                final_p3: r.final_p3,
                final_p4: r.final_p4,
                final_p3_stderr: r.final_p3_stderr,
                final_p4_stderr: r.final_p4_stderr,
                branching: r.branching.to_string(),
                mean_of_ratios: r.mean_of_ratios,
                realizations: r.realizations,
                failures: r.failures,
                master_seed: r.master_seed,
            })
            .collect(),
    };
    o.text("summary.toml", &toml::to_string(&sum)?)?;
    let mut t = header(
        s,
        &format!("dephasing delta={} tau={} N={} seed={}", d.delta, d.tau, d.n_realizations, d.master_seed),
    );
    writeln!(t, "gamma,P3,P4,B,B_mean_of_ratios,failures")?;
    for r in &results {
        writeln!(
            t,
            "{},{},{},{},{},{}",
            fmt_num(r.gamma),
            fmt_num(r.final_p3),
            fmt_num(r.final_p4),
            r.branching,
            fmt_num(r.mean_of_ratios),
            r.failures
        )?;
    }
    Ok(t)
}

fn run_zeno(s: &Scenario, o: &mut Outputs) -> Result<String> {
    let z = zeno_limit_probe(&s.pulses, &s.config)?;
    o.with("zeno.csv", |w| {
        writeln!(w, "gamma,P3,P4,B")?;
        for p in &z.points {
            writeln!(w, "{},{},{},{}", fmt_num(p.gamma), fmt_num(p.p3), fmt_num(p.p4), fmt_num(p.branching.value()))?;
        }
        Ok(())
    })?;
    let mut t = header(s, "large-gamma probe");
    for p in &z.points {
        writeln!(t, "gamma {} B {}", fmt_num(p.gamma), p.branching)?;
    }
    writeln!(t, "extrapolated B {}", fmt_num(z.extrapolated))?;
    writeln!(
        t,
        "four-level reference B {} (S3^2/S4^2 = {})",
        fmt_num(z.four_level_branching),
        fmt_num(s.pulses.four_level_branching())
    )?;
    writeln!(t, "monotone approach {}", z.monotone)?;
    Ok(t)
}

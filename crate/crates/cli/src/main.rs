use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nondoubling::covering::{besicovitch_select, certify_whitney, whitney, wiener_select, Region};
use nondoubling::czo::{apply_t_eps, apply_t_star, check_cz_conditions, eps_grid, KernelSpec};
use nondoubling::experiments::{
    run_example_1, run_example_2, run_example_3, run_invariant_suite, ExperimentConfig, Tolerances, SCHEMA,
};
use nondoubling::kernels::KernelProfile;
use nondoubling::lattice::{Lattice, LatticeParams};
use nondoubling::maximal::{m_lambda, m_radial, n_phi, n_sup, radii_grid};
use nondoubling::measure::{GrowthOptions, MeasureJson, MeasureSpec};
use nondoubling::weights::{reverse_holder_probe, sawyer_constants, default_cube_family, z_infty_estimate, Weight};
use nondoubling::{Cube, DiscreteMeasure};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "ndcz", version, about = "Calderón–Zygmund tools for atomic measures with polynomial growth")]
struct Cli {
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Emit JSON where CSV is the default.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    #[command(subcommand)]
    Measure(MeasureCmd),
    #[command(subcommand)]
    Lattice(LatticeCmd),
    #[command(subcommand)]
    Op(OpCmd),
    #[command(subcommand)]
    Kernel(KernelCmd),
    #[command(subcommand)]
    Weight(WeightCmd),
    #[command(subcommand)]
    Cover(CoverCmd),
    #[command(subcommand)]
    Experiment(ExperimentCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Interval,
    Square,
    Saksman,
    Line,
}

#[derive(Subcommand)]
enum MeasureCmd {
    /// Generate a measure in the JSON atom format.
    Gen {
        #[arg(long, value_enum)]
        kind: Family,
        #[arg(long, default_value_t = 64)]
        res: usize,
        /// Number of Saksman intervals.
        #[arg(long, default_value_t = 6)]
        k: usize,
    },
    /// Check the growth bound of a measure.
    Verify {
        #[command(flatten)]
        m: MeasureArg,
        #[arg(long, default_value_t = 0.05)]
        tol: f64,
        #[arg(long, default_value_t = 64)]
        samples: usize,
    },
}

/// A measure file, or a generator shorthand such as `saksman:6:64`,
/// `interval:4096`, `square:32` or `line:256`.
#[derive(Args, Clone)]
struct MeasureArg {
    #[arg(long = "measure", default_value = "saksman:6:64")]
    measure: String,
}

#[derive(Args, Clone)]
struct LatticeArgs {
    #[arg(long = "A")]
    a: Option<f64>,
    #[arg(long = "a-min")]
    a_min: Option<f64>,
    #[arg(long)]
    lipschitz: bool,
}

impl LatticeArgs {
    fn params(&self) -> LatticeParams {
        let mut p = LatticeParams::default();
        if let Some(a) = self.a {
            p.a = a;
        }
        if let Some(a_min) = self.a_min {
            p.a_min = a_min;
        }
        p.lipschitz = self.lipschitz;
        p
    }
}

#[derive(Subcommand)]
enum LatticeCmd {
    /// Build the lattice and check its invariants.
    Build {
        #[command(flatten)]
        m: MeasureArg,
        #[command(flatten)]
        lat: LatticeArgs,
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum OpName {
    #[value(name = "N")]
    N,
    #[value(name = "Nphi")]
    Nphi,
    #[value(name = "Mlambda")]
    Mlambda,
    #[value(name = "MR")]
    Mr,
    #[value(name = "Sk")]
    Sk,
    #[value(name = "Teps")]
    Teps,
    #[value(name = "Tstar")]
    Tstar,
}

#[derive(Subcommand)]
enum OpCmd {
    /// Apply an operator; CSV rows are `atom,x...,f,value`.
    Apply {
        #[command(flatten)]
        m: MeasureArg,
        #[command(flatten)]
        lat: LatticeArgs,
        #[arg(long, value_enum)]
        op: OpName,
        /// JSON array of values, `ones`, `spike:<atom>` or `random`.
        #[arg(long, default_value = "ones")]
        f: String,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value = "hilbert")]
        kernel: String,
        #[arg(long)]
        eps: Option<f64>,
    },
}

#[derive(Subcommand)]
enum KernelCmd {
    /// Sample the size and smoothness conditions of a named kernel; with
    /// `--measure`, also check the lattice kernels.
    Check {
        #[arg(long, default_value = "hilbert")]
        kernel: String,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
        #[arg(long)]
        measure: Option<String>,
        #[command(flatten)]
        lat: LatticeArgs,
    },
}

#[derive(Subcommand)]
enum WeightCmd {
    /// Sawyer testing constants, with optional Z-infinity and reverse Hölder probes.
    Test {
        #[command(flatten)]
        m: MeasureArg,
        #[command(flatten)]
        lat: LatticeArgs,
        /// `builtin:w0`, `builtin:wbad`, `builtin:one` or a JSON array file.
        #[arg(long, default_value = "builtin:w0")]
        w: String,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        #[arg(long)]
        zinfty: bool,
        #[arg(long, default_value_t = 3)]
        shift: usize,
        #[arg(long = "rh-eps")]
        rh_eps: Option<f64>,
        #[arg(long, default_value_t = 200)]
        random_cubes: usize,
    },
}

#[derive(Subcommand)]
enum CoverCmd {
    /// Input: `{"region": ..., "root": cube, "depth": n}`.
    Whitney { input: PathBuf },
    /// Input: `{"cubes": [...], "points": [...]}`.
    Wiener { input: PathBuf },
    /// Input: `{"points": [...], "cubes": [...]}` with cube i centred at point i.
    Besicovitch { input: PathBuf },
}

#[derive(Subcommand)]
enum ExperimentCmd {
    Ex1 {
        #[arg(long, default_value_t = 256)]
        res: usize,
        #[arg(long, default_value_t = 22)]
        trials: usize,
    },
    Ex2 {
        #[arg(long, default_value_t = 24)]
        res: usize,
        #[arg(long, default_value_t = 22)]
        trials: usize,
    },
    Ex3 {
        #[arg(long, default_value_t = 8)]
        k_max: usize,
        #[arg(long, default_value_t = 64)]
        res: usize,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
    },
    Suite {
        /// JSON experiment configuration; defaults are used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Deserialize)]
struct WhitneyInput {
    region: Region,
    root: Cube,
    #[serde(default = "default_depth")]
    depth: usize,
}

fn default_depth() -> usize {
    7
}

#[derive(Deserialize)]
struct CoverInput {
    cubes: Vec<Cube>,
    points: Vec<Vec<f64>>,
}

fn load_measure(src: &str) -> Result<DiscreteMeasure> {
    let parts: Vec<&str> = src.split(':').collect();
    let num = |i: usize| -> Result<usize> {
        parts
            .get(i)
            .ok_or_else(|| anyhow!("missing field {i} in {src:?}"))?
            .parse()
            .with_context(|| format!("bad number in {src:?}"))
    };
    let spec = match parts[0] {
        "interval" => MeasureSpec::LebesgueInterval { res: num(1)? },
        "square" => MeasureSpec::LebesgueSquare { res: num(1)? },
        "line" => MeasureSpec::AdRegularLine { res: num(1)? },
        "saksman" => MeasureSpec::SaksmanIntervals {
            k: num(1)?,
            res: num(2)?,
        },
        _ => {
            let text = fs::read_to_string(src).with_context(|| format!("reading measure {src}"))?;
            let j: MeasureJson = serde_json::from_str(&text)?;
            return Ok(DiscreteMeasure::from_json(&j)?);
        }
    };
    Ok(spec.build()?)
}

fn load_values(src: &str, m: &DiscreteMeasure, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    use rand::Rng;
    let v = if src == "ones" {
        vec![1.0; m.len()]
    } else if src == "random" {
        (0..m.len()).map(|_| rng.gen::<f64>()).collect()
    } else if let Some(i) = src.strip_prefix("spike:") {
        let i: usize = i.parse()?;
        if i >= m.len() {
            bail!("spike atom {i} out of range (measure has {} atoms)", m.len());
        }
        let mut v = vec![0.0; m.len()];
        v[i] = 1.0;
        v
    } else {
        let text = fs::read_to_string(src).with_context(|| format!("reading {src}"))?;
        serde_json::from_str(&text)?
    };
    if v.len() != m.len() {
        bail!("expected {} values, got {}", m.len(), v.len());
    }
    Ok(v)
}

fn load_weight(src: &str, m: &DiscreteMeasure, p: f64) -> Result<Weight> {
    Ok(match src.strip_prefix("builtin:") {
        Some(name) => Weight::builtin(name, m, p)?,
        None => {
            let text = fs::read_to_string(src).with_context(|| format!("reading weight {src}"))?;
            Weight::new(m, serde_json::from_str(&text)?, p)?
        }
    })
}

fn passed(v: &Value) -> bool {
    v.get("passed").and_then(Value::as_bool).unwrap_or(true)
}

fn run(cli: &Cli) -> Result<(String, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    let report: Value = match &cli.cmd {
        Cmd::Measure(MeasureCmd::Gen { kind, res, k }) => {
            let spec = match kind {
                Family::Interval => MeasureSpec::LebesgueInterval { res: *res },
                Family::Square => MeasureSpec::LebesgueSquare { res: *res },
                Family::Saksman => MeasureSpec::SaksmanIntervals { k: *k, res: *res },
                Family::Line => MeasureSpec::AdRegularLine { res: *res },
            };
            serde_json::to_value(spec.build()?.to_json())?
        }
        Cmd::Measure(MeasureCmd::Verify { m, tol, samples }) => {
            let m = load_measure(&m.measure)?;
            let r = m.verify_growth(&GrowthOptions {
                samples: *samples,
                tol: *tol,
                r_lo: None,
            });
            json!({ "schema": SCHEMA, "atoms": m.len(), "total_mass": m.total_mass(), "growth": r, "passed": r.passed })
        }
        Cmd::Lattice(LatticeCmd::Build { m, lat, samples }) => {
            let m = load_measure(&m.measure)?;
            let l = Lattice::build(&m, lat.params())?;
            let r = l.check_invariants(*samples, &mut rng);
            json!({
                "schema": SCHEMA,
                "lattice": l.to_json(),
                "class_counts": l.class_counts(),
                "invariants": r,
                "passed": r.passed,
            })
        }
        Cmd::Op(OpCmd::Apply {
            m,
            lat,
            op,
            f,
            k,
            lambda,
            kernel,
            eps,
        }) => {
            let m = load_measure(&m.measure)?;
            let f = load_values(f, &m, &mut rng)?;
            let grid = radii_grid(&m);
            let out = match op {
                OpName::Nphi => n_phi(&m, &f, &grid),
                OpName::Mlambda => m_lambda(&m, &f, *lambda, &grid),
                OpName::Mr => m_radial(&m, &f, &grid),
                OpName::N | OpName::Sk => {
                    let l = Lattice::build(&m, lat.params())?;
                    let prof = KernelProfile::new(&l)?;
                    if *op == OpName::N {
                        n_sup(&prof, &f)
                    } else {
                        if *k > l.k_max() {
                            bail!("k = {k} exceeds k_max = {}", l.k_max());
                        }
                        prof.apply(*k, &f)
                    }
                }
                OpName::Teps | OpName::Tstar => {
                    let kern = KernelSpec::by_name(kernel, m.growth_exponent())?;
                    if *op == OpName::Teps {
                        apply_t_eps(&m, &kern, &f, eps.unwrap_or(m.min_spacing() / 2.0))?
                    } else {
                        apply_t_star(&m, &kern, &f, &eps_grid(&m, 24))?
                    }
                }
            };
            if cli.json {
                json!({ "schema": SCHEMA, "values": out })
            } else {
                let mut s = String::from("# schema=1\natom");
                for i in 0..m.dim() {
                    s.push_str(&format!(",x{i}"));
                }
                s.push_str(",f,value\n");
                for (i, v) in out.iter().enumerate() {
                    s.push_str(&i.to_string());
                    for c in m.point(i) {
                        s.push_str(&format!(",{c:e}"));
                    }
                    s.push_str(&format!(",{:e},{v:e}\n", f[i]));
                }
                return Ok((s, true));
            }
        }
        Cmd::Kernel(KernelCmd::Check {
            kernel,
            trials,
            measure,
            lat,
        }) => {
            let kern = KernelSpec::by_name(kernel, 1.0)?;
            let dim = kern.dim.unwrap_or(2);
            let cz = check_cz_conditions(&kern, dim, *trials, &mut rng);
            let mut ok = cz.passed;
            let mut v = json!({ "schema": SCHEMA, "cz": cz });
            if let Some(src) = measure {
                let m = load_measure(src)?;
                let l = Lattice::build(&m, lat.params())?;
                let prof = KernelProfile::new(&l)?;
                let window = prof.mass_window();
                let lemmas = prof.check_kernel_lemmas(200, &mut rng);
                let tol = Tolerances::default();
                ok &= lemmas.passed && window.deep_within(tol.mass_lo, tol.mass_hi);
                v["mass_window"] = serde_json::to_value(&window)?;
                v["lemmas"] = serde_json::to_value(&lemmas)?;
            }
            v["passed"] = json!(ok);
            v
        }
        Cmd::Weight(WeightCmd::Test {
            m,
            lat,
            w,
            p,
            zinfty,
            shift,
            rh_eps,
            random_cubes,
        }) => {
            let m = load_measure(&m.measure)?;
            let w = load_weight(w, &m, *p)?;
            let l = Lattice::build(&m, lat.params())?;
            let prof = KernelProfile::new(&l)?;
            let family = default_cube_family(&l, *random_cubes, &mut rng);
            let ks: Vec<usize> = (0..=l.k_max()).collect();
            let s = sawyer_constants(&prof, &w, &family, &ks)?;
            let mut v = json!({ "schema": SCHEMA, "sawyer": s });
            if *zinfty {
                v["zinfty"] = serde_json::to_value(z_infty_estimate(&prof, &w, 500, *shift, &mut rng))?;
            }
            if let Some(e) = rh_eps {
                let kl: Vec<usize> = match m.components() {
                    Some(c) => {
                        let top = c.iter().copied().max().unwrap_or(1);
                        (1..=top).collect()
                    }
                    None => Vec::new(),
                };
                if !kl.is_empty() {
                    v["reverse_holder"] = serde_json::to_value(reverse_holder_probe(&m, &w, *e, &kl)?)?;
                }
            }
            v
        }
        Cmd::Cover(c) => match c {
            CoverCmd::Whitney { input } => {
                let inp: WhitneyInput = serde_json::from_str(&fs::read_to_string(input)?)?;
                let w = whitney(&inp.region, &inp.root, inp.depth)?;
                let cert = certify_whitney(&w, 2000, &mut rng);
                json!({ "schema": SCHEMA, "cubes": w.cubes, "incomplete": w.incomplete, "certificate": cert, "passed": cert.passed })
            }
            CoverCmd::Wiener { input } => {
                let inp: CoverInput = serde_json::from_str(&fs::read_to_string(input)?)?;
                let s = wiener_select(&inp.cubes, &inp.points)?;
                json!({ "schema": SCHEMA, "selected": s.selected, "certificate": s.certificate, "passed": s.certificate.passed })
            }
            CoverCmd::Besicovitch { input } => {
                let inp: CoverInput = serde_json::from_str(&fs::read_to_string(input)?)?;
                let s = besicovitch_select(&inp.points, &inp.cubes)?;
                json!({ "schema": SCHEMA, "r_of": s.r_of, "selected": s.selected, "certificate": s.certificate, "passed": s.certificate.passed })
            }
        },
        Cmd::Experiment(e) => {
            let tol = Tolerances::default();
            match e {
                ExperimentCmd::Ex1 { res, trials } => to_value(run_example_1(*res, *trials, cli.seed, &tol)?)?,
                ExperimentCmd::Ex2 { res, trials } => to_value(run_example_2(*res, *trials, cli.seed, &tol)?)?,
                ExperimentCmd::Ex3 { k_max, res, p } => {
                    let r = run_example_3(*k_max, *res, *p, cli.seed, &tol)?;
                    let ok = r.w0_stable && r.wbad_grows && r.rh_diverges;
                    let mut v = serde_json::to_value(r)?;
                    v["passed"] = json!(ok);
                    v
                }
                ExperimentCmd::Suite { config } => {
                    let mut cfg = match config {
                        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
                        None => ExperimentConfig::default(),
                    };
                    cfg.seed = cli.seed;
                    to_value(run_invariant_suite(&cfg)?)?
                }
            }
        }
    };
    let ok = passed(&report);
    Ok((serde_json::to_string_pretty(&report)? + "\n", ok))
}

fn to_value<T: Serialize>(t: T) -> Result<Value> {
    Ok(serde_json::to_value(t)?)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((text, ok)) => {
            let written = match &cli.out {
                Some(path) => fs::write(path, &text).with_context(|| format!("writing {}", path.display())),
                None => std::io::stdout().write_all(text.as_bytes()).map_err(Into::into),
            };
            if let Err(e) = written {
                eprintln!("error: {e:#}");
                return ExitCode::from(2);
            }
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

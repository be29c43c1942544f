use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::collections::BTreeMap;
use std::path::PathBuf;
use zigzag::analysis;
use zigzag::bands::{band_scan, BandPath};
use zigzag::dmrg::{
    build_lattice_hamiltonian, dmrg_ground_state, load_checkpoint, save_checkpoint, DmrgControls,
};
use zigzag::ed;
use zigzag::localbasis::{solve_local_basis, GridSpec, SolveOptions};
use zigzag::model::{CoefficientTable, ModelParameters};
use zigzag::mps::InitStrategy;
use zigzag::observables;
use zigzag::sweep::{self, BoundaryControls, RunRecord, SweepConfig};

/// Ground-state engine and criticality toolchain for the quantum
/// linear-zigzag transition.
#[derive(Parser)]
#[command(name = "zigzag", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Interaction exponent of the long-range repulsion.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Effective Planck constant.
    #[arg(long)]
    g: f64,
    /// Squared transverse trap frequency (rescaled units).
    #[arg(long)]
    omega2: f64,
}

impl ModelArgs {
    fn params(&self) -> ModelParameters {
        ModelParameters {
            alpha: self.alpha,
            g: self.g,
            omega2: self.omega2,
            order_t: 5,
        }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum InitKind {
    Random,
    Staggered,
    Linear,
}

#[derive(Copy, Clone, ValueEnum)]
enum PathKind {
    Line1d,
    GammaXM,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form mapping coefficients at a parameter point.
    Coeffs {
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Highest Taylor order to tabulate.
        #[arg(long, default_value_t = 3)]
        qmax: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Truncated single-site basis: energies, Y, W, sampled wavefunctions.
    LocalBasis {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dense exact diagonalization of a small chain.
    Oracle {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        d: usize,
        #[arg(short = 'L', long)]
        length: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// DMRG ground-state search.
    Ground {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        d: usize,
        #[arg(short = 'L', long)]
        length: usize,
        #[arg(short = 'D', long, default_value_t = 50)]
        d_max: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = InitKind::Staggered)]
        init: InitKind,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Measurements on a checkpointed state.
    Measure {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Maximum distance of the bulk correlation profile.
        #[arg(long)]
        corr_max: Option<usize>,
        /// Site of the local-population readout (1-based).
        #[arg(long)]
        pops_site: Option<usize>,
    },
    /// Long- vs short-range scattering kernels along a momentum path.
    Bands {
        #[arg(long)]
        q: u32,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = PathKind::Line1d)]
        path: PathKind,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fits over existing run records.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Execute a parameter-grid sweep from a config file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Bisect the critical trap frequency for each configured g.
    PhaseBoundary {
        #[arg(long)]
        config: PathBuf,
        /// Bracketing interval in omega2, "LO,HI".
        #[arg(long, value_delimiter = ',', num_args = 2)]
        bracket: Vec<f64>,
        #[arg(long, default_value_t = 2e-3)]
        target: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Thermodynamic extrapolation of xi_L over run records.
    Extrapolate {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlation-decay fit of one run record.
    Corr {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        min_dj: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-size-scaling collapse over run records.
    Collapse {
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calabrese-Cardy central-charge fit of one run record.
    Cee {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Power-law fit of the phase boundary points.
    Boundary {
        /// JSON file: array of {"g": .., "omega_c2": ..} objects.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_record(path: &PathBuf) -> Result<RunRecord> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &PathBuf, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_vec_pretty(value)?)?;
    Ok(())
}

fn corr_array(rec: &RunRecord) -> ndarray::Array2<f64> {
    let l = rec.observables.corr_matrix.len();
    let mut m = ndarray::Array2::zeros((l, l));
    for (i, row) in rec.observables.corr_matrix.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    m
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Coeffs { alpha, qmax, out } => {
            let table = CoefficientTable::compute(alpha, qmax)?;
            write_json(&out, &table)?;
            println!(
                "alpha={alpha}: M1={:.6} N1={:.6} M2={:.6} -> {}",
                table.m1(),
                table.n1(),
                table.m2(),
                out.display()
            );
        }
        Command::LocalBasis {
            model,
            d,
            grid_points,
            out,
        } => {
            let params = model.params();
            let coeffs = CoefficientTable::compute(params.alpha, 2)?;
            let grid = grid_points.map(|points| GridSpec {
                y_max: 0.0, // replaced below by the automatic estimate
                points,
            });
            // automatic domain with optional explicit point count
            let opts = SolveOptions::default();
            let basis = match grid {
                None => solve_local_basis(&params, &coeffs, d, None, &opts)?,
                Some(gr) => {
                    let auto = solve_local_basis(&params, &coeffs, d, None, &opts)?;
                    let spec = GridSpec {
                        y_max: auto.grid.y_max,
                        points: gr.points,
                    };
                    solve_local_basis(&params, &coeffs, d, Some(spec), &opts)?
                }
            };
            let mut text = String::new();
            text.push_str("# zigzag local-basis output\n");
            text.push_str("# keys: d, g, omega2, alpha, grid_points, y_max\n");
            text.push_str("# rows: E <q> <energy>; Y <a> <b> <value>; W <a> <b> <value>;\n");
            text.push_str("#       psi <q> <y> <value> (wavefunction, subsampled)\n");
            text.push_str(&format!("d = {}\n", basis.d));
            text.push_str(&format!("g = {:.17e}\n", params.g));
            text.push_str(&format!("omega2 = {:.17e}\n", params.omega2));
            text.push_str(&format!("alpha = {:.17e}\n", params.alpha));
            text.push_str(&format!("grid_points = {}\n", basis.grid.points));
            text.push_str(&format!("y_max = {:.17e}\n", basis.grid.y_max));
            for (q, e) in basis.energies.iter().enumerate() {
                text.push_str(&format!("E {} {:.17e}\n", q + 1, e));
            }
            for a in 0..basis.d {
                for b in 0..basis.d {
                    text.push_str(&format!("Y {} {} {:.17e}\n", a + 1, b + 1, basis.y_op[[a, b]]));
                }
            }
            for a in 0..basis.d {
                for b in 0..basis.d {
                    text.push_str(&format!("W {} {} {:.17e}\n", a + 1, b + 1, basis.w_op[[a, b]]));
                }
            }
            let stride = (basis.y.len() / 512).max(1);
            for q in 0..basis.d {
                for i in (0..basis.y.len()).step_by(stride) {
                    text.push_str(&format!(
                        "psi {} {:.17e} {:.17e}\n",
                        q + 1,
                        basis.y[i],
                        basis.wavefunctions[[q, i]]
                    ));
                }
            }
            std::fs::write(&out, text)?;
            println!("wrote local basis (d={d}) to {}", out.display());
        }
        Command::Oracle {
            model,
            d,
            length,
            out,
        } => {
            let params = model.params();
            let coeffs = CoefficientTable::compute(params.alpha, 2)?;
            let opts = SolveOptions::default();
            let basis = solve_local_basis(&params, &coeffs, d, None, &opts)?;
            let spec = ed::exact_ground_state(&basis, coeffs.n1(), length)?;
            let mut yy = BTreeMap::new();
            for j in 1..=length {
                for jp in j..=length {
                    yy.insert(
                        format!("{j},{jp}"),
                        ed::exact_yy(&spec, &basis, j, jp)?,
                    );
                }
            }
            let record = serde_json::json!({
                "params": params,
                "L": length,
                "d": d,
                "dimension": spec.dimension,
                "ground_energy": spec.ground_energy,
                "first_gap": spec.first_gap,
                "yy_correlators": yy,
            });
            write_json(&out, &record)?;
            println!(
                "E0 = {:.12} (dim {}) -> {}",
                spec.ground_energy,
                spec.dimension,
                out.display()
            );
        }
        Command::Ground {
            model,
            d,
            length,
            d_max,
            tol,
            init,
            seed,
            out,
            checkpoint,
        } => {
            let params = model.params();
            let coeffs = CoefficientTable::compute(params.alpha, 2)?;
            let opts = SolveOptions::default();
            let basis = solve_local_basis(&params, &coeffs, d, None, &opts)?;
            let h = build_lattice_hamiltonian(&basis, coeffs.n1(), length)?;
            let strategy = match init {
                InitKind::Random => InitStrategy::Random { seed, d_init: d_max.min(8) },
                InitKind::Staggered => InitStrategy::Staggered,
                InitKind::Linear => InitStrategy::Linear,
            };
            let state0 = zigzag::mps::MatrixProductState::initialize(length, d, strategy)?;
            let controls = DmrgControls {
                d_max,
                energy_tol: tol,
                ..Default::default()
            };
            let (state, report) = dmrg_ground_state(&h, state0, &controls)?;
            let obs = observables::measure(&state, &basis.y_op, None)?;
            let record = serde_json::json!({
                "format_version": 1,
                "params": params,
                "l": length,
                "d": d,
                "d_max": d_max,
                "energy": report.final_energy,
                "report": report,
                "observables": obs,
            });
            write_json(&out, &record)?;
            if let Some(ck) = checkpoint {
                let meta = serde_json::json!({
                    "params": params,
                    "d": d,
                });
                save_checkpoint(&state, meta, &ck)?;
            }
            println!(
                "E0 = {:.12}, xi_L = {:.6}, converged = {}",
                report.final_energy, obs.xi_l, report.converged
            );
        }
        Command::Measure {
            state,
            out,
            corr_max,
            pops_site,
        } => {
            let (mps, meta) = load_checkpoint(&state)?;
            let params: ModelParameters = serde_json::from_value(
                meta.get("params")
                    .cloned()
                    .context("checkpoint lacks model parameters")?,
            )?;
            let d = mps.local_dim();
            let coeffs = CoefficientTable::compute(params.alpha, 2)?;
            let opts = SolveOptions::default();
            let basis = solve_local_basis(&params, &coeffs, d, None, &opts)?;
            let obs = observables::measure(&mps, &basis.y_op, pops_site)?;
            write_json(&out, &obs)?;
            // CSV side tables
            let l = mps.len();
            let mut entropy_csv = String::from("cut,entropy\n");
            for (i, s) in obs.entropy_profile.iter().enumerate() {
                entropy_csv.push_str(&format!("{},{:.12e}\n", i + 1, s));
            }
            std::fs::write(out.with_extension("entropy.csv"), entropy_csv)?;
            let max_dist = corr_max.unwrap_or((l / 3).saturating_sub(1));
            let corr = corr_array_from(&obs.corr_matrix);
            let profile = observables::bulk_correlation_profile(
                &corr,
                &obs.y_profile,
                max_dist.min((l / 3).saturating_sub(1)),
            )?;
            let mut corr_csv = String::from("dj,G\n");
            for &(dj, g) in &profile {
                corr_csv.push_str(&format!("{dj},{g:.12e}\n"));
            }
            std::fs::write(out.with_extension("corr.csv"), corr_csv)?;
            println!("xi_L = {:.6} -> {}", obs.xi_l, out.display());
        }
        Command::Bands {
            q,
            alpha,
            path,
            samples,
            out,
        } => {
            let band_path = match path {
                PathKind::Line1d => BandPath::Line1d,
                PathKind::GammaXM => BandPath::GammaXM,
            };
            let rows = band_scan(band_path, q, alpha, samples, 1e-10)?;
            let mut csv = String::from("t,xi_long,xi_short,parabola\n");
            for r in &rows {
                csv.push_str(&format!(
                    "{:.12e},{:.12e},{:.12e},{:.12e}\n",
                    r.t, r.xi_long, r.xi_short, r.parabola
                ));
            }
            std::fs::write(&out, csv)?;
            println!("wrote {} band samples to {}", rows.len(), out.display());
        }
        Command::Analyze { what } => run_analyze(what)?,
        Command::Sweep { config } => {
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg = SweepConfig::from_toml(&text)?;
            let manifest = sweep::run_sweep(&cfg)?;
            let done = manifest
                .entries
                .iter()
                .filter(|e| e.status == sweep::PointStatus::Done)
                .count();
            println!(
                "sweep finished: {done}/{} points done -> {}",
                manifest.entries.len(),
                cfg.output_dir.display()
            );
        }
        Command::PhaseBoundary {
            config,
            bracket,
            target,
            out,
        } => {
            if bracket.len() != 2 {
                bail!("--bracket needs exactly two values LO,HI");
            }
            let text = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg = SweepConfig::from_toml(&text)?;
            let controls = BoundaryControls {
                bracket: (bracket[0], bracket[1]),
                target_width: target,
            };
            let result = sweep::phase_boundary(&cfg, &controls)?;
            let rows: Vec<serde_json::Value> = result
                .iter()
                .map(|&(g, wc, unc)| {
                    serde_json::json!({"g": g, "omega_c2": wc, "uncertainty": unc})
                })
                .collect();
            write_json(&out, &rows)?;
            for &(g, wc, unc) in &result {
                println!("g = {g}: omega_c^2 = {wc:.4} +- {unc:.4}");
            }
        }
    }
    Ok(())
}

fn corr_array_from(rows: &[Vec<f64>]) -> ndarray::Array2<f64> {
    let l = rows.len();
    let mut m = ndarray::Array2::zeros((l, l));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    m
}

fn run_analyze(cmd: AnalyzeCommand) -> Result<()> {
    match cmd {
        AnalyzeCommand::Extrapolate { inputs, out } => {
            let mut points = Vec::new();
            for p in &inputs {
                let rec = read_record(p)?;
                points.push((rec.l as f64, rec.observables.xi_l));
            }
            let (xi_inf, unc) = analysis::extrapolate_thermodynamic(&points)?;
            let phase = analysis::classify_phase(xi_inf, unc);
            let result = serde_json::json!({
                "xi_inf": xi_inf,
                "uncertainty": unc,
                "phase": phase,
                "points": points,
            });
            write_json(&out, &result)?;
            println!("xi_inf = {xi_inf:.6} +- {unc:.6} ({phase:?})");
        }
        AnalyzeCommand::Corr { input, min_dj, out } => {
            let rec = read_record(&input)?;
            let corr = corr_array(&rec);
            let max_dist = (rec.l / 3).saturating_sub(1);
            let profile = observables::bulk_correlation_profile(
                &corr,
                &rec.observables.y_profile,
                max_dist,
            )?;
            let fit = analysis::fit_correlation_decay(&profile, min_dj)?;
            write_json(&out, &fit)?;
            // fitted curve for plotting
            let mut csv = String::from("dj,G,G_fit\n");
            let (a, eta, lambda) = (
                fit.value("amplitude"),
                fit.value("eta"),
                fit.value("lambda"),
            );
            for &(dj, g) in &profile {
                if dj == 0 {
                    continue;
                }
                let x = dj as f64;
                let f = a * x.powf(-eta) * (-x / lambda).exp();
                csv.push_str(&format!("{dj},{g:.12e},{f:.12e}\n"));
            }
            std::fs::write(out.with_extension("fit.csv"), csv)?;
            println!(
                "eta = {:.4} +- {:.4}, lambda = {:.2}",
                fit.value("eta"),
                fit.uncertainty("eta"),
                fit.value("lambda")
            );
        }
        AnalyzeCommand::Collapse { inputs, out } => {
            let mut by_l: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
            for p in &inputs {
                let rec = read_record(p)?;
                by_l
                    .entry(rec.l)
                    .or_default()
                    .push((rec.params.omega2, rec.observables.xi_l));
            }
            let mut curves: Vec<(usize, Vec<(f64, f64)>)> = by_l.into_iter().collect();
            for (_, data) in curves.iter_mut() {
                data.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite omega2"));
            }
            let res = analysis::finite_size_collapse(&curves)?;
            write_json(&out, &res)?;
            let mut csv = String::from("L,x_rescaled,y_rescaled\n");
            for &(l, ref data) in &curves {
                let lf = l as f64;
                for &(omega, xi) in data {
                    let x = (omega - res.omega_c) * lf.powf(res.inv_nu);
                    let y = xi * lf.powf(res.beta_over_nu);
                    csv.push_str(&format!("{l},{x:.12e},{y:.12e}\n"));
                }
            }
            std::fs::write(out.with_extension("collapse.csv"), csv)?;
            println!(
                "omega_c^2 = {:.4}, beta/nu = {:.4}, 1/nu = {:.4}",
                res.omega_c, res.beta_over_nu, res.inv_nu
            );
        }
        AnalyzeCommand::Cee { input, out } => {
            let rec = read_record(&input)?;
            let profile: Vec<(usize, f64)> = rec
                .observables
                .entropy_profile
                .iter()
                .enumerate()
                .map(|(i, &s)| (i + 1, s))
                .collect();
            let fit = analysis::fit_central_charge(&profile, rec.l, 4)?;
            write_json(&out, &fit)?;
            println!(
                "c = {:.4} +- {:.4}",
                fit.value("c"),
                fit.uncertainty("c")
            );
        }
        AnalyzeCommand::Boundary { input, alpha, out } => {
            let text = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let rows: Vec<serde_json::Value> = serde_json::from_str(&text)?;
            let coeffs = CoefficientTable::compute(alpha, 1)?;
            let m1 = coeffs.m1();
            let mut points = Vec::new();
            for row in &rows {
                let g = row
                    .get("g")
                    .and_then(|v| v.as_f64())
                    .context("row lacks numeric 'g'")?;
                let wc = row
                    .get("omega_c2")
                    .and_then(|v| v.as_f64())
                    .context("row lacks numeric 'omega_c2'")?;
                let delta = m1 - wc;
                if delta <= 0.0 {
                    bail!("point g={g} has omega_c2 above M1; no positive shift");
                }
                points.push((g, delta));
            }
            let fit = analysis::fit_power_law(&points)?;
            write_json(&out, &fit)?;
            println!(
                "delta omega_c^2 = {:.2} * g^{:.3}",
                fit.value("u"),
                fit.value("v")
            );
        }
    }
    Ok(())
}

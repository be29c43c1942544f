//! Sweep orchestration: parameter grids, result persistence, resumable
//! manifests and the phase-boundary bisection.
//!
//! Each grid point `(g, omega2, L)` runs one single-threaded DMRG job;
//! parallelism lives at the grid level (a bounded rayon pool under the
//! `parallel` feature, sequential otherwise). All coordination goes through
//! an append-only journal; records are written atomically so a killed sweep
//! resumes to the same final state.

use crate::analysis::{classify_phase, extrapolate_thermodynamic, Phase};
use crate::dmrg::{build_lattice_hamiltonian, dmrg_ground_state, ConvergenceReport, DmrgControls};
use crate::localbasis::{solve_local_basis, LocalBasis, SolveOptions};
use crate::model::{CoefficientTable, ModelParameters};
use crate::mps::InitStrategy;
use crate::observables::{measure, ObservableSet};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

/// Grid and solver configuration of one sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub alpha: f64,
    pub g_values: Vec<f64>,
    pub omega2_values: Vec<f64>,
    pub l_values: Vec<usize>,
    pub d: usize,
    pub d_max: usize,
    #[serde(default = "default_energy_tol")]
    pub energy_tol: f64,
    #[serde(default = "default_discard_tol")]
    pub discard_tol: f64,
    #[serde(default = "default_basis_tol")]
    pub basis_refine_tol: f64,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub resume: bool,
}

fn default_energy_tol() -> f64 {
    1e-10
}
fn default_discard_tol() -> f64 {
    1e-10
}
fn default_basis_tol() -> f64 {
    1e-9
}
fn default_jobs() -> usize {
    1
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.g_values.is_empty() || self.omega2_values.is_empty() || self.l_values.is_empty()
        {
            return Err(Error::InvalidInput("all parameter grids must be non-empty".into()));
        }
        if self.jobs < 1 {
            return Err(Error::InvalidInput("jobs must be >= 1".into()));
        }
        if self.d < 2 || self.d_max < 2 {
            return Err(Error::InvalidInput("need d >= 2 and D_max >= 2".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn controls(&self) -> DmrgControls {
        DmrgControls {
            d_max: self.d_max,
            energy_tol: self.energy_tol,
            discard_tol: self.discard_tol,
            ..Default::default()
        }
    }
}

/// Self-contained result of one grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub format_version: u32,
    pub params: ModelParameters,
    pub l: usize,
    pub d: usize,
    pub d_max: usize,
    pub energy: f64,
    pub report: ConvergenceReport,
    pub observables: ObservableSet,
    pub timestamp: u64,
    pub code_revision: String,
}

/// One journal line per grid point.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub enum PointStatus {
    Done,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub status: PointStatus,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

pub fn point_id(g: f64, omega2: f64, l: usize) -> String {
    format!("g{g:.6}_w{omega2:.6}_L{l}")
}

pub fn record_path(out_dir: &Path, g: f64, omega2: f64, l: usize) -> PathBuf {
    out_dir
        .join(format!("g{g:.6}"))
        .join(format!("record_w{omega2:.6}_L{l}.json"))
}

fn atomic_write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("json.tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(&serde_json::to_vec_pretty(value)?)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Shared per-sweep cache of local-basis solutions keyed on `(g, omega2)`.
type BasisCache = Arc<Mutex<HashMap<(u64, u64), Arc<LocalBasis>>>>;

fn cached_basis(
    cache: &BasisCache,
    params: &ModelParameters,
    coeffs: &CoefficientTable,
    d: usize,
    refine_tol: f64,
) -> Result<Arc<LocalBasis>> {
    let key = (params.g.to_bits(), params.omega2.to_bits());
    if let Some(b) = cache.lock().expect("cache lock").get(&key) {
        return Ok(b.clone());
    }
    let opts = SolveOptions {
        refine_tol,
        ..Default::default()
    };
    let basis = Arc::new(solve_local_basis(params, coeffs, d, None, &opts)?);
    cache
        .lock()
        .expect("cache lock")
        .insert(key, basis.clone());
    Ok(basis)
}

/// Run one grid point end to end.
pub fn run_point(
    params: &ModelParameters,
    coeffs: &CoefficientTable,
    l: usize,
    d: usize,
    controls: &DmrgControls,
    basis_refine_tol: f64,
    cache: Option<&BasisCache>,
) -> Result<RunRecord> {
    let owned_cache;
    let cache = match cache {
        Some(c) => c,
        None => {
            owned_cache = Arc::new(Mutex::new(HashMap::new()));
            &owned_cache
        }
    };
    let basis = cached_basis(cache, params, coeffs, d, basis_refine_tol)?;
    let h = build_lattice_hamiltonian(&basis, coeffs.n1(), l)?;
    let init = crate::mps::MatrixProductState::initialize(l, d, InitStrategy::Staggered)?;
    let (state, report) = dmrg_ground_state(&h, init, controls)?;
    let observables = measure(&state, &basis.y_op, None)?;
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|t| t.as_secs())
        .unwrap_or(0);
    Ok(RunRecord {
        format_version: 1,
        params: *params,
        l,
        d,
        d_max: controls.d_max,
        energy: report.final_energy,
        report,
        observables,
        timestamp,
        code_revision: env!("CARGO_PKG_VERSION").to_string(),
    })
}

struct Journal {
    file: Mutex<std::fs::File>,
    entries: Mutex<Vec<ManifestEntry>>,
}

impl Journal {
    fn open(path: &Path) -> Result<Self> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?;
        Ok(Self {
            file: Mutex::new(file),
            entries: Mutex::new(Vec::new()),
        })
    }

    fn log(&self, entry: ManifestEntry) {
        let status = match entry.status {
            PointStatus::Done => "done",
            PointStatus::Skipped => "skipped",
            PointStatus::Failed => "failed",
        };
        let line = format!("{} {} {:.3}\n", entry.id, status, entry.wall_time);
        {
            let mut f = self.file.lock().expect("journal lock");
            let _ = f.write_all(line.as_bytes());
            let _ = f.flush();
        }
        self.entries.lock().expect("journal lock").push(entry);
    }
}

/// Execute every grid point, skipping completed records when `resume` is set.
/// Per-point failures are journaled and do not abort the sweep.
pub fn run_sweep(config: &SweepConfig) -> Result<Manifest> {
    config.validate()?;
    std::fs::create_dir_all(&config.output_dir)?;
    let coeffs = CoefficientTable::compute(config.alpha, 2)?;
    let journal = Journal::open(&config.output_dir.join("manifest.journal"))?;
    let cache: BasisCache = Arc::new(Mutex::new(HashMap::new()));
    let controls = config.controls();

    let mut points = Vec::new();
    for &g in &config.g_values {
        for &omega2 in &config.omega2_values {
            for &l in &config.l_values {
                points.push((g, omega2, l));
            }
        }
    }

    let work = |&(g, omega2, l): &(f64, f64, usize)| {
        let start = std::time::Instant::now();
        let id = point_id(g, omega2, l);
        let path = record_path(&config.output_dir, g, omega2, l);
        if config.resume && path.exists() {
            if let Ok(text) = std::fs::read_to_string(&path) {
                if serde_json::from_str::<RunRecord>(&text).is_ok() {
                    journal.log(ManifestEntry {
                        id,
                        status: PointStatus::Skipped,
                        wall_time: start.elapsed().as_secs_f64(),
                    });
                    return;
                }
            }
        }
        let params = ModelParameters {
            alpha: config.alpha,
            g,
            omega2,
            order_t: 5,
        };
        let outcome = run_point(
            &params,
            &coeffs,
            l,
            config.d,
            &controls,
            config.basis_refine_tol,
            Some(&cache),
        )
        .and_then(|record| atomic_write_json(&path, &record));
        let status = match outcome {
            Ok(()) => PointStatus::Done,
            Err(_) => PointStatus::Failed,
        };
        journal.log(ManifestEntry {
            id,
            status,
            wall_time: start.elapsed().as_secs_f64(),
        });
    };

    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            points.par_iter().for_each(work);
        });
    }
    #[cfg(not(feature = "parallel"))]
    points.iter().for_each(work);

    let mut entries = journal.entries.into_inner().expect("journal lock");
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let manifest = Manifest { entries };
    atomic_write_json(&config.output_dir.join("manifest.json"), &manifest)?;
    write_summary_csv(config)?;
    Ok(manifest)
}

/// Plot-ready summary table over all existing records of a sweep directory.
pub fn write_summary_csv(config: &SweepConfig) -> Result<()> {
    let mut rows = Vec::new();
    for &g in &config.g_values {
        for &omega2 in &config.omega2_values {
            for &l in &config.l_values {
                let path = record_path(&config.output_dir, g, omega2, l);
                if let Ok(text) = std::fs::read_to_string(&path) {
                    if let Ok(rec) = serde_json::from_str::<RunRecord>(&text) {
                        rows.push(format!(
                            "{:.6},{:.6},{},{:.12e},{:.12e}",
                            g, omega2, l, rec.observables.xi_l, rec.energy
                        ));
                    }
                }
            }
        }
    }
    let mut out = String::from("g,omega2,L,xi_L,energy\n");
    for row in rows {
        out.push_str(&row);
        out.push('\n');
    }
    let path = config.output_dir.join("summary.csv");
    let tmp = path.with_extension("csv.tmp");
    std::fs::write(&tmp, out)?;
    std::fs::rename(&tmp, &path)?;
    Ok(())
}

/// Bisection of a two-valued classifier on `omega2`. The bracket must
/// classify differently at its ends; returns `(midpoint, half-width)`.
pub fn bisect_boundary(
    mut lo: f64,
    mut hi: f64,
    target_width: f64,
    mut classify: impl FnMut(f64) -> Result<Phase>,
) -> Result<(f64, f64)> {
    if !(hi > lo) || !(target_width > 0.0) {
        return Err(Error::InvalidInput("invalid bracket or target width".into()));
    }
    let phase_lo = classify(lo)?;
    let phase_hi = classify(hi)?;
    if phase_lo == phase_hi {
        return Err(Error::InvalidInput(format!(
            "bracket ends classify identically ({phase_lo:?})"
        )));
    }
    while hi - lo > target_width {
        let mid = 0.5 * (lo + hi);
        if classify(mid)? == phase_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), 0.5 * (hi - lo)))
}

/// Controls of the DMRG-backed boundary search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryControls {
    pub bracket: (f64, f64),
    #[serde(default = "default_target_width")]
    pub target_width: f64,
}

fn default_target_width() -> f64 {
    2e-3
}

/// Locate `omega_c^2(g)` for each `g` in the config by bisection; each probe
/// extrapolates `xi_L` over the configured system sizes and classifies the
/// phase.
pub fn phase_boundary(
    config: &SweepConfig,
    controls: &BoundaryControls,
) -> Result<Vec<(f64, f64, f64)>> {
    config.validate()?;
    if config.l_values.len() < 4 {
        return Err(Error::InvalidInput(
            "boundary search needs >= 4 system sizes for extrapolation".into(),
        ));
    }
    let coeffs = CoefficientTable::compute(config.alpha, 2)?;
    let dmrg_controls = config.controls();
    let mut out = Vec::new();
    for &g in &config.g_values {
        let cache: BasisCache = Arc::new(Mutex::new(HashMap::new()));
        let classify = |omega2: f64| -> Result<Phase> {
            let params = ModelParameters {
                alpha: config.alpha,
                g,
                omega2,
                order_t: 5,
            };
            let mut points = Vec::new();
            for &l in &config.l_values {
                let rec = run_point(
                    &params,
                    &coeffs,
                    l,
                    config.d,
                    &dmrg_controls,
                    config.basis_refine_tol,
                    Some(&cache),
                )?;
                points.push((l as f64, rec.observables.xi_l));
            }
            let (xi_inf, unc) = extrapolate_thermodynamic(&points)?;
            Ok(classify_phase(xi_inf, unc))
        };
        let (omega_c, width) = bisect_boundary(
            controls.bracket.0,
            controls.bracket.1,
            controls.target_width,
            classify,
        )?;
        out.push((g, omega_c, width));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(dir: &Path) -> SweepConfig {
        SweepConfig {
            alpha: 1.0,
            g_values: vec![0.1],
            omega2_values: vec![5.0],
            l_values: vec![4],
            d: 3,
            d_max: 8,
            energy_tol: 1e-10,
            discard_tol: 1e-10,
            basis_refine_tol: 1e-8,
            jobs: 1,
            output_dir: dir.to_path_buf(),
            resume: false,
        }
    }

    #[test]
    fn single_point_sweep_produces_record_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let config = tiny_config(dir.path());
        let manifest = run_sweep(&config).unwrap();
        assert_eq!(manifest.entries.len(), 1);
        assert_eq!(manifest.entries[0].status, PointStatus::Done);
        let rec_path = record_path(dir.path(), 0.1, 5.0, 4);
        let rec: RunRecord =
            serde_json::from_str(&std::fs::read_to_string(&rec_path).unwrap()).unwrap();
        assert_eq!(rec.l, 4);
        assert!(rec.report.converged);
        assert!(rec.observables.xi_l >= 0.0);
        assert!(dir.path().join("summary.csv").exists());
        assert!(dir.path().join("manifest.journal").exists());
    }

    #[test]
    fn resume_skips_completed_points() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = tiny_config(dir.path());
        config.l_values = vec![3, 4];
        let first = run_sweep(&config).unwrap();
        assert!(first
            .entries
            .iter()
            .all(|e| e.status == PointStatus::Done));
        config.resume = true;
        let second = run_sweep(&config).unwrap();
        assert!(second
            .entries
            .iter()
            .all(|e| e.status == PointStatus::Skipped));
    }

    #[test]
    fn interrupted_sweep_resumes_to_same_manifest() {
        let dir_full = tempfile::tempdir().unwrap();
        let dir_broken = tempfile::tempdir().unwrap();
        let mut full = tiny_config(dir_full.path());
        full.l_values = vec![3, 4];
        run_sweep(&full).unwrap();

        // simulate a crash: run only half, then resume over the full grid
        let mut half = tiny_config(dir_broken.path());
        half.l_values = vec![3];
        run_sweep(&half).unwrap();
        let mut rest = tiny_config(dir_broken.path());
        rest.l_values = vec![3, 4];
        rest.resume = true;
        let resumed = run_sweep(&rest).unwrap();
        assert_eq!(resumed.entries.len(), 2);

        for l in [3usize, 4] {
            let a: RunRecord = serde_json::from_str(
                &std::fs::read_to_string(record_path(dir_full.path(), 0.1, 5.0, l)).unwrap(),
            )
            .unwrap();
            let b: RunRecord = serde_json::from_str(
                &std::fs::read_to_string(record_path(dir_broken.path(), 0.1, 5.0, l)).unwrap(),
            )
            .unwrap();
            assert!((a.energy - b.energy).abs() <= 1e-12 * a.energy.abs().max(1.0));
            assert!((a.observables.xi_l - b.observables.xi_l).abs() <= 1e-12);
        }
    }

    #[test]
    fn determinism_across_identical_runs() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let c1 = tiny_config(d1.path());
        let c2 = tiny_config(d2.path());
        run_sweep(&c1).unwrap();
        run_sweep(&c2).unwrap();
        let a: RunRecord = serde_json::from_str(
            &std::fs::read_to_string(record_path(d1.path(), 0.1, 5.0, 4)).unwrap(),
        )
        .unwrap();
        let b: RunRecord = serde_json::from_str(
            &std::fs::read_to_string(record_path(d2.path(), 0.1, 5.0, 4)).unwrap(),
        )
        .unwrap();
        assert_eq!(a.energy.to_bits(), b.energy.to_bits());
        assert_eq!(a.observables.xi_l.to_bits(), b.observables.xi_l.to_bits());
        assert_eq!(a.l, b.l);
        assert_eq!(a.code_revision, b.code_revision);
    }

    #[test]
    fn bisection_on_step_classifier() {
        let calls = std::cell::Cell::new(0usize);
        let (mid, half) = bisect_boundary(1.0, 3.0, 2e-3, |w| {
            calls.set(calls.get() + 1);
            Ok(if w < 2.0 { Phase::Zigzag } else { Phase::Linear })
        })
        .unwrap();
        assert!((mid - 2.0).abs() <= 2e-3, "midpoint {mid}");
        assert!(half <= 1e-3);
        assert!(calls.get() < 20);
        // invalid bracket: same phase at both ends
        assert!(bisect_boundary(3.0, 4.0, 1e-3, |_| Ok(Phase::Linear)).is_err());
    }

    #[test]
    fn config_parsing_and_validation() {
        let text = r#"
            alpha = 1.0
            g_values = [0.08]
            omega2_values = [1.3, 1.4]
            l_values = [16, 32]
            d = 4
            d_max = 12
            output_dir = "/tmp/sweep-out"
        "#;
        let cfg = SweepConfig::from_toml(text).unwrap();
        assert_eq!(cfg.jobs, 1);
        assert_eq!(cfg.energy_tol, 1e-10);
        assert!(!cfg.resume);
        let bad = r#"
            alpha = 1.0
            g_values = []
            omega2_values = [1.3]
            l_values = [16]
            d = 4
            d_max = 12
            output_dir = "/tmp/x"
        "#;
        assert!(SweepConfig::from_toml(bad).is_err());
    }
}

//! Sweep runner: one computation per degree, cached by the SHA-256 of its
//! inputs.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use knapp_core::flat_mode::{
    off_diagonal, select_frequency, spaceform_mode, DeltaFloor, FlatMode, FlatModeOptions, KnappTube,
    SeparationCertificate, OFF_DIAGONAL_BUDGET,
};
use knapp_core::geometry::{
    align_lattice, choose_axis_line, choose_base_point_sphere, equator_stabilizer, geodesic_period, AxisChoice,
    AxisOptions, BasePoint, EquatorStabilizer, FlatQuotient, GeometryError, SphereQuotient,
};
use knapp_core::norm::{
    flat_mode_lp_norms, flat_tube_lp_norm, flat_tube_min_abs, sphere_mode_lp_norms, sphere_tube_lp_norm,
    sphere_tube_min_abs, FlatTubeAxis, NormReport,
};
use knapp_core::sphere_mode::{sphere_eigenvalue, SphereMode};
use nalgebra::DMatrix;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{Certificate, Degrees, ExperimentConfig, TubeScale};
use crate::preset::SpaceForm;
use crate::table::{read_rows, write_rows, Row, TableError};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "KNAPP_WORKERS";

pub const EXPONENTS: [f64; 3] = [1.0, 2.0, 4.0];

/// Samples per axis for tube minima and off-diagonal certificates.
const TUBE_SAMPLES: usize = 21;

pub struct SphereContext {
    pub quotient: Arc<SphereQuotient>,
    pub stabilizer: EquatorStabilizer,
    pub base: BasePoint,
}

pub struct FlatContext {
    pub original: FlatQuotient,
    pub rotation: DMatrix<f64>,
    pub aligned: FlatQuotient,
    pub axis: AxisChoice,
    pub period: f64,
}

pub enum Context {
    Sphere(SphereContext),
    Flat(Box<FlatContext>),
}

/// Validates the manifold and runs the group searches.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Context, GeometryError> {
    match cfg.preset.build()? {
        SpaceForm::Sphere(q) => {
            let stabilizer = equator_stabilizer(&q)?;
            let base = choose_base_point_sphere(&q, &stabilizer)?;
            Ok(Context::Sphere(SphereContext { quotient: q, stabilizer, base }))
        }
        SpaceForm::Flat(f) => {
            let (rotation, aligned) = align_lattice(&f)?;
            let axis = choose_axis_line(&aligned, AxisOptions { c0: cfg.c0, ..AxisOptions::default() })?;
            let period = geodesic_period(&aligned, &axis)?.length;
            Ok(Context::Flat(Box::new(FlatContext { original: f, rotation, aligned, axis, period })))
        }
    }
}

impl Context {
    /// Degrees to sweep, deduplicated and sorted.
    pub fn degrees(&self, d: &Degrees) -> Vec<u64> {
        let log_spaced = |lo: f64, hi: f64, count: usize| -> Vec<f64> {
            if count == 1 {
                return vec![lo];
            }
            (0..count).map(|i| lo * (hi / lo).powf(i as f64 / (count - 1) as f64)).collect()
        };
        let mut ks: Vec<u64> = match (self, d) {
            (_, Degrees::K(v)) => v.clone(),
            (Context::Sphere(s), Degrees::Ell(v)) => v.iter().map(|l| l * s.stabilizer.order() as u64).collect(),
            (Context::Flat(_), Degrees::Ell(v)) => v.clone(),
            (Context::Sphere(s), Degrees::Lambda { lo, hi, count }) => {
                let m = s.stabilizer.order() as f64;
                log_spaced(*lo, *hi, *count).iter().map(|l| ((l / m).round().max(1.0) * m) as u64).collect()
            }
            (Context::Flat(f), Degrees::Lambda { lo, hi, count }) => {
                let s = f.aligned.last_scale();
                log_spaced(*lo, *hi, *count).iter().map(|l| (l * s).round().max(1.0) as u64).collect()
            }
        };
        ks.sort_unstable();
        ks.dedup();
        ks
    }

    pub fn describe(&self) -> String {
        match self {
            Context::Sphere(s) => format!(
                "sphere quotient: n = {}, |Γ| = {}, stabilizer order m = {}, base-point cap δ = {:.6}",
                s.quotient.dim(),
                s.quotient.order(),
                s.stabilizer.order(),
                s.base.radius
            ),
            Context::Flat(f) => format!(
                "flat quotient: n = {}, N = {}, covolume = {:.6}, cond(B) = {:.3e}, s = {:.6}, x0' = {:?}, clearance δ₁ = {:.6}, c1 = c2 = {:.4}, period L = {:.6}",
                f.aligned.dim(),
                f.aligned.index(),
                f.aligned.covolume(),
                f.original.condition(),
                f.aligned.last_scale(),
                f.axis.x0_prime.as_slice(),
                f.axis.clearance,
                f.axis.c1,
                f.period
            ),
        }
    }
}

/// Cache key of one degree: everything the rows depend on.
pub fn cache_key(cfg: &ExperimentConfig, k: u64) -> String {
    let text = format!(
        "knapp-lab {}|{}|k={}|delta={}|weak={:?}|R={:?}|scale={}|tol={:?}|rho={:?}|c0={:?}",
        env!("CARGO_PKG_VERSION"),
        cfg.preset,
        k,
        cfg.delta,
        cfg.weak_floor,
        cfg.tube_r,
        cfg.tube_scale,
        cfg.tol,
        cfg.rho,
        cfg.c0
    );
    format!("{:x}", Sha256::digest(text.as_bytes()))
}

fn error_rows(cfg: &ExperimentConfig, k: u64, lambda: f64, delta: f64, tag: &str, msg: String) -> Vec<Row> {
    cfg.tube_r
        .iter()
        .map(|&r| Row {
            manifold: cfg.preset.label(),
            n: cfg.preset.dim(),
            k,
            lambda,
            delta,
            norm_p1: None,
            norm_p2: None,
            norm_p4: None,
            tube_r: r,
            tube_l2: None,
            tube_min_abs: None,
            defect: None,
            window_margin: None,
            separation_margin: None,
            err_estimate: None,
            wall_ms: 0.0,
            off_diagonal: None,
            status: format!("error:{tag}: {msg}"),
        })
        .collect()
}

fn max_rel(reports: &[&NormReport]) -> f64 {
    reports.iter().map(|r| r.relative_error()).fold(0.0, f64::max)
}

fn sphere_rows(ctx: &SphereContext, cfg: &ExperimentConfig, k: u64) -> Vec<Row> {
    let start = Instant::now();
    let n = ctx.quotient.dim();
    let lambda = sphere_eigenvalue(n, k);
    let mode = match SphereMode::with_degree(ctx.quotient.clone(), &ctx.stabilizer, k) {
        Ok(m) => m,
        Err(e) => return error_rows(cfg, k, lambda, 0.0, "Mode", e.to_string()),
    };
    let norms = match sphere_mode_lp_norms(&mode, &EXPONENTS, cfg.tol) {
        Ok(r) => r,
        Err(e) => return error_rows(cfg, k, lambda, 0.0, "Quadrature", e.to_string()),
    };
    let mut rows = Vec::new();
    for &r_mult in &cfg.tube_r {
        let radius = r_mult / lambda.sqrt();
        let mut row = Row {
            manifold: cfg.preset.label(),
            n,
            k,
            lambda,
            delta: 0.0,
            norm_p1: Some(norms[0].value),
            norm_p2: Some(norms[1].value),
            norm_p4: Some(norms[2].value),
            tube_r: r_mult,
            tube_l2: None,
            tube_min_abs: Some(sphere_tube_min_abs(&mode, n, radius, 41)),
            // Exact eigenfunctions.
            defect: Some(0.0),
            window_margin: None,
            separation_margin: Some(ctx.base.radius - radius),
            err_estimate: None,
            wall_ms: 0.0,
            off_diagonal: None,
            status: "ok".into(),
        };
        match sphere_tube_lp_norm(&mode, radius, ctx.base.radius, 2.0, cfg.tol) {
            Ok(t) => {
                row.tube_l2 = Some(t.value);
                row.err_estimate = Some(max_rel(&[&norms[0], &norms[1], &norms[2], &t]));
            }
            Err(e) => {
                row.err_estimate = Some(max_rel(&[&norms[0], &norms[1], &norms[2]]));
                row.status = format!("error:Tube: {e}");
            }
        }
        row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        rows.push(row);
    }
    rows
}

/// Builds the flat mode of degree `k` under the config's δ rule.
pub fn build_flat_mode(ctx: &FlatContext, cfg: &ExperimentConfig, k: u64) -> Result<FlatMode, (f64, f64, String, String)> {
    let lambda = select_frequency(&ctx.aligned, k).map(|(l, _)| l).unwrap_or(f64::NAN);
    let delta = cfg.delta.delta(lambda);
    let opts = FlatModeOptions {
        rho: cfg.rho,
        delta_floor: match cfg.weak_floor {
            Some(eps) => DeltaFloor::Power(eps),
            None => DeltaFloor::Log,
        },
        ..FlatModeOptions::default()
    };
    spaceform_mode(&ctx.aligned, k, delta, &ctx.axis, &opts)
        .map_err(|e| (lambda, delta, "Mode".to_string(), e.to_string()))
}

pub fn tube_axis(ctx: &FlatContext) -> FlatTubeAxis {
    FlatTubeAxis { x0_prime: ctx.axis.x0_prime.as_slice().to_vec(), x0_n: ctx.axis.x0_n, period: ctx.period }
}

pub fn flat_tube_radius(ctx: &FlatContext, scale: TubeScale, r_mult: f64, lambda: f64, delta: f64) -> f64 {
    match scale {
        TubeScale::Lambda => r_mult / lambda.sqrt(),
        TubeScale::LambdaDelta => r_mult / (lambda * delta).sqrt(),
        TubeScale::Knapp => r_mult * ctx.axis.c1 / (lambda * delta).sqrt(),
    }
}

fn flat_rows(ctx: &FlatContext, cfg: &ExperimentConfig, k: u64) -> Vec<Row> {
    let start = Instant::now();
    let mode = match build_flat_mode(ctx, cfg, k) {
        Ok(m) => m,
        Err((l, d, tag, msg)) => return error_rows(cfg, k, l, d, &tag, msg),
    };
    let (lambda, delta) = (mode.lambda(), mode.delta());
    let norms = match flat_mode_lp_norms(&mode, &EXPONENTS, cfg.tol) {
        Ok(r) => r,
        Err(e) => return error_rows(cfg, k, lambda, delta, "Quadrature", e.to_string()),
    };
    let knapp = KnappTube::for_mode(&mode);
    let tube_min = flat_tube_min_abs(&mode, &knapp, TUBE_SAMPLES);
    let off = off_diagonal(&mode, &knapp, 11);
    let separation = SeparationCertificate::new(&mode);
    let axis = tube_axis(ctx);
    let mut rows = Vec::new();
    for &r_mult in &cfg.tube_r {
        let radius = flat_tube_radius(ctx, cfg.tube_scale, r_mult, lambda, delta);
        let mut row = Row {
            manifold: cfg.preset.label(),
            n: mode.dim(),
            k,
            lambda,
            delta,
            norm_p1: Some(norms[0].value),
            norm_p2: Some(norms[1].value),
            norm_p4: Some(norms[2].value),
            tube_r: r_mult,
            tube_l2: None,
            tube_min_abs: Some(tube_min),
            defect: Some(mode.defect().physical),
            window_margin: Some(mode.window().margin),
            separation_margin: Some(separation.margin),
            err_estimate: None,
            wall_ms: 0.0,
            off_diagonal: Some(off.envelope_bound),
            status: "ok".into(),
        };
        match flat_tube_lp_norm(&mode, &mode, &axis, radius, 2.0, cfg.tol) {
            Ok(t) => {
                row.tube_l2 = Some(t.value);
                row.err_estimate = Some(max_rel(&[&norms[0], &norms[1], &norms[2], &t]));
            }
            Err(e) => {
                row.err_estimate = Some(max_rel(&[&norms[0], &norms[1], &norms[2]]));
                row.status = format!("error:Tube: {e}");
            }
        }
        row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        rows.push(row);
    }
    rows
}

/// Rows of one degree, computed afresh.
pub fn compute_rows(ctx: &Context, cfg: &ExperimentConfig, k: u64) -> Vec<Row> {
    match ctx {
        Context::Sphere(s) => sphere_rows(s, cfg, k),
        Context::Flat(f) => flat_rows(f, cfg, k),
    }
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<Row>,
    pub computed: usize,
    pub cached: usize,
}

/// Worker count from [`WORKERS_ENV`]; `None` means the rayon default.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV).ok().and_then(|v| v.trim().parse().ok()).filter(|&n: &usize| n > 0)
}

fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("{key}.csv"))
}

/// Runs every degree of the config. With `cache_dir`, finished degrees are
/// stored as one-file CSVs and reused on later runs.
pub fn run_sweep(ctx: &Context, cfg: &ExperimentConfig, cache_dir: Option<&Path>) -> Result<SweepOutcome, TableError> {
    if let Some(dir) = cache_dir {
        fs::create_dir_all(dir)?;
    }
    let ks = ctx.degrees(&cfg.degrees);
    let computed = AtomicUsize::new(0);
    let cached = AtomicUsize::new(0);
    let run = || {
        ks.par_iter()
            .map(|&k| -> Result<Vec<Row>, TableError> {
                let key = cache_key(cfg, k);
                if let Some(dir) = cache_dir {
                    let path = cache_path(dir, &key);
                    if let Ok(bytes) = fs::read(&path) {
                        if let Ok(rows) = read_rows(bytes.as_slice()) {
                            cached.fetch_add(1, Ordering::Relaxed);
                            return Ok(rows);
                        }
                    }
                }
                let rows = compute_rows(ctx, cfg, k);
                computed.fetch_add(1, Ordering::Relaxed);
                if let Some(dir) = cache_dir {
                    let mut buf = Vec::new();
                    write_rows(&mut buf, &rows)?;
                    let tmp = dir.join(format!("{key}.tmp{}", std::process::id()));
                    fs::write(&tmp, &buf)?;
                    fs::rename(&tmp, cache_path(dir, &key))?;
                }
                Ok(rows)
            })
            .collect::<Result<Vec<_>, _>>()
    };
    let per_k = match workers_from_env() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| std::io::Error::other(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    Ok(SweepOutcome {
        rows: per_k.into_iter().flatten().collect(),
        computed: computed.into_inner(),
        cached: cached.into_inner(),
    })
}

/// `4π²λδ(1 + δ/(2λ))`.
pub fn physical_defect_bound(lambda: f64, delta: f64) -> f64 {
    4.0 * PI * PI * lambda * delta * (1.0 + delta / (2.0 * lambda))
}

/// Names of the requested certificates that fail on this row; `error` for
/// rows that did not complete.
pub fn failed_certificates(row: &Row, require: &[Certificate]) -> Vec<&'static str> {
    let mut out = Vec::new();
    if !row.is_ok() {
        out.push("error");
        return out;
    }
    for c in require {
        let pass = match c {
            Certificate::Window => row.window_margin.is_none_or(|m| m > 0.0),
            Certificate::Defect => match (row.defect, row.is_flat()) {
                (Some(d), true) => d <= physical_defect_bound(row.lambda, row.delta),
                (Some(d), false) => d == 0.0,
                (None, _) => false,
            },
            Certificate::Separation => row.separation_margin.is_some_and(|m| m >= 0.0),
            Certificate::OffDiagonal => row.off_diagonal.is_none_or(|v| v < OFF_DIAGONAL_BUDGET),
        };
        if !pass {
            out.push(c.name());
        }
    }
    out
}

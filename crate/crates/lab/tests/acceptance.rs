//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
//! criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use knapp_core::flat_mode::{FlatMode, Method};
use knapp_core::norm::{
    flat_lp_norms, flat_mode_lp_norms, flat_required_counts, l2_exact_parseval, sphere_lp_norms,
    sphere_tube_min_abs, Pointwise, SphereDomain,
};
use knapp_core::sphere_mode::{distance_to_equator, raw_deck_sum, SphereMode};
use knapp_lab::config::{Certificate, ExperimentConfig};
use knapp_lab::fit::{fit_exponent, ScalingFit};
use knapp_lab::preset::{Preset, SpaceForm};
use knapp_lab::report::{series, Abscissa, Quantity};
use knapp_lab::sweep::{build_flat_mode, failed_certificates, prepare, run_sweep, Context, FlatContext};
use knapp_lab::table::Row;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPHERE_ORACLE_REL: f64 = 1e-6;
const SPHERE_ORACLE_SECONDS: f64 = 10.0;
const RP2_RATIO_TARGET: f64 = 0.25;
const RP2_RATIO_TOL: f64 = 0.05;
const LENS_RATIO_TARGET: f64 = 0.5;
const LENS_RATIO_TOL: f64 = 0.07;
const PARITY_ABS: f64 = 1e-12;
const RANDOM_POINTS: usize = 1000;
const KNAPP_MIN_FACTOR: f64 = 0.6;
const DECAY_ABS: f64 = 1e-8;
const DECAY_DISTANCE: f64 = 0.5;
const RP2_TUBE_RATIO: f64 = 0.3;
const POISSON_ABS: f64 = 1e-8;
const POISSON_MIN_LAMBDA_DELTA: f64 = 10.0;
const PARSEVAL_REL: f64 = 1e-6;
const SIZE_LAW_TOL: f64 = 0.05;
const FLAT_RATIO_TARGET: f64 = 0.25;
const FLAT_RATIO_TOL: f64 = 0.05;
const C0_MAX: f64 = 20.0;
const FLAT_TUBE_MIN: f64 = 0.5;
const KLEIN_TUBE_RATIO: f64 = 0.2;
const FRAME_REL: f64 = 1e-8;
const LOO_MAX: f64 = 0.02;

type Check = Result<String, String>;

struct Sweep {
    cfg: ExperimentConfig,
    ctx: Context,
    rows: Vec<Row>,
}

fn sweep(text: &str) -> Sweep {
    let cfg = ExperimentConfig::parse(text).expect("acceptance config");
    let ctx = prepare(&cfg).expect("acceptance manifold");
    let rows = run_sweep(&ctx, &cfg, None).expect("sweep").rows;
    Sweep { cfg, ctx, rows }
}

impl Sweep {
    fn flat(&self) -> &FlatContext {
        match &self.ctx {
            Context::Flat(f) => f,
            Context::Sphere(_) => panic!("flat sweep expected"),
        }
    }

    fn mode(&self, k: u64) -> Result<FlatMode, String> {
        build_flat_mode(self.flat(), &self.cfg, k).map_err(|(_, _, tag, msg)| format!("k = {k}: {tag}: {msg}"))
    }

    fn ks(&self) -> Vec<u64> {
        let mut ks: Vec<u64> = self.rows.iter().map(|r| r.k).collect();
        ks.dedup();
        ks
    }

    fn errors(&self) -> Result<(), String> {
        match self.rows.iter().find(|r| !r.is_ok()) {
            Some(r) => Err(format!("{} k = {}: {}", r.manifold, r.k, r.status)),
            None => Ok(()),
        }
    }
}

fn fit(rows: &[Row], x: Abscissa, y: Quantity) -> Result<ScalingFit, String> {
    fit_exponent(&series(rows, x, y)).map_err(|e| e.to_string())
}

fn within(f: &ScalingFit, target: f64, tol: f64) -> bool {
    (f.exponent - target).abs() <= tol
}

/// `2π^{3/2} √k Γ(k+1)/Γ(k+3/2)`, with the Gamma ratio as a product from
/// `Γ(1)/Γ(3/2) = 2/√π`.
fn sphere_l2_squared_oracle(k: u64) -> f64 {
    let mut ratio = 2.0 / PI.sqrt();
    for j in 1..=k {
        ratio *= j as f64 / (j as f64 + 0.5);
    }
    2.0 * PI.powf(1.5) * (k as f64).sqrt() * ratio
}

fn random_sphere_point(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let t: f64 = rng.gen_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).sqrt();
    [r * t.cos(), r * t.sin(), z]
}

fn c1_sphere_oracle() -> Check {
    let mut worst = 0.0f64;
    let mut slowest = 0.0f64;
    for k in [4u64, 20, 100, 200] {
        let start = Instant::now();
        let mode = SphereMode::plain(2, k).map_err(|e| e.to_string())?;
        let dom = SphereDomain { n: 2, group_order: 1, lambda: mode.lambda() };
        let r = sphere_lp_norms(&mode, &dom, &[2.0], 1e-9, None).map_err(|e| format!("k = {k}: {e}"))?;
        let secs = start.elapsed().as_secs_f64();
        let rel = (r[0].value.powi(2) / sphere_l2_squared_oracle(k) - 1.0).abs();
        worst = worst.max(rel);
        slowest = slowest.max(secs);
        if rel > SPHERE_ORACLE_REL || secs > SPHERE_ORACLE_SECONDS {
            return Err(format!("k = {k}: relative error {rel:.2e}, {secs:.2} s"));
        }
    }
    Ok(format!("max relative error {worst:.2e}, slowest {slowest:.3} s"))
}

fn c2_sphere_ratio(rp2: &Sweep, lens: &Sweep) -> Check {
    rp2.errors()?;
    lens.errors()?;
    let a = fit(&rp2.rows, Abscissa::Lambda, Quantity::Ratio)?;
    let b = fit(&lens.rows, Abscissa::Lambda, Quantity::Ratio)?;
    let msg = format!(
        "RP² exponent {:.4} ({} pts), L(3;1) exponent {:.4} ({} pts)",
        a.exponent, a.samples, b.exponent, b.samples
    );
    if within(&a, RP2_RATIO_TARGET, RP2_RATIO_TOL) && within(&b, LENS_RATIO_TARGET, LENS_RATIO_TOL) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c3_parity() -> Check {
    let SpaceForm::Sphere(q) = Preset::parse("rp_n(2)").unwrap().build().map_err(|e| e.to_string())? else {
        return Err("rp_n(2) is not a sphere quotient".into());
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for k in (1..=201u64).step_by(2) {
        for _ in 0..RANDOM_POINTS {
            let x = random_sphere_point(&mut rng);
            worst = worst.max(raw_deck_sum(&q, k, &x).norm());
        }
    }
    let msg = format!("max |deck sum| {worst:.2e} over odd k ≤ 201");
    if worst < PARITY_ABS {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c4_knapp_pointwise() -> Check {
    let floor = KNAPP_MIN_FACTOR * (-0.5f64).exp();
    let mut lowest = f64::INFINITY;
    for k in 50..=200u64 {
        let mode = SphereMode::plain(2, k).map_err(|e| e.to_string())?;
        let kf = k as f64;
        let m = sphere_tube_min_abs(&mode, 2, kf.powf(-0.5), 41) * kf.powf(-0.25);
        lowest = lowest.min(m);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut largest = 0.0f64;
    for k in [200u64, 300, 500, 1000] {
        let mode = SphereMode::plain(2, k).map_err(|e| e.to_string())?;
        let mut seen = 0;
        while seen < RANDOM_POINTS {
            let x = random_sphere_point(&mut rng);
            if distance_to_equator(&x) >= DECAY_DISTANCE {
                largest = largest.max(mode.eval(&x).norm());
                seen += 1;
            }
        }
    }
    let msg = format!("min |Q_k|k^(-1/4) on tubes {lowest:.4} (floor {floor:.4}), max |Q_k| off the tube {largest:.2e}");
    if lowest >= floor && largest < DECAY_ABS {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c5_rp2_tube(rp2: &Sweep) -> Check {
    rp2.errors()?;
    let lowest = rp2
        .rows
        .iter()
        .filter(|r| r.tube_r == 1.0)
        .map(|r| r.tube_l2.unwrap_or(0.0) / r.norm_p2.unwrap_or(f64::INFINITY))
        .fold(f64::INFINITY, f64::min);
    let msg = format!("min tube ratio {lowest:.4} over {} degrees", rp2.rows.len());
    if lowest >= RP2_TUBE_RATIO {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c6_flat_certificates(flat: &[&Sweep]) -> Check {
    let mut count = 0;
    let mut min_margin = f64::INFINITY;
    for s in flat {
        s.errors()?;
        for r in &s.rows {
            let failed = failed_certificates(r, &[Certificate::Window, Certificate::Defect]);
            if !failed.is_empty() {
                return Err(format!("{} k = {}: {}", r.manifold, r.k, failed.join(", ")));
            }
            min_margin = min_margin.min(r.window_margin.unwrap_or(f64::NEG_INFINITY));
            count += 1;
        }
    }
    Ok(format!("{count} modes, min window margin {min_margin:.4}"))
}

fn c7_poisson(flat: &[&Sweep]) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut modes = 0;
    for s in flat {
        for k in s.ks() {
            let mode = s.mode(k)?;
            if mode.lambda_delta() < POISSON_MIN_LAMBDA_DELTA {
                continue;
            }
            modes += 1;
            for _ in 0..RANDOM_POINTS {
                let y: Vec<f64> = (0..mode.dim()).map(|_| rng.gen_range(0.0..1.0)).collect();
                let d = (mode.eval_y(&y, Method::Frequency) - mode.eval_y(&y, Method::Poisson)).norm();
                worst = worst.max(d);
            }
        }
    }
    let msg = format!("{modes} modes, max |frequency − Poisson| {worst:.2e}");
    if modes > 0 && worst < POISSON_ABS {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c8_parseval(torus: &Sweep, klein: &Sweep) -> Check {
    let mut worst = 0.0f64;
    let mut modes = 0;
    for s in [torus, klein] {
        let ks = s.ks();
        for (i, &k) in ks.iter().enumerate() {
            let mode = s.mode(k)?;
            let exact = l2_exact_parseval(&mode);
            let fast = flat_mode_lp_norms(&mode, &[2.0], 1e-9).map_err(|e| e.to_string())?;
            worst = worst.max((fast[0].value / exact - 1.0).abs());
            // The generic lattice-coordinate grid with pointwise evaluation,
            // on the smallest degree of each sweep.
            if i == 0 {
                let counts = flat_required_counts(&mode);
                let slow = flat_lp_norms(
                    &Pointwise(&mode, Method::Frequency),
                    mode.basis(),
                    mode.index(),
                    &counts,
                    &[2.0],
                    1e-9,
                )
                .map_err(|e| e.to_string())?;
                worst = worst.max((slow[0].value / exact - 1.0).abs());
            }
            modes += 1;
        }
    }
    let msg = format!("{modes} modes, max relative deviation {worst:.2e}");
    if worst < PARSEVAL_REL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c9_size_law(torus_low: &Sweep) -> Check {
    torus_low.errors()?;
    let mut parts = Vec::new();
    let mut ok = true;
    for p in [1u8, 2, 4] {
        let target = 0.5 * (1.0 - 1.0 / p as f64);
        let f = fit(&torus_low.rows, Abscissa::LambdaDelta, Quantity::Unnormalized(p))?;
        ok &= within(&f, target, SIZE_LAW_TOL);
        parts.push(format!("p={p}: {:.4} (target {target})", f.exponent));
    }
    let msg = parts.join(", ");
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c10_flat_ratio(torus: &Sweep, klein: &Sweep) -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    let mut c0 = 0.0f64;
    let mut lowest_min = f64::INFINITY;
    let mut checked = 0;
    for s in [torus, klein] {
        s.errors()?;
        let f = fit(&s.rows, Abscissa::LambdaDelta, Quantity::Ratio)?;
        ok &= within(&f, FLAT_RATIO_TARGET, FLAT_RATIO_TOL);
        parts.push(format!("{} exponent {:.4}", s.rows[0].manifold, f.exponent));
        for r in &s.rows {
            let ld = r.lambda * r.delta;
            let (p1, p2) = (r.norm_p1.unwrap_or(f64::INFINITY), r.norm_p2.unwrap_or(f64::INFINITY));
            c0 = c0.max(p2).max(ld.powf(0.25) * p1);
            if r.separation_margin.is_some_and(|m| m >= 0.0) {
                let m = r.tube_min_abs.unwrap_or(0.0) * ld.powf(-0.25);
                lowest_min = lowest_min.min(m);
                c0 = c0.max(1.0 / m);
                checked += 1;
            }
        }
    }
    ok &= c0 <= C0_MAX && checked > 0 && lowest_min >= FLAT_TUBE_MIN;
    let msg = format!(
        "{}; C0 = {c0:.3}; min |ψ|(λδ)^(-1/4) {lowest_min:.4} on {checked} separated rows",
        parts.join(", ")
    );
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c11_klein_tube(klein: &Sweep) -> Check {
    klein.errors()?;
    let lowest = klein
        .rows
        .iter()
        .map(|r| r.tube_l2.unwrap_or(0.0) / r.norm_p2.unwrap_or(f64::INFINITY))
        .fold(f64::INFINITY, f64::min);
    let msg = format!("min tube ratio {lowest:.4} over {} degrees", klein.rows.len());
    if lowest >= KLEIN_TUBE_RATIO {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn c12_frame(sheared: &Sweep) -> Check {
    let ctx = sheared.flat();
    let ps = [1.0, 2.0, 4.0];
    let mut worst = 0.0f64;
    for k in sheared.ks() {
        let aligned = sheared.mode(k)?;
        let original = aligned.in_frame(&ctx.original).map_err(|e| e.to_string())?;
        let counts = flat_required_counts(&aligned);
        let a = flat_mode_lp_norms(&aligned, &ps, 1e-6).map_err(|e| e.to_string())?;
        let b = flat_lp_norms(
            &Pointwise(&original, Method::Frequency),
            ctx.original.basis(),
            ctx.original.index(),
            &counts,
            &ps,
            1e-6,
        )
        .map_err(|e| e.to_string())?;
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x.value / y.value - 1.0).abs());
        }
        let pa = l2_exact_parseval(&aligned);
        let pb = l2_exact_parseval(&original);
        worst = worst.max((pa / pb - 1.0).abs());
    }
    let msg = format!("max relative difference {worst:.2e} (cond(B) = {:.3})", ctx.original.condition());
    if worst < FRAME_REL {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn fit_stability(sweeps: &[(&Sweep, Abscissa, Quantity)]) -> Check {
    let mut worst = 0.0f64;
    for (s, x, y) in sweeps {
        worst = worst.max(fit(&s.rows, *x, *y)?.loo_shift);
    }
    let msg = format!("max leave-one-out exponent shift {worst:.4}");
    if worst < LOO_MAX {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let start = Instant::now();
    let rp2 = sweep("[manifold]\npreset = rp_n(2)\n[sweep]\nell = 10..100\n");
    let lens = sweep("[manifold]\npreset = lens(3,1)\n[sweep]\nell = 7..66\n");
    let torus_low = sweep("[manifold]\npreset = torus\n[sweep]\nlambda = 50..500\ncount = 10\n[delta]\nrule = log\n");
    let torus = sweep("[manifold]\npreset = torus\n[sweep]\nlambda = 500..5000\ncount = 8\n");
    let klein = sweep("[manifold]\npreset = klein_bottle\n[sweep]\nlambda = 500..5000\ncount = 8\n");
    let sheared = sweep("[manifold]\npreset = torus(1,0.3;0.2,1.1)\n[sweep]\nk = 60, 200\n");
    eprintln!("sweeps finished in {:.1} s", start.elapsed().as_secs_f64());

    let flat = [&torus_low, &torus, &klein, &sheared];
    let checks: Vec<(&str, &str, Check)> = vec![
        ("1", "sphere L² oracle", c1_sphere_oracle()),
        ("2", "K>0 ratio law", c2_sphere_ratio(&rp2, &lens)),
        ("3", "RP² parity degeneracy", c3_parity()),
        ("4", "Knapp pointwise bounds on S²", c4_knapp_pointwise()),
        ("5", "RP² tube concentration", c5_rp2_tube(&rp2)),
        ("6", "flat spectral certificates", c6_flat_certificates(&flat)),
        ("7", "Poisson duality", c7_poisson(&flat)),
        ("8", "Parseval oracle", c8_parseval(&torus_low, &klein)),
        ("9", "torus size law", c9_size_law(&torus_low)),
        ("10", "K=0 ratio law and C0 bounds", c10_flat_ratio(&torus, &klein)),
        ("11", "Klein tube concentration", c11_klein_tube(&klein)),
        ("12", "sheared vs aligned torus", c12_frame(&sheared)),
        ("13", "no K<0 gate", Ok("no negative-curvature criterion is checked".into())),
        (
            "fit",
            "fit stability",
            fit_stability(&[
                (&rp2, Abscissa::Lambda, Quantity::Ratio),
                (&lens, Abscissa::Lambda, Quantity::Ratio),
                (&torus_low, Abscissa::LambdaDelta, Quantity::Unnormalized(1)),
                (&torus_low, Abscissa::LambdaDelta, Quantity::Unnormalized(2)),
                (&torus_low, Abscissa::LambdaDelta, Quantity::Unnormalized(4)),
                (&torus, Abscissa::LambdaDelta, Quantity::Ratio),
                (&klein, Abscissa::LambdaDelta, Quantity::Ratio),
            ]),
        ),
    ];
    let mut failed = 0;
    for (id, name, result) in &checks {
        match result {
            Ok(detail) => println!("PASS {id:>3} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id:>3} {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed in {:.1} s", checks.len() - failed, checks.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}

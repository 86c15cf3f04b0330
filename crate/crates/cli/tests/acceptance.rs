//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use laminate_cli::{distribution_check, realize, RunConfig};
use laminate_core::afs::{exponent, gamma_ratio_form, staircase_stage};
use laminate_core::{AfsParams, AfsStaircase, Mat2, Vec2};
use laminate_geometry::ConvexPolygon;
use laminate_realize::{restart_iteration, wiggle, Field, RealizeConfig, WiggleSpec};
use laminate_verify::structure::STRUCTURE_TOL;
use laminate_verify::tail::profile;
use laminate_verify::{
    achieved_range, check_preserved, check_structure, field_tail, tail_grid, verify_staircase,
    weak_residual, LaminateReport,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LAMBDAS: [f64; 3] = [1.5, 2.0, 4.0];

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn staircase_report(lambda: f64, depth: usize) -> (LaminateReport, Duration) {
    let p = AfsParams::defaults(lambda).unwrap();
    let t = Instant::now();
    let st = AfsStaircase::build(p.default_x0(), &p, depth).unwrap();
    let doc = st.trunc.to_document().unwrap();
    let elapsed = t.elapsed();
    (verify_staircase(&doc, &p).unwrap(), elapsed)
}

fn measure_exponent() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for lambda in LAMBDAS {
        let (r, elapsed) = staircase_report(lambda, 2000);
        let slope = r.slope.unwrap_or(f64::NAN);
        let good = (slope + r.p).abs() <= 0.1 * r.p
            && r.barycenter_drift <= 2e-7
            && r.outside_k.is_empty()
            && elapsed <= Duration::from_secs(5);
        ok &= good;
        detail.push(format!(
            "Λ={lambda}: slope {slope:.4} vs -{:.4}, drift {:.1e}, {} outside K, {:.2?}",
            r.p,
            r.barycenter_drift,
            r.outside_k.len(),
            elapsed
        ));
    }
    verdict(ok, detail.join("; "))
}

fn tail_sandwich() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for lambda in LAMBDAS {
        let (a, _) = staircase_report(lambda, 1000);
        let (b, _) = staircase_report(lambda, 2000);
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
        let (dm, dl) = (
            rel(a.upper.upper_fit, b.upper.upper_fit),
            rel(a.lower.lower_fit, b.lower.lower_fit),
        );
        let good = a.upper_ok
            && a.lower_ok
            && b.upper_ok
            && b.lower_ok
            && b.lower.lower_fit > 0.0
            && dm <= 0.05
            && dl <= 0.05;
        ok &= good;
        detail.push(format!(
            "Λ={lambda}: M {:.4} ({:.1e} drift), m {:.4} ({:.1e} drift)",
            b.upper.upper_fit, dm, b.lower.lower_fit, dl
        ));
    }
    verdict(ok, detail.join("; "))
}

fn gamma_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for lambda in LAMBDAS {
        let p = AfsParams::defaults(lambda).unwrap();
        let x = p.a_bar + 1.0;
        for n in 1..=10_000 {
            let st = staircase_stage(x, 1.0, 1.0, n, &p).unwrap();
            worst = worst.max((st.gamma - gamma_ratio_form(x, n, lambda)).abs());
        }
    }
    verdict(
        worst <= 1e-12,
        format!("max |closed − ratio| = {worst:.2e} over n ≤ 10⁴"),
    )
}

/// A random rank-one pair `X₁ − X₂ = ξ ⊗ ζ` with `|ζ| = 1`.
fn random_pair(rng: &mut ChaCha8Rng) -> (Mat2, Mat2) {
    let mut entry = || rng.gen_range(-5.0..5.0);
    let x1 = Mat2::new(entry(), entry(), entry(), entry());
    let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let zeta = Vec2::new(angle.cos(), angle.sin());
    let len = rng.gen_range(0.5..5.0);
    let dir: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let xi = Vec2::new(len * dir.cos(), len * dir.sin());
    (x1, x1 - Mat2::outer(xi, zeta))
}

fn wiggle_construction() -> Outcome {
    let eps = 0.05;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let domain = ConvexPolygon::unit_square();
    let mut failures = Vec::new();
    let mut slowest = Duration::ZERO;
    for i in 0..100 {
        let (x1, x2) = random_pair(&mut rng);
        let lambda = rng.gen_range(0.05..=0.95);
        let b = Vec2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let t = Instant::now();
        let spec = WiggleSpec::new(x1, x2, lambda, eps).unwrap();
        let f = match wiggle(&spec, b, &domain, None) {
            Ok(f) => f,
            Err(e) => {
                failures.push(format!("#{i}: {e}"));
                continue;
            }
        };
        let elapsed = t.elapsed();
        slowest = slowest.max(elapsed);
        let census = f.census();
        let frac = |m: &Mat2| {
            census
                .iter()
                .filter(|e| !e.tag.is_error() && e.grad == *m)
                .map(|e| e.area)
                .sum::<f64>()
                / domain.area()
        };
        let within = |got: f64, w: f64| got >= (1.0 - eps) * w && got <= (1.0 + eps) * w;
        let dust: Vec<_> = census.iter().filter(|e| e.tag.is_error()).collect();
        let dust_area: f64 = dust.iter().map(|e| e.area).sum();
        let dust_far = dust
            .iter()
            .map(|e| e.grad.distance(&spec.x))
            .fold(0.0, f64::max);
        let s = check_structure(&f, STRUCTURE_TOL).unwrap();
        if !(within(frac(&x1), lambda) && within(frac(&x2), 1.0 - lambda)) {
            failures.push(format!(
                "#{i}: fractions {} {} vs λ {lambda}",
                frac(&x1),
                frac(&x2)
            ));
        }
        if dust_area > eps * domain.area() || dust_far > eps {
            failures.push(format!(
                "#{i}: dust area {dust_area:e}, distance {dust_far:e}"
            ));
        }
        if !s.pass {
            failures.push(format!("#{i}: {:?}", s.failures.first()));
        }
        if elapsed > Duration::from_secs(1) {
            failures.push(format!("#{i}: {elapsed:?}"));
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "100 instances, slowest {slowest:.2?}; {}",
            failures.join("; ")
        ),
    )
}

fn config(depth: usize, rounds: u32) -> RunConfig {
    let params = AfsParams::defaults(2.0).unwrap();
    RunConfig {
        x0: params.default_x0(),
        params,
        depth,
        realize: RealizeConfig {
            depth,
            rounds,
            ..Default::default()
        },
        seed: 1,
        tests: 10,
    }
}

fn staircase_realization(cfg: &RunConfig, f: &Field, elapsed: Duration) -> Outcome {
    let d = distribution_check(f, cfg).unwrap();
    let worst = d
        .rows
        .iter()
        .map(|r| r.ratio.ln().abs())
        .fold(0.0, f64::max);
    let e = f.error_integral(2.0);
    let area = f.domain.area();
    let stats = f.stats();
    verdict(
        d.pass && e <= 0.1 * area && elapsed <= Duration::from_secs(60),
        format!(
            "{} atoms, worst |log ratio| {worst:.4} ≤ 0.1; error integral {e:.4e} ≤ {:.1}; {} local cells, 10^{:.1} expanded; {elapsed:.2?}",
            d.rows.len(),
            0.1 * area,
            stats.local_cells,
            stats.log10_cells
        ),
    )
}

fn restart_rounds(cfg: &RunConfig, f0: &Field) -> Outcome {
    let mut fields = vec![f0.clone()];
    for _ in 0..2 {
        let next = restart_iteration(fields.last().unwrap(), &cfg.params, &cfg.realize).unwrap();
        fields.push(next);
    }
    let last = fields.last().unwrap();
    let e = last.error_integral(2.0);
    let budget = 0.25 * last.domain.area();
    let kept: Vec<_> = fields
        .windows(2)
        .map(|w| check_preserved(&w[0], &w[1]))
        .collect();
    let preserved = kept.iter().all(|p| p.mismatch.is_none());
    let grid = tail_grid(last, laminate_cli::FIELD_TAIL_POINTS);
    let profiles: Vec<_> = fields.iter().map(profile).collect();
    let mut drops = 0;
    let mut worst_drop: f64 = 0.0;
    for w in profiles.windows(2) {
        for &t in &grid {
            let (before, after) = (w[0].tail(t), w[1].tail(t));
            if after < before * (1.0 - 1e-12) {
                drops += 1;
                worst_drop = worst_drop.max((before - after) / before);
            }
        }
    }
    verdict(
        e <= budget && preserved && drops == 0,
        format!(
            "error integrals {:?} (≤ {budget}); non-error cells preserved: {preserved} ({} compared); \
             superlevel decreases at {drops} of {} grid points (worst relative drop {worst_drop:.2e})",
            fields.iter().map(|f| format!("{:.4e}", f.error_integral(2.0))).collect::<Vec<_>>(),
            kept.iter().map(|p| p.compared).sum::<usize>(),
            2 * grid.len(),
        ),
    )
}

fn pde_residual(f: &Field) -> Outcome {
    let r = weak_residual(f, 2.0, 10, 1).unwrap();
    let within = r.rows.iter().all(|row| row.residual <= row.bound + 1e-8);
    let curl_ok = r.max_abs_curl <= 1e-8;
    verdict(
        within && curl_ok,
        format!(
            "max residual {:.3e} (largest bound {:.3e}), max curl residual {:.3e}",
            r.max_abs_residual, r.bound, r.max_abs_curl
        ),
    )
}

fn field_tail_exponent() -> Outcome {
    let cfg = config(6, 0);
    let f = match realize(&cfg) {
        Ok(f) => f,
        Err(e) => return Err(format!("depth 6 realization failed: {e:#}")),
    };
    let p = exponent(2.0);
    let r = field_tail(&f, &tail_grid(&f, laminate_cli::FIELD_TAIL_POINTS), p);
    let (lo, hi) = achieved_range(&f);
    let slope_ok = (-4.6..=-3.4).contains(&r.fitted_slope);
    verdict(
        slope_ok && r.ratio() <= 50.0,
        format!(
            "achieved range [{lo:.4}, {hi:.4}], slope {:.4} in [-4.6, -3.4]: {slope_ok}; c {:.4e}, C {:.4e}, C/c {:.3}",
            r.fitted_slope,
            r.c_lower,
            r.c_upper,
            r.ratio()
        ),
    )
}

fn run_bin(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_stairlab"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn determinism() -> Outcome {
    let runs: Vec<(Vec<u8>, Vec<u8>)> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            run_bin(
                dir.path(),
                &["laminate", "build", "--lambda", "2", "--depth", "2000"],
            );
            run_bin(
                dir.path(),
                &[
                    "field", "realize", "--lambda", "2", "--depth", "4", "--rounds", "2", "--seed",
                    "1",
                ],
            );
            (
                std::fs::read(dir.path().join("staircase.json")).unwrap(),
                std::fs::read(dir.path().join("field.json")).unwrap(),
            )
        })
        .collect();
    let same_staircase = runs[0].0 == runs[1].0;
    let same_field = runs[0].1 == runs[1].1;
    verdict(
        same_staircase && same_field,
        format!(
            "staircase.json identical: {same_staircase} ({} bytes); field.json identical: {same_field} ({} bytes)",
            runs[0].0.len(),
            runs[0].1.len()
        ),
    )
}

#[test]
fn acceptance() {
    let depth4 = config(4, 0);
    let t = Instant::now();
    let f4 = realize(&depth4).unwrap();
    let elapsed = t.elapsed();

    let results: Vec<(&str, Outcome)> = vec![
        ("measure-level exponent", measure_exponent()),
        ("tail sandwich and truncation stability", tail_sandwich()),
        ("gamma identity", gamma_identity()),
        ("wiggle construction", wiggle_construction()),
        (
            "staircase realization",
            staircase_realization(&depth4, &f4, elapsed),
        ),
        ("restart iteration", restart_rounds(&depth4, &f4)),
        ("weak residual", pde_residual(&f4)),
        ("field tail", field_tail_exponent()),
        ("determinism", determinism()),
    ];
    let mut failed = Vec::new();
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(d) => println!("criterion {} PASS {name}: {d}", i + 1),
            Err(d) => {
                println!("criterion {} FAIL {name}: {d}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

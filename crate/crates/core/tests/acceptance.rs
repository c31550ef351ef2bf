//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;

use oscbound::coarea::{level_profile, oscillatory_from_profile};
use oscbound::domain::BoxDomain;
use oscbound::linalg::Matrix;
use oscbound::measure::{surface_measure, FieldSamples, SurfaceSystem};
use oscbound::oracle::{decay_fit, geometric_grid, oscillatory_integral, OracleConfig};
use oscbound::poly::Polynomial;
use oscbound::report::{run_measure, run_verify, DomainSpec, ProblemDocument};
use oscbound::rng::CounterRng;
use oscbound::spectral::{gram_root, singular_values, smallest_r_product};

const CORPUS: [&str; 5] = ["x0 + x1", "x0*x1", "x0^2 + x1^2", "x0^2 - x1^2", "x0^3 + x1^2"];

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn poly(src: &str, n: usize) -> Polynomial {
    Polynomial::parse(src, n).unwrap()
}

fn closed_form_oracle() -> Outcome {
    let start = Instant::now();
    let domain = BoxDomain::unit(1);
    let mut worst = 0.0f64;
    for (num, den) in [(1, 2), (1, 1), (3, 2), (7, 2)] {
        let t = BigRational::new(BigInt::from(num), BigInt::from(den));
        let tf = num as f64 / den as f64;
        let phase = Polynomial::from_terms(1, [(vec![1], t)]).unwrap();
        let r = oscillatory_integral(&phase, &domain, 1e-12).unwrap();
        let exact = if num % den == 0 { 0.0 } else { (PI * tf).sin().abs() / (PI * tf) };
        worst = worst.max((r.modulus - exact).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(worst <= 1e-8 && secs < 1.0, format!("max error {worst:.2e} (<= 1e-8), {secs:.3} s (< 1 s)"))
}

/// `C(z) + i S(z) = Σ_m (iπ/2)^m z^{2m+1} / (m! (2m+1))`.
fn fresnel(z: f64) -> Complex64 {
    let w = Complex64::new(0.0, PI / 2.0 * z * z);
    let mut power = Complex64::new(z, 0.0);
    let mut sum = Complex64::new(0.0, 0.0);
    for m in 0..80 {
        sum += power / (2 * m + 1) as f64;
        power = power * w / (m + 1) as f64;
    }
    sum
}

fn fresnel_cross_check() -> Outcome {
    let r = oscillatory_integral(&poly("x0^2", 1), &BoxDomain::unit(1), 1e-12).unwrap();
    let expect = 0.5 * fresnel(2.0);
    let err = (Complex64::from(r.value) - expect).norm();
    Outcome::new(err <= 1e-8, format!("|I - (C(2)+iS(2))/2| = {err:.2e} (<= 1e-8)"))
}

struct CoareaRow {
    src: &'static str,
    recon_err: f64,
    recon_tol: f64,
    norm_err: f64,
    norm_tol: f64,
    secs: f64,
}

fn coarea_rows() -> Vec<CoareaRow> {
    let domain = BoxDomain::unit(2);
    CORPUS
        .iter()
        .map(|&src| {
            let start = Instant::now();
            let f = poly(src, 2);
            let prof = level_profile(&f, &domain, 512, 1_000_000, 1).unwrap();
            let recon = oscillatory_from_profile(&prof);
            let oracle = oscillatory_integral(&f, &domain, 1e-10).unwrap();
            let secs = start.elapsed().as_secs_f64();
            CoareaRow {
                src,
                recon_err: (recon - Complex64::from(oracle.value)).norm(),
                recon_tol: 10.0 * prof.noise_scale + 1.0 / 512.0,
                norm_err: (prof.phi_integral() - prof.vol_omega).abs(),
                norm_tol: 5.0 * prof.noise_scale,
                secs,
            }
        })
        .collect()
}

fn coarea_reconstruction(rows: &[CoareaRow]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in rows {
        pass &= r.recon_err <= r.recon_tol && r.secs < 60.0;
        parts.push(format!("{}: {:.1e}/{:.1e} {:.1}s", r.src, r.recon_err, r.recon_tol, r.secs));
    }
    Outcome::new(pass, parts.join("; "))
}

fn coarea_normalization(rows: &[CoareaRow]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for r in rows {
        pass &= r.norm_err <= r.norm_tol;
        parts.push(format!("{}: {:.1e}/{:.1e}", r.src, r.norm_err, r.norm_tol));
    }
    Outcome::new(pass, parts.join("; "))
}

fn van_der_corput_decay() -> Outcome {
    let grid = geometric_grid(10.0, 1e4, 25);
    let mut pass = true;
    let mut parts = Vec::new();
    for k in 2..=4u32 {
        let phase = poly(&format!("x0^{k}"), 1);
        let fit = decay_fit(&phase, &BoxDomain::unit(1), &grid, 1e-11, &OracleConfig::default()).unwrap();
        let target = -1.0 / k as f64;
        pass &= (fit.slope - target).abs() <= 0.05;
        parts.push(format!("k={k}: slope {:.4} vs {:.4}", fit.slope, target));
    }
    Outcome::new(pass, parts.join("; "))
}

fn bound_inequalities() -> Outcome {
    let mut pass = true;
    let mut admissible_members = 0;
    let mut parts = Vec::new();
    for src in CORPUS {
        let doc = ProblemDocument::new(2, 2, src, DomainSpec::unit(2));
        let section = run_measure(doc).unwrap();
        let mut checked = 0;
        let mut worst = f64::INFINITY;
        for row in &section.rows {
            for b in row.bounds.iter().filter(|b| b.theorem == "theorem1" || b.theorem == "theorem3") {
                checked += 1;
                worst = worst.min(b.value - row.surface.value);
                pass &= row.surface.value <= b.value;
            }
        }
        if checked == 0 {
            parts.push(format!("{src}: inadmissible"));
        } else {
            admissible_members += 1;
            parts.push(format!("{src}: {checked} checks over {} H, min margin {worst:.3}", section.rows.len()));
        }
    }
    Outcome::new(pass && admissible_members > 0, parts.join("; "))
}

fn theorem4_check() -> Outcome {
    let mut pass = true;
    let mut admissible_members = 0;
    let mut parts = Vec::new();
    for src in CORPUS {
        let mut doc = ProblemDocument::new(2, 2, src, DomainSpec::unit(2));
        doc.domain.lower = vec![1.0, 1.0];
        doc.domain.upper = vec![2.0, 2.0];
        doc.t_grid = Vec::new();
        let report = run_verify(doc).unwrap();
        let k0 = report.computed.as_ref().unwrap().k0.unwrap() as f64;
        let abs_i = report.oracle.as_ref().unwrap().integral.modulus;
        let entry = report
            .bounds
            .as_ref()
            .unwrap()
            .theorem4
            .iter()
            .find(|e| e.constants.k == k0);
        match entry {
            Some(e) => {
                admissible_members += 1;
                pass &= abs_i <= e.value;
                parts.push(format!("{src}: |I| {abs_i:.3e} <= {:.3e} (K0 {k0})", e.value));
            }
            None => parts.push(format!("{src}: inadmissible")),
        }
    }
    Outcome::new(pass && admissible_members > 0, parts.join("; "))
}

fn spectral_identities() -> Outcome {
    let rng = CounterRng::new(8);
    let mut worst_gram = 0.0f64;
    let mut worst_scale = 0.0f64;
    for i in 0..1000u64 {
        let s = rng.stream(i);
        let rows = 1 + (s.bits(0, 0) % 4) as usize;
        let cols = rows + (s.bits(0, 1) % 4) as usize;
        let data = (0..rows * cols).map(|j| 4.0 * s.uniform(1, j as u32) - 2.0).collect();
        let m = Matrix::new(rows, cols, data).unwrap();
        let prod = smallest_r_product(&m, rows).unwrap();
        worst_gram = worst_gram.max((prod - gram_root(&m)).abs() / prod.max(1e-300));

        let c = 10.0 * s.uniform(2, 0) - 5.0;
        let base = singular_values(&m).unwrap();
        let scaled = singular_values(&m.scaled(c)).unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            worst_scale = worst_scale.max((b - c.abs() * a).abs() / (c.abs() * a).max(1.0));
        }
    }
    Outcome::new(
        worst_gram <= 1e-10 && worst_scale <= 1e-12,
        format!("gram rel {worst_gram:.1e} (<= 1e-10), scaling {worst_scale:.1e} (<= 1e-12)"),
    )
}

fn analytic_measures() -> Outcome {
    let square = BoxDomain::unit(2);
    let disk = poly("x0^2 + x1^2", 2).compile();
    let vol = FieldSamples::draw(|x| disk.eval(x), &square, 1_000_000, 9).unwrap().sublevel(1.0);
    let disk_z = (vol.value - PI / 4.0).abs() / vol.std_error;

    let line = surface_measure(&SurfaceSystem::hypersurface(poly("x0 + x1 - 1", 2), square.clone()), None, 512).unwrap();
    let circle =
        surface_measure(&SurfaceSystem::hypersurface(poly("x0^2 + x1^2 - 1", 2), square), None, 512).unwrap();
    let line_err = (line.value - 2f64.sqrt()).abs();
    let circle_err = (circle.value - PI / 2.0).abs();
    Outcome::new(
        disk_z <= 3.0 && line_err <= 1e-3 && circle_err <= 1e-3,
        format!("quarter disk {disk_z:.2} se (<= 3), line {line_err:.1e}, quarter circle {circle_err:.1e} (<= 1e-3)"),
    )
}

fn determinism() -> Outcome {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_verify(ProblemDocument::sample()).unwrap().to_json())
    };
    let a = run(1);
    let b = run(1);
    let c = run(4);
    Outcome::new(
        a == b && a == c,
        format!("{} bytes; repeat identical {}, 1 vs 4 workers identical {}", a.len(), a == b, a == c),
    )
}

fn main() {
    let coarea = coarea_rows();
    let criteria: Vec<(&str, Box<dyn FnOnce() -> Outcome + '_>)> = vec![
        ("closed-form oracle accuracy", Box::new(closed_form_oracle)),
        ("Fresnel cross-check", Box::new(fresnel_cross_check)),
        ("co-area reconstruction", Box::new(|| coarea_reconstruction(&coarea))),
        ("co-area normalization", Box::new(|| coarea_normalization(&coarea))),
        ("van der Corput decay", Box::new(van_der_corput_decay)),
        ("bound inequality suite", Box::new(bound_inequalities)),
        ("oscillatory integral bound", Box::new(theorem4_check)),
        ("spectral identities", Box::new(spectral_identities)),
        ("analytic measure cases", Box::new(analytic_measures)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let out = check();
        let verdict = if out.pass { "PASS" } else { "FAIL" };
        if !out.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {verdict} {name} [{:.1} s]: {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            out.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}

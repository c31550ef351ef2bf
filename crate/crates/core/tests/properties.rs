use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use proptest::prelude::*;

use oscbound::bounds::{self, h, BoundInputs, ConstantsConfig};
use oscbound::chain::{build_chain, level_columns, PolyMatrix};
use oscbound::coarea::{level_profile, monotone_split, Direction};
use oscbound::domain::BoxDomain;
use oscbound::linalg::Matrix;
use oscbound::measure::{surface_measure, FieldSamples, SurfaceSystem};
use oscbound::optimize::SamplingPlan;
use oscbound::oracle::{oscillatory_integral_scaled, OracleConfig};
use oscbound::poly::Polynomial;
use oscbound::spectral::{chain_extrema, gram_root, singular_values, smallest_r_product, CompiledChain};

const CORPUS: [&str; 5] = ["x0 + x1", "x0*x1", "x0^2 + x1^2", "x0^2 - x1^2", "x0^3 + x1^2"];

fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn poly(n: usize, max_exp: u32, max_terms: usize) -> impl Strategy<Value = Polynomial> {
    prop::collection::vec(
        (prop::collection::vec(0..=max_exp, n), -20i64..=20, 1i64..=6),
        0..=max_terms,
    )
    .prop_map(move |terms| {
        Polynomial::from_terms(n, terms.into_iter().map(|(e, a, b)| (e, rat(a, b)))).unwrap()
    })
}

fn sized_poly(max_exp: u32, max_terms: usize) -> impl Strategy<Value = (usize, Polynomial)> {
    (1usize..=3).prop_flat_map(move |n| (Just(n), poly(n, max_exp, max_terms)))
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |d| Matrix::new(rows, cols, d).unwrap())
}

fn shaped_matrix() -> impl Strategy<Value = Matrix> {
    (1usize..=4, 0usize..=3).prop_flat_map(|(rows, extra)| matrix(rows, rows + extra))
}

fn unit_square() -> BoxDomain {
    BoxDomain::unit(2)
}

// ---------------------------------------------------------------- poly

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn derivative_is_linear(
        (n, p, q) in (1usize..=3).prop_flat_map(|n| (Just(n), poly(n, 4, 6), poly(n, 4, 6))),
        a in (-9i64..=9, 1i64..=5),
        b in (-9i64..=9, 1i64..=5),
        i in 0usize..3,
    ) {
        let i = i % n;
        let (a, b) = (rat(a.0, a.1), rat(b.0, b.1));
        let lhs = p.scale(&a).add(&q.scale(&b)).partial_derivative(i).unwrap();
        let rhs = p
            .partial_derivative(i)
            .unwrap()
            .scale(&a)
            .add(&q.partial_derivative(i).unwrap().scale(&b));
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn derivative_matches_central_difference(
        (n, p) in sized_poly(4, 6),
        x in prop::collection::vec(-1.0f64..1.0, 3),
        i in 0usize..3,
    ) {
        let i = i % n;
        let step = 1e-5;
        let x = &x[..n];
        let mut plus = x.to_vec();
        let mut minus = x.to_vec();
        plus[i] += step;
        minus[i] -= step;
        let fd = (p.evaluate(&plus).unwrap() - p.evaluate(&minus).unwrap()) / (2.0 * step);
        let exact = p.partial_derivative(i).unwrap().evaluate(x).unwrap();
        prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "fd {fd} exact {exact}");
    }

    #[test]
    fn print_then_parse_is_identity((n, p) in sized_poly(5, 8)) {
        let text = p.to_string();
        prop_assert_eq!(Polynomial::parse(&text, n).unwrap(), p, "{}", text);
    }
}

// ---------------------------------------------------------------- chain

/// `∂_{order[0]} ∂_{order[1]} ... f` computed directly.
fn partial(f: &Polynomial, order: &[usize]) -> Polynomial {
    order.iter().fold(f.clone(), |acc, &i| acc.partial_derivative(i).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn columns_follow_shape_law(
        (n, entries) in (1usize..=3).prop_flat_map(|n| (Just(n), prop::collection::vec(poly(n, 3, 3), 1..=4))),
        rows in 1usize..=2,
        k in 0usize..=3,
    ) {
        let rows = rows.min(entries.len());
        let cols = entries.len() / rows;
        let seed = PolyMatrix::new(rows, cols, entries[..rows * cols].to_vec()).unwrap();
        let chain = build_chain(seed, k).unwrap();
        for j in 0..=k {
            let level = chain.level(j);
            prop_assert_eq!(Some(level.cols()), level_columns(n, rows, cols, j));
            prop_assert_eq!(level.rows(), if j == 0 { rows } else { n });
        }
    }

    #[test]
    fn mixed_partials_commute((n, f) in (2usize..=3).prop_flat_map(|n| (Just(n), poly(n, 4, 6)))) {
        let seed = PolyMatrix::new(1, 1, vec![f.clone()]).unwrap();
        let chain = build_chain(seed, 3).unwrap();
        let a3 = chain.level(3);
        for i in 0..n {
            for a in 0..n {
                for b in 0..n {
                    // A_3[i][b n + a] = ∂_i ∂_a ∂_b f
                    let entry = a3.get(i, b * n + a);
                    prop_assert_eq!(entry, &partial(&f, &[b, a, i]));
                    for (p, q, s) in [(a, i, b), (b, a, i), (i, b, a)] {
                        prop_assert_eq!(entry, a3.get(p, s * n + q));
                    }
                }
            }
        }
    }

    #[test]
    fn degree_drops_by_one_per_level((_n, f) in sized_poly(4, 5)) {
        let chain = build_chain(PolyMatrix::gradient_row(&f), 4).unwrap();
        let seed_degree = f.total_degree().saturating_sub(1);
        prop_assert_eq!(chain.level(0).max_degree(), seed_degree);
        for j in 1..=4 {
            let prev = chain.level(j - 1).max_degree();
            prop_assert_eq!(chain.level(j).max_degree(), prev.saturating_sub(1));
        }
    }
}

// ---------------------------------------------------------------- spectral

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gram_root_equals_product_of_all_singular_values(m in shaped_matrix()) {
        let sv = smallest_r_product(&m, m.rows()).unwrap();
        let gram = gram_root(&m);
        let scale = m.data().iter().fold(1.0f64, |a, x| a.max(x.abs())).powi(m.rows() as i32);
        prop_assert!((sv - gram).abs() <= 1e-10 * sv.abs().max(scale * 1e-3), "{sv} vs {gram}");
    }

    #[test]
    fn singular_values_scale_linearly(m in shaped_matrix(), c in -10.0f64..10.0, r in 1usize..=4) {
        let base = singular_values(&m).unwrap();
        let scaled = singular_values(&m.scaled(c)).unwrap();
        for (s, t) in base.iter().zip(&scaled) {
            prop_assert!((t - c.abs() * s).abs() <= 1e-12 * (1.0 + c.abs() * s), "{t} vs {}", c.abs() * s);
        }
        let r = r.min(m.rows());
        let p = smallest_r_product(&m, r).unwrap();
        let q = smallest_r_product(&m.scaled(c), r).unwrap();
        let expect = c.abs().powi(r as i32) * p;
        prop_assert!((q - expect).abs() <= 1e-11 * (1.0 + expect.abs()), "{q} vs {expect}");
    }

    #[test]
    fn chain_level_gram_identity_at_random_point(
        (n, f) in (2usize..=3).prop_flat_map(|n| (Just(n), poly(n, 4, 6))),
        x in prop::collection::vec(-1.0f64..1.0, 3),
        j in 0usize..=2,
    ) {
        let chain = build_chain(PolyMatrix::gradient_row(&f), 2).unwrap();
        let compiled = CompiledChain::new(&chain);
        let m = compiled.level(j).eval(&x[..n]);
        let sv = singular_values(&m).unwrap();
        let full_rank = sv.last().copied().unwrap_or(0.0) > 1e-6 * sv[0].max(1e-300);
        prop_assume!(full_rank && m.rows() <= m.cols());
        let prod = smallest_r_product(&m, m.rows()).unwrap();
        prop_assert!((prod - gram_root(&m)).abs() <= 1e-10 * prod, "{prod} vs {}", gram_root(&m));
    }

    #[test]
    fn level_zero_of_gradient_row_is_gradient_norm(
        (n, f) in sized_poly(4, 6),
        x in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let chain = build_chain(PolyMatrix::gradient_row(&f), 0).unwrap();
        let compiled = CompiledChain::new(&chain);
        let x = &x[..n];
        let direct = f
            .gradient()
            .iter()
            .map(|g| g.evaluate(x).unwrap().powi(2))
            .sum::<f64>()
            .sqrt();
        let spectral = compiled.g_at(0, n, x);
        prop_assert!((spectral - direct).abs() <= 1e-12 * direct.max(1.0), "{spectral} vs {direct}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn finer_grids_only_tighten_extrema(f in poly(2, 3, 4), res in 4usize..=12) {
        let chain = build_chain(PolyMatrix::gradient_row(&f), 1).unwrap();
        let domain = unit_square();
        let coarse = SamplingPlan::default_for(2).with_resolution(res).grid_only();
        let fine = coarse.with_resolution(2 * res);
        let a = chain_extrema(&chain, &domain, &coarse, 1).unwrap();
        let b = chain_extrema(&chain, &domain, &fine, 1).unwrap();
        for (g_fine, g_coarse) in b.g_min.iter().zip(&a.g_min) {
            prop_assert!(g_fine <= g_coarse);
        }
        prop_assert!(b.l_max >= a.l_max);
    }
}

// ---------------------------------------------------------------- measure

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sublevel_volume_is_monotone_and_saturates(
        idx in 0usize..CORPUS.len(),
        seed in any::<u64>(),
        h1 in 0.0f64..3.0,
        dh in 0.0f64..3.0,
    ) {
        let f = Polynomial::parse(CORPUS[idx], 2).unwrap().compile();
        let field = |x: &[f64]| f.eval(x);
        let domain = unit_square();
        let samples = FieldSamples::draw(field, &domain, 4096, seed).unwrap();
        let lo = samples.sublevel(h1);
        let hi = samples.sublevel(h1 + dh);
        let slack = 3.0 * (lo.std_error.powi(2) + hi.std_error.powi(2)).sqrt();
        prop_assert!(lo.value <= hi.value + slack);
        prop_assert_eq!(samples.sublevel(f64::INFINITY).value, domain.box_volume());

        let again = FieldSamples::draw(field, &domain, 4096, seed).unwrap();
        prop_assert_eq!(again.values(), samples.values());
    }
}

#[test]
fn surface_measure_refinement_shrinks_discrepancy() {
    let cases = [("x0 + x1 - 1", 2f64.sqrt()), ("x0^2 + x1^2 - 1", std::f64::consts::FRAC_PI_2)];
    for (eq, exact) in cases {
        let sys = SurfaceSystem::hypersurface(Polynomial::parse(eq, 2).unwrap(), unit_square());
        for res in [64, 128, 256] {
            let coarse = surface_measure(&sys, None, res).unwrap();
            let fine = surface_measure(&sys, None, 2 * res).unwrap();
            let step = (fine.value - coarse.value).abs();
            assert!(
                step <= coarse.std_error + 1e-12,
                "{eq} at {res}: step {step:e}, reported {:e}",
                coarse.std_error
            );
            assert!((fine.value - exact).abs() < 1e-2);
        }
    }
}

// ---------------------------------------------------------------- coarea

fn piece_respects_tolerance(phi: &[f64], start: usize, end: usize, dir: Direction, tol: f64) -> bool {
    let mut run_max = f64::NEG_INFINITY;
    let mut run_min = f64::INFINITY;
    for &v in &phi[start..=end] {
        run_max = run_max.max(v);
        run_min = run_min.min(v);
        let back = match dir {
            Direction::Nondecreasing => run_max - v,
            Direction::Nonincreasing => v - run_min,
        };
        if back > tol {
            return false;
        }
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn split_pieces_are_monotone_within_tolerance(
        phi in prop::collection::vec(-5.0f64..5.0, 1..80),
        tol in 0.0f64..3.0,
    ) {
        let pieces = monotone_split(&phi, tol);
        prop_assert_eq!(pieces.count, pieces.breakpoints.len());
        prop_assert_eq!(pieces.count, pieces.directions.len());
        for p in 0..pieces.count {
            let start = pieces.breakpoints[p];
            let end = pieces.breakpoints.get(p + 1).copied().unwrap_or(phi.len() - 1);
            prop_assert!(start <= end);
            prop_assert!(piece_respects_tolerance(&phi, start, end, pieces.directions[p], tol));
            if p > 0 {
                prop_assert_ne!(pieces.directions[p], pieces.directions[p - 1]);
            }
        }
        let idx: Vec<usize> = (0..phi.len()).map(|j| pieces.piece_of(j)).collect();
        prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(idx[0], 0);
        prop_assert_eq!(*idx.last().unwrap(), pieces.count - 1);
    }

    #[test]
    fn loose_tolerance_gives_one_piece(phi in prop::collection::vec(-5.0f64..5.0, 1..80)) {
        prop_assert_eq!(monotone_split(&phi, 10.0).count, 1);
    }
}

#[test]
fn piece_count_is_stable_under_grid_doubling() {
    let domain = unit_square();
    for src in CORPUS {
        let f = Polynomial::parse(src, 2).unwrap();
        let mut counts = Vec::new();
        for grid in [256, 512, 1024] {
            let prof = level_profile(&f, &domain, grid, 1_000_000, 7).unwrap();
            let k0 = monotone_split(&prof.phi, oscbound::coarea::default_tolerance(&prof)).count;
            let negative = prof.phi.iter().filter(|&&p| p < -3.0 * prof.noise_scale).count();
            assert_eq!(negative, 0, "{src}: negative density at {grid} points");
            assert!(prof.phi.iter().all(|&p| p >= -prof.noise_scale));
            counts.push(k0);
        }
        for w in counts.windows(2) {
            assert!(w[0].abs_diff(w[1]) <= 1, "{src}: K0 went {counts:?}");
        }
    }
}

// ---------------------------------------------------------------- bounds

fn unit_inputs(n: usize, r: usize, k: usize) -> BoundInputs {
    BoundInputs {
        n,
        r,
        k,
        h: 1.0,
        g_levels: vec![1.0; k],
        g_paren: vec![1.0; k],
        l: 1.0,
        h_tilde: 1.0,
        h_1: 1.0,
        pi_area: Some(1.0),
        vol_omega: 1.0,
        g_gram: Some(1.0),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn h_is_symmetric_and_submultiplicative(la in -30.0f64..30.0, lb in -30.0f64..30.0, e in -60i32..60) {
        let (a, b) = (la.exp(), lb.exp());
        let dyadic = 2f64.powi(e);
        prop_assert_eq!(h(dyadic).unwrap(), h(1.0 / dyadic).unwrap());
        let (ha, hinv) = (h(a).unwrap(), h(1.0 / a).unwrap());
        prop_assert!((ha - hinv).abs() <= 4.0 * f64::EPSILON * ha, "{ha} vs {hinv}");
        prop_assert!(h(a * b).unwrap() <= h(a).unwrap() * h(b).unwrap() * (1.0 + 1e-15));
        prop_assert!(h(a).unwrap() >= 2.0);
    }

    #[test]
    fn bounds_are_positive_and_finite(
        n in 2usize..=4,
        k in 1usize..=4,
        lh in -3.0f64..3.0,
        lg in -3.0f64..3.0,
        ll in 0.0f64..3.0,
    ) {
        let r = n - 1;
        let cfg = ConstantsConfig::default();
        let hv = lh.exp();
        let gk = lg.exp();
        let mut inputs = unit_inputs(n, r, k);
        inputs.h = hv;
        inputs.g_levels = vec![gk; k];
        inputs.g_paren = bounds::g_paren_chain(hv, gk, k).unwrap();
        inputs.l = ll.exp() * hv.max(gk);
        inputs.h_tilde = inputs.l;
        for v in [
            bounds::theorem1_bound(&inputs, &cfg).unwrap(),
            bounds::theorem2_bound(&inputs, &cfg, k).unwrap(),
            bounds::theorem3_bound(&inputs, &cfg, k).unwrap(),
        ] {
            prop_assert!(v.is_finite() && v > 0.0, "{v}");
        }
    }

    #[test]
    fn theorem2_monotone_in_g_and_h(
        k in 1usize..=3,
        lh in -2.0f64..2.0,
        dh in 0.0f64..2.0,
        lg in -2.0f64..2.0,
        dg in 0.0f64..2.0,
    ) {
        let cfg = ConstantsConfig::default();
        let at = |hv: f64, g: f64| {
            let mut inputs = unit_inputs(2, 1, k);
            inputs.h = hv;
            inputs.g_levels = vec![1.0; k];
            inputs.g_paren = vec![g; k];
            inputs.l = 100.0;
            inputs.h_tilde = 100.0;
            bounds::theorem2_bound(&inputs, &cfg, k).unwrap()
        };
        let (h0, g0) = (lh.exp(), lg.exp());
        let tol = 1e-12;
        prop_assert!(at(h0, g0 * dg.exp()) <= at(h0, g0) * (1.0 + tol));
        prop_assert!(at(h0 * dh.exp(), g0) >= at(h0, g0) * (1.0 - tol));
    }
}

// ---------------------------------------------------------------- oracle

#[test]
fn oracle_methods_agree_and_respect_symmetries() {
    let domain = unit_square();
    let cfg = OracleConfig::default();
    for src in CORPUS {
        let f = Polynomial::parse(src, 2).unwrap();
        let r = oscillatory_integral_scaled(&f, 1.0, &domain, 1e-10, &cfg).unwrap();
        let qmc: Complex64 = r.qmc_value.expect("two-dimensional oracle runs both methods").into();
        let value: Complex64 = r.value.into();
        let spread = (value - qmc).norm();
        let allowed = 3.0 * (r.rule_error + r.qmc_std_error.unwrap());
        assert!(spread <= allowed, "{src}: methods differ by {spread:e}, allowed {allowed:e}");
        assert!(r.modulus <= domain.box_volume() + r.abs_error_estimate);

        let neg = oscillatory_integral_scaled(&f.neg(), 1.0, &domain, 1e-10, &cfg).unwrap();
        let conj: Complex64 = neg.value.into();
        let gap = (conj.conj() - value).norm();
        assert!(gap <= 2.0 * r.abs_error_estimate.max(neg.abs_error_estimate), "{src}: conjugation gap {gap:e}");
    }
}

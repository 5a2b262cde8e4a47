use dpd_spline::spline::{assemble, build_knots, difference_penalty, eval_basis, reproducing_kernel};
use dpd_spline::{KnotStrategy, KnotVector};
use nalgebra::DMatrix;
use proptest::prelude::*;

// Cox-de Boor recursion with the derivative recurrence, written independently of the crate.
fn bspline(knots: &[f64], i: usize, order: usize, x: f64, deriv: usize) -> f64 {
    if deriv > 0 {
        let k = order - 1;
        let left = knots[i + k] - knots[i];
        let right = knots[i + order] - knots[i + 1];
        let mut v = 0.0;
        if left > 0.0 {
            v += bspline(knots, i, k, x, deriv - 1) / left;
        }
        if right > 0.0 {
            v -= bspline(knots, i + 1, k, x, deriv - 1) / right;
        }
        return k as f64 * v;
    }
    if order == 1 {
        let last = knots[knots.len() - 1];
        let inside = knots[i] <= x && x < knots[i + 1];
        // right end belongs to the last non-empty interval
        let at_end = x == last && knots[i + 1] == last && knots[i] < last;
        return if inside || at_end { 1.0 } else { 0.0 };
    }
    let mut v = 0.0;
    let d1 = knots[i + order - 1] - knots[i];
    if d1 > 0.0 {
        v += (x - knots[i]) / d1 * bspline(knots, i, order - 1, x, 0);
    }
    let d2 = knots[i + order] - knots[i + 1];
    if d2 > 0.0 {
        v += (knots[i + order] - x) / d2 * bspline(knots, i + 1, order - 1, x, 0);
    }
    v
}

// Romberg extrapolation; exact after a few levels for the polynomial integrands used here.
fn romberg<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let mut prev: Vec<f64> = vec![0.5 * (b - a) * (f(a) + f(b))];
    for level in 1..10 {
        let panels = 1usize << level;
        let h = (b - a) / panels as f64;
        let mid: f64 = (0..panels / 2).map(|k| f(a + (2 * k + 1) as f64 * h)).sum();
        let mut row = vec![0.5 * prev[0] + h * mid];
        for j in 1..=level {
            let factor = 4f64.powi(j as i32);
            row.push((factor * row[j - 1] - prev[j - 1]) / (factor - 1.0));
        }
        let done = level > 4 && (row[level] - prev[level - 1]).abs() <= 1e-14 * row[level].abs();
        prev = row;
        if done {
            break;
        }
    }
    *prev.last().unwrap()
}

// ∫ B_i^(d) B_j^(d) over [0, 1], integrating each knot span separately (integrand is smooth there).
fn oracle_matrix(kv: &KnotVector, deriv: usize) -> DMatrix<f64> {
    let full = kv.full();
    let p = kv.order();
    let dim = kv.dim();
    let mut breaks: Vec<f64> = full.to_vec();
    breaks.dedup();
    let mut out = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in i..dim {
            let mut total = 0.0;
            for w in breaks.windows(2) {
                let (a, b) = (w[0], w[1]);
                if b <= full[j] || a >= full[i + p] {
                    continue;
                }
                // nudge inside the span so the half-open recursion picks the right piece
                let f = |x: f64| {
                    let x = x.clamp(a + 1e-15 * (b - a), b - 1e-15 * (b - a));
                    bspline(full, i, p, x, deriv) * bspline(full, j, p, x, deriv)
                };
                total += romberg(f, a, b);
            }
            out[(i, j)] = total;
            out[(j, i)] = total;
        }
    }
    out
}

fn assert_matches_oracle(ours: &DMatrix<f64>, oracle: &DMatrix<f64>) {
    let scale = oracle.amax();
    for i in 0..oracle.nrows() {
        for j in 0..oracle.ncols() {
            let (a, b) = (ours[(i, j)], oracle[(i, j)]);
            if b.abs() < 1e-13 * scale {
                assert!(a.abs() < 1e-11 * scale, "entry ({i},{j}) should vanish: {a}");
            } else {
                assert!(((a - b) / b).abs() < 1e-10, "entry ({i},{j}): {a} vs oracle {b}");
            }
        }
    }
}

#[test]
fn gram_and_penalty_match_quadrature_oracle() {
    let t: Vec<f64> = (1..=60).map(|i| i as f64 / 61.0).collect();
    for (p, m, k) in [(4, 2, 5), (2, 1, 4), (3, 1, 6), (6, 3, 4)] {
        let kv = build_knots(&t, p, m, KnotStrategy::Explicit(k)).unwrap();
        let basis = assemble(&kv, &t, m).unwrap();
        assert_matches_oracle(basis.gram(), &oracle_matrix(&kv, 0));
        assert_matches_oracle(basis.penalty(), &oracle_matrix(&kv, m));
    }
}

#[test]
fn gram_oracle_on_uneven_knots() {
    let kv = KnotVector::new(vec![0.07, 0.2, 0.21, 0.55, 0.9], 4).unwrap();
    let t: Vec<f64> = (0..50).map(|i| i as f64 / 49.0).collect();
    let basis = assemble(&kv, &t, 2).unwrap();
    assert_matches_oracle(basis.gram(), &oracle_matrix(&kv, 0));
    assert_matches_oracle(basis.penalty(), &oracle_matrix(&kv, 2));
}

#[test]
fn basis_values_match_recursion() {
    let kv = KnotVector::new(vec![0.1, 0.3, 0.35, 0.8], 4).unwrap();
    for &x in &[0.0, 0.05, 0.1, 0.2, 0.33, 0.5, 0.79, 0.999, 1.0] {
        for d in 0..3 {
            let ours = eval_basis(&kv, x, d).unwrap();
            for (j, v) in ours.iter().enumerate() {
                let expect = bspline(kv.full(), j, 4, x, d);
                if !(d > 0 && [0.1, 0.3, 0.35, 0.8].contains(&x)) {
                    assert!((v - expect).abs() < 1e-10 * (1.0 + expect.abs()), "x={x} d={d} j={j}: {v} vs {expect}");
                }
            }
        }
    }
}

#[test]
fn linear_penalty_is_scaled_first_difference_penalty() {
    // hat functions on h-spaced knots: P = (1/h) D1ᵀD1
    let t: Vec<f64> = (1..=40).map(|i| i as f64 / 41.0).collect();
    let k = 7;
    let kv = build_knots(&t, 2, 1, KnotStrategy::Explicit(k)).unwrap();
    let basis = assemble(&kv, &t, 1).unwrap();
    let d = difference_penalty(kv.dim(), 1).unwrap();
    let c = (k + 1) as f64;
    for i in 0..kv.dim() {
        for j in 0..kv.dim() {
            assert!((basis.penalty()[(i, j)] - c * d[(i, j)]).abs() < 1e-11);
        }
    }
}

#[test]
fn quadratic_penalty_is_proportional_to_second_differences_in_the_interior() {
    // clamped boundary knots break proportionality in the first/last two rows
    let t: Vec<f64> = (1..=80).map(|i| i as f64 / 81.0).collect();
    let k = 9;
    let kv = build_knots(&t, 3, 2, KnotStrategy::Explicit(k)).unwrap();
    let basis = assemble(&kv, &t, 2).unwrap();
    let d = difference_penalty(kv.dim(), 2).unwrap();
    let h = 1.0 / (k + 1) as f64;
    let c = 1.0 / h.powi(3);
    let dim = kv.dim();
    for i in 2..dim - 2 {
        for j in 2..dim - 2 {
            assert!((basis.penalty()[(i, j)] - c * d[(i, j)]).abs() < 1e-8 * c, "({i},{j})");
        }
    }
    assert!((basis.penalty()[(0, 0)] - c * d[(0, 0)]).abs() > 1.0);
}

#[test]
fn kernel_reproduces_splines_on_a_grid() {
    // f(x) = <R(x, .), f>_H + λ <R(x, .), f>_P for every f in the spline space
    let t: Vec<f64> = (1..=100).map(|i| i as f64 / 101.0).collect();
    let kv = build_knots(&t, 4, 2, KnotStrategy::Explicit(8)).unwrap();
    let basis = assemble(&kv, &t, 2).unwrap();
    let coefs: Vec<f64> = (0..kv.dim()).map(|j| ((j * 7) % 5) as f64 - 2.0 + 0.1 * j as f64).collect();
    let c = nalgebra::DVector::from_vec(coefs.clone());
    for lambda in [0.0, 1e-3, 0.5] {
        let g = basis.gram() + basis.penalty() * lambda;
        for &x in &[0.0, 0.13, 0.5, 0.77, 1.0] {
            let bx = nalgebra::DVector::from_vec(eval_basis(&kv, x, 0).unwrap());
            // R(x, .) has coefficient vector G⁻¹ B(x)
            let rx = g.clone().lu().solve(&bx).unwrap();
            let inner = (rx.transpose() * &g * &c)[(0, 0)];
            let f = basis.evaluate(&coefs, x, 0).unwrap();
            assert!((inner - f).abs() < 1e-9, "lambda={lambda} x={x}");
            for &y in &[0.2, 0.9] {
                let k1 = reproducing_kernel(&basis, lambda, x, y).unwrap();
                let k2 = reproducing_kernel(&basis, lambda, y, x).unwrap();
                let direct = (eval_basis(&kv, y, 0).unwrap().iter().zip(rx.iter()).map(|(a, b)| a * b)).sum::<f64>();
                assert!((k1 - k2).abs() < 1e-10 * k1.abs().max(1.0));
                assert!((k1 - direct).abs() < 1e-9 * k1.abs().max(1.0));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn partition_of_unity_and_locality(k in 1usize..25, p in 2usize..7, x in 0.0f64..=1.0) {
        let kv = KnotVector::equidistant(k, p).unwrap();
        let v = eval_basis(&kv, x, 0).unwrap();
        prop_assert_eq!(v.len(), k + p);
        prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(v.iter().all(|&b| b >= -1e-15));
        prop_assert!(v.iter().filter(|&&b| b != 0.0).count() <= p);
    }

    #[test]
    fn gram_is_banded_spd_and_penalty_kills_polynomials(k in 1usize..15, m in 1usize..4, extra in 1usize..3) {
        let p = m + extra;
        let t: Vec<f64> = (1..=80).map(|i| i as f64 / 81.0).collect();
        let kv = build_knots(&t, p, m, KnotStrategy::Explicit(k)).unwrap();
        let basis = assemble(&kv, &t, m).unwrap();
        let dim = kv.dim();
        for i in 0..dim {
            for j in 0..dim {
                if i.abs_diff(j) >= p {
                    prop_assert_eq!(basis.gram()[(i, j)], 0.0);
                    prop_assert_eq!(basis.penalty()[(i, j)], 0.0);
                }
                prop_assert!((basis.gram()[(i, j)] - basis.gram()[(j, i)]).abs() < 1e-15);
            }
        }
        prop_assert!(basis.gram().clone().cholesky().is_some());
        // rank deficiency exactly m
        let eig = basis.penalty().clone().symmetric_eigen();
        let scale = eig.eigenvalues.amax();
        let zeros = eig.eigenvalues.iter().filter(|&&e| e.abs() < 1e-9 * scale).count();
        prop_assert_eq!(zeros, m);
        prop_assert!(eig.eigenvalues.iter().all(|&e| e > -1e-9 * scale));
    }
}

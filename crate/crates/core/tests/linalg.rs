use eigenbranch_core::linalg::{eigh, eigh_generalized, sturm_count, SymMatrix, SymTridiagonal};
use proptest::prelude::*;
use std::f64::consts::PI;

/// Characteristic polynomial of a symmetric tridiagonal matrix by the
/// three-term recurrence.
fn tridiagonal_charpoly(diag: &[f64], off: &[f64], x: f64) -> f64 {
    let mut p_prev = 1.0;
    let mut p = diag[0] - x;
    for i in 1..diag.len() {
        let next = (diag[i] - x) * p - off[i - 1] * off[i - 1] * p_prev;
        p_prev = p;
        p = next;
    }
    p
}

/// Determinant via LU with partial pivoting.
fn det(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut d = 1.0;
    for k in 0..n {
        let piv = (k..n).max_by(|&a, &b| m[a][k].abs().total_cmp(&m[b][k].abs())).unwrap();
        if m[piv][k] == 0.0 {
            return 0.0;
        }
        if piv != k {
            m.swap(piv, k);
            d = -d;
        }
        d *= m[k][k];
        for i in (k + 1)..n {
            let f = m[i][k] / m[k][k];
            for j in k..n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    d
}

/// Sign-change scan followed by bisection.
fn roots_by_bisection(f: impl Fn(f64) -> f64, lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    let mut roots = Vec::new();
    let h = (hi - lo) / samples as f64;
    for i in 0..samples {
        let (mut a, mut b) = (lo + i as f64 * h, lo + (i + 1) as f64 * h);
        let (mut fa, fb) = (f(a), f(b));
        if fa == 0.0 {
            roots.push(a);
            continue;
        }
        if fa * fb > 0.0 {
            continue;
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let fm = f(m);
            if fa * fm <= 0.0 {
                b = m;
            } else {
                a = m;
                fa = fm;
            }
        }
        roots.push(0.5 * (a + b));
    }
    roots
}

#[test]
fn path_laplacian_closed_form_and_charpoly() {
    let n = 4;
    let a = SymMatrix::from_lower_fn(n, |i, j| if i == j { 2.0 } else if i == j + 1 { -1.0 } else { 0.0 }).unwrap();
    let dec = eigh(&a).unwrap();
    let closed: Vec<f64> = (1..=n).map(|k| 2.0 - 2.0 * (k as f64 * PI / 5.0).cos()).collect();
    let charpoly = roots_by_bisection(|x| tridiagonal_charpoly(&[2.0; 4], &[-1.0; 3], x), -0.01, 4.01, 4000);
    assert_eq!(charpoly.len(), 4);
    for k in 0..n {
        assert!((closed[k] - charpoly[k]).abs() < 1e-12, "oracles disagree at {k}");
        assert!((dec.values[k] - closed[k]).abs() < 1e-13, "k={k}: {} vs {}", dec.values[k], closed[k]);
    }
}

#[test]
fn generalized_matches_determinant_roots() {
    // fixed "random" SPD pair
    let n = 5;
    let g = |i: usize, j: usize, s: f64| ((i * 7 + j * 13) as f64 * s).sin();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = g(i.min(j), i.max(j), 0.9) + if i == j { 1.0 } else { 0.0 };
            b[i][j] = (0..n).map(|k| g(i, k, 0.37) * g(j, k, 0.37)).sum::<f64>() + if i == j { 0.5 } else { 0.0 };
        }
    }
    let am = SymMatrix::from_lower_fn(n, |i, j| a[i][j]).unwrap();
    let bm = SymMatrix::from_lower_fn(n, |i, j| b[i][j]).unwrap();
    let dec = eigh_generalized(&am, &bm).unwrap();

    let detf = |lam: f64| {
        let m = (0..n).map(|i| (0..n).map(|j| a[i][j] - lam * b[i][j]).collect()).collect();
        det(m)
    };
    let lo = dec.values[0] - 1.0;
    let hi = dec.values[n - 1] + 1.0;
    let roots = roots_by_bisection(detf, lo, hi, 20_000);
    assert_eq!(roots.len(), n, "roots {roots:?}");
    for (r, v) in roots.iter().zip(&dec.values) {
        assert!((r - v).abs() < 1e-9 * (1.0 + v.abs()), "{r} vs {v}");
    }
    // B-orthonormality
    for i in 0..n {
        for j in 0..n {
            let bij: f64 = dec.vectors[i].iter().zip(bm.matvec(&dec.vectors[j])).map(|(x, y)| x * y).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((bij - want).abs() < 1e-8);
        }
    }
}

#[test]
fn identity_mass_reduces_to_standard() {
    let a = SymMatrix::from_lower_fn(7, |i, j| ((i + 2 * j) as f64).cos()).unwrap();
    let b = SymMatrix::identity(7).unwrap();
    let std = eigh(&a).unwrap();
    let gen = eigh_generalized(&a, &b).unwrap();
    for (x, y) in std.values.iter().zip(&gen.values) {
        assert!((x - y).abs() < 1e-10);
    }
}

fn sym_strategy(max_n: usize) -> impl Strategy<Value = SymMatrix> {
    (1..=max_n).prop_flat_map(|n| {
        proptest::collection::vec(-10.0f64..10.0, n * n).prop_map(move |raw| {
            SymMatrix::from_lower_fn(n, |i, j| raw[i * n + j]).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposition_invariants(a in sym_strategy(24)) {
        let n = a.dim();
        let dec = eigh(&a).unwrap();
        let max_lam = dec.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(dec.values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(dec.residual_norm <= 1e-8 * (1.0 + max_lam));
        for i in 0..n {
            for j in 0..n {
                let c: f64 = dec.vectors[i].iter().zip(&dec.vectors[j]).map(|(x, y)| x * y).sum();
                if i == j {
                    prop_assert!((c - 1.0).abs() <= 1e-10);
                } else {
                    prop_assert!(c.abs() <= 1e-8);
                }
            }
        }
        // reconstruction
        let mut err = 0.0;
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n).map(|k| dec.vectors[k][i] * dec.values[k] * dec.vectors[k][j]).sum();
                err += (a.get(i, j) - r).powi(2);
            }
        }
        prop_assert!(err.sqrt() <= 1e-7 * a.frobenius_norm().max(f64::MIN_POSITIVE));
        // sign convention
        for v in &dec.vectors {
            let big = v.iter().cloned().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            prop_assert!(big >= 0.0);
        }
    }

    #[test]
    fn generalized_reconstruction(a in sym_strategy(12), seed in 0u64..1000) {
        let n = a.dim();
        let b = SymMatrix::from_lower_fn(n, |i, j| {
            let s = ((i * 31 + j * 17) as f64 + seed as f64).sin() * 0.3;
            if i == j { 2.0 + s.abs() } else { s / n as f64 }
        }).unwrap();
        let dec = eigh_generalized(&a, &b).unwrap();
        let max_lam = dec.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        prop_assert!(dec.residual_norm <= 1e-8 * (1.0 + max_lam) * (1.0 + a.max_abs()));
        for i in 0..n {
            for j in 0..n {
                let bij: f64 = dec.vectors[i].iter().zip(b.matvec(&dec.vectors[j])).map(|(x, y)| x * y).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((bij - want).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn permutation_equivariance(a in sym_strategy(16), shift in 0usize..16) {
        let n = a.dim();
        let perm: Vec<usize> = (0..n).map(|i| (i * 5 + shift) % n).collect();
        let distinct = { let mut p = perm.clone(); p.sort(); p.dedup(); p.len() == n };
        prop_assume!(distinct);
        let pa = SymMatrix::from_lower_fn(n, |i, j| a.get(perm[i], perm[j])).unwrap();
        let v1 = eigh(&a).unwrap().values;
        let v2 = eigh(&pa).unwrap().values;
        let scale = 1.0 + a.max_abs();
        for (x, y) in v1.iter().zip(&v2) {
            prop_assert!((x - y).abs() <= 1e-10 * scale * n as f64);
        }
    }

    #[test]
    fn sturm_agrees_with_eigh(
        diag in proptest::collection::vec(-5.0f64..5.0, 1..200),
        seed in 0u64..10_000,
    ) {
        let n = diag.len();
        let off: Vec<f64> = (0..n.saturating_sub(1)).map(|i| ((i as f64 + seed as f64) * 0.77).sin() * 2.0).collect();
        let t = SymTridiagonal::new(diag, off).unwrap();
        let values = t.eigh().unwrap().values;
        let (lo, hi) = t.gershgorin();
        for k in 0..100 {
            let x = lo - 0.5 + (hi - lo + 1.0) * k as f64 / 99.0;
            let want = values.iter().filter(|&&v| v <= x).count();
            // skip grid points that land within roundoff of an eigenvalue
            let near = values.iter().any(|v| (v - x).abs() < 1e-9 * (1.0 + x.abs()));
            if !near {
                prop_assert_eq!(sturm_count(&t, x), want);
            }
        }
    }
}

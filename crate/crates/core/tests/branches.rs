use eigenbranch_core::branches::{continue_branches, finite_difference_slope, integrated_slope, limit_estimate, SweepPlan};
use eigenbranch_core::linalg::SymMatrix;
use eigenbranch_core::schrodinger::{Grid, Potential, PotentialKind, SchrodingerFamily};
use eigenbranch_core::spectrum::{LinearMatrixFamily, SpectralFamily, SpectrumSnapshot};
use proptest::prelude::*;
use std::f64::consts::PI;

fn toy(delta: f64) -> LinearMatrixFamily {
    let base = SymMatrix::from_row_major(2, vec![0.0, delta, delta, 0.0]).unwrap();
    let dir = SymMatrix::from_diagonal(&[1.0, -1.0]).unwrap();
    LinearMatrixFamily::new(base, dir).unwrap()
}

#[test]
fn true_crossing_is_followed_analytically() {
    let fam = toy(0.0);
    let plan = SweepPlan::linear(-1.0, 1.0, 20, 2).unwrap();
    let run = continue_branches(&fam, &plan, |_| {}).unwrap();
    assert!(!run.identity_permutation);
    // branch 0 starts as the lower eigenvalue -1 = t and stays on E = t
    for s in &run.branches[0].samples {
        assert!((s.eigenvalue - s.param).abs() < 1e-12, "{s:?}");
        assert!((s.hf_slope - 1.0).abs() < 1e-12);
    }
    for s in &run.branches[1].samples {
        assert!((s.eigenvalue + s.param).abs() < 1e-12);
    }
    assert_eq!(run.branches[0].last().rank, 1);
}

#[test]
fn avoided_crossing_keeps_sorted_order() {
    let delta = 0.1;
    let fam = toy(delta);
    let plan = SweepPlan::linear(-1.0, 1.0, 40, 2).unwrap();
    let run = continue_branches(&fam, &plan, |_| {}).unwrap();
    assert!(run.identity_permutation);
    for (sign, b) in [(-1.0, &run.branches[0]), (1.0, &run.branches[1])] {
        for s in &b.samples {
            let want = sign * (s.param * s.param + delta * delta).sqrt();
            assert!((s.eigenvalue - want).abs() < 1e-12);
        }
    }
}

fn schrodinger(kind: PotentialKind, l: f64, n: usize) -> SchrodingerFamily {
    let grid = Grid::new(1, l, n).unwrap();
    SchrodingerFamily::new(&grid, Potential::new(kind, 1)).unwrap()
}

#[test]
fn harmonic_branches_are_linear() {
    let fam = schrodinger(PotentialKind::Harmonic, 6.0, 1800);
    let plan = SweepPlan::geometric(1.0, 0.05, 30, 8).unwrap();
    let run = continue_branches(&fam, &plan, |_| {}).unwrap();
    assert!(run.identity_permutation);
    for b in &run.branches {
        assert!(b.is_alive());
        let w = (2 * b.id + 1) as f64;
        for s in &b.samples {
            assert!((s.eigenvalue - w * s.param).abs() <= 1e-3 * w * s.param, "j={} t={}", b.id, s.param);
            assert!((s.hf_slope - w).abs() <= 1e-3 * w, "j={} slope {}", b.id, s.hf_slope);
        }
        let est = limit_estimate(b).unwrap();
        assert!(est.value.abs() <= 1e-3 * w * 0.05, "limit {est:?}");
    }
}

#[test]
fn free_box_slopes() {
    let l = 1.0;
    let fam = schrodinger(PotentialKind::Zero, l, 400);
    let h = 2.0 * l / 401.0;
    for t in [0.3, 1.0] {
        let snap = fam.solve(t, 5).unwrap();
        for k in 1..=5 {
            let e = (k as f64 * PI / (2.0 * l)).powi(2);
            let want = 2.0 * t * e;
            let got = fam.hf_slope(&snap, k - 1);
            assert!((got - want).abs() <= 2.0 * t * e * e * h * h / 12.0 + 1e-9, "k={k}: {got} vs {want}");
        }
    }
}

#[test]
fn hellmann_feynman_matches_finite_difference() {
    let fam = schrodinger(PotentialKind::DoubleWell, 3.0, 600);
    for t in [0.05, 0.2, 0.7] {
        let snap = fam.solve(t, 10).unwrap();
        for j in 0..10 {
            let hf = fam.hf_slope(&snap, j);
            let fd = finite_difference_slope(&fam, t, j, 1e-4 * t).unwrap();
            assert!((hf - fd).abs() <= 1e-4 * (1.0 + hf.abs()), "t={t} j={j}: hf {hf} fd {fd}");
        }
    }
}

#[test]
fn slopes_integrate_to_value_change() {
    let fam = schrodinger(PotentialKind::DoubleWell, 3.0, 400);
    let plan = SweepPlan::geometric(1.0, 0.1, 160, 6).unwrap();
    let run = continue_branches(&fam, &plan, |_| {}).unwrap();
    for b in &run.branches {
        let change = b.last().eigenvalue - b.samples[0].eigenvalue;
        let integral = integrated_slope(b);
        assert!((integral - change).abs() <= 1e-3 * change.abs(), "j={}: {integral} vs {change}", b.id);
    }
}

#[test]
fn labels_are_consistent_with_snapshots() {
    let fam = schrodinger(PotentialKind::TiltedDoubleWell { tilt: 0.2 }, 3.0, 300);
    let plan = SweepPlan::geometric(1.0, 0.1, 30, 6).unwrap();
    let mut snaps: Vec<SpectrumSnapshot> = Vec::new();
    let run = continue_branches(&fam, &plan, |s| snaps.push(s.clone())).unwrap();
    for b in &run.branches {
        for s in &b.samples {
            let snap = snaps.iter().find(|x| x.param == s.param).unwrap();
            assert!(snap.values.iter().any(|v| (v - s.eigenvalue).abs() <= 1e-9));
            // monotone in t: the slope is 2t times a non-negative number
            assert!(s.hf_slope >= 0.0);
        }
        for w in b.samples.windows(2) {
            assert!(w[1].eigenvalue <= w[0].eigenvalue + 1e-10);
        }
    }
}

#[test]
fn reverse_sweep_reproduces_pairing() {
    let fam = toy(0.2);
    let plan = SweepPlan::linear(-1.0, 1.0, 30, 2).unwrap();
    let mut fwd_snaps: Vec<SpectrumSnapshot> = Vec::new();
    let mut back_snaps: Vec<SpectrumSnapshot> = Vec::new();
    let fwd = continue_branches(&fam, &plan, |s| fwd_snaps.push(s.clone())).unwrap();
    let back = continue_branches(&fam, &plan.reversed(), |s| back_snaps.push(s.clone())).unwrap();
    // the branch ending on pair r of the forward sweep is the one the reverse
    // sweep starts on pair r
    for f in &fwd.branches {
        let b = back.branches.iter().find(|b| b.samples[0].rank == f.last().rank).unwrap();
        for fs in &f.samples {
            let bs = b.samples.iter().find(|s| s.param == fs.param).unwrap();
            let fsnap = fwd_snaps.iter().find(|x| x.param == fs.param).unwrap();
            let bsnap = back_snaps.iter().find(|x| x.param == fs.param).unwrap();
            let u = &fsnap.vectors[fs.rank];
            let v = &bsnap.vectors[bs.rank];
            let ov: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().abs();
            assert!(ov >= 0.99, "t={}: overlap {ov}", fs.param);
            assert!((fs.eigenvalue - bs.eigenvalue).abs() < 1e-12);
        }
    }
}

fn sym(n: usize, raw: &[f64]) -> SymMatrix {
    SymMatrix::from_lower_fn(n, |i, j| raw[i * n + j]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn continuation_invariants(a in proptest::collection::vec(-1.0f64..1.0, 25), b in proptest::collection::vec(-1.0f64..1.0, 25)) {
        let fam = LinearMatrixFamily::new(sym(5, &a), sym(5, &b)).unwrap();
        let plan = SweepPlan::linear(0.0, 1.0, 25, 3).unwrap();
        let mut snaps: Vec<SpectrumSnapshot> = Vec::new();
        let run = continue_branches(&fam, &plan, |s| snaps.push(s.clone())).unwrap();
        for br in &run.branches {
            for w in br.samples.windows(2) {
                prop_assert!(w[1].param > w[0].param);
            }
            for s in &br.samples {
                prop_assert!((0.0..=1.0).contains(&s.overlap));
                if br.is_alive() {
                    prop_assert!(s.overlap >= 0.5);
                }
                let snap = snaps.iter().find(|x| x.param == s.param).unwrap();
                prop_assert!(snap.values.iter().any(|v| (v - s.eigenvalue).abs() <= 1e-9));
            }
        }
        // no two alive branches share a pair at any parameter
        for snap in &snaps {
            let mut ranks: Vec<usize> = run.branches.iter()
                .filter_map(|b| b.samples.iter().find(|s| s.param == snap.param).map(|s| s.rank))
                .collect();
            let len = ranks.len();
            ranks.sort();
            ranks.dedup();
            prop_assert_eq!(ranks.len(), len);
        }
    }
}

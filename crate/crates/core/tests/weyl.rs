use eigenbranch_core::branches::{sorted_branches, Branch, BranchSample, BranchStatus};
use eigenbranch_core::spectrum::{SpectralFamily, SpectrumSnapshot};
use eigenbranch_core::torus::{assemble_family, Profile, TorusGrid};
use eigenbranch_core::weyl::{
    contributing_bound, count, dwell_bound, integrated_remainder, measure_kappa, scaling_fit, weyl_constant_check, CountingTable,
};
use proptest::prelude::*;

fn exp_branch(id: usize, e0: f64, kappa: f64, tau0: f64, steps: usize) -> Branch {
    let samples = (0..=steps)
        .map(|k| {
            let tau = -tau0 + 2.0 * tau0 * k as f64 / steps as f64;
            let e = e0 * (kappa * tau).exp();
            BranchSample {
                param: tau,
                eigenvalue: e,
                gradient_energy: 0.0,
                hf_slope: kappa * e,
                overlap: 1.0,
                rank: id,
            }
        })
        .collect();
    Branch {
        id,
        samples,
        status: BranchStatus::Alive,
    }
}

fn snapshots_from(branches: &[Branch]) -> Vec<SpectrumSnapshot> {
    let n = branches[0].samples.len();
    (0..n)
        .map(|i| {
            let mut values: Vec<f64> = branches.iter().map(|b| b.samples[i].eigenvalue).collect();
            values.sort_by(f64::total_cmp);
            SpectrumSnapshot {
                param: branches[0].samples[i].param,
                vectors: vec![vec![]; values.len()],
                values,
                complete_below: f64::INFINITY,
                residual_norm: 0.0,
            }
        })
        .collect()
}

#[test]
fn counts_small_spectrum() {
    let snap = SpectrumSnapshot {
        param: 0.0,
        values: vec![1.0, 2.0, 3.0],
        vectors: vec![vec![]; 3],
        complete_below: f64::INFINITY,
        residual_norm: 0.0,
    };
    assert_eq!(count(&snap, 2.5), 2);
    assert_eq!(count(&snap, 3.0), 3);
}

#[test]
fn flat_torus_count_at_ten() {
    // lattice points a^2 + b^2 <= 10 on Z^2
    let lattice = (-4i32..=4).flat_map(|a| (-4i32..=4).map(move |b| a * a + b * b)).filter(|m| *m <= 10).count();
    assert_eq!(lattice, 37);
    let fam = assemble_family(TorusGrid::new(64).unwrap(), Profile::Zero, 0.0).unwrap();
    let snap = fam.solve_lowest(0.0, 45, None).unwrap();
    assert!(snap.complete_below > 10.0);
    assert_eq!(count(&snap, 10.0), 37);
}

#[test]
fn exponential_branch_dwell() {
    let tau0 = 0.2;
    let b = exp_branch(0, 10.0, 1.0, tau0, 40);
    // window inside the range
    let r = integrated_remainder(std::slice::from_ref(&b), tau0, 10.0, 0.5, None).unwrap();
    let want = (10.5f64 / 9.5).ln();
    assert!((r.value - want).abs() < 1e-7, "{} vs {want}", r.value);
    assert_eq!(r.crossings(), 2);
    assert!((r.dwells[0].length - dwell_bound(10.0, 0.5, 1.0)).abs() < 1e-7);
    // window covering the whole branch
    let r = integrated_remainder(std::slice::from_ref(&b), tau0, 10.0, 5.0, None).unwrap();
    assert!((r.value - 2.0 * tau0).abs() < 1e-12);
    assert_eq!(r.crossings(), 0);
    // window missing the branch
    let r = integrated_remainder(std::slice::from_ref(&b), tau0, 30.0, 1.0, None).unwrap();
    assert_eq!(r.value, 0.0);
    assert_eq!(r.contributing(), 0);
}

#[test]
fn decreasing_branch_mirrors_increasing() {
    let tau0 = 0.3;
    let up = exp_branch(0, 7.0, 1.3, tau0, 30);
    let down = exp_branch(0, 7.0, -1.3, tau0, 30);
    for (e, m) in [(7.0, 0.4), (8.5, 0.6), (5.5, 0.2)] {
        let a = integrated_remainder(std::slice::from_ref(&up), tau0, e, m, None).unwrap();
        let b = integrated_remainder(std::slice::from_ref(&down), tau0, e, m, None).unwrap();
        assert!((a.value - b.value).abs() < 1e-9);
        assert!((a.dwells[0].enter + b.dwells[0].exit).abs() < 1e-9);
    }
}

#[test]
fn nonmonotone_branches_are_excluded() {
    let mut b = exp_branch(3, 5.0, 1.0, 0.2, 20);
    b.samples[10].hf_slope = -1.0;
    let r = integrated_remainder(&[b], 0.2, 5.0, 0.5, None).unwrap();
    assert_eq!(r.excluded_nonmonotone, vec![3]);
    assert!(r.dwells.is_empty());
}

#[test]
fn quadrature_matches_interval_measure() {
    let tau0 = 0.25;
    let branches: Vec<Branch> = (0..12).map(|j| exp_branch(j, 2.0 + 0.9 * j as f64, -(0.8 + 0.05 * j as f64), tau0, 40)).collect();
    let snaps = snapshots_from(&branches);
    let energies: Vec<f64> = (0..8).map(|k| 4.0 + 0.9 * k as f64).collect();
    let table = CountingTable::from_snapshots(&snaps, &energies, 0.5).unwrap();
    let h = table.tau_step();
    for (k, &e) in energies.iter().enumerate() {
        let exact = integrated_remainder(&branches, tau0, e, 0.5, None).unwrap();
        let bound = h * exact.crossings().max(1) as f64;
        assert!((table.integrated[k] - exact.value).abs() <= bound, "E={e}: {} vs {}", table.integrated[k], exact.value);
    }
    let mid = table.row_near(0.0);
    assert_eq!(table.taus[mid], 0.0);
}

#[test]
fn bounds_hold_on_a_conformal_family() {
    let tau0 = 0.2;
    let fam = assemble_family(TorusGrid::new(16).unwrap(), Profile::Cosine { amplitude: 0.5 }, tau0).unwrap();
    let taus: Vec<f64> = (0..=20).map(|k| -tau0 + 2.0 * tau0 * k as f64 / 20.0).collect();
    let snaps: Vec<SpectrumSnapshot> = taus.iter().map(|&t| fam.solve_at(t).unwrap()).collect();
    let branches = sorted_branches(&fam, &snaps, 60);
    let (e, m) = (8.0, 1.0);
    let positive: Vec<Branch> = branches[1..].to_vec();
    let kappa = measure_kappa(&positive, e - m, e + m).unwrap();
    assert!(kappa > 0.0);
    let mut calls = 0;
    let mut refine = |j: usize, tau: f64| {
        calls += 1;
        let s = fam.solve(tau, j + 1)?;
        Ok((s.values[j], fam.hf_slope(&s, j)))
    };
    let r = integrated_remainder(&positive, tau0, e, m, Some(&mut refine)).unwrap();
    assert!(calls > 0);
    assert!(r.max_refined_residual.unwrap() < 1e-7 * e, "{:?}", r.max_refined_residual);
    assert!(r.excluded_nonmonotone.is_empty());
    let bound = dwell_bound(e, m, kappa);
    for d in &r.dwells {
        assert!(d.length <= bound + 1e-6, "branch {}: {} > {bound}", d.branch, d.length);
    }
    // the branches decrease in τ, so they are lowest at +τ0
    assert!(r.contributing() <= contributing_bound(snaps.last().unwrap(), e, m).unwrap());
    let unrefined = integrated_remainder(&positive, tau0, e, m, None).unwrap();
    assert!((unrefined.value - r.value).abs() < 1e-4);
}

#[test]
fn weyl_constant_on_flat_torus() {
    // coarse grid: few levels below the trust cutoff, so lattice fluctuations are large
    let fam = assemble_family(TorusGrid::new(32).unwrap(), Profile::Zero, 0.0).unwrap();
    let snap = fam.solve_at(0.0).unwrap();
    let hi = fam.grid().trust_cutoff();
    let check = weyl_constant_check(&snap, fam.volume(0.0), hi / 2.0, hi, 32).unwrap();
    assert!((check.predicted - std::f64::consts::PI).abs() < 1e-12);
    assert!(check.worst_relative_error < 0.25, "{}", check.worst_relative_error);
    assert_eq!(check.ratios.len(), 32);
}

#[test]
fn incomplete_snapshot_is_refused() {
    let fam = assemble_family(TorusGrid::new(32).unwrap(), Profile::Zero, 0.0).unwrap();
    let snap = fam.solve_lowest(0.0, 10, None).unwrap();
    assert!(CountingTable::from_snapshots(&[snap], &[200.0], 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_laws_are_recovered(c in 0.1f64..10.0, a in -1.0f64..2.0, lo in 0.5f64..5.0) {
        let es: Vec<f64> = (0..10).map(|k| lo * 1.3f64.powi(k)).collect();
        let ys: Vec<f64> = es.iter().map(|e| c * e.powf(a)).collect();
        let fit = scaling_fit(&es, &ys, false).unwrap();
        prop_assert!((fit.slope - a).abs() < 1e-9);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-8);
    }

    #[test]
    fn dwell_never_exceeds_bound(e0 in 2.0f64..20.0, kappa in 0.2f64..3.0, e in 3.0f64..15.0, frac in 0.01f64..0.5) {
        let tau0 = 0.3;
        let b = exp_branch(0, e0, kappa, tau0, 30);
        let m = frac * e;
        let r = integrated_remainder(&[b], tau0, e, m, None).unwrap();
        prop_assert!(r.value <= dwell_bound(e, m, kappa).min(2.0 * tau0) + 1e-7);
        prop_assert!(r.value >= 0.0);
    }
}

//! Analytic eigenbranches followed through a parameter sweep.
//!
//! Sorted eigenvalue labels swap at every crossing; analytic branches do not.
//! Continuation keeps a branch attached to the eigenvector it had at the
//! previous step by maximizing mass-weighted overlaps, halving the step
//! whenever the best overlap looks doubtful.

use serde::Serialize;
use thiserror::Error;

use crate::spectrum::{normalized_overlap, SpectralError, SpectralFamily, SpectrumSnapshot};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BranchError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("sweep plan needs at least two parameters")]
    EmptyPlan,
    #[error("sweep parameters must be strictly monotone (violated at index {index})")]
    NonMonotonePlan { index: usize },
    #[error("cannot track {requested} branches: spectrum has {available} pairs")]
    TooManyBranches { requested: usize, available: usize },
    #[error("{what}: need at least {needed} samples, have {have}")]
    TooFewSamples { what: &'static str, needed: usize, have: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchSample {
    pub param: f64,
    pub eigenvalue: f64,
    pub gradient_energy: f64,
    pub hf_slope: f64,
    /// Overlap with the vector at the previous sample; 1 at the first one.
    pub overlap: f64,
    /// Position of the matched pair in the sorted snapshot.
    pub rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase", tag = "status")]
pub enum BranchStatus {
    Alive,
    Lost { param: f64, overlap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Branch {
    pub id: usize,
    pub samples: Vec<BranchSample>,
    pub status: BranchStatus,
}

impl Branch {
    pub fn is_alive(&self) -> bool {
        self.status == BranchStatus::Alive
    }

    pub fn params(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.param).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.eigenvalue).collect()
    }

    pub fn last(&self) -> &BranchSample {
        self.samples.last().expect("branches always carry a first sample")
    }
}

/// Parameters to visit and how many branches to follow.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    params: Vec<f64>,
    branches: usize,
    /// Overlap below which a step is halved.
    pub refine_below: f64,
    /// Overlap below which a branch is declared lost once refinement is
    /// exhausted.
    pub lost_below: f64,
    pub max_halvings: usize,
    /// Extra pairs solved beyond the tracked count so that a branch moving
    /// upwards still finds its partner.
    pub guard: usize,
    /// Relative eigenvalue gap below which new pairs are matched as one
    /// subspace rather than one by one.
    pub cluster_tol: f64,
}

impl SweepPlan {
    pub fn new(params: Vec<f64>, branches: usize) -> Result<Self, BranchError> {
        if params.len() < 2 {
            return Err(BranchError::EmptyPlan);
        }
        let dir = (params[1] - params[0]).signum();
        for i in 1..params.len() {
            let d = params[i] - params[i - 1];
            if !(d.signum() == dir && d != 0.0 && d.is_finite()) {
                return Err(BranchError::NonMonotonePlan { index: i });
            }
        }
        if branches == 0 {
            return Err(BranchError::TooManyBranches { requested: 0, available: 0 });
        }
        Ok(SweepPlan {
            params,
            branches,
            refine_below: 0.9,
            lost_below: 0.5,
            max_halvings: 10,
            guard: 4,
            cluster_tol: 1e-6,
        })
    }

    /// `steps + 1` points from `from` to `to`, geometrically spaced.
    pub fn geometric(from: f64, to: f64, steps: usize, branches: usize) -> Result<Self, BranchError> {
        if !(from > 0.0 && to > 0.0) || steps == 0 {
            return Err(BranchError::EmptyPlan);
        }
        let r = (to / from).ln() / steps as f64;
        let mut params: Vec<f64> = (0..=steps).map(|k| from * (r * k as f64).exp()).collect();
        params[steps] = to;
        SweepPlan::new(params, branches)
    }

    /// `steps + 1` equally spaced points from `from` to `to`.
    pub fn linear(from: f64, to: f64, steps: usize, branches: usize) -> Result<Self, BranchError> {
        if steps == 0 {
            return Err(BranchError::EmptyPlan);
        }
        let params = (0..=steps).map(|k| from + (to - from) * k as f64 / steps as f64).collect();
        SweepPlan::new(params, branches)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn branch_count(&self) -> usize {
        self.branches
    }

    pub fn reversed(&self) -> Self {
        let mut p = self.clone();
        p.params.reverse();
        p
    }
}

#[derive(Debug, Clone)]
pub struct Continuation {
    pub branches: Vec<Branch>,
    /// Every accepted step matched branch `i` to sorted pair `i`.
    pub identity_permutation: bool,
    /// Number of step halvings performed.
    pub halvings: usize,
}

/// Follows the lowest `plan.branch_count()` pairs at the first parameter
/// through the sweep. `observer` sees every accepted snapshot, including
/// those at refined intermediate parameters.
pub fn continue_branches<F, O>(family: &F, plan: &SweepPlan, mut observer: O) -> Result<Continuation, BranchError>
where
    F: SpectralFamily + ?Sized,
    O: FnMut(&SpectrumSnapshot),
{
    let m = plan.branches;
    let count = (m + plan.guard).min(family.dim());
    if m > family.dim() {
        return Err(BranchError::TooManyBranches {
            requested: m,
            available: family.dim(),
        });
    }
    let mut prev = family.solve(plan.params[0], count)?;
    if prev.len() < m {
        return Err(BranchError::TooManyBranches {
            requested: m,
            available: prev.len(),
        });
    }
    observer(&prev);
    let mut branches: Vec<Branch> = (0..m)
        .map(|j| Branch {
            id: j,
            samples: vec![sample(family, &prev, j, 1.0)],
            status: BranchStatus::Alive,
        })
        .collect();
    // index of each branch's pair in `prev`
    let mut slot: Vec<Option<usize>> = (0..m).map(Some).collect();
    let mut identity = true;
    let mut halvings = 0;

    for &target in &plan.params[1..] {
        let mut start = prev.param;
        while start != target {
            let mut next_param = target;
            let mut tries = 0;
            let (snap, assignment) = loop {
                let snap = family.solve_near(next_param, count, Some(&prev))?;
                if snap.len() < m {
                    return Err(BranchError::TooManyBranches {
                        requested: m,
                        available: snap.len(),
                    });
                }
                let assignment = match_step(family, &prev, &snap, &branches, &slot, plan.cluster_tol);
                let worst = assignment
                    .iter()
                    .zip(&slot)
                    .filter(|(_, s)| s.is_some())
                    .map(|(a, _)| a.map_or(0.0, |(_, o)| o))
                    .fold(1.0, f64::min);
                if worst >= plan.refine_below || tries >= plan.max_halvings {
                    break (snap, assignment);
                }
                tries += 1;
                halvings += 1;
                next_param = 0.5 * (start + next_param);
            };
            for (b, branch) in branches.iter_mut().enumerate() {
                if slot[b].is_none() {
                    continue;
                }
                match assignment[b] {
                    Some((k, overlap)) if overlap >= plan.lost_below => {
                        if k != b {
                            identity = false;
                        }
                        branch.samples.push(sample(family, &snap, k, overlap));
                        slot[b] = Some(k);
                    }
                    other => {
                        branch.status = BranchStatus::Lost {
                            param: snap.param,
                            overlap: other.map_or(0.0, |(_, o)| o),
                        };
                        slot[b] = None;
                        identity = false;
                    }
                }
            }
            observer(&snap);
            start = snap.param;
            prev = snap;
        }
    }
    Ok(Continuation {
        branches,
        identity_permutation: identity,
        halvings,
    })
}

fn sample<F: SpectralFamily + ?Sized>(family: &F, snap: &SpectrumSnapshot, k: usize, overlap: f64) -> BranchSample {
    BranchSample {
        param: snap.param,
        eigenvalue: snap.values[k],
        gradient_energy: family.gradient_energy(&snap.vectors[k]),
        hf_slope: family.hf_slope(snap, k),
        overlap,
        rank: k,
    }
}

/// Greedy assignment of alive branches to pairs of `next`. Returns, per
/// branch, the claimed index and its overlap.
fn match_step<F: SpectralFamily + ?Sized>(
    family: &F,
    prev: &SpectrumSnapshot,
    next: &SpectrumSnapshot,
    branches: &[Branch],
    slot: &[Option<usize>],
    cluster_tol: f64,
) -> Vec<Option<(usize, f64)>> {
    let clusters = next.clusters(cluster_tol);
    // squared overlaps, summed over each cluster: the projector onto its span
    let mut scores: Vec<(f64, usize, usize)> = Vec::new();
    for (b, s) in slot.iter().enumerate() {
        let Some(old) = s else { continue };
        let u = &prev.vectors[*old];
        for (c, range) in clusters.iter().enumerate() {
            let score: f64 = range
                .clone()
                .map(|k| normalized_overlap(family, next.param, u, &next.vectors[k]).powi(2))
                .sum();
            if score > 1e-6 {
                scores.push((score.min(1.0), b, c));
            }
        }
    }
    // highest score first; ties resolved by branch id, then cluster index
    scores.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut capacity: Vec<usize> = clusters.iter().map(|r| r.len()).collect();
    let mut claimed: Vec<Option<(usize, f64)>> = vec![None; branches.len()];
    for &(score, b, c) in &scores {
        if claimed[b].is_some() || capacity[c] == 0 {
            continue;
        }
        capacity[c] -= 1;
        claimed[b] = Some((c, score.sqrt()));
    }
    // inside each cluster, order branches by predicted value then slope and
    // hand out members in sorted order
    let dp = next.param - prev.param;
    let mut out: Vec<Option<(usize, f64)>> = vec![None; branches.len()];
    for (c, range) in clusters.iter().enumerate() {
        let mut members: Vec<usize> = (0..branches.len()).filter(|&b| matches!(claimed[b], Some((cc, _)) if cc == c)).collect();
        if members.is_empty() {
            continue;
        }
        members.sort_by(|&a, &b| {
            let pa = branches[a].last();
            let pb = branches[b].last();
            let ea = pa.eigenvalue + pa.hf_slope * dp;
            let eb = pb.eigenvalue + pb.hf_slope * dp;
            ea.total_cmp(&eb)
                .then((pa.hf_slope * dp.signum()).total_cmp(&(pb.hf_slope * dp.signum())))
                .then(a.cmp(&b))
        });
        let mut slots: Vec<usize> = range.clone().collect();
        if members.len() < slots.len() {
            // leave out the members that least resemble any claimant
            slots.sort_by(|&x, &y| {
                let wx: f64 = members.iter().map(|&b| overlap_sq(family, prev, next, slot[b], x)).sum();
                let wy: f64 = members.iter().map(|&b| overlap_sq(family, prev, next, slot[b], y)).sum();
                wy.total_cmp(&wx).then(x.cmp(&y))
            });
            slots.truncate(members.len());
            slots.sort();
        }
        for (&b, &k) in members.iter().zip(&slots) {
            out[b] = Some((k, claimed[b].expect("member has a claim").1));
        }
    }
    out
}

fn overlap_sq<F: SpectralFamily + ?Sized>(family: &F, prev: &SpectrumSnapshot, next: &SpectrumSnapshot, old: Option<usize>, k: usize) -> f64 {
    old.map_or(0.0, |o| normalized_overlap(family, next.param, &prev.vectors[o], &next.vectors[k]).powi(2))
}

/// Branches by sorted label: branch `j` takes the `j`-th eigenvalue of every
/// snapshot. For families whose branches are all monotone in the same
/// direction, the order statistics are themselves monotone and are what the
/// windowed counts see, so no matching is needed.
pub fn sorted_branches<F: SpectralFamily + ?Sized>(family: &F, snapshots: &[SpectrumSnapshot], count: usize) -> Vec<Branch> {
    (0..count)
        .map(|j| Branch {
            id: j,
            samples: snapshots
                .iter()
                .filter(|s| j < s.len())
                .map(|s| sample(family, s, j, 1.0))
                .collect(),
            status: BranchStatus::Alive,
        })
        .collect()
}

/// Centered difference of the `j`-th sorted eigenvalue with fresh solves at
/// `param ± step`.
pub fn finite_difference_slope<F: SpectralFamily + ?Sized>(family: &F, param: f64, j: usize, step: f64) -> Result<f64, BranchError> {
    let plus = family.solve(param + step, j + 1)?;
    let minus = family.solve(param - step, j + 1)?;
    Ok((plus.values[j] - minus.values[j]) / (2.0 * step))
}

/// Trapezoid integral of the recorded slopes along the branch.
pub fn integrated_slope(branch: &Branch) -> f64 {
    branch
        .samples
        .windows(2)
        .map(|w| 0.5 * (w[0].hf_slope + w[1].hf_slope) * (w[1].param - w[0].param))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LimitEstimate {
    pub value: f64,
    pub width: f64,
    /// The branch was lost before the end of the sweep; `value` is its last
    /// sample.
    pub lost: bool,
    /// Samples used from the last decade of the parameter.
    pub samples: usize,
}

/// Limit of `E(t)` as `t → 0` from the samples with `t <= 10 t_min`.
///
/// Consecutive pairs are extrapolated linearly to `t = 0`; the estimate is
/// the extrapolant of the two smallest `t` and the width is the spread of all
/// extrapolants over the decade.
pub fn limit_estimate(branch: &Branch) -> Result<LimitEstimate, BranchError> {
    if !branch.is_alive() {
        return Ok(LimitEstimate {
            value: branch.last().eigenvalue,
            width: f64::INFINITY,
            lost: true,
            samples: 0,
        });
    }
    let mut tail: Vec<(f64, f64)> = branch.samples.iter().map(|s| (s.param, s.eigenvalue)).collect();
    tail.sort_by(|a, b| a.0.total_cmp(&b.0));
    let t_min = tail[0].0;
    tail.retain(|(t, _)| *t <= 10.0 * t_min * (1.0 + 1e-12));
    if tail.len() < 2 {
        return Err(BranchError::TooFewSamples {
            what: "limit estimate",
            needed: 2,
            have: tail.len(),
        });
    }
    let extrapolants: Vec<f64> = tail
        .windows(2)
        .map(|w| {
            let (t0, e0) = w[0];
            let (t1, e1) = w[1];
            e0 - t0 * (e1 - e0) / (t1 - t0)
        })
        .collect();
    let lo = extrapolants.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = extrapolants.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(LimitEstimate {
        value: extrapolants[0],
        width: hi - lo,
        lost: false,
        samples: tail.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn branch_from(points: &[(f64, f64)]) -> Branch {
        Branch {
            id: 0,
            samples: points
                .iter()
                .map(|&(param, eigenvalue)| BranchSample {
                    param,
                    eigenvalue,
                    gradient_energy: 0.0,
                    hf_slope: 0.0,
                    overlap: 1.0,
                    rank: 0,
                })
                .collect(),
            status: BranchStatus::Alive,
        }
    }

    #[test]
    fn constant_branch_limit() {
        let b = branch_from(&[(1.0, 5.0), (0.5, 5.0), (0.1, 5.0), (0.05, 5.0)]);
        let est = limit_estimate(&b).unwrap();
        assert_eq!(est.value, 5.0);
        assert_eq!(est.width, 0.0);
        assert_eq!(est.samples, 3);
    }

    #[test]
    fn linear_branch_extrapolates_to_intercept() {
        let pts: Vec<(f64, f64)> = (0..20).map(|k| {
            let t = 0.5 * 0.8f64.powi(k);
            (t, 2.0 + 3.0 * t)
        }).collect();
        let est = limit_estimate(&branch_from(&pts)).unwrap();
        assert!((est.value - 2.0).abs() < 1e-12);
        assert!(est.width < 1e-12);
    }

    #[test]
    fn plan_validation() {
        assert!(SweepPlan::new(vec![1.0], 1).is_err());
        assert!(matches!(SweepPlan::new(vec![1.0, 0.5, 0.7], 1), Err(BranchError::NonMonotonePlan { index: 2 })));
        let p = SweepPlan::geometric(1.0, 0.05, 10, 3).unwrap();
        assert_eq!(p.params().len(), 11);
        assert_eq!(p.params()[10], 0.05);
    }

    #[test]
    fn lost_branch_is_flagged() {
        let mut b = branch_from(&[(1.0, 2.0), (0.5, 1.5)]);
        b.status = BranchStatus::Lost { param: 0.25, overlap: 0.3 };
        let est = limit_estimate(&b).unwrap();
        assert!(est.lost);
        assert_eq!(est.value, 1.5);
    }
}

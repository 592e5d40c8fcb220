//! Table harness: fans independent (instance, seed) solves out over the
//! rayon pool and aggregates per configuration.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::write_report;
use crate::problems::onmf::{gen_onmf, onmf_solve, resi, OnmfModel};
use crate::problems::projection::{gap, gen_projection, projection_solve};
use crate::problems::Preset;

/// A run counts as a success when its gap is at most this.
pub const SUCCESS_GAP: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjRun {
    pub n: usize,
    pub k: usize,
    pub xi: f64,
    pub seed: u64,
    pub gap: f64,
    pub feasi: f64,
    /// Inner gradient-projection iterations summed over the outer loop.
    pub nproj: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjRow {
    pub n: usize,
    pub k: usize,
    pub xi: f64,
    pub runs: usize,
    pub suc: usize,
    pub gap_mean: f64,
    pub gap_max: f64,
    pub feasi_max: f64,
    pub seconds_mean: f64,
    pub nproj_mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnmfRun {
    pub n: usize,
    pub r: usize,
    pub k: usize,
    pub xi: f64,
    pub seed: u64,
    pub feasi: f64,
    pub resi: f64,
    /// `||A - B B^T A||_F` at the generating factor.
    pub resi_reference: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnmfRow {
    pub n: usize,
    pub r: usize,
    pub k: usize,
    pub xi: f64,
    pub runs: usize,
    pub feasi_max: f64,
    pub resi_mean: f64,
    pub resi_reference_mean: f64,
    pub seconds_mean: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}

fn save_runs<T: Serialize + Sync>(runs: &[T], name: impl Fn(&T) -> String + Sync, dir: Option<&Path>) -> Result<()> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
        runs.par_iter().try_for_each(|r| write_report(&dir.join(name(r)), r))?;
    }
    Ok(())
}

/// One projection solve per `(n, k, xi, seed)`.
pub fn projection_runs(ns: &[usize], ks: &[usize], xis: &[f64], seeds: &[u64], preset: &Preset) -> Result<Vec<ProjRun>> {
    let mut jobs = Vec::new();
    for &n in ns {
        for &k in ks {
            for &xi in xis {
                for &seed in seeds {
                    jobs.push((n, k, xi, seed));
                }
            }
        }
    }
    jobs.into_par_iter()
        .map(|(n, k, xi, seed)| {
            let inst = gen_projection(n, k, xi, seed)?;
            let rep = projection_solve(&inst.c, preset)?;
            let x_star = inst.x_star.as_ref().expect("generated instances carry their solution");
            Ok(ProjRun {
                n,
                k,
                xi,
                seed,
                gap: gap(&rep.x, x_star, &inst.c),
                feasi: rep.feasi,
                nproj: rep.total_inner_iterations(),
                seconds: rep.seconds,
            })
        })
        .collect()
}

pub fn aggregate_projection(runs: &[ProjRun]) -> Vec<ProjRow> {
    let mut keys: Vec<(usize, usize, f64)> = Vec::new();
    for r in runs {
        if !keys.iter().any(|&(n, k, xi)| (n, k, xi) == (r.n, r.k, r.xi)) {
            keys.push((r.n, r.k, r.xi));
        }
    }
    keys.into_iter()
        .map(|(n, k, xi)| {
            let group: Vec<&ProjRun> = runs.iter().filter(|r| (r.n, r.k, r.xi) == (n, k, xi)).collect();
            ProjRow {
                n,
                k,
                xi,
                runs: group.len(),
                suc: group.iter().filter(|r| r.gap <= SUCCESS_GAP).count(),
                gap_mean: mean(group.iter().map(|r| r.gap)),
                gap_max: group.iter().map(|r| r.gap).fold(f64::NEG_INFINITY, f64::max),
                feasi_max: group.iter().map(|r| r.feasi).fold(0.0, f64::max),
                seconds_mean: mean(group.iter().map(|r| r.seconds)),
                nproj_mean: mean(group.iter().map(|r| r.nproj as f64)),
            }
        })
        .collect()
}

/// Projection table; per-run reports go to `out_dir` when given.
pub fn table_proj(ns: &[usize], ks: &[usize], xis: &[f64], seeds: &[u64], preset: &Preset, out_dir: Option<&Path>) -> Result<Vec<ProjRow>> {
    let runs = projection_runs(ns, ks, xis, seeds, preset)?;
    save_runs(&runs, |r| format!("proj_n{}_k{}_xi{}_s{}.json", r.n, r.k, r.xi, r.seed), out_dir)?;
    Ok(aggregate_projection(&runs))
}

pub fn onmf_runs(n: usize, r: usize, k: usize, xis: &[f64], seeds: &[u64], preset: &Preset) -> Result<Vec<OnmfRun>> {
    let jobs: Vec<(f64, u64)> = xis.iter().flat_map(|&xi| seeds.iter().map(move |&s| (xi, s))).collect();
    jobs.into_par_iter()
        .map(|(xi, seed)| {
            let inst = gen_onmf(n, r, k, xi, seed)?;
            let res = onmf_solve(&inst, preset, OnmfModel::GaussNewton)?;
            let b = inst.b.as_ref().expect("generated instances carry their factor");
            Ok(OnmfRun {
                n,
                r,
                k,
                xi,
                seed,
                feasi: res.report.feasi,
                resi: res.resi,
                resi_reference: resi(&inst.a, b)?,
                seconds: res.report.seconds,
            })
        })
        .collect()
}

pub fn aggregate_onmf(runs: &[OnmfRun]) -> Vec<OnmfRow> {
    let mut xis: Vec<f64> = Vec::new();
    for r in runs {
        if !xis.contains(&r.xi) {
            xis.push(r.xi);
        }
    }
    xis.into_iter()
        .map(|xi| {
            let group: Vec<&OnmfRun> = runs.iter().filter(|r| r.xi == xi).collect();
            let first = group[0];
            OnmfRow {
                n: first.n,
                r: first.r,
                k: first.k,
                xi,
                runs: group.len(),
                feasi_max: group.iter().map(|r| r.feasi).fold(0.0, f64::max),
                resi_mean: mean(group.iter().map(|r| r.resi)),
                resi_reference_mean: mean(group.iter().map(|r| r.resi_reference)),
                seconds_mean: mean(group.iter().map(|r| r.seconds)),
            }
        })
        .collect()
}

/// Synthetic ONMF table over noise levels.
pub fn table_onmf(n: usize, r: usize, k: usize, xis: &[f64], seeds: &[u64], preset: &Preset, out_dir: Option<&Path>) -> Result<Vec<OnmfRow>> {
    let runs = onmf_runs(n, r, k, xis, seeds, preset)?;
    save_runs(&runs, |x| format!("onmf_n{}_r{}_k{}_xi{}_s{}.json", x.n, x.r, x.k, x.xi, x.seed), out_dir)?;
    Ok(aggregate_onmf(&runs))
}

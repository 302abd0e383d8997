//! Ito integrals, Girsanov exponentials and Monte Carlo checks of the
//! change-of-variables and entropy identities.
//!
//! All drifts in the catalog are adapted, so the divergence and the Ito
//! integral coincide at the discrete level; a single Ito-sum implementation
//! serves both.

use rayon::prelude::*;

use crate::drift::{drift_to_cm, AdaptedDrift};
use crate::error::Result;
use crate::paths::{check_same_grid, CameronMartinVector, RandomSource, TimeGrid, WienerPath};
use crate::stats::{McEstimate, TailDiagnostics};

/// Per-path Girsanov data. The weight is carried in log space; `rho()`
/// exponentiates at use and reports overflow explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GirsanovWeight {
    /// Ito sum of the drift density against the increments.
    pub delta0_u: f64,
    /// |u|_H^2.
    pub h_norm_sq: f64,
    /// log rho = -delta0_u - h_norm_sq / 2.
    pub log_rho: f64,
}

impl GirsanovWeight {
    pub fn rho(&self) -> f64 {
        self.log_rho.exp()
    }

    /// True when exponentiating the log-weight overflows to infinity.
    pub fn overflowed(&self) -> bool {
        !self.rho().is_finite()
    }
}

/// Left-endpoint Ito sum: sum_i density[i] * DW_i.
pub fn ito_integral(u: &CameronMartinVector, w: &WienerPath) -> Result<f64> {
    check_same_grid(u.grid(), w.grid())?;
    Ok(u.density()
        .iter()
        .zip(w.increments())
        .map(|(d, dw)| d * dw)
        .sum())
}

pub fn girsanov_weight(d: &dyn AdaptedDrift, w: &WienerPath) -> GirsanovWeight {
    let u = drift_to_cm(d, w);
    let delta0_u = ito_integral(&u, w).expect("same grid by construction");
    let h_norm_sq = u.h_norm_sq();
    GirsanovWeight {
        delta0_u,
        h_norm_sq,
        log_rho: -delta0_u - 0.5 * h_norm_sq,
    }
}

/// Per-path sampling over streams `0..n_paths` of `source`, in parallel,
/// merged in index order so the result is independent of thread count.
pub fn map_paths<T, F>(grid: &TimeGrid, source: RandomSource, n_paths: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&WienerPath) -> T + Sync,
{
    (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let w = WienerPath::sample(grid, RandomSource::new(source.seed, source.stream + k as u64));
            f(&w)
        })
        .collect()
}

/// Monte Carlo estimate of E[rho(-delta u)] with tail diagnostics.
pub fn expect_rho(
    d: &dyn AdaptedDrift,
    grid: &TimeGrid,
    n_paths: usize,
    source: RandomSource,
) -> (McEstimate, TailDiagnostics) {
    let rhos = map_paths(grid, source, n_paths, |w| girsanov_weight(d, w).rho());
    (
        McEstimate::from_samples(rhos.iter().copied()),
        TailDiagnostics::from_samples(&rhos),
    )
}

/// Estimates of E[rho log rho] and of (1/2) E[rho |u|_H^2], which agree in
/// expectation for adapted drifts.
pub fn entropy_identity_check(
    d: &dyn AdaptedDrift,
    grid: &TimeGrid,
    n_paths: usize,
    source: RandomSource,
) -> (McEstimate, McEstimate) {
    let pairs = map_paths(grid, source, n_paths, |w| {
        let gw = girsanov_weight(d, w);
        let rho = gw.rho();
        (rho * gw.log_rho, 0.5 * rho * gw.h_norm_sq)
    });
    (
        McEstimate::from_samples(pairs.iter().map(|p| p.0)),
        McEstimate::from_samples(pairs.iter().map(|p| p.1)),
    )
}

/// (E[f(U(w)) rho(w)], E[f(w)]) over the same sampled paths.
pub fn change_of_var_check<F>(
    d: &dyn AdaptedDrift,
    grid: &TimeGrid,
    f: F,
    n_paths: usize,
    source: RandomSource,
) -> (McEstimate, McEstimate)
where
    F: Fn(&WienerPath) -> f64 + Sync,
{
    let pairs = map_paths(grid, source, n_paths, |w| {
        let pushed = crate::inversion::forward_map(d, w);
        let rho = girsanov_weight(d, w).rho();
        (f(&pushed) * rho, f(w))
    });
    (
        McEstimate::from_samples(pairs.iter().map(|p| p.0)),
        McEstimate::from_samples(pairs.iter().map(|p| p.1)),
    )
}

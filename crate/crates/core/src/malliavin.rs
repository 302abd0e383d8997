//! Discretized Malliavin derivative matrices, Hilbert-Schmidt and operator
//! norms, the Carleman-Fredholm determinant and inequality, and
//! Ornstein-Uhlenbeck (Mehler) smoothing of drifts.
//!
//! Conventions: the matrix M holds the kernel M[i][j] = d udot(t_i) / d DW_j.
//! The operator on H in increment coordinates is A = M * dt, so that
//! hs_norm_sq = sum M^2 dt^2 discretizes the double integral of the kernel
//! squared. The ou drift closed form a^2/2 pins this scaling.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;

use crate::drift::{AdaptedDrift, DynDrift};
use crate::error::{invalid, LabError, Result};
use crate::paths::{RandomSource, WienerPath};

/// Default finite-difference step on increments.
pub const DEFAULT_FD_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelProvenance {
    FiniteDifference,
    Analytic,
}

/// Dense kernel matrix of the Malliavin derivative of a drift on one path.
#[derive(Debug, Clone)]
pub struct MalliavinMatrix {
    dt: f64,
    entries: DMatrix<f64>,
    pub provenance: KernelProvenance,
}

impl MalliavinMatrix {
    pub fn new(dt: f64, entries: DMatrix<f64>, provenance: KernelProvenance) -> Self {
        Self {
            dt,
            entries,
            provenance,
        }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// The operator A = M * dt acting on increment coordinates.
    pub fn operator(&self) -> DMatrix<f64> {
        &self.entries * self.dt
    }

    /// sum M[i][j]^2 dt^2, the discrete double integral of the kernel squared.
    pub fn hs_norm_sq(&self) -> f64 {
        let d2 = self.dt * self.dt;
        self.entries.iter().map(|m| m * m * d2).sum()
    }

    /// max over j >= i of |M[i][j]|; zero for exactly adapted kernels.
    pub fn adaptedness_defect(&self) -> f64 {
        let n = self.n();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max(self.entries[(i, j)].abs());
            }
        }
        worst
    }

    /// Carleman-Fredholm determinant det(I + A) exp(-trace A) of A = M dt.
    pub fn det2(&self) -> f64 {
        det2_of(&self.operator())
    }

    /// sup over rows of the largest kernel entry magnitude in the row;
    /// the pathwise Lipschitz proxy sup_s sup_r |d udot_s / d wdot_r|.
    pub fn row_sup(&self) -> f64 {
        self.entries.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Central-difference kernel: M[i][j] = [udot_i(w + eps e_j) - udot_i(w - eps e_j)] / 2 eps.
pub fn malliavin_matrix_fd(
    d: &dyn AdaptedDrift,
    w: &WienerPath,
    eps: f64,
) -> Result<MalliavinMatrix> {
    if eps <= 0.0 {
        return Err(invalid("finite-difference step must be positive"));
    }
    let n = w.grid().n();
    let mut entries = DMatrix::zeros(n, n);
    let mut incs = w.increments().to_vec();
    for j in 0..n {
        let saved = incs[j];
        incs[j] = saved + eps;
        let up = d.density_all(&WienerPath::from_increments(w.grid().clone(), incs.clone())?);
        incs[j] = saved - eps;
        let down = d.density_all(&WienerPath::from_increments(w.grid().clone(), incs.clone())?);
        incs[j] = saved;
        for i in 0..n {
            let v = (up[i] - down[i]) / (2.0 * eps);
            if !v.is_finite() {
                return Err(LabError::NonFiniteDrift {
                    step: i,
                    detail: Some(format!("finite difference in column {j}")),
                });
            }
            entries[(i, j)] = v;
        }
    }
    Ok(MalliavinMatrix::new(
        w.grid().dt(),
        entries,
        KernelProvenance::FiniteDifference,
    ))
}

/// Kernel matrix from the drift's analytic kernel, when it has one.
pub fn malliavin_matrix_analytic(d: &dyn AdaptedDrift, w: &WienerPath) -> Option<MalliavinMatrix> {
    let n = w.grid().n();
    let mut entries = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            entries[(i, j)] = d.analytic_kernel(w, i, j)?;
        }
    }
    Some(MalliavinMatrix::new(
        w.grid().dt(),
        entries,
        KernelProvenance::Analytic,
    ))
}

/// det(I + A) exp(-trace A) via LU; a singular I + A yields 0.
pub fn det2_of(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let id_plus = DMatrix::identity(n, n) + a;
    id_plus.lu().determinant() * (-a.trace()).exp()
}

/// Largest singular value.
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().singular_values().max()
}

/// Hilbert-Schmidt norm squared of a plain operator matrix.
pub fn hs_norm_sq_of(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// Scalar summary of a Malliavin matrix viewed as the operator A = M dt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorStats {
    pub hs_norm_sq: f64,
    pub op_norm: f64,
    pub det2: f64,
    pub trace: f64,
}

impl OperatorStats {
    pub fn of(m: &MalliavinMatrix) -> Self {
        let a = m.operator();
        Self {
            hs_norm_sq: m.hs_norm_sq(),
            op_norm: op_norm(&a),
            det2: det2_of(&a),
            trace: a.trace(),
        }
    }
}

/// Both sides of the Carleman inequality
/// |det2(I + A)| * ||(I + A)^{-1}|| <= exp((||A||_2^2 + 1) / 2)
/// for an arbitrary square matrix A. A singular I + A gives lhs = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarlemanCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

pub fn carleman_check(a: &DMatrix<f64>) -> CarlemanCheck {
    let n = a.nrows();
    let rhs = (0.5 * (hs_norm_sq_of(a) + 1.0)).exp();
    let id_plus = DMatrix::identity(n, n) + a;
    let lhs = match id_plus.clone().try_inverse() {
        Some(inv) => det2_of(a).abs() * op_norm(&inv),
        None => 0.0,
    };
    CarlemanCheck {
        lhs,
        rhs,
        ok: lhs <= rhs * (1.0 + 1e-10),
    }
}

// ---------------------------------------------------------------------------
// Ornstein-Uhlenbeck (Mehler) smoothing
// ---------------------------------------------------------------------------

/// The smoothed drift u_tau = e^{-tau} P_tau u, with P_tau realized by the
/// Mehler average over a fixed set of auxiliary paths:
///
///   udot_tau(w, i) = e^{-tau} (1/N) sum_y udot(e^{-tau} w + sqrt(1 - e^{-2tau}) y, i)
///
/// The auxiliary paths are common to all output indices and all evaluated
/// paths, so u_tau is a well-defined adapted path functional (the mixed
/// prefix determines the value). They are cached per grid size.
pub struct MehlerDrift {
    inner: DynDrift,
    tau: f64,
    inner_n: usize,
    source: RandomSource,
    aux_cache: Mutex<HashMap<usize, Arc<Vec<Vec<f64>>>>>,
}

impl MehlerDrift {
    fn aux_increments(&self, n: usize) -> Arc<Vec<Vec<f64>>> {
        let mut cache = self.aux_cache.lock().unwrap();
        cache
            .entry(n)
            .or_insert_with(|| {
                let grid = crate::paths::TimeGrid::new(n).expect("n > 0");
                let paths = (0..self.inner_n)
                    .map(|k| {
                        let src = self.source.derive(k as u64);
                        crate::paths::WienerPath::sample(&grid, src)
                            .increments()
                            .to_vec()
                    })
                    .collect();
                Arc::new(paths)
            })
            .clone()
    }

    fn mixed_path(&self, w: &WienerPath, aux: &[f64]) -> WienerPath {
        let decay = (-self.tau).exp();
        let spread = (1.0 - decay * decay).sqrt();
        let incs = w
            .increments()
            .iter()
            .zip(aux)
            .map(|(dw, dy)| decay * dw + spread * dy)
            .collect();
        WienerPath::from_increments(w.grid().clone(), incs).expect("same length")
    }

    /// Per-index inner-sample variance of the Mehler average, for
    /// quantifying the inner Monte Carlo noise of the smoothed density.
    pub fn inner_variance(&self, w: &WienerPath) -> Vec<f64> {
        let decay = (-self.tau).exp();
        let aux = self.aux_increments(w.grid().n());
        let n = w.grid().n();
        let mut sums = vec![0.0; n];
        let mut sums_sq = vec![0.0; n];
        for y in aux.iter() {
            let mixed = self.mixed_path(w, y);
            for (i, v) in self.inner.density_all(&mixed).into_iter().enumerate() {
                let v = decay * v;
                sums[i] += v;
                sums_sq[i] += v * v;
            }
        }
        let m = self.inner_n as f64;
        (0..n)
            .map(|i| {
                let mean = sums[i] / m;
                let var = ((sums_sq[i] - m * mean * mean) / (m - 1.0)).max(0.0);
                var / m
            })
            .collect()
    }
}

impl AdaptedDrift for MehlerDrift {
    fn name(&self) -> String {
        format!(
            "mehler(tau={},inner_n={},{})",
            self.tau,
            self.inner_n,
            self.inner.name()
        )
    }

    fn density_at(&self, w: &WienerPath, i: usize) -> f64 {
        let decay = (-self.tau).exp();
        let aux = self.aux_increments(w.grid().n());
        let sum: f64 = aux
            .iter()
            .map(|y| self.inner.density_at(&self.mixed_path(w, y), i))
            .sum();
        decay * sum / self.inner_n as f64
    }

    fn density_all(&self, w: &WienerPath) -> Vec<f64> {
        let decay = (-self.tau).exp();
        let aux = self.aux_increments(w.grid().n());
        let n = w.grid().n();
        let mut out = vec![0.0; n];
        for y in aux.iter() {
            let mixed = self.mixed_path(w, y);
            for (o, v) in out.iter_mut().zip(self.inner.density_all(&mixed)) {
                *o += v;
            }
        }
        let scale = decay / self.inner_n as f64;
        out.iter_mut().for_each(|o| *o *= scale);
        out
    }
}

/// Smooth a drift with the Ornstein-Uhlenbeck semigroup. `tau = 0` returns
/// the input unchanged (P_0 is the identity; no inner sampling).
pub fn mehler_smooth(
    d: DynDrift,
    tau: f64,
    inner_n: usize,
    source: RandomSource,
) -> Result<DynDrift> {
    if tau < 0.0 {
        return Err(invalid("smoothing time tau must be nonnegative"));
    }
    if inner_n == 0 {
        return Err(invalid("inner sample count must be at least 1"));
    }
    if tau == 0.0 {
        return Ok(d);
    }
    Ok(Arc::new(MehlerDrift {
        inner: d,
        tau,
        inner_n,
        source,
        aux_cache: Mutex::new(HashMap::new()),
    }))
}

/// Typed handle used where the inner noise diagnostics are needed.
pub fn mehler_smooth_handle(
    d: DynDrift,
    tau: f64,
    inner_n: usize,
    source: RandomSource,
) -> Result<Arc<MehlerDrift>> {
    if tau <= 0.0 {
        return Err(invalid("smoothing time tau must be positive"));
    }
    if inner_n == 0 {
        return Err(invalid("inner sample count must be at least 1"));
    }
    Ok(Arc::new(MehlerDrift {
        inner: d,
        tau,
        inner_n,
        source,
        aux_cache: Mutex::new(HashMap::new()),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{drift_to_cm, BoundedSinDrift, ConstantDrift, OuDrift};
    use crate::paths::TimeGrid;
    use rand::Rng;
    use rand::SeedableRng;

    fn sample(n: usize, stream: u64) -> WienerPath {
        let grid = TimeGrid::new(n).unwrap();
        WienerPath::sample(&grid, RandomSource::new(13, stream))
    }

    #[test]
    fn constant_drift_has_zero_matrix() {
        let w = sample(16, 0);
        let m = malliavin_matrix_fd(&ConstantDrift { c: 2.0 }, &w, DEFAULT_FD_EPS).unwrap();
        assert_eq!(m.hs_norm_sq(), 0.0);
        assert_eq!(m.adaptedness_defect(), 0.0);
    }

    #[test]
    fn ou_kernel_matches_analytic() {
        let a = 0.8;
        let d = OuDrift { a };
        let w = sample(32, 1);
        let fd = malliavin_matrix_fd(&d, &w, DEFAULT_FD_EPS).unwrap();
        let exact = malliavin_matrix_analytic(&d, &w).unwrap();
        let diff = fd.entries() - exact.entries();
        let max = diff.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(max <= 1e-6, "max FD/analytic discrepancy {max}");
        for i in 0..32 {
            for j in 0..32 {
                let expected = if j < i { a } else { 0.0 };
                assert!((exact.entries()[(i, j)] - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fd_analytic_agreement_across_catalog() {
        for d in crate::drift::testutil::catalog() {
            let w = sample(24, 2);
            let Some(exact) = malliavin_matrix_analytic(d.as_ref(), &w) else {
                continue;
            };
            let fd = malliavin_matrix_fd(d.as_ref(), &w, DEFAULT_FD_EPS).unwrap();
            let diff = fd.entries() - exact.entries();
            let max = diff.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(max <= 1e-5, "{}: discrepancy {max}", d.name());
        }
    }

    #[test]
    fn bounded_sin_kernel_is_bounded() {
        let b = 0.9;
        let w = sample(32, 3);
        let m = malliavin_matrix_fd(&BoundedSinDrift { b }, &w, DEFAULT_FD_EPS).unwrap();
        assert!(m.row_sup() <= b + 1e-6);
    }

    #[test]
    fn hs_norm_calibration_and_scaling() {
        // ou a: hs_norm_sq -> a^2/2 as n grows (double integral of 1_{s<t})
        let a = 1.0;
        let w = sample(256, 4);
        let m = malliavin_matrix_analytic(&OuDrift { a }, &w).unwrap();
        assert!((m.hs_norm_sq() - 0.5).abs() <= 2.0 * w.grid().dt());

        // quadratic scaling in the drift
        let m2 = malliavin_matrix_analytic(&OuDrift { a: 3.0 }, &w).unwrap();
        assert!((m2.hs_norm_sq() - 9.0 * m.hs_norm_sq()).abs() < 1e-10);

        // convergence in n: values at n and 2n differ by <= 2 dt
        let w128 = sample(128, 4);
        let m128 = malliavin_matrix_analytic(&OuDrift { a }, &w128).unwrap();
        assert!((m128.hs_norm_sq() - m.hs_norm_sq()).abs() <= 2.0 * w128.grid().dt());
    }

    #[test]
    fn adaptedness_defect_examples() {
        // synthetic anticipating functional: udot_i = DW_{i+1}
        struct Anticipating;
        impl AdaptedDrift for Anticipating {
            fn name(&self) -> String {
                "anticipating".into()
            }
            fn density_at(&self, w: &WienerPath, i: usize) -> f64 {
                if i + 1 < w.grid().n() {
                    w.increments()[i + 1]
                } else {
                    0.0
                }
            }
        }
        let w = sample(16, 5);
        let m = malliavin_matrix_fd(&Anticipating, &w, DEFAULT_FD_EPS).unwrap();
        assert!((m.adaptedness_defect() - 1.0).abs() < 1e-8);

        for d in crate::drift::testutil::catalog() {
            let m = malliavin_matrix_fd(d.as_ref(), &w, DEFAULT_FD_EPS).unwrap();
            assert!(
                m.adaptedness_defect() <= 1e-8,
                "{}: defect {}",
                d.name(),
                m.adaptedness_defect()
            );
        }
    }

    #[test]
    fn det2_closed_forms() {
        let zero = DMatrix::<f64>::zeros(8, 8);
        assert!((det2_of(&zero) - 1.0).abs() < 1e-15);

        // single diagonal entry lambda = 1: det2 = (1 + 1) e^{-1}
        let mut a = DMatrix::<f64>::zeros(8, 8);
        a[(3, 3)] = 1.0;
        assert!((det2_of(&a) - 2.0 * (-1.0f64).exp()).abs() < 1e-12);

        // strictly lower-triangular: det2 = 1
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut l = DMatrix::<f64>::zeros(20, 20);
        for i in 0..20 {
            for j in 0..i {
                l[(i, j)] = rng.gen_range(-2.0..2.0);
            }
        }
        assert!((det2_of(&l) - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn det2_is_one_for_adapted_drifts() {
        for n in [16usize, 64] {
            let w = sample(n, 6);
            for d in crate::drift::testutil::catalog() {
                let m = malliavin_matrix_fd(d.as_ref(), &w, DEFAULT_FD_EPS).unwrap();
                assert!(
                    (m.det2() - 1.0).abs() <= 1e-8,
                    "{} at n={n}: det2 {}",
                    d.name(),
                    m.det2()
                );
            }
        }
    }

    #[test]
    fn carleman_inequality_random_matrices() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        // A = 0: lhs = 1 <= e^{1/2}
        let check = carleman_check(&DMatrix::zeros(5, 5));
        assert!((check.lhs - 1.0).abs() < 1e-12);
        assert!((check.rhs - 0.5f64.exp()).abs() < 1e-12);

        for _ in 0..300 {
            let dim = rng.gen_range(1..=50);
            let mut a = DMatrix::<f64>::zeros(dim, dim);
            for v in a.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let hs = hs_norm_sq_of(&a).sqrt();
            let target = rng.gen_range(0.0..3.0);
            if hs > 0.0 {
                a *= target / hs;
            }
            let check = carleman_check(&a);
            assert!(check.ok, "violation: lhs {} rhs {}", check.lhs, check.rhs);
        }
    }

    #[test]
    fn carleman_quasi_nilpotent_reading() {
        // strictly lower-triangular A: lhs reduces to the operator norm of
        // the inverse
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut a = DMatrix::<f64>::zeros(12, 12);
        for i in 0..12 {
            for j in 0..i {
                a[(i, j)] = rng.gen_range(-0.5..0.5);
            }
        }
        let check = carleman_check(&a);
        assert!(check.ok);
        let inv = (DMatrix::identity(12, 12) + &a).try_inverse().unwrap();
        assert!((check.lhs - op_norm(&inv)).abs() <= 1e-9 * check.lhs.max(1.0));
    }

    #[test]
    fn mehler_tau_zero_is_identity() {
        let d: DynDrift = Arc::new(OuDrift { a: 1.0 });
        let out = mehler_smooth(d.clone(), 0.0, 4, RandomSource::new(1, 0)).unwrap();
        let w = sample(32, 7);
        assert_eq!(out.density_all(&w), d.density_all(&w));
        assert!(mehler_smooth(d, -0.1, 4, RandomSource::new(1, 0)).is_err());
    }

    #[test]
    fn mehler_linear_functional_decay() {
        // P_tau applied to w -> W(1) gives e^{-tau} W(1) up to inner noise:
        // exercised through the ou drift whose density at the last step is
        // a W(t_{n-1}).
        let tau = 0.3;
        let inner_n = 4096;
        let d: DynDrift = Arc::new(OuDrift { a: 1.0 });
        let smoothed =
            mehler_smooth_handle(d.clone(), tau, inner_n, RandomSource::new(55, 0)).unwrap();
        let w = sample(16, 8);
        let i = 15;
        let got = smoothed.density_at(&w, i);
        // e^{-tau} * P_tau(a W(t_i)) = e^{-2 tau} a W(t_i) + inner noise
        let want = (-2.0 * tau).exp() * d.density_at(&w, i);
        let inner_sd = smoothed.inner_variance(&w)[i].sqrt();
        assert!(
            (got - want).abs() <= 3.0 * inner_sd,
            "got {got}, want {want}, inner sd {inner_sd}"
        );
    }

    #[test]
    fn mehler_first_chaos_spectral_factor() {
        // ou drift lives in the first Wiener chaos: u_tau = e^{-2 tau} u up
        // to inner noise, in MC mean square over paths.
        let tau = 0.5;
        let inner_n = 512;
        let d: DynDrift = Arc::new(OuDrift { a: 1.0 });
        let smoothed =
            mehler_smooth_handle(d.clone(), tau, inner_n, RandomSource::new(56, 0)).unwrap();
        let grid = TimeGrid::new(32).unwrap();
        let n_paths = 50;
        let mut ms = 0.0;
        let mut noise_ms = 0.0;
        for k in 0..n_paths {
            let w = WienerPath::sample(&grid, RandomSource::new(77, k));
            let u_tau = drift_to_cm(smoothed.as_ref(), &w);
            let scaled = drift_to_cm(d.as_ref(), &w).scale((-2.0 * tau).exp());
            ms += u_tau.sub(&scaled).unwrap().h_norm_sq();
            let dt = grid.dt();
            noise_ms += smoothed
                .inner_variance(&w)
                .iter()
                .map(|v| v * dt)
                .sum::<f64>();
        }
        let rms = (ms / n_paths as f64).sqrt();
        let noise_rms = (noise_ms / n_paths as f64).sqrt();
        assert!(rms <= 3.0 * noise_rms, "rms {rms} vs inner noise {noise_rms}");
    }

    #[test]
    fn mehler_smoothing_contracts_toward_u() {
        // || u_tau - u || decreases monotonically as tau -> 0.
        let d: DynDrift = Arc::new(OuDrift { a: 1.0 });
        let grid = TimeGrid::new(32).unwrap();
        let n_paths = 40;
        let mut dist = Vec::new();
        for tau in [0.5, 0.1, 0.01] {
            let smoothed =
                mehler_smooth(d.clone(), tau, 512, RandomSource::new(57, 0)).unwrap();
            let mut ms = 0.0;
            for k in 0..n_paths {
                let w = WienerPath::sample(&grid, RandomSource::new(78, k));
                let u_tau = drift_to_cm(smoothed.as_ref(), &w);
                let u = drift_to_cm(d.as_ref(), &w);
                ms += u_tau.sub(&u).unwrap().h_norm_sq();
            }
            dist.push((ms / n_paths as f64).sqrt());
        }
        assert!(dist[0] > dist[1] && dist[1] > dist[2], "{dist:?}");
    }

    #[test]
    fn truncation_kernel_energy_bound() {
        // numeric check of ||grad u^n||_2^2 <= 2 (1 + c^2) ||grad u||_2^2
        // for the smooth truncation of the ou drift.
        let c = crate::drift::BUMP_DERIV_BOUND;
        let d: DynDrift = Arc::new(OuDrift { a: 1.0 });
        let truncated = crate::drift::truncate_smooth(d.clone(), 0.4).unwrap();
        for stream in 0..100u64 {
            let w = sample(24, stream);
            let base = malliavin_matrix_fd(d.as_ref(), &w, DEFAULT_FD_EPS).unwrap();
            let trunc = malliavin_matrix_fd(truncated.as_ref(), &w, DEFAULT_FD_EPS).unwrap();
            assert!(
                trunc.hs_norm_sq() <= 2.0 * (1.0 + c * c) * base.hs_norm_sq() + 1e-10,
                "stream {stream}"
            );
        }
    }
}

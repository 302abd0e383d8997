//! The forward map U = I + u, its exact discrete inversion, Picard
//! iteration, round-trip diagnostics and the localization constructions.
//!
//! At the discrete level adaptedness collapses inversion to forward
//! substitution: step i of the inverse recursion only needs the drift on
//! the already reconstructed prefix, so the discrete adapted map is always
//! a bijection. This exactness says nothing about continuum invertibility,
//! which is what the cross-resolution diagnostic and the conditions module
//! assess.

use crate::drift::{drift_to_cm, AdaptedDrift, StoppedDrift};
use crate::error::{invalid, LabError, Result};
use crate::girsanov::girsanov_weight;
use crate::paths::{CameronMartinVector, WienerPath};

/// U(w): increments_out[i] = increments[i] + udot(t_i, w) dt.
pub fn forward_map(d: &dyn AdaptedDrift, w: &WienerPath) -> WienerPath {
    let dt = w.grid().dt();
    let density = d.density_all(w);
    let incs = w
        .increments()
        .iter()
        .zip(&density)
        .map(|(dw, u)| dw + u * dt)
        .collect();
    WienerPath::from_increments(w.grid().clone(), incs).expect("same length")
}

/// Outcome of an inversion: the inverse path V(y), the inverse drift
/// v = -u o V, round-trip residuals, and convergence bookkeeping (explicit
/// inversion always converges with iteration count 0).
#[derive(Debug, Clone)]
pub struct InversionResult {
    pub inverse: WienerPath,
    pub inverse_drift: CameronMartinVector,
    /// sup |V(U(w)) - w| over grid points.
    pub residual_vu: f64,
    /// sup |U(V(w)) - w| over grid points.
    pub residual_uv: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sup_distance(a: &WienerPath, b: &WienerPath) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Exact inversion by forward substitution over the adapted recursion
/// Dw_i = Dy_i - udot(t_i, w-prefix) dt.
pub fn invert_explicit(d: &dyn AdaptedDrift, y: &WienerPath) -> Result<InversionResult> {
    let grid = y.grid();
    let n = grid.n();
    let dt = grid.dt();
    let mut incs = vec![0.0; n];
    let mut v_density = vec![0.0; n];
    for i in 0..n {
        // the drift at step i reads only increments[0..i], which are final
        let prefix = WienerPath::from_increments(grid.clone(), incs.clone())?;
        let udot = d.density_at(&prefix, i);
        if !udot.is_finite() {
            return Err(LabError::NonFiniteDrift {
                step: i,
                detail: Some("during explicit inversion".into()),
            });
        }
        incs[i] = y.increments()[i] - udot * dt;
        v_density[i] = -udot;
    }
    let inverse = WienerPath::from_increments(grid.clone(), incs)?;
    let inverse_drift = CameronMartinVector::new(grid.clone(), v_density)?;
    let residual_uv = sup_distance(&forward_map(d, &inverse), y);
    Ok(InversionResult {
        inverse,
        inverse_drift,
        residual_vu: residual_uv,
        residual_uv,
        iterations: 0,
        converged: true,
    })
}

/// Picard iteration V^{m+1}(t) = y(t) - int_0^t udot(s, V^m) ds, mirroring
/// the fixed-point construction; non-convergence is a reported state.
pub fn invert_picard(
    d: &dyn AdaptedDrift,
    y: &WienerPath,
    max_iter: usize,
    tol: f64,
) -> Result<InversionResult> {
    if max_iter == 0 {
        return Err(invalid("max_iter must be at least 1"));
    }
    if tol <= 0.0 {
        return Err(invalid("tolerance must be positive"));
    }
    let grid = y.grid();
    let dt = grid.dt();
    let mut current = y.clone();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let density = d.density_all(&current);
        let incs: Vec<f64> = y
            .increments()
            .iter()
            .zip(&density)
            .map(|(dy, u)| dy - u * dt)
            .collect();
        let next = WienerPath::from_increments(grid.clone(), incs)?;
        let dist = sup_distance(&next, &current);
        current = next;
        if dist < tol {
            converged = true;
            break;
        }
    }
    let v_density: Vec<f64> = d.density_all(&current).iter().map(|u| -u).collect();
    let inverse_drift = CameronMartinVector::new(grid.clone(), v_density)?;
    let residual_uv = sup_distance(&forward_map(d, &current), y);
    Ok(InversionResult {
        inverse: current,
        inverse_drift,
        residual_vu: residual_uv,
        residual_uv,
        iterations,
        converged,
    })
}

/// (sup |V(U(w)) - w|, sup |U(V(w)) - w|) via the explicit inverter.
pub fn roundtrip_residuals(d: &dyn AdaptedDrift, w: &WienerPath) -> Result<(f64, f64)> {
    let pushed = forward_map(d, w);
    let back = invert_explicit(d, &pushed)?;
    let r1 = sup_distance(&back.inverse, w);
    let inv = invert_explicit(d, w)?;
    let r2 = sup_distance(&forward_map(d, &inv.inverse), w);
    Ok((r1, r2))
}

/// Sup-norms of the inverse-drift identities v + u o V and u + v o U,
/// measured on the densities.
pub fn inverse_drift_identities(d: &dyn AdaptedDrift, w: &WienerPath) -> Result<(f64, f64)> {
    // v + u o V = 0 evaluated at y = w
    let inv = invert_explicit(d, w)?;
    let u_at_v = drift_to_cm(d, &inv.inverse);
    let e1 = inv
        .inverse_drift
        .density()
        .iter()
        .zip(u_at_v.density())
        .fold(0.0f64, |m, (v, u)| m.max((v + u).abs()));

    // u + v o U = 0 evaluated at w
    let pushed = forward_map(d, w);
    let inv_pushed = invert_explicit(d, &pushed)?;
    let u_at_w = drift_to_cm(d, w);
    let e2 = u_at_w
        .density()
        .iter()
        .zip(inv_pushed.inverse_drift.density())
        .fold(0.0f64, |m, (u, v)| m.max((u + v).abs()));
    Ok((e1, e2))
}

/// |rho(-delta0 v)(U(w)) * rho(-delta u)(w) - 1|: the exact discrete
/// cancellation of the Gaussian exponents.
pub fn rho_inverse_identity_check(d: &dyn AdaptedDrift, w: &WienerPath) -> Result<f64> {
    let pushed = forward_map(d, w);
    let inv = invert_explicit(d, &pushed)?;
    // delta0 v is the Ito sum of the inverse drift against the input path y
    let delta0_v = crate::girsanov::ito_integral(&inv.inverse_drift, &pushed)?;
    let log_rho_v = -delta0_v - 0.5 * inv.inverse_drift.h_norm_sq();
    let log_rho_u = girsanov_weight(d, w).log_rho;
    Ok(((log_rho_v + log_rho_u).exp() - 1.0).abs())
}

/// Strong-convergence diagnostic across resolutions: for consecutive
/// levels (m, 2m) the inverse paths of the coarsened input are compared on
/// the coarser grid.
pub fn cross_resolution_error(
    d: &dyn AdaptedDrift,
    w_fine: &WienerPath,
    levels: &[usize],
) -> Result<Vec<f64>> {
    let fine_n = w_fine.grid().n();
    for window in levels.windows(2) {
        if window[1] != 2 * window[0] {
            return Err(invalid(format!(
                "levels must double: {} then {}",
                window[0], window[1]
            )));
        }
    }
    for &m in levels {
        if m == 0 || fine_n % m != 0 {
            return Err(invalid(format!("level {m} does not divide fine n={fine_n}")));
        }
    }
    let mut errors = Vec::new();
    for window in levels.windows(2) {
        let (m, m2) = (window[0], window[1]);
        let coarse = invert_explicit(d, &w_fine.coarsen(m)?)?;
        let finer = invert_explicit(d, &w_fine.coarsen(m2)?)?;
        let sup = (0..=m).fold(0.0f64, |acc, i| {
            acc.max((coarse.inverse.values()[i] - finer.inverse.values()[2 * i]).abs())
        });
        errors.push(sup);
    }
    Ok(errors)
}

/// A piece of a glued inverse: the drift on a region together with the
/// membership predicate of the region, evaluated on candidate pre-images.
pub struct GluePiece<'a> {
    pub drift: &'a dyn AdaptedDrift,
    pub predicate: &'a (dyn Fn(&WienerPath) -> bool + Sync),
}

/// Glued inverse over a measurable covering: each piece inverts `y` with
/// its own drift and the candidate whose pre-image lies in the piece's own
/// region is accepted. Zero accepted candidates is a coverage violation;
/// two accepted candidates disagreeing beyond 1e-10 are inconsistent.
pub fn piecewise_glue(pieces: &[GluePiece<'_>], y: &WienerPath) -> Result<InversionResult> {
    let mut accepted: Option<InversionResult> = None;
    let mut disagreements = 0;
    for piece in pieces {
        let candidate = invert_explicit(piece.drift, y)?;
        if !(piece.predicate)(&candidate.inverse) {
            continue;
        }
        match &accepted {
            None => accepted = Some(candidate),
            Some(prev) => {
                if sup_distance(&prev.inverse, &candidate.inverse) > 1e-10 {
                    disagreements += 1;
                }
            }
        }
    }
    if disagreements > 0 {
        return Err(LabError::InconsistentPieces {
            count: disagreements + 1,
        });
    }
    accepted.ok_or(LabError::CoverageViolation)
}

/// Sup distance of the inverses under the stopped drifts at levels
/// `m_level < n_level`, restricted to the agreement window t <= T_m(V_m).
pub fn stopped_consistency(
    d: crate::drift::DynDrift,
    m_level: f64,
    n_level: f64,
    y: &WienerPath,
) -> Result<f64> {
    if !(m_level < n_level) {
        return Err(invalid("levels must satisfy m < n"));
    }
    let d_m: std::sync::Arc<StoppedDrift> = crate::drift::stop_at_level(d.clone(), m_level)?;
    let d_n = crate::drift::stop_at_level(d, n_level)?;
    let v_m = invert_explicit(d_m.as_ref(), y)?;
    let v_n = invert_explicit(d_n.as_ref(), y)?;
    let window_end = d_m
        .stopping_index(&v_m.inverse)
        .unwrap_or(y.grid().n());
    let sup = (0..=window_end).fold(0.0f64, |acc, i| {
        acc.max((v_m.inverse.values()[i] - v_n.inverse.values()[i]).abs())
    });
    Ok(sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{
        make_builtin, BoundedSinDrift, ConstantDrift, DriftSpec, OuDrift, ZeroDrift,
    };
    use crate::paths::{RandomSource, TimeGrid};
    use std::sync::Arc;

    fn sample(n: usize, stream: u64) -> WienerPath {
        let grid = TimeGrid::new(n).unwrap();
        WienerPath::sample(&grid, RandomSource::new(21, stream))
    }

    #[test]
    fn forward_map_examples() {
        let w = sample(32, 0);
        let same = forward_map(&ZeroDrift, &w);
        assert_eq!(same, w);

        let c = 0.7;
        let shifted = forward_map(&ConstantDrift { c }, &w);
        for (i, t) in w.grid().times().iter().enumerate() {
            assert!((shifted.values()[i] - (w.values()[i] + c * t)).abs() < 1e-12);
        }

        // ou: output(t_i) = W(t_i) + a sum_{j<i} W(t_j) dt
        let a = 0.5;
        let pushed = forward_map(&OuDrift { a }, &w);
        let dt = w.grid().dt();
        let mut acc = 0.0;
        for i in 0..=32 {
            assert!((pushed.values()[i] - (w.values()[i] + a * acc)).abs() < 1e-12);
            if i < 32 {
                acc += w.values()[i] * dt;
            }
        }
    }

    #[test]
    fn explicit_inversion_examples() {
        let y = sample(32, 1);
        let r = invert_explicit(&ZeroDrift, &y).unwrap();
        assert_eq!(r.inverse, y);
        assert!(r.converged);

        let c = 0.7;
        let r = invert_explicit(&ConstantDrift { c }, &y).unwrap();
        for (i, t) in y.grid().times().iter().enumerate() {
            assert!((r.inverse.values()[i] - (y.values()[i] - c * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn roundtrip_is_exact_across_catalog() {
        for d in crate::drift::testutil::catalog() {
            for stream in 0..5u64 {
                let w = sample(64, stream);
                let (r1, r2) = roundtrip_residuals(d.as_ref(), &w).unwrap();
                assert!(r1 <= 1e-10 && r2 <= 1e-10, "{}: {r1}, {r2}", d.name());
            }
        }
    }

    #[test]
    fn inverse_drift_identities_across_catalog() {
        for d in crate::drift::testutil::catalog() {
            let w = sample(64, 3);
            let (e1, e2) = inverse_drift_identities(d.as_ref(), &w).unwrap();
            assert!(e1 <= 1e-10 && e2 <= 1e-10, "{}: {e1}, {e2}", d.name());
        }
    }

    #[test]
    fn inverse_drift_is_adapted() {
        // the computed v at index i does not change when y-increments at
        // j >= i are perturbed
        let d = make_builtin(&DriftSpec::new("ou").with("a", 0.8)).unwrap();
        let y = sample(24, 4);
        let base = invert_explicit(d.as_ref(), &y).unwrap();
        for i in 0..24 {
            for j in i..24 {
                let mut incs = y.increments().to_vec();
                incs[j] += 1.0;
                let yp = WienerPath::from_increments(y.grid().clone(), incs).unwrap();
                let perturbed = invert_explicit(d.as_ref(), &yp).unwrap();
                assert_eq!(
                    perturbed.inverse_drift.density()[i],
                    base.inverse_drift.density()[i],
                    "leak at i={i}, j={j}"
                );
            }
        }
    }

    #[test]
    fn picard_examples() {
        let y = sample(64, 5);
        let r = invert_picard(&ZeroDrift, &y, 10, 1e-12).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.inverse, y);

        let d = BoundedSinDrift { b: 0.5 };
        let picard = invert_picard(&d, &y, 50, 1e-12).unwrap();
        assert!(picard.converged && picard.iterations <= 50);
        let explicit = invert_explicit(&d, &y).unwrap();
        let dist = picard
            .inverse
            .values()
            .iter()
            .zip(explicit.inverse.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(dist <= 1e-8, "picard/explicit distance {dist}");

        let stuck = invert_picard(&OuDrift { a: 1.0 }, &y, 1, 1e-14).unwrap();
        assert!(!stuck.converged);
        assert!(stuck.residual_uv > 0.0);
    }

    #[test]
    fn rho_identity_examples() {
        let w = sample(64, 6);
        assert_eq!(rho_inverse_identity_check(&ZeroDrift, &w).unwrap(), 0.0);
        assert!(rho_inverse_identity_check(&ConstantDrift { c: 1.0 }, &w).unwrap() <= 1e-10);
        let mut worst: f64 = 0.0;
        for stream in 0..100u64 {
            let w = sample(64, stream);
            worst = worst.max(rho_inverse_identity_check(&OuDrift { a: 0.5 }, &w).unwrap());
        }
        assert!(worst <= 1e-8, "worst {worst}");
    }

    #[test]
    fn cross_resolution_smoke() {
        let fine = sample(256, 7);
        let errs = cross_resolution_error(&ZeroDrift, &fine, &[32, 64, 128, 256]).unwrap();
        // coarsening reassociates increment sums, so allow rounding noise
        assert!(errs.iter().all(|e| *e <= 1e-12));

        assert!(cross_resolution_error(&ZeroDrift, &fine, &[32, 96]).is_err());
        assert!(cross_resolution_error(&ZeroDrift, &fine, &[48, 96]).is_err());

        // smooth drift: consecutive errors exist and are finite
        let errs = cross_resolution_error(&OuDrift { a: 0.5 }, &fine, &[64, 128, 256]).unwrap();
        assert!(errs.iter().all(|e| e.is_finite()));
    }

    #[test]
    fn cross_resolution_contracts_for_smooth_drift() {
        // the paired-resolution error decreases from n=64 to n=512 on at
        // least 90% of coupled paths
        let grid = TimeGrid::new(512).unwrap();
        let d = OuDrift { a: 0.5 };
        let mut improved = 0;
        let total = 100;
        for k in 0..total {
            let fine = WienerPath::sample(&grid, RandomSource::new(88, k));
            let errs = cross_resolution_error(&d, &fine, &[64, 128, 256, 512]).unwrap();
            if errs[2] < errs[0] {
                improved += 1;
            }
        }
        assert!(improved >= 90, "improved on {improved}/{total} paths");
    }

    #[test]
    fn piecewise_glue_examples() {
        let d = OuDrift { a: 0.5 };
        let always = |_: &WienerPath| true;
        let y = sample(64, 8);
        let single = [GluePiece {
            drift: &d,
            predicate: &always,
        }];
        let glued = piecewise_glue(&single, &y).unwrap();
        let direct = invert_explicit(&d, &y).unwrap();
        assert_eq!(glued.inverse, direct.inverse);

        // disjoint predicates both false: coverage violation
        let never = |_: &WienerPath| false;
        let nope = [
            GluePiece {
                drift: &d,
                predicate: &never,
            },
            GluePiece {
                drift: &d,
                predicate: &never,
            },
        ];
        assert!(matches!(
            piecewise_glue(&nope, &y),
            Err(LabError::CoverageViolation)
        ));
    }

    #[test]
    fn two_piece_split_matches_global_inverse() {
        // global drift dispatching on sign of W(1/2); the two fixed
        // branches glued over the sign split reproduce its inverse
        let spec = DriftSpec::new("piecewise")
            .with("t_star", 0.5)
            .with("a", 0.5)
            .with("b", 0.5);
        let global = make_builtin(&spec).unwrap();
        let before: crate::drift::DynDrift = Arc::new(OuDrift { a: 0.5 });
        let pos = crate::drift::SwitchDrift {
            t_star: 0.5,
            before: before.clone(),
            after: Arc::new(OuDrift { a: 0.5 }),
        };
        let neg = crate::drift::SwitchDrift {
            t_star: 0.5,
            before,
            after: Arc::new(BoundedSinDrift { b: 0.5 }),
        };
        let pred_pos = |w: &WienerPath| w.values()[w.grid().n() / 2] >= 0.0;
        let pred_neg = |w: &WienerPath| w.values()[w.grid().n() / 2] < 0.0;
        for stream in 0..20u64 {
            let y = sample(64, stream);
            let pieces = [
                GluePiece {
                    drift: &pos,
                    predicate: &pred_pos,
                },
                GluePiece {
                    drift: &neg,
                    predicate: &pred_neg,
                },
            ];
            let glued = piecewise_glue(&pieces, &y).unwrap();
            let direct = invert_explicit(global.as_ref(), &y).unwrap();
            let dist = glued
                .inverse
                .values()
                .iter()
                .zip(direct.inverse.values())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(dist <= 1e-10, "stream {stream}: {dist}");
        }
    }

    #[test]
    fn stopped_consistency_examples() {
        let y = sample(64, 9);
        // bounded drift, level above the bound squared: never stopped
        let bounded: crate::drift::DynDrift = Arc::new(BoundedSinDrift { b: 0.5 });
        assert_eq!(stopped_consistency(bounded, 0.5, 1.0, &y).unwrap(), 0.0);

        let zero: crate::drift::DynDrift = Arc::new(ZeroDrift);
        assert_eq!(stopped_consistency(zero, 1.0, 4.0, &y).unwrap(), 0.0);

        let ou: crate::drift::DynDrift = Arc::new(OuDrift { a: 1.0 });
        for stream in 0..20u64 {
            let y = sample(64, stream);
            let sup = stopped_consistency(ou.clone(), 1.0, 4.0, &y).unwrap();
            assert!(sup <= 1e-10, "stream {stream}: {sup}");
        }
    }
}

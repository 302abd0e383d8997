//! The adapted-drift contract and the catalog of concrete drifts.
//!
//! A drift produces the Lebesgue density `udot(t_i)` of an H-valued shift
//! from the path prefix `increments[0..i]` only. Everything downstream
//! (Girsanov weights, Malliavin matrices, inversion) consumes this trait.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::paths::{CameronMartinVector, WienerPath};

/// Documented bound on the derivative of the truncation bump.
pub const BUMP_DERIV_BOUND: f64 = 2.0;

/// An adapted drift: the density `udot(t_i)` reads only the path prefix
/// `increments[0..i]`.
pub trait AdaptedDrift: Send + Sync {
    fn name(&self) -> String;

    /// Density value at step `i`. Must depend on `w.increments()[0..i]` only.
    fn density_at(&self, w: &WienerPath, i: usize) -> f64;

    /// All density values on one path. Override when a batched evaluation
    /// is cheaper than `n` independent calls.
    fn density_all(&self, w: &WienerPath) -> Vec<f64> {
        (0..w.grid().n()).map(|i| self.density_at(w, i)).collect()
    }

    /// Analytic Malliavin kernel entry d udot(t_i) / d DW_j, when available.
    fn analytic_kernel(&self, _w: &WienerPath, _i: usize, _j: usize) -> Option<f64> {
        None
    }
}

/// Shared handle to a drift.
pub type DynDrift = Arc<dyn AdaptedDrift>;

/// Checked single-step evaluation.
pub fn eval_drift(d: &dyn AdaptedDrift, w: &WienerPath, i: usize) -> Result<f64> {
    if i >= w.grid().n() {
        return Err(invalid(format!(
            "step index {i} out of range for n={}",
            w.grid().n()
        )));
    }
    Ok(d.density_at(w, i))
}

/// The Cameron-Martin vector u(w) with density udot(t_i, w).
pub fn drift_to_cm(d: &dyn AdaptedDrift, w: &WienerPath) -> CameronMartinVector {
    CameronMartinVector::new(w.grid().clone(), d.density_all(w)).expect("length matches grid")
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

/// Zero drift.
pub struct ZeroDrift;

impl AdaptedDrift for ZeroDrift {
    fn name(&self) -> String {
        "zero".into()
    }
    fn density_at(&self, _w: &WienerPath, _i: usize) -> f64 {
        0.0
    }
    fn analytic_kernel(&self, _w: &WienerPath, _i: usize, _j: usize) -> Option<f64> {
        Some(0.0)
    }
}

/// Deterministic constant density hdot = c.
pub struct ConstantDrift {
    pub c: f64,
}

impl AdaptedDrift for ConstantDrift {
    fn name(&self) -> String {
        format!("constant-h(c={})", self.c)
    }
    fn density_at(&self, _w: &WienerPath, _i: usize) -> f64 {
        self.c
    }
    fn analytic_kernel(&self, _w: &WienerPath, _i: usize, _j: usize) -> Option<f64> {
        Some(0.0)
    }
}

/// udot(t_i) = a * W(t_i); the first Wiener chaos workhorse.
pub struct OuDrift {
    pub a: f64,
}

impl AdaptedDrift for OuDrift {
    fn name(&self) -> String {
        format!("ou(a={})", self.a)
    }
    fn density_at(&self, w: &WienerPath, i: usize) -> f64 {
        self.a * w.values()[i]
    }
    fn analytic_kernel(&self, _w: &WienerPath, i: usize, j: usize) -> Option<f64> {
        Some(if j < i { self.a } else { 0.0 })
    }
}

/// udot(t_i) = b * sin(W(t_i)); bounded with bounded kernel.
pub struct BoundedSinDrift {
    pub b: f64,
}

impl AdaptedDrift for BoundedSinDrift {
    fn name(&self) -> String {
        format!("bounded-sin(b={})", self.b)
    }
    fn density_at(&self, w: &WienerPath, i: usize) -> f64 {
        self.b * w.values()[i].sin()
    }
    fn analytic_kernel(&self, w: &WienerPath, i: usize, j: usize) -> Option<f64> {
        Some(if j < i { self.b * w.values()[i].cos() } else { 0.0 })
    }
}

/// udot(t_i) = kappa * t_i^{-alpha} * sin(W(t_i)), alpha in [0, 1/2).
///
/// At i = 0 the singular factor is evaluated at dt instead of 0, which
/// keeps the density finite on the grid.
pub struct SingularAlphaDrift {
    pub kappa: f64,
    pub alpha: f64,
}

impl SingularAlphaDrift {
    fn factor(&self, w: &WienerPath, i: usize) -> f64 {
        let t = if i == 0 {
            w.grid().dt()
        } else {
            w.grid().times()[i]
        };
        self.kappa * t.powf(-self.alpha)
    }
}

impl AdaptedDrift for SingularAlphaDrift {
    fn name(&self) -> String {
        format!("singular-alpha(kappa={},alpha={})", self.kappa, self.alpha)
    }
    fn density_at(&self, w: &WienerPath, i: usize) -> f64 {
        self.factor(w, i) * w.values()[i].sin()
    }
    fn analytic_kernel(&self, w: &WienerPath, i: usize, j: usize) -> Option<f64> {
        Some(if j < i {
            self.factor(w, i) * w.values()[i].cos()
        } else {
            0.0
        })
    }
}

/// Volterra drift udot(t_i) = sum_{j<i} scale * (t_i - t_j) * DW_j.
pub struct LinearVolterraDrift {
    pub scale: f64,
}

impl AdaptedDrift for LinearVolterraDrift {
    fn name(&self) -> String {
        format!("linear-volterra(scale={})", self.scale)
    }
    fn density_at(&self, w: &WienerPath, i: usize) -> f64 {
        let times = w.grid().times();
        let t_i = times[i];
        w.increments()[..i]
            .iter()
            .enumerate()
            .map(|(j, dw)| self.scale * (t_i - times[j]) * dw)
            .sum()
    }
    fn density_all(&self, w: &WienerPath) -> Vec<f64> {
        // udot(t_i) = scale * (t_i * W(t_i) - sum_{j<i} t_j DW_j)
        let times = w.grid().times();
        let mut weighted = 0.0;
        (0..w.grid().n())
            .map(|i| {
                let out = self.scale * (times[i] * w.values()[i] - weighted);
                weighted += times[i] * w.increments()[i];
                out
            })
            .collect()
    }
    fn analytic_kernel(&self, w: &WienerPath, i: usize, j: usize) -> Option<f64> {
        let times = w.grid().times();
        Some(if j < i {
            self.scale * (times[i] - times[j])
        } else {
            0.0
        })
    }
}

/// Tsirelson's drift on the dyadic sequence t_k = 2^{-k}: on (t_{k+1}, t_k]
/// the density is the fractional part of
/// (W(t_{k+1}) - W(t_{k+2})) / (t_{k+1} - t_{k+2}).
///
/// Levels finer than the grid spacing are dropped: only k with
/// t_{k+2} >= dt are active, so the number of levels grows like log2 n.
/// This is a demo drift; the discrete version has no continuum limit and
/// its finite-difference Malliavin matrix is a diagnostic only.
pub struct TsirelsonDrift;

impl TsirelsonDrift {
    fn value_at_time(&self, w: &WienerPath, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let grid = w.grid();
        let n = grid.n() as f64;
        // locate k with t in (2^{-(k+1)}, 2^{-k}]
        let mut k = 0u32;
        while t <= 0.5f64.powi(k as i32 + 1) {
            k += 1;
            if k > 60 {
                return 0.0;
            }
        }
        let t_k1 = 0.5f64.powi(k as i32 + 1);
        let t_k2 = 0.5f64.powi(k as i32 + 2);
        if t_k2 * n < 1.0 - 1e-9 {
            // level below the grid resolution
            return 0.0;
        }
        // snap to grid points at or below the dyadic times (adapted)
        let i1 = (t_k1 * n).floor() as usize;
        let i2 = (t_k2 * n).floor() as usize;
        let slope = (w.values()[i1] - w.values()[i2]) / (t_k1 - t_k2);
        slope.rem_euclid(1.0)
    }
}

impl AdaptedDrift for TsirelsonDrift {
    fn name(&self) -> String {
        "tsirelson".into()
    }
    fn density_at(&self, w: &WienerPath, i: usize) -> f64 {
        self.value_at_time(w, w.grid().times()[i])
    }
}

// ---------------------------------------------------------------------------
// Wrappers
// ---------------------------------------------------------------------------

/// C^1 bump: 1 on [0,1], 0 outside (-1, 2), smoothstep transitions.
/// sup |bump'| = 1.5 <= BUMP_DERIV_BOUND.
pub fn bump(x: f64) -> f64 {
    fn smoothstep(t: f64) -> f64 {
        let t = t.clamp(0.0, 1.0);
        t * t * (3.0 - 2.0 * t)
    }
    if (0.0..=1.0).contains(&x) {
        1.0
    } else if x > 1.0 {
        1.0 - smoothstep(x - 1.0)
    } else {
        smoothstep(x + 1.0)
    }
}

/// Smooth truncation: density bump(|udot|/level) * udot. The magnitude is
/// fed to the bump so the identity region covers |udot| <= level for
/// signed densities; bump is flat at 1 near 0, so the composition stays C^1.
pub struct SmoothTruncatedDrift {
    pub inner: DynDrift,
    pub level: f64,
}

impl AdaptedDrift for SmoothTruncatedDrift {
    fn name(&self) -> String {
        format!("truncated(level={},inner={})", self.level, self.inner.name())
    }
    fn density_at(&self, w: &WienerPath, i: usize) -> f64 {
        let v = self.inner.density_at(w, i);
        bump(v.abs() / self.level) * v
    }
    fn density_all(&self, w: &WienerPath) -> Vec<f64> {
        self.inner
            .density_all(w)
            .into_iter()
            .map(|v| bump(v.abs() / self.level) * v)
            .collect()
    }
}

/// Truncate `d` smoothly at `level`; the output density never exceeds
/// 2 * level in magnitude and equals the input wherever |udot| <= level.
pub fn truncate_smooth(d: DynDrift, level: f64) -> Result<DynDrift> {
    if level <= 0.0 {
        return Err(invalid("truncation level must be positive"));
    }
    Ok(Arc::new(SmoothTruncatedDrift { inner: d, level }))
}

/// Drift stopped when the running energy sum_{j<=i} udot_j^2 dt first
/// exceeds `level`: the density is zeroed from that index on.
pub struct StoppedDrift {
    pub inner: DynDrift,
    pub level: f64,
}

impl StoppedDrift {
    /// First index at which the running energy exceeds the level, if any.
    pub fn stopping_index(&self, w: &WienerPath) -> Option<usize> {
        let dt = w.grid().dt();
        let mut acc = 0.0;
        for (i, v) in self.inner.density_all(w).into_iter().enumerate() {
            acc += v * v * dt;
            if acc > self.level {
                return Some(i);
            }
        }
        None
    }
}

impl AdaptedDrift for StoppedDrift {
    fn name(&self) -> String {
        format!("stopped(level={},inner={})", self.level, self.inner.name())
    }
    fn density_at(&self, w: &WienerPath, i: usize) -> f64 {
        let dt = w.grid().dt();
        let mut acc = 0.0;
        for j in 0..=i {
            let v = self.inner.density_at(w, j);
            acc += v * v * dt;
            if acc > self.level {
                return 0.0;
            }
            if j == i {
                return v;
            }
        }
        unreachable!()
    }
    fn density_all(&self, w: &WienerPath) -> Vec<f64> {
        let dt = w.grid().dt();
        let mut acc = 0.0;
        let mut stopped = false;
        self.inner
            .density_all(w)
            .into_iter()
            .map(|v| {
                if stopped {
                    return 0.0;
                }
                acc += v * v * dt;
                if acc > self.level {
                    stopped = true;
                    0.0
                } else {
                    v
                }
            })
            .collect()
    }
}

pub fn stop_at_level(d: DynDrift, level: f64) -> Result<Arc<StoppedDrift>> {
    if level <= 0.0 {
        return Err(invalid("stopping level must be positive"));
    }
    Ok(Arc::new(StoppedDrift { inner: d, level }))
}

/// Convex combination alpha * a + (1 - alpha) * b of two drifts.
pub struct MixDrift {
    pub a: DynDrift,
    pub b: DynDrift,
    pub alpha: f64,
}

impl AdaptedDrift for MixDrift {
    fn name(&self) -> String {
        format!("mix(alpha={},{},{})", self.alpha, self.a.name(), self.b.name())
    }
    fn density_at(&self, w: &WienerPath, i: usize) -> f64 {
        self.alpha * self.a.density_at(w, i) + (1.0 - self.alpha) * self.b.density_at(w, i)
    }
    fn density_all(&self, w: &WienerPath) -> Vec<f64> {
        let xs = self.a.density_all(w);
        let ys = self.b.density_all(w);
        xs.into_iter()
            .zip(ys)
            .map(|(x, y)| self.alpha * x + (1.0 - self.alpha) * y)
            .collect()
    }
    fn analytic_kernel(&self, w: &WienerPath, i: usize, j: usize) -> Option<f64> {
        let ka = self.a.analytic_kernel(w, i, j)?;
        let kb = self.b.analytic_kernel(w, i, j)?;
        Some(self.alpha * ka + (1.0 - self.alpha) * kb)
    }
}

/// Convex combination of two drifts as a shared handle.
pub fn mix_drifts(a: DynDrift, b: DynDrift, alpha: f64) -> DynDrift {
    Arc::new(MixDrift { a, b, alpha })
}

/// Adapted two-regime drift: `before` up to time `t_star`, then either
/// `on_true` or `on_false` depending on the sign of W(t_star). The switch
/// reads W(t_star) only at steps t_i >= t_star, so the drift stays adapted.
pub struct PiecewiseDrift {
    pub t_star: f64,
    pub before: DynDrift,
    pub on_true: DynDrift,
    pub on_false: DynDrift,
}

impl PiecewiseDrift {
    fn switch_index(&self, w: &WienerPath) -> usize {
        let n = w.grid().n() as f64;
        (self.t_star * n).round() as usize
    }

    /// The dispatch predicate: sign of W(t_star).
    pub fn predicate(&self, w: &WienerPath) -> bool {
        w.values()[self.switch_index(w)] >= 0.0
    }
}

impl AdaptedDrift for PiecewiseDrift {
    fn name(&self) -> String {
        format!(
            "piecewise(t*={},{},{},{})",
            self.t_star,
            self.before.name(),
            self.on_true.name(),
            self.on_false.name()
        )
    }
    fn density_at(&self, w: &WienerPath, i: usize) -> f64 {
        let k = self.switch_index(w);
        if i < k {
            self.before.density_at(w, i)
        } else if self.predicate(w) {
            self.on_true.density_at(w, i)
        } else {
            self.on_false.density_at(w, i)
        }
    }
}

/// A fixed branch of a piecewise drift: `before` up to t_star, `after`
/// from t_star on, with no dispatch. Used as the per-piece drift when
/// gluing inverses.
pub struct SwitchDrift {
    pub t_star: f64,
    pub before: DynDrift,
    pub after: DynDrift,
}

impl AdaptedDrift for SwitchDrift {
    fn name(&self) -> String {
        format!(
            "switch(t*={},{},{})",
            self.t_star,
            self.before.name(),
            self.after.name()
        )
    }
    fn density_at(&self, w: &WienerPath, i: usize) -> f64 {
        let k = (self.t_star * w.grid().n() as f64).round() as usize;
        if i < k {
            self.before.density_at(w, i)
        } else {
            self.after.density_at(w, i)
        }
    }
}

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

/// Serializable description of a drift choice.
///
/// `params` holds the numeric parameters of the tagged drift; wrapper tags
/// (`truncated`, `stopped`) take the wrapped drift in `inner`. The
/// `piecewise` tag uses params `t_star`, `a` (ou coefficient used before
/// the switch and on the nonnegative branch) and `b` (bounded-sin bound on
/// the negative branch).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DriftSpec {
    #[serde(rename = "type")]
    pub tag: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<Box<DriftSpec>>,
}

impl DriftSpec {
    pub fn new(tag: &str) -> Self {
        Self {
            tag: tag.into(),
            params: BTreeMap::new(),
            inner: None,
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.into(), value);
        self
    }

    pub fn with_inner(mut self, inner: DriftSpec) -> Self {
        self.inner = Some(Box::new(inner));
        self
    }

    fn param(&self, key: &str) -> Result<f64> {
        self.params
            .get(key)
            .copied()
            .ok_or_else(|| invalid(format!("drift '{}' requires parameter '{key}'", self.tag)))
    }

    fn param_or(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }
}

pub const SUPPORTED_DRIFTS: &[&str] = &[
    "zero",
    "constant-h",
    "linear-volterra",
    "ou",
    "bounded-sin",
    "singular-alpha",
    "tsirelson",
    "truncated",
    "stopped",
    "piecewise",
];

/// Build a drift from its spec. Construction is pure: equal specs give
/// observationally identical drifts.
pub fn make_builtin(spec: &DriftSpec) -> Result<DynDrift> {
    let inner = |spec: &DriftSpec| -> Result<DynDrift> {
        let nested = spec
            .inner
            .as_deref()
            .ok_or_else(|| invalid(format!("drift '{}' requires an inner drift", spec.tag)))?;
        make_builtin(nested)
    };
    match spec.tag.as_str() {
        "zero" => Ok(Arc::new(ZeroDrift)),
        "constant-h" => Ok(Arc::new(ConstantDrift { c: spec.param("c")? })),
        "linear-volterra" => Ok(Arc::new(LinearVolterraDrift {
            scale: spec.param("scale")?,
        })),
        "ou" => Ok(Arc::new(OuDrift { a: spec.param("a")? })),
        "bounded-sin" => Ok(Arc::new(BoundedSinDrift { b: spec.param("b")? })),
        "singular-alpha" => {
            let alpha = spec.param("alpha")?;
            if !(0.0..0.5).contains(&alpha) {
                return Err(invalid(format!(
                    "singular-alpha requires alpha in [0, 0.5), got {alpha}"
                )));
            }
            Ok(Arc::new(SingularAlphaDrift {
                kappa: spec.param("kappa")?,
                alpha,
            }))
        }
        "tsirelson" => Ok(Arc::new(TsirelsonDrift)),
        "truncated" => truncate_smooth(inner(spec)?, spec.param("level")?),
        "stopped" => {
            let stopped: DynDrift = stop_at_level(inner(spec)?, spec.param("level")?)?;
            Ok(stopped)
        }
        "piecewise" => {
            let t_star = spec.param_or("t_star", 0.5);
            if !(0.0..=1.0).contains(&t_star) {
                return Err(invalid("piecewise t_star must lie in [0, 1]"));
            }
            let a = spec.param_or("a", 0.5);
            let b = spec.param_or("b", 0.5);
            Ok(Arc::new(PiecewiseDrift {
                t_star,
                before: Arc::new(OuDrift { a }),
                on_true: Arc::new(OuDrift { a }),
                on_false: Arc::new(BoundedSinDrift { b }),
            }))
        }
        other => {
            let mut msg = format!("unknown drift type '{other}'; supported:");
            for tag in SUPPORTED_DRIFTS {
                let _ = write!(msg, " {tag}");
            }
            Err(invalid(msg))
        }
    }
}

/// Test-only drift battery: one instance of every builtin type.
#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    pub(crate) fn catalog() -> Vec<DynDrift> {
        let specs = vec![
            DriftSpec::new("zero"),
            DriftSpec::new("constant-h").with("c", 1.0),
            DriftSpec::new("linear-volterra").with("scale", 0.8),
            DriftSpec::new("ou").with("a", 1.0),
            DriftSpec::new("bounded-sin").with("b", 1.0),
            DriftSpec::new("singular-alpha")
                .with("kappa", 1.0)
                .with("alpha", 0.4),
            DriftSpec::new("tsirelson"),
            DriftSpec::new("truncated")
                .with("level", 0.5)
                .with_inner(DriftSpec::new("ou").with("a", 1.0)),
            DriftSpec::new("stopped")
                .with("level", 0.25)
                .with_inner(DriftSpec::new("ou").with("a", 1.0)),
            DriftSpec::new("piecewise")
                .with("t_star", 0.5)
                .with("a", 0.5)
                .with("b", 0.5),
        ];
        specs.iter().map(|s| make_builtin(s).unwrap()).collect()
    }
}

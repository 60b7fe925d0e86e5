//! Random potentials `V` with values in `[0, 1]` on a finite lattice window.
//!
//! A [`PotentialField`] stores values and derivatives on the nodes
//! `x_i = (first_index + i) * grid_step` and evaluates between them by cubic
//! Hermite interpolation, so the interpolant is C¹ and reproduces the stored
//! derivative at nodes.

mod features;
mod generate;
mod kernel;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::hermite;

pub use features::{
    audit_assumptions, find_features, AssumptionReport, FeatureCheck, FeatureKind, TerrainFeature,
};
pub use generate::{generate_constant, generate_mollified, generate_periodic, Process};
pub use kernel::{KernelShape, KernelSpec};

/// Version tag written into every serialized field.
pub const FORMAT_VERSION: u32 = 1;

/// Closed interval `[lo, hi]` in spatial units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn symmetric(half_width: f64) -> Self {
        Self::new(-half_width, half_width)
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn covers(&self, other: &Window) -> bool {
        self.lo <= other.lo && self.hi >= other.hi
    }

    pub fn widen(&self, left: f64, right: f64) -> Self {
        Self::new(self.lo - left, self.hi + right)
    }
}

/// Generator tag together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Generator {
    PoissonMollified { rate: f64, kernel: KernelSpec },
    WienerMollified { scale: f64, kernel: KernelSpec },
    Periodic { period: f64 },
    Constant { level: f64 },
    CustomSamples,
}

impl Generator {
    pub fn name(&self) -> &'static str {
        match self {
            Generator::PoissonMollified { .. } => "poisson-mollified",
            Generator::WienerMollified { .. } => "wiener-mollified",
            Generator::Periodic { .. } => "periodic",
            Generator::Constant { .. } => "constant",
            Generator::CustomSamples => "custom-samples",
        }
    }

    pub fn kernel(&self) -> Option<&KernelSpec> {
        match self {
            Generator::PoissonMollified { kernel, .. }
            | Generator::WienerMollified { kernel, .. } => Some(kernel),
            _ => None,
        }
    }

    /// Constant potentials have no valleys and hills of distinct levels.
    pub fn lacks_valleys_and_hills(&self) -> bool {
        matches!(self, Generator::Constant { .. })
    }
}

/// Everything needed to regenerate a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub generator: Generator,
    pub seed: u64,
    pub window: Window,
    pub grid_step: f64,
}

impl FieldSpec {
    pub fn build(&self) -> Result<PotentialField> {
        match &self.generator {
            Generator::PoissonMollified { rate, kernel } => generate_mollified(
                self.seed,
                Process::Poisson,
                *rate,
                *kernel,
                self.window,
                self.grid_step,
            ),
            Generator::WienerMollified { scale, kernel } => generate_mollified(
                self.seed,
                Process::Wiener,
                *scale,
                *kernel,
                self.window,
                self.grid_step,
            ),
            Generator::Periodic { period } => {
                generate_periodic(*period, self.window, self.grid_step)
            }
            Generator::Constant { level } => generate_constant(*level, self.window, self.grid_step),
            Generator::CustomSamples => Err(invalid("custom-sample fields cannot be regenerated")),
        }
    }
}

/// A realization of `x -> V(T_x omega)` on a finite window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialField {
    pub format_version: u32,
    pub generator: Generator,
    pub seed: u64,
    pub grid_step: f64,
    /// Lattice index of the left window end.
    pub first_index: i64,
    pub values: Vec<f64>,
    pub derivative_values: Vec<f64>,
}

/// Snap tolerance (in units of grid steps) for recognising a node.
const NODE_SNAP: f64 = 1e-12;

/// Lattice index of `x` on a grid of step `h`, if `x` is a lattice point.
pub(crate) fn lattice_index(x: f64, h: f64) -> Option<i64> {
    let t = x / h;
    let r = t.round();
    if (t - r).abs() <= 1e-9 * r.abs().max(1.0) {
        Some(r as i64)
    } else {
        None
    }
}

impl PotentialField {
    /// Assemble a field from raw samples. Checks lengths, lattice alignment,
    /// finiteness and the `[0, 1]` range.
    pub fn from_samples(
        window: Window,
        grid_step: f64,
        values: Vec<f64>,
        derivative_values: Vec<f64>,
    ) -> Result<Self> {
        let (first_index, n) = lattice_nodes(window, grid_step)?;
        if values.len() != n || derivative_values.len() != n {
            return Err(invalid(format!(
                "expected {n} samples for window [{}, {}] at step {grid_step}, got {} values and {} derivatives",
                window.lo,
                window.hi,
                values.len(),
                derivative_values.len()
            )));
        }
        let field = Self {
            format_version: FORMAT_VERSION,
            generator: Generator::CustomSamples,
            seed: 0,
            grid_step,
            first_index,
            values,
            derivative_values,
        };
        field.validate()?;
        Ok(field)
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(invalid(format!(
                "unsupported format version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        if !(self.grid_step > 0.0 && self.grid_step.is_finite()) {
            return Err(invalid("grid_step must be positive"));
        }
        if self.values.len() < 2 || self.values.len() != self.derivative_values.len() {
            return Err(invalid(
                "field needs at least two nodes with matching derivatives",
            ));
        }
        for (i, (&v, &d)) in self.values.iter().zip(&self.derivative_values).enumerate() {
            if !v.is_finite() || !d.is_finite() {
                return Err(Error::NonFinite(format!("sample {i} of the potential")));
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(format!("sample {i} = {v} lies outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> &'static str {
        self.generator.name()
    }

    pub fn kernel_spec(&self) -> Option<&KernelSpec> {
        self.generator.kernel()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn node(&self, i: usize) -> f64 {
        (self.first_index + i as i64) as f64 * self.grid_step
    }

    pub fn window(&self) -> Window {
        Window::new(self.node(0), self.node(self.len() - 1))
    }

    /// Regeneration recipe for fields built by a generator.
    pub fn spec(&self) -> Option<FieldSpec> {
        if matches!(self.generator, Generator::CustomSamples) {
            return None;
        }
        Some(FieldSpec {
            generator: self.generator.clone(),
            seed: self.seed,
            window: self.window(),
            grid_step: self.grid_step,
        })
    }

    /// Locate `x`: cell index and local coordinate in `[0, 1]`, or `None`
    /// when `x` is outside the window.
    #[inline]
    fn locate(&self, x: f64) -> Option<(usize, f64)> {
        let t = x / self.grid_step - self.first_index as f64;
        let last = (self.values.len() - 1) as f64;
        if !(t >= -NODE_SNAP && t <= last + NODE_SNAP) {
            return None;
        }
        let r = t.round();
        if (t - r).abs() <= NODE_SNAP * r.abs().max(1.0) {
            let i = r as usize;
            return Some(if i == self.values.len() - 1 {
                (i - 1, 1.0)
            } else {
                (i, 0.0)
            });
        }
        let i = (t.floor() as usize).min(self.values.len() - 2);
        Some((i, t - i as f64))
    }

    #[inline]
    fn interpolate(&self, i: usize, s: f64) -> (f64, f64) {
        if s == 0.0 {
            return (self.values[i], self.derivative_values[i]);
        }
        if s == 1.0 {
            return (self.values[i + 1], self.derivative_values[i + 1]);
        }
        let (v, d) = hermite(
            self.values[i],
            self.derivative_values[i],
            self.values[i + 1],
            self.derivative_values[i + 1],
            self.grid_step,
            s,
        );
        (v.clamp(0.0, 1.0), d)
    }

    /// Value and derivative at `x`. Queries outside the window are errors.
    pub fn evaluate(&self, x: f64) -> Result<(f64, f64)> {
        match self.locate(x) {
            Some((i, s)) => Ok(self.interpolate(i, s)),
            None => Err(self.out_of_window(x)),
        }
    }

    /// Value only; the Monte Carlo inner loop uses this.
    #[inline]
    pub fn value(&self, x: f64) -> Result<f64> {
        match self.locate(x) {
            Some((i, s)) => Ok(self.interpolate(i, s).0),
            None => Err(self.out_of_window(x)),
        }
    }

    /// Interpolation table for hot loops; see [`FastInterp`].
    pub fn fast_interp(&self) -> FastInterp {
        let h = self.grid_step;
        let n = self.values.len();
        let mut coeffs = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let (v0, v1) = (self.values[i], self.values[i + 1]);
            let (d0, d1) = (
                self.derivative_values[i] * h,
                self.derivative_values[i + 1] * h,
            );
            coeffs.push([
                v0,
                d0,
                3.0 * (v1 - v0) - 2.0 * d0 - d1,
                2.0 * (v0 - v1) + d0 + d1,
            ]);
        }
        FastInterp {
            inv_h: 1.0 / h,
            offset: self.first_index as f64,
            last: (n - 1) as f64,
            coeffs,
        }
    }

    fn out_of_window(&self, x: f64) -> Error {
        let w = self.window();
        Error::OutOfWindow {
            x,
            lo: w.lo,
            hi: w.hi,
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn derivative_sup(&self) -> f64 {
        self.derivative_values
            .iter()
            .fold(0.0, |m, d| m.max(d.abs()))
    }

    /// The field seen from `x + shift`, i.e. `x -> V(x + shift)`. The shift
    /// must be a multiple of the grid step so nodes stay on the lattice.
    pub fn shifted(&self, shift: f64) -> Result<Self> {
        let k = lattice_index(shift, self.grid_step).ok_or_else(|| {
            invalid(format!(
                "shift {shift} is not a multiple of grid_step {}",
                self.grid_step
            ))
        })?;
        let mut out = self.clone();
        out.first_index -= k;
        Ok(out)
    }

    /// Restriction to a sub-window with lattice-aligned ends.
    pub fn restrict(&self, window: Window) -> Result<Self> {
        let (first, n) = lattice_nodes(window, self.grid_step)?;
        let start = first - self.first_index;
        if start < 0 || start as usize + n > self.len() {
            let w = self.window();
            return Err(Error::WindowTooSmall {
                lo: w.lo,
                hi: w.hi,
                need_lo: window.lo,
                need_hi: window.hi,
            });
        }
        let s = start as usize;
        Ok(Self {
            first_index: first,
            values: self.values[s..s + n].to_vec(),
            derivative_values: self.derivative_values[s..s + n].to_vec(),
            ..self.clone()
        })
    }

    /// Fail unless the field covers `needed`.
    pub fn require_window(&self, needed: Window) -> Result<()> {
        let w = self.window();
        let slack = NODE_SNAP * self.grid_step * (1.0 + needed.lo.abs().max(needed.hi.abs()));
        if w.lo <= needed.lo + slack && w.hi >= needed.hi - slack {
            Ok(())
        } else {
            Err(Error::WindowTooSmall {
                lo: w.lo,
                hi: w.hi,
                need_lo: needed.lo,
                need_hi: needed.hi,
            })
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let field: Self = serde_json::from_str(text)?;
        field.validate()?;
        Ok(field)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// First lattice index and node count for a lattice-aligned window.
pub(crate) fn lattice_nodes(window: Window, grid_step: f64) -> Result<(i64, usize)> {
    if !(grid_step > 0.0 && grid_step.is_finite()) {
        return Err(invalid(format!(
            "grid_step must be positive, got {grid_step}"
        )));
    }
    if !(window.lo.is_finite() && window.hi.is_finite() && window.hi > window.lo) {
        return Err(invalid(format!(
            "window [{}, {}] must be finite with lo < hi",
            window.lo, window.hi
        )));
    }
    let lo = lattice_index(window.lo, grid_step);
    let hi = lattice_index(window.hi, grid_step);
    match (lo, hi) {
        (Some(a), Some(b)) if b > a => Ok((a, (b - a + 1) as usize)),
        _ => Err(invalid(format!(
            "window [{}, {}] is not aligned to the lattice of step {grid_step}",
            window.lo, window.hi
        ))),
    }
}

/// Per-cell cubic coefficients of the field interpolant. Agrees with
/// [`PotentialField::value`] to rounding, without node snapping.
#[derive(Debug, Clone)]
pub struct FastInterp {
    inv_h: f64,
    offset: f64,
    last: f64,
    coeffs: Vec<[f64; 4]>,
}

impl FastInterp {
    /// `None` outside the window.
    #[inline]
    pub fn value(&self, x: f64) -> Option<f64> {
        let t = x * self.inv_h - self.offset;
        if !(t >= 0.0 && t <= self.last) {
            return None;
        }
        let i = (t as usize).min(self.coeffs.len() - 1);
        let s = t - i as f64;
        let c = &self.coeffs[i];
        Some((c[0] + s * (c[1] + s * (c[2] + s * c[3]))).clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_value_matches_checked_value() {
        let f = generate_periodic(2.0, Window::new(-4.0, 4.0), 0.1).unwrap();
        let fast = f.fast_interp();
        for j in 0..=800 {
            let x = -4.0 + 0.01 * j as f64;
            assert!((fast.value(x).unwrap() - f.value(x).unwrap()).abs() < 1e-12);
        }
        assert!(fast.value(4.5).is_none());
    }

    #[test]
    fn node_queries_return_stored_samples() {
        let f = generate_periodic(2.0, Window::new(-4.0, 4.0), 0.1).unwrap();
        for i in 0..f.len() {
            let (v, d) = f.evaluate(f.node(i)).unwrap();
            assert_eq!(v, f.values[i]);
            assert_eq!(d, f.derivative_values[i]);
        }
    }

    #[test]
    fn out_of_window_is_an_error() {
        let f = generate_constant(0.3, Window::new(0.0, 1.0), 0.25).unwrap();
        assert!(matches!(f.evaluate(1.5), Err(Error::OutOfWindow { .. })));
        assert!(matches!(f.evaluate(-0.01), Err(Error::OutOfWindow { .. })));
        assert!(f.evaluate(1.0).is_ok());
    }

    #[test]
    fn misaligned_window_is_rejected() {
        assert!(generate_constant(0.3, Window::new(0.05, 1.0), 0.25).is_err());
    }

    #[test]
    fn custom_samples_validate_range() {
        let w = Window::new(0.0, 1.0);
        assert!(PotentialField::from_samples(w, 0.5, vec![0.0, 0.5, 1.0], vec![0.0; 3]).is_ok());
        assert!(PotentialField::from_samples(w, 0.5, vec![0.0, 1.5, 1.0], vec![0.0; 3]).is_err());
        assert!(PotentialField::from_samples(w, 0.5, vec![0.0, 1.0], vec![0.0; 2]).is_err());
    }

    #[test]
    fn shift_moves_the_window() {
        let f = generate_periodic(2.0, Window::new(-4.0, 4.0), 0.1).unwrap();
        let g = f.shifted(1.0).unwrap();
        assert!((g.window().lo + 5.0).abs() < 1e-12);
        assert_eq!(g.evaluate(-1.0).unwrap(), f.evaluate(0.0).unwrap());
        assert!(f.shifted(0.05).is_err());
    }

    #[test]
    fn restriction_keeps_samples() {
        let f = generate_periodic(2.0, Window::new(-4.0, 4.0), 0.1).unwrap();
        let g = f.restrict(Window::new(-1.0, 2.0)).unwrap();
        assert_eq!(g.evaluate(0.5).unwrap(), f.evaluate(0.5).unwrap());
        assert!(f.restrict(Window::new(-5.0, 0.0)).is_err());
    }
}

//! Complex fields on the exterior grid, conserved functionals and initial data.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{norm, ExteriorGrid, Point};
use crate::ground_state::GroundStateProfile;
use crate::linalg::{par_sum, par_sum_c};

/// Values on FLUID nodes; the field is zero on every other lattice node.
#[derive(Clone, Debug)]
pub struct ComplexField {
    pub grid: Arc<ExteriorGrid>,
    pub values: Vec<Complex64>,
    pub time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetryClass {
    /// zero-based axes under whose reflection the field is odd
    pub antisymmetric_axes: Vec<usize>,
}

impl SymmetryClass {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn full(dim: usize) -> Self {
        Self { antisymmetric_axes: (0..dim).collect() }
    }

    pub fn is_full(&self, dim: usize) -> bool {
        (0..dim).all(|a| self.antisymmetric_axes.contains(&a))
    }
}

impl ComplexField {
    pub fn zeros(grid: Arc<ExteriorGrid>) -> Self {
        let n = grid.len();
        Self { grid, values: vec![Complex64::new(0.0, 0.0); n], time: 0.0 }
    }

    pub fn from_fn<F>(grid: Arc<ExteriorGrid>, f: F) -> Self
    where
        F: Fn(&Point) -> Complex64 + Sync,
    {
        let values = grid.coords().par_iter().map(&f).collect();
        Self { grid, values, time: 0.0 }
    }

    pub fn with_values(&self, values: Vec<Complex64>) -> Self {
        Self { grid: self.grid.clone(), values, time: self.time }
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        self.with_values(self.values.iter().map(|z| z * lambda).collect())
    }

    pub fn rotated(&self, theta: f64) -> Self {
        let ph = Complex64::from_polar(1.0, theta);
        self.with_values(self.values.iter().map(|z| z * ph).collect())
    }

    pub fn conj(&self) -> Self {
        self.with_values(self.values.iter().map(|z| z.conj()).collect())
    }

    /// Weighted integral `∫ w(x) |u|^2`.
    pub fn weighted_mass<W>(&self, w: W) -> f64
    where
        W: Fn(&Point) -> f64 + Sync,
    {
        let c = self.grid.coords();
        let u = &self.values;
        self.grid.cell_volume() * par_sum(u.len(), |k| w(&c[k]) * u[k].norm_sqr())
    }

    /// M = ∫|u|²
    pub fn mass(&self) -> f64 {
        let u = &self.values;
        self.grid.cell_volume() * par_sum(u.len(), |k| u[k].norm_sqr())
    }

    /// ∫|∇u|² as the quadratic form h^d <u, -L u> of the conservative Laplacian.
    pub fn grad_sq(&self) -> f64 {
        let lu = self.grid.laplacian(&self.values);
        let u = &self.values;
        -self.grid.cell_volume() * par_sum_c(u.len(), |k| u[k].conj() * lu[k]).re
    }

    /// ∫|∇u|² from node gradients (unequal-arm centered differences).
    pub fn grad_sq_centered(&self) -> f64 {
        let g = self.grid.gradient(&self.values);
        let d = self.dim();
        self.grid.cell_volume() * par_sum(g.len(), |k| (0..d).map(|j| g[k][j].norm_sqr()).sum())
    }

    /// ∫|u|^{p+1}
    pub fn lp1_norm(&self, p: f64) -> f64 {
        let u = &self.values;
        self.grid.cell_volume() * par_sum(u.len(), |k| u[k].norm().powf(p + 1.0))
    }

    /// E = ½∫|∇u|² − (1/(p+1))∫|u|^{p+1}
    pub fn energy(&self, p: f64) -> f64 {
        0.5 * self.grad_sq() - self.lp1_norm(p) / (p + 1.0)
    }

    fn reflected(&self, axis: usize) -> Result<Vec<Complex64>> {
        let g = &self.grid;
        if axis >= g.dim {
            return invalid(format!("axis {axis} out of range for d = {}", g.dim));
        }
        (0..g.len())
            .map(|k| {
                g.reflection(axis, k)
                    .map(|r| self.values[r])
                    .ok_or_else(|| Error::Geometry(format!("grid is not symmetric under reflection of axis {axis}")))
            })
            .collect()
    }

    /// Projection onto fields odd in every axis of `class`.
    pub fn symmetrize(&self, class: &SymmetryClass) -> Result<Self> {
        let mut out = self.clone();
        for &axis in &class.antisymmetric_axes {
            let r = out.reflected(axis)?;
            out.values.iter_mut().zip(r).for_each(|(v, rv)| *v = (*v - rv) * 0.5);
        }
        Ok(out)
    }

    /// max |u(x) + u(reflect x)| over nodes and axes, relative to max |u| (0 for the zero field).
    pub fn antisymmetry_defect(&self, class: &SymmetryClass) -> Result<f64> {
        let umax = self.values.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        if umax == 0.0 {
            return Ok(0.0);
        }
        let mut worst = 0.0_f64;
        for &axis in &class.antisymmetric_axes {
            let r = self.reflected(axis)?;
            for (v, rv) in self.values.iter().zip(&r) {
                worst = worst.max((v + rv).norm());
            }
        }
        Ok(worst / umax)
    }

    pub fn is_antisymmetric(&self, class: &SymmetryClass, tol: f64) -> Result<bool> {
        Ok(self.antisymmetry_defect(class)? < tol)
    }
}

/// Smooth factor vanishing to third order on the obstacle boundary:
/// (1 − 1/ρ²)³ with ρ² = Σ (x_i/a_i)². The cube makes Δu = 0 on the boundary
/// at t = 0, so the Dirichlet problem starts without a boundary layer.
pub fn dirichlet_taper(grid: &ExteriorGrid, x: &Point) -> f64 {
    let rho2 = grid.obstacle.level(x) + 1.0;
    (1.0 - 1.0 / rho2).powi(3)
}

/// C² quintic smoothstep on [0, 1].
pub fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Radial cutoff: 0 for |x| ≤ inner, 1 for |x| ≥ outer.
pub fn cutoff(r: f64, inner: f64, outer: f64) -> f64 {
    smoothstep((r - inner) / (outer - inner))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InitialData {
    /// λ exp(−Σ((x_i−c_i)/w_i)²/2) e^{i k·x} times the boundary taper.
    GaussianBump {
        amplitude: f64,
        center: Vec<f64>,
        widths: Vec<f64>,
        #[serde(default)]
        wavevector: Vec<f64>,
    },
    /// λ exp(−(|x|−r₀)²/(2w²)) Π_{j∈class} (x_j/|x|) times the boundary taper.
    RingBump { amplitude: f64, radius: f64, width: f64 },
    /// Leading-order self-similar profile at the mass-critical exponent.
    Pseudoconformal {
        amplitude: f64,
        blowup_time: f64,
        time: f64,
        center: Vec<f64>,
        cutoff_inner: f64,
        cutoff_outer: f64,
    },
}

impl InitialData {
    pub fn amplitude(&self) -> f64 {
        match self {
            InitialData::GaussianBump { amplitude, .. }
            | InitialData::RingBump { amplitude, .. }
            | InitialData::Pseudoconformal { amplitude, .. } => *amplitude,
        }
    }

    pub fn needs_profile(&self) -> bool {
        matches!(self, InitialData::Pseudoconformal { .. })
    }

    pub fn build(
        &self,
        grid: Arc<ExteriorGrid>,
        class: &SymmetryClass,
        profile: Option<&GroundStateProfile>,
    ) -> Result<ComplexField> {
        let d = grid.dim;
        let raw = match self {
            InitialData::GaussianBump { amplitude, center, widths, wavevector } => {
                if center.len() != d || widths.len() != d {
                    return invalid(format!("bump center/widths must have {d} entries"));
                }
                if widths.iter().any(|w| !(*w > 0.0)) {
                    return invalid("bump widths must be positive");
                }
                if !wavevector.is_empty() && wavevector.len() != d {
                    return invalid(format!("wavevector must have {d} entries"));
                }
                let g = grid.clone();
                ComplexField::from_fn(grid.clone(), |x| {
                    let mut e = 0.0;
                    let mut ph = 0.0;
                    for j in 0..d {
                        e += ((x[j] - center[j]) / widths[j]).powi(2);
                        if !wavevector.is_empty() {
                            ph += wavevector[j] * x[j];
                        }
                    }
                    Complex64::from_polar(amplitude * (-0.5 * e).exp() * dirichlet_taper(&g, x), ph)
                })
            }
            InitialData::RingBump { amplitude, radius, width } => {
                if !(*width > 0.0) || !(*radius > 0.0) {
                    return invalid("ring radius and width must be positive");
                }
                let g = grid.clone();
                let axes = class.antisymmetric_axes.clone();
                ComplexField::from_fn(grid.clone(), |x| {
                    let r = norm(x);
                    let mut ang = 1.0;
                    for &j in &axes {
                        ang *= x[j] / r;
                    }
                    let v = amplitude * (-0.5 * ((r - radius) / width).powi(2)).exp() * ang;
                    Complex64::new(v * dirichlet_taper(&g, x), 0.0)
                })
            }
            InitialData::Pseudoconformal {
                amplitude,
                blowup_time,
                time,
                center,
                cutoff_inner,
                cutoff_outer,
            } => {
                let prof = profile.ok_or_else(|| Error::InvalidInput("pseudoconformal data needs a ground state".into()))?;
                let f = pseudoconformal_ansatz(
                    grid.clone(),
                    prof,
                    *blowup_time,
                    *time,
                    center,
                    (*cutoff_inner, *cutoff_outer),
                )?;
                f.scaled(*amplitude)
            }
        };
        raw.symmetrize(class)
    }
}

/// (T−t)^{−d/2} Q(|x−x₀|/(T−t)) Ψ(x) exp(i(4−|x−x₀|²)/(4(T−t))), without the correction term.
pub fn pseudoconformal_ansatz(
    grid: Arc<ExteriorGrid>,
    profile: &GroundStateProfile,
    blowup_time: f64,
    t: f64,
    x0: &[f64],
    cutoff_radii: (f64, f64),
) -> Result<ComplexField> {
    let d = grid.dim;
    if profile.d != d {
        return invalid(format!("profile has d = {}, grid has d = {d}", profile.d));
    }
    let pc = 1.0 + 4.0 / d as f64;
    if (profile.p - pc).abs() > 1e-12 {
        return invalid(format!("pseudoconformal ansatz needs p = 1 + 4/d = {pc}, profile has p = {}", profile.p));
    }
    if !(t >= 0.0 && t < blowup_time) {
        return invalid(format!("need 0 <= t < T, got t = {t}, T = {blowup_time}"));
    }
    if x0.len() != d {
        return invalid(format!("center must have {d} entries"));
    }
    let (inner, outer) = cutoff_radii;
    if inner < grid.obstacle.big_m || !(outer > inner) {
        return invalid(format!(
            "cutoff radii ({inner}, {outer}) must satisfy M = {} <= inner < outer",
            grid.obstacle.big_m
        ));
    }
    let tau = blowup_time - t;
    let amp = tau.powf(-(d as f64) / 2.0);
    let mut f = ComplexField::from_fn(grid, |x| {
        let mut r2 = 0.0;
        for j in 0..d {
            r2 += (x[j] - x0[j]).powi(2);
        }
        let psi = cutoff(norm(x), inner, outer);
        if psi == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let q = profile.eval(r2.sqrt() / tau);
        Complex64::from_polar(amp * q * psi, (4.0 - r2) / (4.0 * tau))
    });
    f.time = t;
    Ok(f)
}

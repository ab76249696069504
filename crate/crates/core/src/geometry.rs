//! Obstacles, the truncated exterior lattice, cut-cell links and boundary quadrature.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::par_sum;

pub type Point = [f64; 3];

const NONE: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObstacleKind {
    Ball,
    Ellipsoid,
}

/// Axis-aligned ellipsoid (or ball) centered at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSpec {
    pub kind: ObstacleKind,
    pub semi_axes: Vec<f64>,
    /// max over the boundary of |x|
    pub big_m: f64,
    /// min over the boundary of |x|
    pub small_m: f64,
}

impl ObstacleSpec {
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return invalid(format!("dimension {dim} not supported"));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            return invalid(format!("ball radius must be positive, got {radius}"));
        }
        Ok(Self {
            kind: ObstacleKind::Ball,
            semi_axes: vec![radius; dim],
            big_m: radius,
            small_m: radius,
        })
    }

    pub fn ellipsoid(semi_axes: &[f64]) -> Result<Self> {
        if !(1..=3).contains(&semi_axes.len()) {
            return invalid(format!("{} semi-axes given, expected 1 to 3", semi_axes.len()));
        }
        if semi_axes.iter().any(|a| !(*a > 0.0) || !a.is_finite()) {
            return invalid(format!("semi-axes must be positive, got {semi_axes:?}"));
        }
        let big_m = semi_axes.iter().cloned().fold(f64::MIN, f64::max);
        let small_m = semi_axes.iter().cloned().fold(f64::MAX, f64::min);
        Ok(Self {
            kind: ObstacleKind::Ellipsoid,
            semi_axes: semi_axes.to_vec(),
            big_m,
            small_m,
        })
    }

    /// Build from a kind tag and parameters: one radius for a ball, one semi-axis per dimension otherwise.
    pub fn make(kind: ObstacleKind, dim: usize, params: &[f64]) -> Result<Self> {
        match kind {
            ObstacleKind::Ball => match params {
                [r] => Self::ball(dim, *r),
                _ => invalid("ball takes exactly one radius"),
            },
            ObstacleKind::Ellipsoid => {
                if params.len() != dim {
                    return invalid(format!("ellipsoid in d={dim} needs {dim} semi-axes"));
                }
                Self::ellipsoid(params)
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.semi_axes.len()
    }

    pub fn is_ball(&self) -> bool {
        self.semi_axes.iter().all(|a| *a == self.semi_axes[0])
    }

    /// Ratio M/m used by the convex-obstacle hypotheses.
    pub fn aspect(&self) -> f64 {
        self.big_m / self.small_m
    }

    /// Level function, negative inside, zero on the boundary.
    pub fn level(&self, x: &Point) -> f64 {
        self.semi_axes
            .iter()
            .enumerate()
            .map(|(i, a)| (x[i] / a).powi(2))
            .sum::<f64>()
            - 1.0
    }

    pub fn contains(&self, x: &Point) -> bool {
        self.level(x) <= 0.0
    }

    /// Unit normal at a boundary point, pointing into the obstacle.
    pub fn inward_normal(&self, x: &Point) -> Point {
        let mut n = [0.0; 3];
        for (i, a) in self.semi_axes.iter().enumerate() {
            n[i] = -x[i] / (a * a);
        }
        let len = n.iter().map(|v| v * v).sum::<f64>().sqrt();
        n.iter_mut().for_each(|v| *v /= len);
        n
    }

    /// Distance from `x` (outside) to the boundary along `sign * e_axis`, if the
    /// ray enters the obstacle.
    fn axis_hit(&self, x: &Point, axis: usize, sign: f64) -> Option<f64> {
        let mut c = 1.0;
        for (i, a) in self.semi_axes.iter().enumerate() {
            if i != axis {
                c -= (x[i] / a).powi(2);
            }
        }
        // a neighbor lying exactly on the surface can give c = -eps
        if c < -1e-12 {
            return None;
        }
        let reach = self.semi_axes[axis] * c.max(0.0).sqrt();
        if x[axis] * sign >= 0.0 {
            return None;
        }
        let t = x[axis].abs() - reach;
        (t >= 0.0).then_some(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeClass {
    Fluid,
    Obstacle,
    BoundaryAdj,
    Outer,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Link {
    Fluid(u32),
    /// neighbor is inside the obstacle; the boundary sits at `theta * h`
    Cut(f64),
    /// neighbor is beyond the truncation radius (value 0 at full spacing)
    Outer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFace {
    pub point: Point,
    /// unit normal pointing into the obstacle
    pub normal: Point,
    pub weight: f64,
    pub axis: usize,
    pub node: u32,
    pub theta: f64,
}

impl BoundaryFace {
    pub fn x_dot_n(&self) -> f64 {
        dot(&self.point, &self.normal)
    }
    pub fn radius(&self) -> f64 {
        norm(&self.point)
    }
}

/// Sparse row-compressed matrix with real weights.
#[derive(Clone, Debug, Default)]
pub struct Csr {
    pub offsets: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn rows(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn apply(&self, u: &[Complex64]) -> Vec<Complex64> {
        (0..self.rows())
            .into_par_iter()
            .map(|r| {
                let mut s = Complex64::new(0.0, 0.0);
                for k in self.offsets[r]..self.offsets[r + 1] {
                    s += self.vals[k] * u[self.cols[k] as usize];
                }
                s
            })
            .collect()
    }
}

/// Uniform lattice on `[-n h, n h]^d` restricted to the exterior of the obstacle
/// and the interior of the truncation sphere.
#[derive(Clone, Debug)]
pub struct ExteriorGrid {
    pub dim: usize,
    pub h: f64,
    pub r_out: f64,
    pub obstacle: ObstacleSpec,
    n_half: i64,
    side: usize,
    class: Vec<NodeClass>,
    fluid_of: Vec<u32>,
    lattice_of: Vec<usize>,
    coords: Vec<Point>,
    links: Vec<Link>,
    gibou_diag: Vec<f64>,
    pub faces: Vec<BoundaryFace>,
    extraction: Csr,
    planes: Vec<Vec<u32>>,
    reflections: Vec<Vec<u32>>,
    annulus: Vec<u32>,
}

pub const SURFACE_PARTITION_POWER: i32 = 4;

impl ExteriorGrid {
    pub fn build(obstacle: &ObstacleSpec, r_out: f64, h: f64) -> Result<Self> {
        let dim = obstacle.dim();
        if !(2..=3).contains(&dim) {
            return invalid(format!("grids are built in d=2 or d=3, obstacle has d={dim}"));
        }
        if !(h > 0.0) || !h.is_finite() {
            return invalid(format!("grid spacing must be positive, got {h}"));
        }
        if !(r_out > 0.0) || !r_out.is_finite() {
            return invalid(format!("truncation radius must be positive, got {r_out}"));
        }
        if r_out <= obstacle.big_m {
            return Err(Error::Geometry(format!(
                "truncation radius {r_out} does not enclose the obstacle (M = {})",
                obstacle.big_m
            )));
        }
        if r_out <= 2.0 * obstacle.big_m {
            return Err(Error::Geometry(format!(
                "truncation radius {r_out} must exceed 2M = {}",
                2.0 * obstacle.big_m
            )));
        }
        if h >= obstacle.small_m / 8.0 {
            return Err(Error::Resolution(format!(
                "h = {h} does not resolve the obstacle (need h < m/8 = {})",
                obstacle.small_m / 8.0
            )));
        }

        let n_half = (r_out / h).ceil() as i64 + 1;
        let side = (2 * n_half + 1) as usize;
        let total = side.pow(dim as u32);
        let mut g = ExteriorGrid {
            dim,
            h,
            r_out,
            obstacle: obstacle.clone(),
            n_half,
            side,
            class: vec![NodeClass::Outer; total],
            fluid_of: vec![NONE; total],
            lattice_of: Vec::new(),
            coords: Vec::new(),
            links: Vec::new(),
            gibou_diag: Vec::new(),
            faces: Vec::new(),
            extraction: Csr::default(),
            planes: Vec::new(),
            reflections: Vec::new(),
            annulus: Vec::new(),
        };

        for lin in 0..total {
            let x = g.lattice_point(lin);
            g.class[lin] = if norm(&x) >= r_out {
                NodeClass::Outer
            } else if obstacle.contains(&x) {
                NodeClass::Obstacle
            } else {
                NodeClass::Fluid
            };
        }
        for lin in 0..total {
            if g.class[lin] == NodeClass::Fluid {
                g.fluid_of[lin] = g.lattice_of.len() as u32;
                g.lattice_of.push(lin);
                g.coords.push(g.lattice_point(lin));
            }
        }
        for lin in 0..total {
            if g.class[lin] == NodeClass::Obstacle
                && (0..2 * dim).any(|dir| {
                    g.lattice_step(lin, dir)
                        .is_some_and(|nb| g.class[nb] == NodeClass::Fluid)
                })
            {
                g.class[lin] = NodeClass::BoundaryAdj;
            }
        }

        g.build_links()?;
        g.build_faces();
        g.build_extraction()?;
        g.build_planes_and_reflections();
        Ok(g)
    }

    fn lattice_point(&self, lin: usize) -> Point {
        let mut x = [0.0; 3];
        let mut rem = lin;
        for k in (0..self.dim).rev() {
            let i = (rem % self.side) as i64 - self.n_half;
            rem /= self.side;
            x[k] = i as f64 * self.h;
        }
        x
    }

    fn lattice_multi(&self, lin: usize) -> [i64; 3] {
        let mut idx = [0i64; 3];
        let mut rem = lin;
        for k in (0..self.dim).rev() {
            idx[k] = (rem % self.side) as i64 - self.n_half;
            rem /= self.side;
        }
        idx
    }

    fn lattice_lin(&self, idx: &[i64; 3]) -> Option<usize> {
        let mut lin = 0usize;
        for &i in idx.iter().take(self.dim) {
            if i < -self.n_half || i > self.n_half {
                return None;
            }
            lin = lin * self.side + (i + self.n_half) as usize;
        }
        Some(lin)
    }

    fn stride(&self, axis: usize) -> usize {
        self.side.pow((self.dim - 1 - axis) as u32)
    }

    /// Direction `dir = 2 * axis + s` with `s = 0` for `+e_axis`, `s = 1` for `-e_axis`.
    fn lattice_step(&self, lin: usize, dir: usize) -> Option<usize> {
        let axis = dir / 2;
        let idx = self.lattice_multi(lin)[axis];
        let stride = self.stride(axis);
        if dir % 2 == 0 {
            (idx < self.n_half).then(|| lin + stride)
        } else {
            (idx > -self.n_half).then(|| lin - stride)
        }
    }

    fn build_links(&mut self) -> Result<()> {
        let nd = 2 * self.dim;
        let nf = self.lattice_of.len();
        let mut links = Vec::with_capacity(nf * nd);
        let mut diag = Vec::with_capacity(nf);
        for k in 0..nf {
            let lin = self.lattice_of[k];
            let x = self.coords[k];
            let mut dsum = 0.0;
            for dir in 0..nd {
                let nb = self
                    .lattice_step(lin, dir)
                    .ok_or_else(|| Error::Geometry("fluid node on lattice edge".into()))?;
                let link = match self.class[nb] {
                    NodeClass::Fluid => Link::Fluid(self.fluid_of[nb]),
                    NodeClass::Outer => Link::Outer,
                    NodeClass::Obstacle | NodeClass::BoundaryAdj => {
                        let sign = if dir % 2 == 0 { 1.0 } else { -1.0 };
                        let t = self
                            .obstacle
                            .axis_hit(&x, dir / 2, sign)
                            .ok_or_else(|| Error::Geometry(format!("no boundary crossing from node {x:?}")))?;
                        let theta = (t / self.h).clamp(f64::MIN_POSITIVE, 1.0);
                        Link::Cut(theta)
                    }
                };
                dsum += match link {
                    Link::Cut(theta) => 1.0 / theta,
                    _ => 1.0,
                };
                links.push(link);
            }
            diag.push(-dsum);
        }
        self.links = links;
        self.gibou_diag = diag;
        Ok(())
    }

    fn build_faces(&mut self) {
        let nd = 2 * self.dim;
        let hd1 = self.h.powi(self.dim as i32 - 1);
        let mut faces = Vec::new();
        for k in 0..self.coords.len() {
            for dir in 0..nd {
                if let Link::Cut(theta) = self.links[k * nd + dir] {
                    let axis = dir / 2;
                    let sign = if dir % 2 == 0 { 1.0 } else { -1.0 };
                    let mut p = self.coords[k];
                    p[axis] += sign * theta * self.h;
                    let n = self.obstacle.inward_normal(&p);
                    let q = SURFACE_PARTITION_POWER;
                    let denom: f64 = (0..self.dim).map(|j| n[j].abs().powi(q)).sum();
                    let weight = hd1 * n[axis].abs().powi(q - 1) / denom;
                    faces.push(BoundaryFace {
                        point: p,
                        normal: n,
                        weight,
                        axis,
                        node: k as u32,
                        theta,
                    });
                }
            }
        }
        self.faces = faces;
    }

    /// Sample offsets (in units of h) along the normal used to reconstruct the
    /// boundary normal derivative.
    pub fn extraction_offsets(&self) -> &'static [f64] {
        if self.dim == 2 {
            &[3.0, 4.0, 5.0, 6.0]
        } else {
            &[4.0, 5.0, 6.0, 7.0]
        }
    }

    fn build_extraction(&mut self) -> Result<()> {
        let offs = self.extraction_offsets();
        let mut nodes = vec![0.0];
        nodes.extend_from_slice(offs);
        let dw = derivative_weights_at_zero(&nodes);
        let mut csr = Csr { offsets: vec![0], ..Default::default() };
        let lo = -(self.n_half as f64) * self.h;
        for f in &self.faces {
            let mut row: Vec<(u32, f64)> = Vec::new();
            for (si, s) in offs.iter().enumerate() {
                let wd = dw[si + 1] / self.h;
                let mut p = f.point;
                for j in 0..self.dim {
                    p[j] -= s * self.h * f.normal[j];
                }
                let mut base = [0i64; 3];
                let mut lw = [[0.0; 4]; 3];
                for j in 0..self.dim {
                    let xi = (p[j] - lo) / self.h;
                    let b = xi.floor() as i64 - 1;
                    base[j] = b - self.n_half;
                    lw[j] = cubic_lagrange(xi - b as f64);
                }
                let count = 4usize.pow(self.dim as u32);
                for c in 0..count {
                    let mut idx = [0i64; 3];
                    let mut w = wd;
                    let mut rem = c;
                    for j in 0..self.dim {
                        let a = rem % 4;
                        rem /= 4;
                        idx[j] = base[j] + a as i64;
                        w *= lw[j][a];
                    }
                    let lin = self
                        .lattice_lin(&idx)
                        .ok_or_else(|| Error::Resolution("normal stencil leaves the lattice".into()))?;
                    let fid = self.fluid_of[lin];
                    if fid == NONE {
                        return Err(Error::Resolution(format!(
                            "normal-derivative stencil at boundary point {:?} touches a non-fluid node",
                            f.point
                        )));
                    }
                    row.push((fid, w));
                }
            }
            row.sort_by_key(|e| e.0);
            let mut merged: Vec<(u32, f64)> = Vec::with_capacity(row.len());
            for (c, w) in row {
                match merged.last_mut() {
                    Some(last) if last.0 == c => last.1 += w,
                    _ => merged.push((c, w)),
                }
            }
            for (c, w) in merged {
                csr.cols.push(c);
                csr.vals.push(w);
            }
            csr.offsets.push(csr.cols.len());
        }
        self.extraction = csr;
        Ok(())
    }

    fn build_planes_and_reflections(&mut self) {
        let nf = self.coords.len();
        let mut planes = vec![Vec::new(); self.dim];
        let mut refl = vec![vec![NONE; nf]; self.dim];
        for k in 0..nf {
            let lin = self.lattice_of[k];
            let idx = self.lattice_multi(lin);
            for j in 0..self.dim {
                if idx[j] == 1 {
                    let mut on_plane = idx;
                    on_plane[j] = 0;
                    if let Some(l0) = self.lattice_lin(&on_plane) {
                        if self.class[l0] == NodeClass::Fluid {
                            planes[j].push(k as u32);
                        }
                    }
                }
                let mut r = idx;
                r[j] = -r[j];
                if let Some(lr) = self.lattice_lin(&r) {
                    refl[j][k] = self.fluid_of[lr];
                }
            }
        }
        let inner = self.r_out - 2.0;
        self.annulus = (0..nf)
            .filter(|&k| norm(&self.coords[k]) > inner)
            .map(|k| k as u32)
            .collect();
        self.planes = planes;
        self.reflections = refl;
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Quadrature weight h^d.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn coord(&self, k: usize) -> &Point {
        &self.coords[k]
    }

    pub fn coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn node_class_at(&self, idx: &[i64]) -> Option<NodeClass> {
        let mut full = [0i64; 3];
        full[..idx.len()].copy_from_slice(idx);
        self.lattice_lin(&full).map(|l| self.class[l])
    }

    /// Classes of all lattice nodes in lattice order.
    pub fn node_classes(&self) -> &[NodeClass] {
        &self.class
    }

    pub fn links(&self, k: usize) -> &[Link] {
        let nd = 2 * self.dim;
        &self.links[k * nd..(k + 1) * nd]
    }

    /// Diagonal of the symmetric cut-cell Laplacian, in units of 1/h^2.
    pub fn laplacian_diag(&self) -> &[f64] {
        &self.gibou_diag
    }

    /// Fluid nodes at x_j = h whose mirror on the plane x_j = 0 is a fluid node.
    pub fn plane_nodes(&self, axis: usize) -> &[u32] {
        &self.planes[axis]
    }

    /// Fluid node index of the reflection x_axis -> -x_axis, if it is a fluid node.
    pub fn reflection(&self, axis: usize, k: usize) -> Option<usize> {
        let r = self.reflections[axis][k];
        (r != NONE).then_some(r as usize)
    }

    pub fn is_reflection_symmetric(&self, axis: usize) -> bool {
        self.reflections[axis].iter().all(|&r| r != NONE)
    }

    pub fn annulus_nodes(&self) -> &[u32] {
        &self.annulus
    }

    /// Symmetric cut-cell Dirichlet Laplacian: unit off-diagonal couplings, a cut
    /// arm of fraction theta contributes -1/theta to the diagonal.
    pub fn apply_laplacian(&self, u: &[Complex64], out: &mut [Complex64]) {
        let nd = 2 * self.dim;
        let ih2 = 1.0 / (self.h * self.h);
        out.par_iter_mut().enumerate().for_each(|(k, o)| {
            let mut s = self.gibou_diag[k] * u[k];
            for link in &self.links[k * nd..(k + 1) * nd] {
                if let Link::Fluid(j) = link {
                    s += u[*j as usize];
                }
            }
            *o = s * ih2;
        });
    }

    pub fn laplacian(&self, u: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); u.len()];
        self.apply_laplacian(u, &mut out);
        out
    }

    fn arm(&self, u: &[Complex64], link: Link) -> (f64, Complex64) {
        match link {
            Link::Fluid(j) => (self.h, u[j as usize]),
            Link::Cut(theta) => (theta * self.h, Complex64::new(0.0, 0.0)),
            Link::Outer => (self.h, Complex64::new(0.0, 0.0)),
        }
    }

    /// Unequal-arm (Shortley–Weller) Laplacian, used where a pointwise value of
    /// the Laplacian is needed rather than a conservative operator.
    pub fn sw_laplacian(&self, u: &[Complex64]) -> Vec<Complex64> {
        (0..self.len()).into_par_iter().map(|k| self.sw_laplacian_at(u, k)).collect()
    }

    pub fn sw_laplacian_at(&self, u: &[Complex64], k: usize) -> Complex64 {
        let links = self.links(k);
        let mut s = Complex64::new(0.0, 0.0);
        for axis in 0..self.dim {
            let (hp, up) = self.arm(u, links[2 * axis]);
            let (hm, um) = self.arm(u, links[2 * axis + 1]);
            s += 2.0 / (hp + hm) * ((up - u[k]) / hp - (u[k] - um) / hm);
        }
        s
    }

    /// Fourth-order centered gradient and Laplacian at node `k`, or `None`
    /// when a node two steps away along some axis is not a fluid node.
    pub fn wide_stencil_at(&self, u: &[Complex64], k: usize) -> Option<([Complex64; 3], Complex64)> {
        let nd = 2 * self.dim;
        let step = |j: usize, dir: usize| match self.links[j * nd + dir] {
            Link::Fluid(i) => Some(i as usize),
            _ => None,
        };
        let mut g = [Complex64::new(0.0, 0.0); 3];
        let mut lap = Complex64::new(0.0, 0.0);
        for axis in 0..self.dim {
            let p1 = step(k, 2 * axis)?;
            let p2 = step(p1, 2 * axis)?;
            let m1 = step(k, 2 * axis + 1)?;
            let m2 = step(m1, 2 * axis + 1)?;
            g[axis] = (u[m2] - u[p2] + 8.0 * (u[p1] - u[m1])) / (12.0 * self.h);
            lap += (16.0 * (u[p1] + u[m1]) - u[p2] - u[m2] - 30.0 * u[k]) / (12.0 * self.h * self.h);
        }
        Some((g, lap))
    }

    /// Second-order gradient at node `k` from unequal-arm centered differences,
    /// using the boundary value 0 at cut points.
    pub fn gradient_at(&self, u: &[Complex64], k: usize) -> [Complex64; 3] {
        let links = self.links(k);
        let mut g = [Complex64::new(0.0, 0.0); 3];
        for axis in 0..self.dim {
            let (hp, up) = self.arm(u, links[2 * axis]);
            let (hm, um) = self.arm(u, links[2 * axis + 1]);
            g[axis] = (hm * hm * (up - u[k]) + hp * hp * (u[k] - um)) / (hp * hm * (hp + hm));
        }
        g
    }

    pub fn gradient(&self, u: &[Complex64]) -> Vec<[Complex64; 3]> {
        (0..self.len()).into_par_iter().map(|k| self.gradient_at(u, k)).collect()
    }

    /// Normal derivative at every boundary face (sign: derivative into the fluid).
    pub fn normal_derivatives(&self, u: &[Complex64]) -> Vec<Complex64> {
        self.extraction.apply(u)
    }

    pub fn extraction_operator(&self) -> &Csr {
        &self.extraction
    }

    /// Sum over faces of `value * weight`.
    pub fn surface_integral(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.faces.len() {
            return invalid(format!(
                "{} face values for {} boundary faces",
                values.len(),
                self.faces.len()
            ));
        }
        Ok(par_sum(values.len(), |i| values[i] * self.faces[i].weight))
    }

    /// 2 * max over faces of |x.n| / sum |n_i|, skipping faces with sum |n_i| below 1e-12.
    pub fn recommended_c(&self) -> f64 {
        let mut best = 0.0_f64;
        for f in &self.faces {
            let s: f64 = (0..self.dim).map(|j| f.normal[j].abs()).sum();
            if s < 1e-12 {
                log::warn!("face at {:?} skipped in C estimate: degenerate normal", f.point);
                continue;
            }
            best = best.max(f.x_dot_n().abs() / s);
        }
        2.0 * best
    }
}

pub fn dot(a: &Point, b: &Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Point) -> f64 {
    dot(a, a).sqrt()
}

/// Cubic Lagrange weights for nodes 0, 1, 2, 3 evaluated at `t`.
fn cubic_lagrange(t: f64) -> [f64; 4] {
    let mut w = [0.0; 4];
    for (a, wa) in w.iter_mut().enumerate() {
        let mut p = 1.0;
        for b in 0..4 {
            if b != a {
                p *= (t - b as f64) / (a as f64 - b as f64);
            }
        }
        *wa = p;
    }
    w
}

/// Weights `c_j` with `f'(0) ~ sum_j c_j f(nodes[j])` for the interpolating polynomial.
fn derivative_weights_at_zero(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for j in 0..n {
        let mut denom = 1.0;
        for m in 0..n {
            if m != j {
                denom *= nodes[j] - nodes[m];
            }
        }
        let mut num = 0.0;
        for m in 0..n {
            if m == j {
                continue;
            }
            let mut prod = 1.0;
            for l in 0..n {
                if l != j && l != m {
                    prod *= -nodes[l];
                }
            }
            num += prod;
        }
        w[j] = num / denom;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_weights_are_exact_for_quartics() {
        let nodes = [0.0, 3.0, 4.0, 5.0, 6.0];
        let w = derivative_weights_at_zero(&nodes);
        let f = |x: f64| 2.0 + 3.0 * x - x * x + 0.5 * x.powi(3) - 0.01 * x.powi(4);
        let d: f64 = nodes.iter().zip(&w).map(|(x, c)| c * f(*x)).sum();
        assert!((d - 3.0).abs() < 1e-12);
    }

    #[test]
    fn cubic_lagrange_reproduces_cubics() {
        let t = 1.37;
        let w = cubic_lagrange(t);
        let f = |x: f64| 1.0 - x + 2.0 * x * x - 0.3 * x.powi(3);
        let v: f64 = (0..4).map(|a| w[a] * f(a as f64)).sum();
        assert!((v - f(t)).abs() < 1e-13);
    }

    #[test]
    fn axis_hit_on_unit_circle() {
        let ob = ObstacleSpec::ball(2, 1.0).unwrap();
        let t = ob.axis_hit(&[1.05, 0.0, 0.0], 0, -1.0).unwrap();
        assert!((t - 0.05).abs() < 1e-15);
        assert!(ob.axis_hit(&[1.05, 0.0, 0.0], 0, 1.0).is_none());
        assert!(ob.axis_hit(&[0.0, 1.5, 0.0], 0, 1.0).is_none());
    }
}

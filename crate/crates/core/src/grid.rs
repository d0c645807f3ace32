//! Cell-centred box mesh on `[0, Lx] x [0, Ly] x (p1, p0)`.
//!
//! Storage is row-major with `i` (x) fastest and `k` (pressure) slowest:
//! `idx(i, j, k) = (k * ny + j) * nx + i`. Level `k = 0` touches the top
//! boundary `p = p1`, level `k = np - 1` touches the surface `p = p0`.

use crate::config::RunConfig;

/// Which part of the boundary a face belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryPart {
    /// `p = p0`.
    Bottom,
    /// `p = p1`.
    Top,
    /// The lateral walls.
    Lateral,
}

/// A boundary face of the cell `cell`, identified by its outward direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundaryFace {
    pub cell: usize,
    pub outward: Outward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outward {
    West,
    East,
    South,
    North,
    Up,
    Down,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub np: usize,
    pub lx: f64,
    pub ly: f64,
    pub p1: f64,
    pub p0: f64,
    pub dx: f64,
    pub dy: f64,
    pub dp: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Cell-centre pressures, increasing with `k`.
    pub p: Vec<f64>,
    /// Face pressures, `np + 1` entries from `p1` to `p0`.
    pub p_face: Vec<f64>,
    /// Background temperature at cell centres.
    pub tbar: Vec<f64>,
    /// Background temperature at faces.
    pub tbar_face: Vec<f64>,
    /// Gravity and dry gas constant baked into the vertical weight.
    g: f64,
    rd: f64,
}

impl Grid {
    pub fn new(cfg: &RunConfig) -> Self {
        let d = &cfg.domain;
        Self::from_parts(
            (cfg.grid.nx, cfg.grid.ny, cfg.grid.np),
            (d.lx, d.ly, d.p1, d.p0),
            (d.tbar_top, d.tbar_bottom),
            cfg.physics.g,
            cfg.physics.rd,
        )
    }

    /// Build directly from dimensions; `tbar` is linear in `p` between the
    /// two given end values.
    pub fn from_parts(
        (nx, ny, np): (usize, usize, usize),
        (lx, ly, p1, p0): (f64, f64, f64, f64),
        (tbar_top, tbar_bottom): (f64, f64),
        g: f64,
        rd: f64,
    ) -> Self {
        let dx = lx / nx as f64;
        let dy = ly / ny as f64;
        let dp = (p0 - p1) / np as f64;
        let x = (0..nx).map(|i| (i as f64 + 0.5) * dx).collect();
        let y = (0..ny).map(|j| (j as f64 + 0.5) * dy).collect();
        let p: Vec<f64> = (0..np).map(|k| p1 + (k as f64 + 0.5) * dp).collect();
        let mut p_face: Vec<f64> = (0..=np).map(|k| p1 + k as f64 * dp).collect();
        p_face[np] = p0;
        let tb = |pp: f64| tbar_top + (tbar_bottom - tbar_top) * (pp - p1) / (p0 - p1);
        let tbar = p.iter().map(|&pp| tb(pp)).collect();
        let tbar_face = p_face.iter().map(|&pp| tb(pp)).collect();
        Self {
            nx,
            ny,
            np,
            lx,
            ly,
            p1,
            p0,
            dx,
            dy,
            dp,
            x,
            y,
            p,
            p_face,
            tbar,
            tbar_face,
            g,
            rd,
        }
    }

    #[inline]
    pub fn ncol(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny * self.np
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    #[inline]
    pub fn col(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// `(i, j, k)` of a flat index.
    #[inline]
    pub fn ijk(&self, n: usize) -> (usize, usize, usize) {
        let i = n % self.nx;
        let j = (n / self.nx) % self.ny;
        let k = n / self.ncol();
        (i, j, k)
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy * self.dp
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// `|M| = Lx Ly (p0 - p1)` in the pressure-volume measure.
    pub fn volume(&self) -> f64 {
        self.lx * self.ly * (self.p0 - self.p1)
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn gravity(&self) -> f64 {
        self.g
    }

    pub fn rd(&self) -> f64 {
        self.rd
    }

    /// Vertical diffusion weight `g p / (Rd Tbar(p))` at cell centres.
    pub fn weight(&self, k: usize) -> f64 {
        self.g * self.p[k] / (self.rd * self.tbar[k])
    }

    /// The same weight at face `kf` (`0` is `p1`, `np` is `p0`).
    pub fn weight_face(&self, kf: usize) -> f64 {
        self.g * self.p_face[kf] / (self.rd * self.tbar_face[kf])
    }

    pub fn tbar_min(&self) -> f64 {
        self.tbar_face
            .iter()
            .chain(&self.tbar)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// Every boundary face tagged with the part of the boundary it lies on.
    pub fn boundary_faces(&self) -> Vec<(BoundaryFace, BoundaryPart)> {
        let mut out = Vec::new();
        for k in 0..self.np {
            for j in 0..self.ny {
                for i in 0..self.nx {
                    let cell = self.idx(i, j, k);
                    let mut push = |outward, part| out.push((BoundaryFace { cell, outward }, part));
                    if i == 0 {
                        push(Outward::West, BoundaryPart::Lateral);
                    }
                    if i + 1 == self.nx {
                        push(Outward::East, BoundaryPart::Lateral);
                    }
                    if j == 0 {
                        push(Outward::South, BoundaryPart::Lateral);
                    }
                    if j + 1 == self.ny {
                        push(Outward::North, BoundaryPart::Lateral);
                    }
                    if k == 0 {
                        push(Outward::Up, BoundaryPart::Top);
                    }
                    if k + 1 == self.np {
                        push(Outward::Down, BoundaryPart::Bottom);
                    }
                }
            }
        }
        out
    }

    /// Column integral `int_p^{p0} f ds` evaluated at every cell centre.
    ///
    /// Whole cells below `p_k` use the midpoint rule; the half cell
    /// `[p_k, p_k + dp/2]` uses the trapezoid rule with the face value
    /// interpolated linearly (extrapolated at `p0`). Exact for integrands
    /// linear in `p`.
    pub fn vertical_integral(&self, field: &[f64]) -> Vec<f64> {
        debug_assert_eq!(field.len(), self.len());
        let (nc, np, dp) = (self.ncol(), self.np, self.dp);
        let mut out = vec![0.0; field.len()];
        for c in 0..nc {
            let f = |k: usize| field[k * nc + c];
            let mut below = 0.0;
            for k in (0..np).rev() {
                let face = if k + 1 < np {
                    0.5 * (f(k) + f(k + 1))
                } else {
                    1.5 * f(k) - 0.5 * f(k - 1)
                };
                out[k * nc + c] = below + 0.25 * dp * (f(k) + face);
                below += f(k) * dp;
            }
        }
        out
    }

    /// Column integral from each face up to `p0`: `np + 1` values per column,
    /// stored face-major (`kf * ncol + c`), zero at `p0`.
    pub fn vertical_integral_faces(&self, field: &[f64]) -> Vec<f64> {
        let (nc, np, dp) = (self.ncol(), self.np, self.dp);
        let mut out = vec![0.0; (np + 1) * nc];
        for c in 0..nc {
            let mut acc = 0.0;
            for k in (0..np).rev() {
                acc += field[k * nc + c] * dp;
                out[k * nc + c] = acc;
            }
        }
        out
    }

    /// Midpoint quadrature weights in `p`; they sum to `p0 - p1`.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        vec![self.dp; self.np]
    }
}

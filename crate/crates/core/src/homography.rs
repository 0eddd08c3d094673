//! Projective geometry on the image plane.
//!
//! Pixel coordinates use the pixel-center convention: `x` grows to the right,
//! `y` grows downward, the top-left pixel center is `(0, 0)` and the
//! bottom-right pixel center of a `W×H` image is `(W-1, H-1)`.
//!
//! A [`Homography`] is a 3×3 matrix acting on homogeneous coordinates,
//!
//! ```text
//! x' = (h11 x + h12 y + h13) / (h31 x + h32 y + h33)
//! y' = (h21 x + h22 y + h23) / (h31 x + h32 y + h33)
//! ```
//!
//! The four-point parameterization describes a homography by where it sends
//! the four corners of a reference rectangle. [`solve_dlt`] recovers the
//! matrix from exactly four correspondences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible magnitude of a homogeneous denominator.
pub const PROJECTION_EPS: f64 = 1e-12;
/// Smallest admissible |det| of an accepted matrix.
pub const DET_EPS: f64 = 1e-12;
/// Collinearity threshold for the 2-D cross product of three quad corners.
pub const COLLINEAR_EPS: f64 = 1e-9;
/// Largest accepted ratio between the largest and smallest elimination pivot.
pub const MAX_PIVOT_RATIO: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Four document corners in the fixed order top-left, top-right,
/// bottom-right, bottom-left.
///
/// Serialized as a flat array `[x0, y0, x1, y1, x2, y2, x3, y3]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 8]", into = "[f64; 8]")]
pub struct CornerSet {
    pub corners: [Point2; 4],
}

impl CornerSet {
    pub const fn new(corners: [Point2; 4]) -> Self {
        Self { corners }
    }

    /// Corners of the upright `width×height` frame: `(0,0)`, `(W-1,0)`,
    /// `(W-1,H-1)`, `(0,H-1)`.
    pub fn canonical(width: f64, height: f64) -> Self {
        let (r, b) = (width - 1.0, height - 1.0);
        Self::new([
            Point2::new(0.0, 0.0),
            Point2::new(r, 0.0),
            Point2::new(r, b),
            Point2::new(0.0, b),
        ])
    }

    pub fn from_flat(v: [f64; 8]) -> Result<Self> {
        if v.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("corner coordinates must be finite"));
        }
        Ok(Self::new([
            Point2::new(v[0], v[1]),
            Point2::new(v[2], v[3]),
            Point2::new(v[4], v[5]),
            Point2::new(v[6], v[7]),
        ]))
    }

    pub fn to_flat(&self) -> [f64; 8] {
        let mut out = [0.0; 8];
        for (i, p) in self.corners.iter().enumerate() {
            out[2 * i] = p.x;
            out[2 * i + 1] = p.y;
        }
        out
    }

    /// Applies `f` to every corner.
    pub fn map(&self, mut f: impl FnMut(Point2) -> Point2) -> Self {
        Self::new(self.corners.map(&mut f))
    }

    pub fn try_map(&self, mut f: impl FnMut(Point2) -> Result<Point2>) -> Result<Self> {
        let c = &self.corners;
        Ok(Self::new([f(c[0])?, f(c[1])?, f(c[2])?, f(c[3])?]))
    }

    /// Scales coordinates between two image resolutions under the
    /// pixel-center convention (factor `(to-1)/(from-1)` per axis).
    pub fn rescale(&self, from: (usize, usize), to: (usize, usize)) -> Self {
        // multiply before dividing so endpoints land exactly on integers
        let axis = |v: f64, from: usize, to: usize| {
            if from <= 1 || to <= 1 {
                0.0
            } else {
                v * (to - 1) as f64 / (from - 1) as f64
            }
        };
        self.map(|p| Point2::new(axis(p.x, from.0, to.0), axis(p.y, from.1, to.1)))
    }

    pub fn centroid(&self) -> Point2 {
        let (sx, sy) = self
            .corners
            .iter()
            .fold((0.0, 0.0), |(ax, ay), p| (ax + p.x, ay + p.y));
        Point2::new(sx / 4.0, sy / 4.0)
    }

    /// Fails when any three corners are collinear (or a coordinate is not
    /// finite).
    pub fn check_non_degenerate(&self) -> Result<()> {
        if self.corners.iter().any(|p| !p.is_finite()) {
            return Err(Error::SingularSystem("non-finite corner".into()));
        }
        const TRIPLES: [[usize; 3]; 4] = [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]];
        for [i, j, k] in TRIPLES {
            let (a, b, c) = (self.corners[i], self.corners[j], self.corners[k]);
            let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
            if cross.abs() <= COLLINEAR_EPS {
                return Err(Error::SingularSystem(format!(
                    "corners {i}, {j}, {k} are collinear"
                )));
            }
        }
        Ok(())
    }
}

/// Per-axis scale factor between resolutions under the pixel-center
/// convention.
pub fn axis_scale(from: usize, to: usize) -> f64 {
    if from <= 1 || to <= 1 {
        // a single pixel row/column collapses to coordinate 0
        0.0
    } else {
        (to - 1) as f64 / (from - 1) as f64
    }
}

impl TryFrom<[f64; 8]> for CornerSet {
    type Error = Error;

    fn try_from(v: [f64; 8]) -> Result<Self> {
        Self::from_flat(v)
    }
}

impl From<CornerSet> for [f64; 8] {
    fn from(c: CornerSet) -> Self {
        c.to_flat()
    }
}

/// A 3×3 projective transform.
///
/// Serialized as a row-major array of nine numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub const IDENTITY: Homography = Homography {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    /// Accepts any invertible matrix. The matrix is stored as given; call
    /// [`Homography::normalized`] to pin `h33 = 1`.
    pub fn from_matrix(m: [[f64; 3]; 3]) -> Result<Self> {
        if m.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("homography coefficients must be finite"));
        }
        let h = Self { m };
        let det = h.det();
        if det.abs() <= DET_EPS {
            return Err(Error::SingularMatrix(det));
        }
        Ok(h)
    }

    pub fn from_row_major(v: [f64; 9]) -> Result<Self> {
        Self::from_matrix([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    pub fn scaling(sx: f64, sy: f64) -> Result<Self> {
        Self::from_matrix([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    /// Coefficient `h_{row,col}` with 1-based indices, matching the usual
    /// `h11..h33` naming.
    pub fn coeff(&self, row: usize, col: usize) -> f64 {
        self.m[row - 1][col - 1]
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[0][0], m[0][1], m[0][2], m[1][0], m[1][1], m[1][2], m[2][0], m[2][1], m[2][2],
        ]
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Divides all coefficients by `h33`. The result has `h33 == 1.0`
    /// exactly, so normalizing twice is a no-op.
    pub fn normalized(&self) -> Result<Self> {
        let s = self.m[2][2];
        if s.abs() <= PROJECTION_EPS {
            return Err(Error::DegenerateProjection(s));
        }
        Ok(Self {
            m: self.m.map(|row| row.map(|v| v / s)),
        })
    }

    /// Multiplies every coefficient by `s`; the projective action is
    /// unchanged for `s != 0`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            m: self.m.map(|row| row.map(|v| v * s)),
        }
    }

    pub fn apply(&self, p: Point2) -> Result<Point2> {
        let m = &self.m;
        let w = m[2][0] * p.x + m[2][1] * p.y + m[2][2];
        if w.abs() <= PROJECTION_EPS {
            return Err(Error::DegenerateProjection(w));
        }
        Ok(Point2::new(
            (m[0][0] * p.x + m[0][1] * p.y + m[0][2]) / w,
            (m[1][0] * p.x + m[1][1] * p.y + m[1][2]) / w,
        ))
    }

    /// Homogeneous denominator `h31 x + h32 y + h33` at `p`.
    pub fn denominator(&self, p: Point2) -> f64 {
        self.m[2][0] * p.x + self.m[2][1] * p.y + self.m[2][2]
    }

    pub fn apply_corners(&self, c: &CornerSet) -> Result<CornerSet> {
        c.try_map(|p| self.apply(p))
    }

    /// Inverse via the adjugate. The result is normalized to `h33 = 1`
    /// whenever that coefficient is not vanishing.
    pub fn invert(&self) -> Result<Self> {
        let det = self.det();
        if det.abs() <= DET_EPS || !det.is_finite() {
            return Err(Error::SingularMatrix(det));
        }
        let m = &self.m;
        let adj = [
            [
                m[1][1] * m[2][2] - m[1][2] * m[2][1],
                m[0][2] * m[2][1] - m[0][1] * m[2][2],
                m[0][1] * m[1][2] - m[0][2] * m[1][1],
            ],
            [
                m[1][2] * m[2][0] - m[1][0] * m[2][2],
                m[0][0] * m[2][2] - m[0][2] * m[2][0],
                m[0][2] * m[1][0] - m[0][0] * m[1][2],
            ],
            [
                m[1][0] * m[2][1] - m[1][1] * m[2][0],
                m[0][1] * m[2][0] - m[0][0] * m[2][1],
                m[0][0] * m[1][1] - m[0][1] * m[1][0],
            ],
        ];
        // Dividing by the adjugate's own h33 (when usable) instead of det
        // gives the normalized inverse in one rounding step.
        let s = if adj[2][2].abs() > PROJECTION_EPS {
            adj[2][2]
        } else {
            det
        };
        Ok(Self {
            m: adj.map(|row| row.map(|v| v / s)),
        })
    }

    /// Matrix product `a · b`, i.e. apply `b` first, then `a`. Renormalized
    /// to `h33 = 1`.
    pub fn compose(a: &Homography, b: &Homography) -> Result<Self> {
        let mut m = [[0.0; 3]; 3];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| a.m[r][k] * b.m[k][c]).sum();
            }
        }
        Self { m }.normalized()
    }

    pub fn then(&self, next: &Homography) -> Result<Self> {
        Self::compose(next, self)
    }
}

impl TryFrom<[f64; 9]> for Homography {
    type Error = Error;

    fn try_from(v: [f64; 9]) -> Result<Self> {
        Self::from_row_major(v)
    }
}

impl From<Homography> for [f64; 9] {
    fn from(h: Homography) -> Self {
        h.to_row_major()
    }
}

pub fn apply(h: &Homography, p: Point2) -> Result<Point2> {
    h.apply(p)
}

pub fn invert(h: &Homography) -> Result<Homography> {
    h.invert()
}

pub fn compose(a: &Homography, b: &Homography) -> Result<Homography> {
    Homography::compose(a, b)
}

/// Isotropic similarity moving the centroid to the origin with mean
/// distance `sqrt(2)`. Returns `(scale, cx, cy)`.
fn conditioning(c: &CornerSet) -> (f64, f64, f64) {
    let ctr = c.centroid();
    let mean_dist = c
        .corners
        .iter()
        .map(|p| ((p.x - ctr.x).powi(2) + (p.y - ctr.y).powi(2)).sqrt())
        .sum::<f64>()
        / 4.0;
    (std::f64::consts::SQRT_2 / mean_dist, ctr.x, ctr.y)
}

/// Recovers the homography mapping `src[i]` to `dst[i]` for the four corner
/// correspondences.
///
/// Both quads are first conditioned by a similarity (centroid to origin, mean
/// radius √2); the 8×8 linear system with `h33` pinned to 1 is solved by
/// Gaussian elimination with partial pivoting, then the conditioning is
/// undone and the result renormalized.
pub fn solve_dlt(src: &CornerSet, dst: &CornerSet) -> Result<Homography> {
    src.check_non_degenerate()?;
    dst.check_non_degenerate()?;

    let (ss, sx, sy) = conditioning(src);
    let (ds, dx, dy) = conditioning(dst);

    let mut a = [[0.0f64; 9]; 8];
    for i in 0..4 {
        let (x, y) = ((src.corners[i].x - sx) * ss, (src.corners[i].y - sy) * ss);
        let (u, v) = ((dst.corners[i].x - dx) * ds, (dst.corners[i].y - dy) * ds);
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u, u];
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v, v];
    }
    let h = solve_pinned(a)?;
    let cond = Homography {
        m: [[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]],
    };

    let t_src = Homography {
        m: [[ss, 0.0, -ss * sx], [0.0, ss, -ss * sy], [0.0, 0.0, 1.0]],
    };
    let t_dst_inv = Homography {
        m: [[1.0 / ds, 0.0, dx], [0.0, 1.0 / ds, dy], [0.0, 0.0, 1.0]],
    };
    let raw = Homography::compose(&Homography::compose(&t_dst_inv, &cond)?, &t_src)?;
    let det = raw.det();
    if det.abs() <= DET_EPS {
        return Err(Error::SingularSystem(format!(
            "recovered matrix has det {det:e}"
        )));
    }
    Ok(raw)
}

/// Solves the augmented 8×9 system in place; returns the 8 unknowns.
fn solve_pinned(mut a: [[f64; 9]; 8]) -> Result<[f64; 8]> {
    let mut max_pivot = 0.0f64;
    let mut min_pivot = f64::INFINITY;
    for col in 0..8 {
        let pivot_row = (col..8)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        let pivot = a[pivot_row][col];
        if !(pivot.abs() > f64::MIN_POSITIVE) {
            return Err(Error::SingularSystem(format!(
                "pivot underflow in column {col}"
            )));
        }
        a.swap(col, pivot_row);
        max_pivot = max_pivot.max(pivot.abs());
        min_pivot = min_pivot.min(pivot.abs());
        let (top, rest) = a.split_at_mut(col + 1);
        let prow = &top[col];
        for r in rest.iter_mut() {
            let f = r[col] / pivot;
            if f != 0.0 {
                for (v, p) in r[col..].iter_mut().zip(&prow[col..]) {
                    *v -= f * p;
                }
            }
        }
    }
    let ratio = max_pivot / min_pivot;
    if !(ratio <= MAX_PIVOT_RATIO) {
        return Err(Error::SingularSystem(format!(
            "pivot ratio {ratio:e} exceeds {MAX_PIVOT_RATIO:e}"
        )));
    }
    let mut h = [0.0f64; 8];
    for row in (0..8).rev() {
        let mut s = a[row][8];
        for c in row + 1..8 {
            s -= a[row][c] * h[c];
        }
        h[row] = s / a[row][row];
    }
    Ok(h)
}

/// Homography sending the predicted quad to the upright
/// `target_width×target_height` rectangle.
pub fn corners_to_homography(
    pred: &CornerSet,
    target_width: usize,
    target_height: usize,
) -> Result<Homography> {
    solve_dlt(
        pred,
        &CornerSet::canonical(target_width as f64, target_height as f64),
    )
}

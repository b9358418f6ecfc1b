//! Points, rectangles, dyadic squares and sampling grids.
//!
//! Dyadic squares of scale `L` live on the shifted lattice
//! `Lambda_L = (2^-L Z)^2 + (2^-L-1, 2^-L-1)`; the plain square about a
//! lattice point has side `2^-L`, the doubled square `2 * 2^-L` and the
//! tripled square `3 * 2^-L`, all sharing the center.

use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.x, self.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Japanese bracket `<u> = (|u|^2 + 1)^(1/2)`.
    pub fn bracket(self) -> f64 {
        (self.x * self.x + self.y * self.y + 1.0).sqrt()
    }
}

impl From<(f64, f64)> for Point {
    fn from(p: (f64, f64)) -> Self {
        Point { x: p.0, y: p.1 }
    }
}

/// Half-open axis-aligned rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn centered(center: Point, side: f64) -> Self {
        Rect {
            x0: center.x - 0.5 * side,
            y0: center.y - 0.5 * side,
            x1: center.x + 0.5 * side,
            y1: center.y + 0.5 * side,
        }
    }

    pub fn center(&self) -> Point {
        Point::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x0 && p.x < self.x1 && p.y >= self.y0 && p.y < self.y1
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.x1 <= self.x1 && other.y0 >= self.y0 && other.y1 <= self.y1
    }

    pub fn intersection_area(&self, other: &Rect) -> f64 {
        let dx = self.x1.min(other.x1) - self.x0.max(other.x0);
        let dy = self.y1.min(other.y1) - self.y0.max(other.y0);
        if dx > 0.0 && dy > 0.0 {
            dx * dy
        } else {
            0.0
        }
    }

    /// Distance range `[min |x|, max |x|]` over the closed rectangle.
    pub fn radial_range(&self) -> (f64, f64) {
        let cx = if 0.0 < self.x0 {
            self.x0
        } else if 0.0 > self.x1 {
            self.x1
        } else {
            0.0
        };
        let cy = if 0.0 < self.y0 {
            self.y0
        } else if 0.0 > self.y1 {
            self.y1
        } else {
            0.0
        };
        let rmin = cx.hypot(cy);
        let corners = [
            (self.x0, self.y0),
            (self.x0, self.y1),
            (self.x1, self.y0),
            (self.x1, self.y1),
        ];
        let rmax = corners
            .iter()
            .map(|&(x, y)| x.hypot(y))
            .fold(0.0_f64, f64::max);
        (rmin, rmax)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DyadicKind {
    Plain,
    Doubled,
    Tripled,
}

impl DyadicKind {
    pub fn factor(self) -> f64 {
        match self {
            DyadicKind::Plain => 1.0,
            DyadicKind::Doubled => 2.0,
            DyadicKind::Tripled => 3.0,
        }
    }
}

/// A dyadic square of scale `L` about the lattice point
/// `(2^-L (kx + 1/2), 2^-L (ky + 1/2))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicSquare {
    pub scale: i32,
    pub kx: i64,
    pub ky: i64,
    pub kind: DyadicKind,
}

impl DyadicSquare {
    pub fn new(scale: i32, kx: i64, ky: i64, kind: DyadicKind) -> Self {
        DyadicSquare { scale, kx, ky, kind }
    }

    pub fn spacing(scale: i32) -> f64 {
        (2.0_f64).powi(-scale)
    }

    pub fn center(&self) -> Point {
        let s = Self::spacing(self.scale);
        Point::new((self.kx as f64 + 0.5) * s, (self.ky as f64 + 0.5) * s)
    }

    pub fn side(&self) -> f64 {
        self.kind.factor() * Self::spacing(self.scale)
    }

    pub fn rect(&self) -> Rect {
        Rect::centered(self.center(), self.side())
    }

    /// Lattice index of the plain square containing `p` at the given scale.
    pub fn index_of(scale: i32, p: Point) -> (i64, i64) {
        let s = Self::spacing(scale);
        ((p.x / s).floor() as i64, (p.y / s).floor() as i64)
    }
}

/// Node-centered sampling lattice. Node `(i, j)` sits at
/// `origin + (i, j) * spacing`; values are stored row-major with
/// `idx = j * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub origin: Point,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn new(origin: Point, spacing: f64, nx: usize, ny: usize) -> Self {
        assert!(spacing > 0.0 && nx >= 2 && ny >= 2, "degenerate grid");
        Grid { origin, spacing, nx, ny }
    }

    /// Square grid of `n x n` nodes covering `[-extent, extent]^2`.
    pub fn square(extent: f64, n: usize) -> Self {
        let spacing = 2.0 * extent / (n - 1) as f64;
        Grid::new(Point::new(-extent, -extent), spacing, n, n)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.origin.x + i as f64 * self.spacing,
            self.origin.y + j as f64 * self.spacing,
        )
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(
            self.origin.x,
            self.origin.y,
            self.origin.x + (self.nx - 1) as f64 * self.spacing,
            self.origin.y + (self.ny - 1) as f64 * self.spacing,
        )
    }

    pub fn nodes(&self) -> impl Iterator<Item = (usize, usize, Point)> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| (i, j, self.node(i, j))))
    }
}

/// Cell-centered data: cell `(i, j)` covers
/// `[origin + i*s, origin + (i+1)*s) x [origin + j*s, origin + (j+1)*s)`
/// and `values[j * nx + i]` is the cell average.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid {
    pub origin: Point,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl CellGrid {
    pub fn new(origin: Point, spacing: f64, nx: usize, ny: usize, values: Vec<f64>) -> Self {
        assert!(spacing > 0.0, "cell spacing must be positive");
        assert_eq!(values.len(), nx * ny, "cell value count mismatch");
        CellGrid { origin, spacing, nx, ny, values }
    }

    pub fn from_fn(origin: Point, spacing: f64, nx: usize, ny: usize, f: impl Fn(Point) -> f64) -> Self {
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let c = Point::new(
                    origin.x + (i as f64 + 0.5) * spacing,
                    origin.y + (j as f64 + 0.5) * spacing,
                );
                values.push(f(c));
            }
        }
        CellGrid::new(origin, spacing, nx, ny, values)
    }

    pub fn cell_rect(&self, i: usize, j: usize) -> Rect {
        Rect::new(
            self.origin.x + i as f64 * self.spacing,
            self.origin.y + j as f64 * self.spacing,
            self.origin.x + (i + 1) as f64 * self.spacing,
            self.origin.y + (j + 1) as f64 * self.spacing,
        )
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point {
        Point::new(
            self.origin.x + (i as f64 + 0.5) * self.spacing,
            self.origin.y + (j as f64 + 0.5) * self.spacing,
        )
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(
            self.origin.x,
            self.origin.y,
            self.origin.x + self.nx as f64 * self.spacing,
            self.origin.y + self.ny as f64 * self.spacing,
        )
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }
}

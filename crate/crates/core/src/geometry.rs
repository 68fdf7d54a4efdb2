//! Planar polygon helpers used by the contact patch and tactile footprints.

pub type Point2 = [f64; 2];

#[inline]
fn cross(a: Point2, b: Point2) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
fn sub(a: Point2, b: Point2) -> Point2 {
    [a[0] - b[0], a[1] - b[1]]
}

/// Signed area, positive for counter-clockwise vertex order.
pub fn signed_area(poly: &[Point2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        s += cross(poly[i], poly[(i + 1) % poly.len()]);
    }
    0.5 * s
}

/// Counter-clockwise convex hull (Andrew's monotone chain). Collinear points
/// are dropped.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(pts.len() * 2);
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if cross(sub(b, a), sub(p, a)) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Axis-aligned rectangle `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub fn centered(half_x: f64, half_y: f64) -> Self {
        Self {
            min: [-half_x, -half_y],
            max: [half_x, half_y],
        }
    }

    pub fn polygon(&self) -> Vec<Point2> {
        vec![
            self.min,
            [self.max[0], self.min[1]],
            self.max,
            [self.min[0], self.max[1]],
        ]
    }

    pub fn contains(&self, p: Point2) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

/// Sutherland–Hodgman clip of a polygon against a rectangle.
pub fn clip_to_rect(poly: &[Point2], rect: &Rect) -> Vec<Point2> {
    // Each boundary as (axis, value, keep_greater).
    let planes = [
        (0usize, rect.min[0], true),
        (0, rect.max[0], false),
        (1, rect.min[1], true),
        (1, rect.max[1], false),
    ];
    let mut out = poly.to_vec();
    for (axis, value, keep_greater) in planes {
        if out.is_empty() {
            break;
        }
        let inside = |p: &Point2| {
            if keep_greater {
                p[axis] >= value
            } else {
                p[axis] <= value
            }
        };
        let input = std::mem::take(&mut out);
        for i in 0..input.len() {
            let cur = input[i];
            let prev = input[(i + input.len() - 1) % input.len()];
            let (ci, pi) = (inside(&cur), inside(&prev));
            if ci != pi {
                let t = (value - prev[axis]) / (cur[axis] - prev[axis]);
                let mut x = [
                    prev[0] + t * (cur[0] - prev[0]),
                    prev[1] + t * (cur[1] - prev[1]),
                ];
                x[axis] = value;
                out.push(x);
            }
            if ci {
                out.push(cur);
            }
        }
    }
    out
}

/// Area of the intersection of a disc with a simple counter-clockwise polygon.
pub fn circle_polygon_overlap(center: Point2, radius: f64, poly: &[Point2]) -> f64 {
    if poly.len() < 3 || radius <= 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..poly.len() {
        let a = sub(poly[i], center);
        let b = sub(poly[(i + 1) % poly.len()], center);
        total += disc_triangle_signed(a, b, radius);
    }
    total.max(0.0)
}

/// Signed area of the disc `|x| ≤ r` intersected with triangle `(0, a, b)`.
fn disc_triangle_signed(a: Point2, b: Point2, r: f64) -> f64 {
    let d = sub(b, a);
    let qa = d[0] * d[0] + d[1] * d[1];
    if qa == 0.0 {
        return 0.0;
    }
    let qb = 2.0 * (a[0] * d[0] + a[1] * d[1]);
    let qc = a[0] * a[0] + a[1] * a[1] - r * r;
    let disc = qb * qb - 4.0 * qa * qc;

    let mut cuts = [0.0, 1.0, 1.0, 1.0];
    let mut n = 1;
    if disc > 0.0 {
        let s = disc.sqrt();
        for t in [(-qb - s) / (2.0 * qa), (-qb + s) / (2.0 * qa)] {
            if t > 0.0 && t < 1.0 {
                cuts[n] = t;
                n += 1;
            }
        }
    }
    cuts[n] = 1.0;
    n += 1;

    let at = |t: f64| [a[0] + t * d[0], a[1] + t * d[1]];
    let mut area = 0.0;
    for k in 0..n - 1 {
        let (t0, t1) = (cuts[k], cuts[k + 1]);
        if t1 <= t0 {
            continue;
        }
        let p = at(t0);
        let q = at(t1);
        let m = at(0.5 * (t0 + t1));
        if m[0] * m[0] + m[1] * m[1] <= r * r {
            area += 0.5 * cross(p, q);
        } else {
            let angle = cross(p, q).atan2(p[0] * q[0] + p[1] * q[1]);
            area += 0.5 * r * r * angle;
        }
    }
    area
}

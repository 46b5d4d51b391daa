//! Detection of the dominant supporting plane (typically the table) among
//! predicted segments.

pub const DEFAULT_PLANE_TOLERANCE: f32 = 0.01;

/// Fraction of a segment's valid pixels that must lie on the plane.
const COPLANAR_FRACTION: f64 = 0.8;
/// Largest segments tried as the plane before giving up.
const CANDIDATES: usize = 3;

/// Depth plane `z = a·x + b·y + c` over normalized image coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Plane {
    pub fn residual(&self, x: f64, y: f64, z: f64) -> f64 {
        z - (self.a * x + self.b * y + self.c)
    }
}

fn least_squares(points: &[[f64; 3]]) -> Option<Plane> {
    if points.len() < 3 {
        return None;
    }
    // Normal equations for (a, b, c), lightly regularized on the slopes so
    // that thin (e.g. single-row) point sets still give an answer.
    let mut m = [[0f64; 4]; 3];
    for &[x, y, z] in points {
        let v = [x, y, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += v[i] * v[j];
            }
            m[i][3] += v[i] * z;
        }
    }
    m[0][0] += 1e-9;
    m[1][1] += 1e-9;
    for col in 0..3 {
        let pivot = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, pivot);
        for row in 0..3 {
            if row != col {
                let f = m[row][col] / m[col][col];
                for k in col..4 {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
    }
    Some(Plane {
        a: m[0][3] / m[0][0],
        b: m[1][3] / m[1][1],
        c: m[2][3] / m[2][2],
    })
}

/// Robust plane fit: least squares, then repeated refits on the points
/// within `max(tolerance, 2 · median residual)`. Returns the plane and the
/// fraction of points within `tolerance` of it.
pub fn fit_plane(points: &[[f64; 3]], tolerance: f64) -> Option<(Plane, f64)> {
    let mut plane = least_squares(points)?;
    let mut abs_res = Vec::with_capacity(points.len());
    for _ in 0..5 {
        abs_res.clear();
        abs_res.extend(points.iter().map(|&[x, y, z]| plane.residual(x, y, z).abs()));
        let mid = abs_res.len() / 2;
        let median = *abs_res.clone().select_nth_unstable_by(mid, f64::total_cmp).1;
        let limit = tolerance.max(2.0 * median);
        let inliers: Vec<[f64; 3]> = points
            .iter()
            .zip(&abs_res)
            .filter(|(_, &r)| r <= limit)
            .map(|(p, _)| *p)
            .collect();
        match least_squares(&inliers) {
            Some(p) => plane = p,
            None => break,
        }
    }
    let on = points
        .iter()
        .filter(|&&[x, y, z]| plane.residual(x, y, z).abs() <= tolerance)
        .count();
    Some((plane, on as f64 / points.len() as f64))
}

/// Flags (per segment id `1..=segment_count`, at index `id − 1`) of the
/// segments lying on the dominant plane. The plane is fitted to the largest
/// segment that is itself planar; every segment with at least 80% of its
/// valid pixels within `tolerance` of that plane is flagged.
pub fn suppress_plane(
    segment_of_pixel: &[u32],
    segment_count: usize,
    depth: &[f32],
    valid: &[bool],
    width: usize,
    tolerance: f32,
) -> Vec<bool> {
    let height = segment_of_pixel.len() / width.max(1);
    let (w, h) = (width as f64, height as f64);
    let point = |p: usize| [((p % width) as f64 + 0.5) / w, ((p / width) as f64 + 0.5) / h, depth[p] as f64];
    let mut valid_count = vec![0usize; segment_count + 1];
    for (p, &s) in segment_of_pixel.iter().enumerate() {
        if valid[p] {
            valid_count[s as usize] += 1;
        }
    }
    let mut order: Vec<usize> = (1..=segment_count).filter(|&s| valid_count[s] >= 3).collect();
    order.sort_by(|&a, &b| valid_count[b].cmp(&valid_count[a]).then(a.cmp(&b)));

    let tol = tolerance as f64;
    let plane = order.iter().take(CANDIDATES).find_map(|&s| {
        let pts: Vec<[f64; 3]> = (0..segment_of_pixel.len())
            .filter(|&p| valid[p] && segment_of_pixel[p] as usize == s)
            .map(point)
            .collect();
        fit_plane(&pts, tol).and_then(|(plane, frac)| (frac >= COPLANAR_FRACTION).then_some(plane))
    });
    let Some(plane) = plane else {
        return vec![false; segment_count];
    };

    let mut on = vec![0usize; segment_count + 1];
    for (p, &s) in segment_of_pixel.iter().enumerate() {
        if valid[p] {
            let [x, y, z] = point(p);
            if plane.residual(x, y, z).abs() <= tol {
                on[s as usize] += 1;
            }
        }
    }
    (1..=segment_count)
        .map(|s| valid_count[s] > 0 && on[s] as f64 >= COPLANAR_FRACTION * valid_count[s] as f64)
        .collect()
}

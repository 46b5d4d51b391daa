/// Depth gradient per normalized image coordinate (`x / width`, `y / height`).
///
/// Central differences in the interior, one-sided at borders. A difference
/// that would read an invalid pixel falls back to the one-sided difference on
/// the valid side, or to 0 when neither side is usable. Invalid pixels get a
/// zero gradient.
pub fn depth_gradients(depth: &[f32], valid: &[bool], width: usize, height: usize) -> Vec<[f64; 2]> {
    let at = |x: usize, y: usize| depth[y * width + x] as f64;
    let ok = |x: usize, y: usize| valid[y * width + x];
    let axis = |prev: Option<(usize, usize)>, cur: (usize, usize), next: Option<(usize, usize)>, scale: f64| {
        let prev = prev.filter(|&(x, y)| ok(x, y));
        let next = next.filter(|&(x, y)| ok(x, y));
        let c = at(cur.0, cur.1);
        match (prev, next) {
            (Some(p), Some(n)) => (at(n.0, n.1) - at(p.0, p.1)) * 0.5 * scale,
            (None, Some(n)) => (at(n.0, n.1) - c) * scale,
            (Some(p), None) => (c - at(p.0, p.1)) * scale,
            (None, None) => 0.0,
        }
    };
    let mut out = vec![[0.0; 2]; width * height];
    for y in 0..height {
        for x in 0..width {
            if !ok(x, y) {
                continue;
            }
            let left = x.checked_sub(1).map(|xl| (xl, y));
            let right = (x + 1 < width).then_some((x + 1, y));
            let up = y.checked_sub(1).map(|yu| (x, yu));
            let down = (y + 1 < height).then_some((x, y + 1));
            out[y * width + x] = [
                axis(left, (x, y), right, width as f64),
                axis(up, (x, y), down, height as f64),
            ];
        }
    }
    out
}

/// Unit surface normals `(-gx, -gy, 1) / |(-gx, -gy, 1)|` from the depth gradient.
pub fn compute_normals(depth: &[f32], valid: &[bool], width: usize, height: usize) -> Vec<[f32; 3]> {
    depth_gradients(depth, valid, width, height)
        .into_iter()
        .map(|[gx, gy]| {
            let inv = 1.0 / (gx * gx + gy * gy + 1.0).sqrt();
            [(-gx * inv) as f32, (-gy * inv) as f32, inv as f32]
        })
        .collect()
}

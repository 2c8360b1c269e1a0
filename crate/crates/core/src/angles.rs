//! Degree-valued angle helpers shared by the tracker, simulator and scorer.

/// Wraps an angle in degrees to the half-open interval (-180, 180].
pub fn wrap_deg(angle: f64) -> f64 {
    let mut a = angle % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// Signed shortest-arc difference `to - from`, in (-180, 180].
pub fn arc_diff_deg(to: f64, from: f64) -> f64 {
    wrap_deg(to - from)
}

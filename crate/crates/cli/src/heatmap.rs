/// Binary grayscale PPM (P6) of an `h × w` frame, min-max scaled to 0..=255.
/// A constant frame renders black. Returns the image with the range used.
pub fn ppm(frame: &[f64], h: usize, w: usize) -> (Vec<u8>, f64, f64) {
    debug_assert_eq!(frame.len(), h * w);
    let (lo, hi) = frame
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(frame.len() * 3);
    for &v in frame {
        let g = match span > 0.0 {
            true => ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8,
            false => 0,
        };
        out.extend_from_slice(&[g, g, g]);
    }
    (out, lo, hi)
}

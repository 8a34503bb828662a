/// Formats a float with 17 significant digits, enough to round-trip any f64
/// exactly through decimal text.
pub(crate) fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

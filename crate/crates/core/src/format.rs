//! Number formatting shared by every text output.

/// 17 significant digits in scientific notation; parses back to the same
/// `f64` bit pattern.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

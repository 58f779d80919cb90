//! Hashin–Shtrikman upper bounds for a solid-void composite.

/// `(K_U, G_U)` for volume fraction `f` of an isotropic solid with modulus `young` and ratio `poisson`.
pub fn hs_bounds(young: f64, poisson: f64, f: f64) -> (f64, f64) {
    let k = young / (3.0 * (1.0 - 2.0 * poisson));
    let g = young / (2.0 * (1.0 + poisson));
    let ku = 4.0 * f * g * k / (4.0 * g + 3.0 * (1.0 - f) * k);
    let gu = f * g / (1.0 + (1.0 - f) * 6.0 * (k + 2.0 * g) / (5.0 * (3.0 * k + 4.0 * g)));
    (ku, gu)
}

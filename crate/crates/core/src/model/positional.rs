//! Fixed sinusoidal position signal.

/// `sin(p / 10000^(i/d))` for even `i`, `cos(p / 10000^((i−1)/d))` for odd.
pub fn positional_encoding(p: usize, i: usize, d: usize) -> f64 {
    let even = i - i % 2;
    let angle = p as f64 / 10000f64.powf(even as f64 / d as f64);
    if i % 2 == 0 {
        angle.sin()
    } else {
        angle.cos()
    }
}

/// Row-major `n×d` table of encodings for positions `0..n`.
pub fn table(n: usize, d: usize) -> Vec<f64> {
    (0..n)
        .flat_map(|p| (0..d).map(move |i| positional_encoding(p, i, d)))
        .collect()
}

//! `C⁰` / `C^k` norms and Hölder seminorm estimation on grid fields.

use crate::field::ScalarField;
use crate::spectral::derivative;

/// `‖f‖_{C⁰}` — maximum absolute grid value.
pub fn c0_norm(f: &ScalarField) -> f64 {
    f.max_abs()
}

/// `‖∇^k f‖_{C⁰}` — maximum over all multi-indices of order `k ≤ 4` of the
/// `C⁰` norms of the spectral derivatives.
pub fn ck_norm(f: &ScalarField, k: usize) -> f64 {
    assert!(k <= 4, "ck_norm supports k ≤ 4, got {k}");
    if k == 0 {
        return c0_norm(f);
    }
    let mut worst = 0.0f64;
    for a in 0..=k {
        let b = k - a;
        let mut g = f.clone();
        for _ in 0..a {
            g = derivative(&g, 0);
        }
        for _ in 0..b {
            g = derivative(&g, 1);
        }
        worst = worst.max(c0_norm(&g));
    }
    worst
}

/// Periodic separation of grid indices, in index units.
fn torus_sep(i: usize, j: usize, n: usize) -> usize {
    let d = i.abs_diff(j);
    d.min(n - d)
}

/// Hölder seminorm `[f]_{C^α}` estimated over grid-point pairs at dyadic
/// separations along the axes and the diagonal. Cost `O(n² log n)`; the
/// exhaustive all-separations oracle is [`holder_seminorm_exhaustive`].
pub fn holder_seminorm(f: &ScalarField, alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0);
    let n = f.grid.n;
    let dx = f.grid.dx();
    let mut worst = 0.0f64;
    let mut h = 1usize;
    while h <= n / 2 {
        let dist_axis = (h as f64 * dx).powf(alpha);
        let dist_diag = (h as f64 * dx * std::f64::consts::SQRT_2).powf(alpha);
        for i in 0..n {
            for j in 0..n {
                let v = f.data[i * n + j];
                let d1 = (f.data[((i + h) % n) * n + j] - v).abs() / dist_axis;
                let d2 = (f.data[i * n + (j + h) % n] - v).abs() / dist_axis;
                let d3 = (f.data[((i + h) % n) * n + (j + h) % n] - v).abs() / dist_diag;
                worst = worst.max(d1).max(d2).max(d3);
            }
        }
        h *= 2;
    }
    worst
}

/// `‖f‖_{C^α} = ‖f‖_{C⁰} + [f]_{C^α}`.
pub fn holder_norm(f: &ScalarField, alpha: f64) -> f64 {
    c0_norm(f) + holder_seminorm(f, alpha)
}

/// Exhaustive pairwise Hölder seminorm over one-dimensional grid slices
/// (every row and column, all separations). Test oracle for
/// [`holder_seminorm`]; `O(n³)`.
pub fn holder_seminorm_exhaustive(f: &ScalarField, alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha < 1.0);
    let n = f.grid.n;
    let dx = f.grid.dx();
    let mut worst = 0.0f64;
    for i in 0..n {
        for a in 0..n {
            for b in (a + 1)..n {
                let sep = torus_sep(a, b, n);
                let dist = (sep as f64 * dx).powf(alpha);
                let row = (f.data[i * n + a] - f.data[i * n + b]).abs() / dist;
                let col = (f.data[a * n + i] - f.data[b * n + i]).abs() / dist;
                worst = worst.max(row).max(col);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    fn grid(n: usize) -> GridSpec {
        GridSpec::new(n, 2, 0.0, 1.0).unwrap()
    }

    #[test]
    fn constant_field_norms() {
        let f = ScalarField::constant(grid(32), 5.0);
        assert_eq!(c0_norm(&f), 5.0);
        assert_eq!(ck_norm(&f, 0), c0_norm(&f));
        assert!(holder_seminorm(&f, 0.5) == 0.0);
    }

    #[test]
    fn c1_norm_of_cosine() {
        let f = ScalarField::from_fn(grid(64), |x1, _| x1.cos());
        let c1 = ck_norm(&f, 1);
        assert!((c1 - 1.0).abs() < 1e-10, "c1 = {c1}");
    }

    #[test]
    fn ck_matches_c0_of_derivative_field() {
        let f = ScalarField::from_fn(grid(64), |x1, x2| (3.0 * x1 + 2.0 * x2).sin());
        // |∇²f| along (1,1)-derivatives: ∂₁²f has amplitude 9, ∂₁∂₂f 6, ∂₂²f 4.
        let c2 = ck_norm(&f, 2);
        assert!((c2 - 9.0).abs() < 1e-9, "c2 = {c2}");
    }

    #[test]
    fn holder_estimate_close_to_exhaustive_oracle() {
        let g = grid(128);
        let f = ScalarField::from_fn(g, |x1, _| (8.0 * x1).cos());
        let est = holder_seminorm(&f, 0.5);
        let oracle = holder_seminorm_exhaustive(&f, 0.5);
        assert!(est <= oracle * (1.0 + 1e-12), "estimate exceeds supremum");
        assert!(
            est >= 0.9 * oracle,
            "dyadic estimate {est} more than 10% below oracle {oracle}"
        );
    }

    #[test]
    fn holder_estimate_close_to_oracle_on_mixed_field() {
        let g = grid(64);
        let f = ScalarField::from_fn(g, |x1, x2| (5.0 * x1).cos() + 0.3 * (9.0 * x2).sin());
        for &alpha in &[0.2, 0.5, 0.8] {
            let est = holder_seminorm(&f, alpha);
            let oracle = holder_seminorm_exhaustive(&f, alpha);
            assert!(est >= 0.85 * oracle, "α={alpha}: {est} vs oracle {oracle}");
        }
    }
}

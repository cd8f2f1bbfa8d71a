//! Fixed-size dense helpers: cofactor-expansion determinants, the 5×5
//! adjugate and Cramer-rule products. No pivoting; every result is a fixed
//! polynomial in the entries so the adjugate and Cramer paths stay comparable.

pub type Mat2 = [[f64; 2]; 2];
pub type Mat5 = [[f64; 5]; 5];

pub fn det2(m: &Mat2) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn det3(m: &[[f64; 3]; 3]) -> f64 {
    det(m)
}

/// Laplace expansion along the first row, recursing on column subsets.
pub fn det<const N: usize>(m: &[[f64; N]; N]) -> f64 {
    let mut cols = [0usize; N];
    for (i, c) in cols.iter_mut().enumerate() {
        *c = i;
    }
    expand(m, 0, &cols[..])
}

fn expand<const N: usize>(m: &[[f64; N]; N], row: usize, cols: &[usize]) -> f64 {
    match cols.len() {
        0 => 1.0,
        1 => m[row][cols[0]],
        2 => m[row][cols[0]] * m[row + 1][cols[1]] - m[row][cols[1]] * m[row + 1][cols[0]],
        n => {
            let mut rest = [0usize; 8];
            let mut acc = 0.0;
            for k in 0..n {
                let entry = m[row][cols[k]];
                if entry == 0.0 {
                    continue;
                }
                let mut len = 0;
                for (j, &c) in cols.iter().enumerate() {
                    if j != k {
                        rest[len] = c;
                        len += 1;
                    }
                }
                let minor = expand(m, row + 1, &rest[..len]);
                acc += if k % 2 == 0 { entry * minor } else { -entry * minor };
            }
            acc
        }
    }
}

fn minor5(m: &Mat5, skip_row: usize, skip_col: usize) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for (oi, i) in (0..5).filter(|&i| i != skip_row).enumerate() {
        for (oj, j) in (0..5).filter(|&j| j != skip_col).enumerate() {
            out[oi][oj] = m[i][j];
        }
    }
    out
}

/// Transpose of the cofactor matrix, so that `adj(M) M = det(M) I`.
pub fn adjugate5(m: &Mat5) -> Mat5 {
    let mut adj = [[0.0; 5]; 5];
    for i in 0..5 {
        for j in 0..5 {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            adj[j][i] = sign * det(&minor5(m, i, j));
        }
    }
    adj
}

/// `adj(M) · y` without forming the adjugate: component `i` is the
/// determinant of `M` with its `i`-th column replaced by `y`.
pub fn cramer5(m: &Mat5, y: &[f64; 5]) -> [f64; 5] {
    let mut out = [0.0; 5];
    for (i, o) in out.iter_mut().enumerate() {
        let mut r = *m;
        for (row, &v) in r.iter_mut().zip(y) {
            row[i] = v;
        }
        *o = det(&r);
    }
    out
}

pub fn mat_vec5(m: &Mat5, v: &[f64; 5]) -> [f64; 5] {
    let mut out = [0.0; 5];
    for (o, row) in out.iter_mut().zip(m) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
    out
}

pub fn mat_mul5(a: &Mat5, b: &Mat5) -> Mat5 {
    let mut out = [[0.0; 5]; 5];
    for i in 0..5 {
        for j in 0..5 {
            out[i][j] = (0..5).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn max_abs<const N: usize, const M: usize>(m: &[[f64; M]; N]) -> f64 {
    m.iter().flatten().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Spectral condition number of a 2×2 matrix; infinite when singular.
pub fn cond2(m: &Mat2) -> f64 {
    let fro_sq: f64 = m.iter().flatten().map(|v| v * v).sum();
    let d = det2(m).abs();
    if d == 0.0 {
        return f64::INFINITY;
    }
    // σ1² + σ2² = ‖M‖_F², σ1 σ2 = |det M|
    let disc = (fro_sq * fro_sq - 4.0 * d * d).max(0.0).sqrt();
    let s1_sq = 0.5 * (fro_sq + disc);
    let s2_sq = d * d / s1_sq;
    (s1_sq / s2_sq).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Leibniz formula over all permutations, independent of the Laplace recursion.
    fn leibniz<const N: usize>(m: &[[f64; N]; N]) -> f64 {
        fn permutations(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in permutations(n - 1) {
                for pos in 0..=p.len() {
                    let mut q = p.clone();
                    q.insert(pos, n - 1);
                    out.push(q);
                }
            }
            out
        }
        permutations(N)
            .into_iter()
            .map(|p| {
                let mut inversions = 0;
                for i in 0..N {
                    for j in i + 1..N {
                        if p[i] > p[j] {
                            inversions += 1;
                        }
                    }
                }
                let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
                sign * (0..N).map(|i| m[i][p[i]]).product::<f64>()
            })
            .sum()
    }

    fn random5(rng: &mut ChaCha8Rng) -> Mat5 {
        let mut m = [[0.0; 5]; 5];
        for v in m.iter_mut().flatten() {
            *v = rng.gen_range(-1.0..1.0);
        }
        m
    }

    #[test]
    fn identity_adjugate() {
        let mut eye = [[0.0; 5]; 5];
        for (i, row) in eye.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        assert_eq!(det(&eye), 1.0);
        assert_eq!(adjugate5(&eye), eye);
        let y = [1.0, -2.0, 3.0, 0.5, 7.0];
        assert_eq!(cramer5(&eye, &y), y);
    }

    #[test]
    fn laplace_matches_leibniz() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let m = random5(&mut rng);
            let (a, b) = (det(&m), leibniz(&m));
            assert!((a - b).abs() <= 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn adjugate_times_matrix_is_scaled_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let m = random5(&mut rng);
            let adj = adjugate5(&m);
            let prod = mat_mul5(&adj, &m);
            let d = leibniz(&m);
            let scale = max_abs(&adj) * max_abs(&m);
            for i in 0..5 {
                for j in 0..5 {
                    let want = if i == j { d } else { 0.0 };
                    assert!((prod[i][j] - want).abs() <= 1e-9 * scale);
                }
            }
        }
    }

    #[test]
    fn cramer_agrees_with_adjugate() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..1000 {
            let m = random5(&mut rng);
            let mut y = [0.0; 5];
            for v in &mut y {
                *v = rng.gen_range(-1.0..1.0);
            }
            let (a, b) = (mat_vec5(&adjugate5(&m), &y), cramer5(&m, &y));
            let scale = a.iter().chain(&b).fold(0.0f64, |s, v| s.max(v.abs()));
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE));
            }
        }
    }

    #[test]
    fn singular_matrix_has_zero_determinant() {
        let mut m = [[0.0; 5]; 5];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (i + j) as f64;
            }
        }
        assert_eq!(det(&m), 0.0);
        let adj = adjugate5(&m);
        assert!(max_abs(&mat_mul5(&adj, &m)) < 1e-9);
    }

    #[test]
    fn condition_numbers() {
        assert!((cond2(&[[1.0, 0.0], [0.0, 1.0]]) - 1.0).abs() < 1e-15);
        assert!((cond2(&[[4.0, 0.0], [0.0, 0.5]]) - 8.0).abs() < 1e-12);
        assert!(cond2(&[[1.0, 2.0], [2.0, 4.0]]).is_infinite());
    }
}

//! Dense matrix helpers shared by every module, plus the plain-text matrix
//! format (`rows cols` header, then row-major decimals at 17 significant
//! digits, which round-trips `f64` exactly).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative singular-value cutoff for numerical rank and pseudo-inverses.
pub const RANK_TOL: f64 = 1e-9;
/// Minimum eigenvalue tolerated for "positive semidefinite".
pub const PSD_TOL: f64 = 1e-9;

pub fn singular_values(m: &Matrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Largest singular value.
pub fn spectral_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Number of singular values above `RANK_TOL * sigma_max`.
pub fn numerical_rank(m: &Matrix) -> usize {
    let s = singular_values(m);
    match s.first() {
        Some(&smax) if smax > 0.0 => s.iter().filter(|&&v| v > RANK_TOL * smax).count(),
        _ => 0,
    }
}

/// Moore-Penrose pseudo-inverse with the crate-wide rank tolerance.
pub fn pinv(m: &Matrix) -> Matrix {
    let (r, c) = m.shape();
    if m.is_empty() {
        return Matrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return Matrix::zeros(c, r);
    }
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let mut out = Matrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > RANK_TOL * smax {
            // out += v_k u_k^T / s
            let vk = v_t.row(k).transpose();
            let uk = u.column(k);
            out += (vk * uk.transpose()) / s;
        }
    }
    out
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn min_sym_eigenvalue(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    symmetrize(m).symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Symmetric (to `tol` relative) and min eigenvalue >= -PSD_TOL.
pub fn is_psd(m: &Matrix) -> bool {
    if !m.is_square() || !all_finite(m) {
        return false;
    }
    let asym = (m - m.transpose()).abs().max();
    let scale = m.abs().max().max(1.0);
    asym <= 1e-9 * scale && min_sym_eigenvalue(m) >= -PSD_TOL
}

pub fn require_psd(m: &Matrix, name: &str) -> Result<()> {
    if is_psd(m) {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be symmetric positive semidefinite")))
    }
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn require_finite_vec(v: &Vector, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::numerical(format!("non-finite {what}")))
    }
}

pub fn require_shape(m: &Matrix, rows: usize, cols: usize, context: &'static str) -> Result<()> {
    if m.shape() == (rows, cols) {
        Ok(())
    } else {
        Err(Error::dim(
            context,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ))
    }
}

pub fn require_len(v: &Vector, len: usize, context: &'static str) -> Result<()> {
    if v.len() == len {
        Ok(())
    } else {
        Err(Error::dim(context, len, v.len()))
    }
}

/// Horizontal concatenation `[m_0, m_1, ...]`; all blocks share a row count.
pub fn hstack(blocks: &[Matrix]) -> Matrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut c0 = 0;
    for b in blocks {
        out.view_mut((0, c0), b.shape()).copy_from(b);
        c0 += b.ncols();
    }
    out
}

/// Vertical concatenation; all blocks share a column count.
pub fn vstack(blocks: &[Matrix]) -> Matrix {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = Matrix::zeros(rows, cols);
    let mut r0 = 0;
    for b in blocks {
        out.view_mut((r0, 0), b.shape()).copy_from(b);
        r0 += b.nrows();
    }
    out
}

/// Row-major flattening of a list of equally shaped matrices.
pub fn flatten(blocks: &[Matrix]) -> Vec<f64> {
    let mut out = Vec::with_capacity(blocks.iter().map(|b| b.len()).sum());
    for b in blocks {
        for i in 0..b.nrows() {
            for j in 0..b.ncols() {
                out.push(b[(i, j)]);
            }
        }
    }
    out
}

pub fn unflatten(flat: &[f64], count: usize, rows: usize, cols: usize) -> Vec<Matrix> {
    assert_eq!(flat.len(), count * rows * cols, "flat parameter length");
    flat.chunks(rows * cols)
        .map(|chunk| Matrix::from_row_slice(rows, cols, chunk))
        .collect()
}

/// Shortest decimal that is still 17 significant digits, so parsing it back
/// yields the identical `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_matrix(m: &Matrix) -> String {
    let mut s = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

/// Parses one matrix from the start of `tokens`, advancing the iterator.
pub fn read_matrix_tokens<'a, I>(tokens: &mut I) -> Result<Matrix>
where
    I: Iterator<Item = &'a str>,
{
    let mut next_usize = |what: &str| -> Result<usize> {
        let tok = tokens
            .next()
            .ok_or_else(|| Error::Parse(format!("missing matrix {what}")))?;
        tok.parse::<usize>()
            .map_err(|_| Error::Parse(format!("bad matrix {what} `{tok}`")))
    };
    let rows = next_usize("row count")?;
    let cols = next_usize("column count")?;
    if rows == 0 || cols == 0 {
        return Err(Error::Parse(format!("matrix dimensions must be positive, got {rows}x{cols}")));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for k in 0..rows * cols {
        let tok = tokens
            .next()
            .ok_or_else(|| Error::Parse(format!("matrix has {k} entries, expected {}", rows * cols)))?;
        let v: f64 = tok
            .parse()
            .map_err(|_| Error::Parse(format!("bad matrix entry `{tok}`")))?;
        if !v.is_finite() {
            return Err(Error::Parse(format!("non-finite matrix entry `{tok}`")));
        }
        data.push(v);
    }
    Ok(Matrix::from_row_slice(rows, cols, &data))
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut tokens = text.split_whitespace();
    let m = read_matrix_tokens(&mut tokens)?;
    if let Some(extra) = tokens.next() {
        return Err(Error::Parse(format!("trailing data after matrix: `{extra}`")));
    }
    Ok(m)
}

/// Inline matrix syntax used in config files: rows separated by `;`,
/// entries by whitespace or commas, e.g. `1 0.1; 0 1`.
pub fn parse_inline_matrix(text: &str) -> Result<Matrix> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|r| r.trim())
        .filter(|r| !r.is_empty())
        .map(|r| {
            r.split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{t}`"))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse(format!("ragged or empty inline matrix `{text}`")));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Matrix::from_row_slice(flat.len() / ncols, ncols, &flat))
}

pub fn parse_inline_vector(text: &str) -> Result<Vector> {
    let v: Vec<f64> = text
        .split(|c: char| c.is_whitespace() || c == ',' || c == ';')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{t}`"))))
        .collect::<Result<_>>()?;
    Ok(Vector::from_vec(v))
}

/// Least-squares fit of the coefficient row vector `theta` minimizing
/// `||y - X theta||`, via the pseudo-inverse. Returns (theta, residual sum of squares).
pub fn least_squares(x: &Matrix, y: &Vector) -> (Vector, f64) {
    let theta = pinv(x) * y;
    let resid = y - x * &theta;
    (theta, resid.norm_squared())
}

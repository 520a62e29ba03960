//! Dense matrices over a commutative coefficient ring.
//!
//! Sizes in this crate are tiny (germ ranks up to a handful), so the
//! algorithms favour division-free or integer-division-only formulas:
//! Faddeev-LeVerrier for characteristic polynomials and Cayley-Hamilton for
//! adjugates.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Serialize;

use crate::scalar::Scalar;
use crate::series::LaurentSeries;

/// Commutative ring operations used by [`Mat`]. Elements carry enough context
/// (for series, the coordinate name) to build their own zero and one.
pub trait Ring: Clone + fmt::Debug {
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn is_zero(&self) -> bool;
    fn scale_q(&self, q: &BigRational) -> Self;
    fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
}

impl Ring for Scalar {
    fn zero_like(&self) -> Self {
        Scalar::zero()
    }
    fn one_like(&self) -> Self {
        Scalar::one()
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn is_zero(&self) -> bool {
        Scalar::is_zero(self)
    }
    fn scale_q(&self, q: &BigRational) -> Self {
        self.scale(q)
    }
}

/// Series entries must share a coordinate; mixing coordinates is a logic error.
impl Ring for LaurentSeries {
    fn zero_like(&self) -> Self {
        LaurentSeries::zero(self.var())
    }
    fn one_like(&self) -> Self {
        LaurentSeries::one(self.var())
    }
    fn add(&self, o: &Self) -> Self {
        self.try_add(o).expect("series entries share a coordinate")
    }
    fn mul(&self, o: &Self) -> Self {
        self.try_mul(o).expect("series entries share a coordinate")
    }
    fn neg(&self) -> Self {
        LaurentSeries::neg(self)
    }
    fn is_zero(&self) -> bool {
        self.is_exact_zero()
    }
    fn scale_q(&self, q: &BigRational) -> Self {
        self.scale(&Scalar::from_rational(q.clone()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Ring> Mat<T> {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }
    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        assert!(rows.iter().all(|x| x.len() == c), "ragged matrix rows");
        Mat { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }
    pub fn zeros(rows: usize, cols: usize, proto: &T) -> Self {
        Mat::from_fn(rows, cols, |_, _| proto.zero_like())
    }
    pub fn identity(n: usize, proto: &T) -> Self {
        Mat::from_fn(n, n, |i, j| if i == j { proto.one_like() } else { proto.zero_like() })
    }
    pub fn diag(entries: Vec<T>) -> Self {
        let n = entries.len();
        let z = entries.first().map(|e| e.zero_like());
        let mut m = Mat { rows: n, cols: n, data: Vec::with_capacity(n * n) };
        for (i, e) in entries.iter().enumerate() {
            for j in 0..n {
                m.data.push(if i == j { e.clone() } else { z.clone().expect("nonempty") });
            }
        }
        m
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }
    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.cols + j]
    }
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &T)> {
        self.data.iter().enumerate().map(move |(k, v)| (k / self.cols, k % self.cols, v))
    }
    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|x| x.is_zero())
    }
    pub fn map<U: Ring>(&self, mut f: impl FnMut(&T) -> U) -> Mat<U> {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(&mut f).collect() }
    }
    pub fn try_map<U: Ring, E>(&self, mut f: impl FnMut(&T) -> Result<U, E>) -> Result<Mat<U>, E> {
        let data = self.data.iter().map(&mut f).collect::<Result<Vec<_>, E>>()?;
        Ok(Mat { rows: self.rows, cols: self.cols, data })
    }
    pub fn add(&self, o: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (o.rows, o.cols), "shape mismatch");
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&o.data).map(|(a, b)| a.add(b)).collect() }
    }
    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.neg())
    }
    pub fn neg(&self) -> Self {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a.neg()).collect() }
    }
    pub fn scale(&self, s: &T) -> Self {
        Mat { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a.mul(s)).collect() }
    }
    pub fn mul(&self, o: &Self) -> Self {
        assert_eq!(self.cols, o.rows, "shape mismatch");
        let proto = self.data.first().or(o.data.first()).expect("nonempty factor");
        Mat::from_fn(self.rows, o.cols, |i, j| {
            let mut acc = proto.zero_like();
            for k in 0..self.cols {
                let a = self.get(i, k);
                let b = o.get(k, j);
                if !a.is_zero() && !b.is_zero() {
                    acc = acc.add(&a.mul(b));
                }
            }
            acc
        })
    }
    pub fn trace(&self) -> T {
        let mut acc = self.data[0].zero_like();
        for i in 0..self.rows.min(self.cols) {
            acc = acc.add(self.get(i, i));
        }
        acc
    }
    pub fn transpose(&self) -> Self {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }
    /// Rows and columns picked by index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Mat::from_fn(rows.len(), cols.len(), |i, j| self.get(rows[i], cols[j]).clone())
    }

    /// Coefficients `c_0..=c_n` of `det(X I - A)`, lowest degree first.
    pub fn char_poly(&self) -> Vec<T> {
        assert!(self.is_square(), "characteristic polynomial of a non-square matrix");
        let n = self.rows;
        let proto = self.data.first().expect("nonempty matrix");
        let mut coeffs = vec![proto.zero_like(); n + 1];
        coeffs[n] = proto.one_like();
        // M_1 = I, c_{n-1} = -tr(A); M_k = A M_{k-1} + c_{n-k+1} I, c_{n-k} = -tr(A M_k)/k
        let id = Mat::identity(n, proto);
        let mut m = id.clone();
        for k in 1..=n {
            let am = self.mul(&m);
            let c = am.trace().neg().scale_q(&BigRational::new(BigInt::from(1), BigInt::from(k)));
            coeffs[n - k] = c.clone();
            m = am.add(&id.scale(&c));
        }
        coeffs
    }

    pub fn det(&self) -> T {
        let c = self.char_poly();
        if self.rows.is_multiple_of(2) {
            c[0].clone()
        } else {
            c[0].neg()
        }
    }

    /// Adjugate via Cayley-Hamilton: `adj(A) = (-1)^(n+1) (A^(n-1) + c_{n-1} A^(n-2) + ... + c_1 I)`.
    pub fn adjugate(&self) -> Self {
        let n = self.rows;
        let proto = self.data.first().expect("nonempty matrix");
        let c = self.char_poly();
        let id = Mat::identity(n, proto);
        let mut acc = id.clone();
        for k in (1..n).rev() {
            acc = self.mul(&acc).add(&id.scale(&c[k]));
        }
        if n.is_multiple_of(2) {
            acc.neg()
        } else {
            acc
        }
    }

    /// Pattern of structurally nonzero entries.
    pub fn support(&self) -> Vec<(usize, usize)> {
        self.entries().filter(|(_, _, v)| !v.is_zero()).map(|(i, j, _)| (i, j)).collect()
    }
}

impl Mat<Scalar> {
    pub fn from_ints(rows: &[&[i64]]) -> Self {
        Mat::from_rows(rows.iter().map(|r| r.iter().map(|x| Scalar::from_int(*x)).collect()).collect())
    }
    pub fn scalar_zeros(rows: usize, cols: usize) -> Self {
        Mat::zeros(rows, cols, &Scalar::zero())
    }
    pub fn scalar_identity(n: usize) -> Self {
        Mat::identity(n, &Scalar::zero())
    }

    /// Inverse over the coefficient field by Gauss-Jordan elimination.
    pub fn inverse(&self) -> Option<Self> {
        assert!(self.is_square());
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Mat::scalar_identity(n);
        for col in 0..n {
            let piv = (col..n).find(|&r| !a.get(r, col).is_zero())?;
            a.swap_rows(col, piv);
            inv.swap_rows(col, piv);
            let p = a.get(col, col).inv().ok()?;
            for j in 0..n {
                a.set(col, j, a.get(col, j) * &p);
                inv.set(col, j, inv.get(col, j) * &p);
            }
            for r in 0..n {
                if r == col || a.get(r, col).is_zero() {
                    continue;
                }
                let f = a.get(r, col).clone();
                for j in 0..n {
                    a.set(r, j, a.get(r, j) - &(&f * a.get(col, j)));
                    inv.set(r, j, inv.get(r, j) - &(&f * inv.get(col, j)));
                }
            }
        }
        Some(inv)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    /// Row echelon data: an invertible `P` with `P A` having its nonzero rows
    /// first, and the number of nonzero rows.
    pub fn row_compress(&self) -> (Self, usize) {
        let (m, n) = (self.rows, self.cols);
        let mut a = self.clone();
        let mut p = Mat::scalar_identity(m);
        let mut r = 0;
        for col in 0..n {
            let Some(piv) = (r..m).find(|&i| !a.get(i, col).is_zero()) else { continue };
            a.swap_rows(r, piv);
            p.swap_rows(r, piv);
            for i in 0..m {
                if i == r || a.get(i, col).is_zero() {
                    continue;
                }
                let f = a.get(i, col) / a.get(r, col);
                for j in 0..n {
                    a.set(i, j, a.get(i, j) - &(&f * a.get(r, j)));
                }
                for j in 0..m {
                    p.set(i, j, p.get(i, j) - &(&f * p.get(r, j)));
                }
            }
            r += 1;
            if r == m {
                break;
            }
        }
        (p, r)
    }

    pub fn is_diagonal(&self) -> bool {
        self.entries().all(|(i, j, v)| i == j || v.is_zero())
    }
}

impl<T: Ring + fmt::Display> fmt::Display for Mat<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "[")?;
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self.get(i, j))?;
            }
            write!(f, "]")?;
        }
        write!(f, "]")
    }
}

impl<T: Ring + Serialize> Serialize for Mat<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(self.rows))?;
        for i in 0..self.rows {
            seq.serialize_element(self.row(i))?;
        }
        seq.end()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: &str) -> Scalar {
        x.parse().unwrap()
    }

    #[test]
    fn char_poly_and_adjugate() {
        let a = Mat::from_rows(vec![vec![s("0"), s("1")], vec![s("b"), s("c")]]);
        let c = a.char_poly();
        assert_eq!(c, vec![s("-b"), s("-c"), s("1")]);
        assert_eq!(a.det(), s("-b"));
        let adj = a.adjugate();
        assert_eq!(a.mul(&adj), Mat::scalar_identity(2).scale(&s("-b")));
        let inv = a.inverse().unwrap();
        assert_eq!(a.mul(&inv), Mat::scalar_identity(2));
    }

    #[test]
    fn char_poly_of_series_matrix() {
        let l = |x: &str| LaurentSeries::parse(x).unwrap();
        let a = Mat::from_rows(vec![vec![LaurentSeries::zero("w"), l("w^-3")], vec![l("b*w^-2"), LaurentSeries::zero("w")]]);
        let c = a.char_poly();
        assert_eq!(c[0], l("-b*w^-5"));
        assert!(c[1].is_exact_zero());
    }

    #[test]
    fn row_compression() {
        let a = Mat::from_rows(vec![
            vec![s("0"), s("1"), s("0")],
            vec![s("0"), s("0"), s("0")],
            vec![s("0"), s("0"), s("t")],
        ]);
        let (p, r) = a.row_compress();
        assert_eq!(r, 2);
        let pa = p.mul(&a);
        assert!(pa.row(2).iter().all(|x| x.is_zero()));
        assert!(p.inverse().is_some());
    }
}

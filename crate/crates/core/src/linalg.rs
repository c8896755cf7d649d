//! Small dense matrices and vectors of runtime dimension 2 or 3.
//!
//! Everything here is `Copy`, allocation-free, and deterministic: the same
//! input bits always produce the same output bits. The backing arrays are
//! sized for the 3D case; 2D values keep the unused slots at zero so that
//! equality and finiteness checks can scan the whole array.

/// Column vector of dimension 2 or 3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vect {
    pub dim: usize,
    pub v: [f64; 3],
}

impl Vect {
    pub fn zero(dim: usize) -> Self {
        Vect { dim, v: [0.0; 3] }
    }

    pub fn from_slice(dim: usize, s: &[f64]) -> Self {
        let mut v = [0.0; 3];
        v[..dim].copy_from_slice(&s[..dim]);
        Vect { dim, v }
    }

    #[inline]
    pub fn add(&self, o: &Vect) -> Vect {
        let mut r = *self;
        for i in 0..self.dim {
            r.v[i] += o.v[i];
        }
        r
    }

    #[inline]
    pub fn sub(&self, o: &Vect) -> Vect {
        let mut r = *self;
        for i in 0..self.dim {
            r.v[i] -= o.v[i];
        }
        r
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Vect {
        let mut r = *self;
        for i in 0..self.dim {
            r.v[i] *= s;
        }
        r
    }

    #[inline]
    pub fn dot(&self, o: &Vect) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            acc += self.v[i] * o.v[i];
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|x| x.is_finite())
    }
}

/// Row-major square matrix of dimension 2 or 3.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat {
    pub dim: usize,
    pub m: [f64; 9],
}

impl Mat {
    pub fn zero(dim: usize) -> Self {
        Mat { dim, m: [0.0; 9] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut r = Mat::zero(dim);
        for i in 0..dim {
            r.set(i, i, 1.0);
        }
        r
    }

    pub fn from_rows(dim: usize, rows: &[&[f64]]) -> Self {
        let mut r = Mat::zero(dim);
        for i in 0..dim {
            for j in 0..dim {
                r.set(i, j, rows[i][j]);
            }
        }
        r
    }

    pub fn diag(dim: usize, d: &[f64]) -> Self {
        let mut r = Mat::zero(dim);
        for i in 0..dim {
            r.set(i, i, d[i]);
        }
        r
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.m[i * self.dim + j] = x;
    }

    #[inline]
    pub fn add(&self, o: &Mat) -> Mat {
        let mut r = *self;
        for k in 0..self.dim * self.dim {
            r.m[k] += o.m[k];
        }
        r
    }

    #[inline]
    pub fn sub(&self, o: &Mat) -> Mat {
        let mut r = *self;
        for k in 0..self.dim * self.dim {
            r.m[k] -= o.m[k];
        }
        r
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Mat {
        let mut r = *self;
        for k in 0..self.dim * self.dim {
            r.m[k] *= s;
        }
        r
    }

    pub fn matmul(&self, o: &Mat) -> Mat {
        let d = self.dim;
        let mut r = Mat::zero(d);
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += self.get(i, k) * o.get(k, j);
                }
                r.set(i, j, acc);
            }
        }
        r
    }

    pub fn matvec(&self, x: &Vect) -> Vect {
        let d = self.dim;
        let mut r = Vect::zero(d);
        for i in 0..d {
            let mut acc = 0.0;
            for j in 0..d {
                acc += self.get(i, j) * x.v[j];
            }
            r.v[i] = acc;
        }
        r
    }

    /// x yᵀ
    pub fn outer(x: &Vect, y: &Vect) -> Mat {
        let d = x.dim;
        let mut r = Mat::zero(d);
        for i in 0..d {
            for j in 0..d {
                r.set(i, j, x.v[i] * y.v[j]);
            }
        }
        r
    }

    pub fn transpose(&self) -> Mat {
        let d = self.dim;
        let mut r = Mat::zero(d);
        for i in 0..d {
            for j in 0..d {
                r.set(i, j, self.get(j, i));
            }
        }
        r
    }

    pub fn trace(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            acc += self.get(i, i);
        }
        acc
    }

    pub fn det(&self) -> f64 {
        match self.dim {
            2 => self.get(0, 0) * self.get(1, 1) - self.get(0, 1) * self.get(1, 0),
            3 => {
                self.get(0, 0) * (self.get(1, 1) * self.get(2, 2) - self.get(1, 2) * self.get(2, 1))
                    - self.get(0, 1)
                        * (self.get(1, 0) * self.get(2, 2) - self.get(1, 2) * self.get(2, 0))
                    + self.get(0, 2)
                        * (self.get(1, 0) * self.get(2, 1) - self.get(1, 1) * self.get(2, 0))
            }
            _ => unreachable!("dim is 2 or 3"),
        }
    }

    /// Cofactor matrix: `det(A) A⁻ᵀ` without the inversion, so it stays
    /// well-defined for singular matrices. This is d(det A)/dA.
    pub fn cofactor(&self) -> Mat {
        let d = self.dim;
        let mut r = Mat::zero(d);
        match d {
            2 => {
                r.set(0, 0, self.get(1, 1));
                r.set(0, 1, -self.get(1, 0));
                r.set(1, 0, -self.get(0, 1));
                r.set(1, 1, self.get(0, 0));
            }
            3 => {
                for i in 0..3 {
                    for j in 0..3 {
                        let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                        let (c, e) = ((j + 1) % 3, (j + 2) % 3);
                        r.set(i, j, self.get(a, c) * self.get(b, e) - self.get(a, e) * self.get(b, c));
                    }
                }
            }
            _ => unreachable!(),
        }
        r
    }

    /// Inverse via the adjugate. Caller is responsible for checking `det`.
    pub fn inverse(&self) -> Mat {
        let det = self.det();
        self.cofactor().transpose().scale(1.0 / det)
    }

    /// Symmetric part (A + Aᵀ)/2.
    pub fn sym(&self) -> Mat {
        self.add(&self.transpose()).scale(0.5)
    }

    /// Frobenius inner product ⟨A, B⟩ = Σ aᵢⱼ bᵢⱼ.
    pub fn inner(&self, o: &Mat) -> f64 {
        let mut acc = 0.0;
        for k in 0..self.dim * self.dim {
            acc += self.m[k] * o.m[k];
        }
        acc
    }

    pub fn frob_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|x| x.is_finite())
    }
}

/// Eigendecomposition of a symmetric matrix: orthonormal columns `q` and
/// eigenvalues `lambda`, sorted descending. Deterministic: fixed sweep order,
/// fixed sort tie-break, column signs normalized so the entry of largest
/// magnitude in each eigenvector is positive.
#[derive(Clone, Copy, Debug)]
pub struct SymEig {
    pub q: Mat,
    pub lambda: [f64; 3],
}

/// Cyclic Jacobi on a symmetric 2x2 or 3x3 matrix. Converges to machine
/// precision in a handful of sweeps; input asymmetry is folded away first.
pub fn sym_eig(a: &Mat) -> SymEig {
    let d = a.dim;
    let mut w = a.sym();
    let mut q = Mat::identity(d);
    let scale = w.frob_norm().max(1.0);
    for _ in 0..50 {
        let mut off = 0.0;
        for p in 0..d {
            for r in (p + 1)..d {
                off += w.get(p, r) * w.get(p, r);
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..d {
            for r in (p + 1)..d {
                let apq = w.get(p, r);
                if apq == 0.0 {
                    continue;
                }
                let app = w.get(p, p);
                let aqq = w.get(r, r);
                let theta = 0.5 * (aqq - app) / apq;
                // Stable tangent of the rotation angle.
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // W <- Jᵀ W J with J the Givens rotation in the (p, r) plane.
                for k in 0..d {
                    let wkp = w.get(k, p);
                    let wkq = w.get(k, r);
                    w.set(k, p, c * wkp - s * wkq);
                    w.set(k, r, s * wkp + c * wkq);
                }
                for k in 0..d {
                    let wpk = w.get(p, k);
                    let wqk = w.get(r, k);
                    w.set(p, k, c * wpk - s * wqk);
                    w.set(r, k, s * wpk + c * wqk);
                }
                for k in 0..d {
                    let qkp = q.get(k, p);
                    let qkq = q.get(k, r);
                    q.set(k, p, c * qkp - s * qkq);
                    q.set(k, r, s * qkp + c * qkq);
                }
            }
        }
    }

    let mut lambda = [0.0; 3];
    for i in 0..d {
        lambda[i] = w.get(i, i);
    }
    // Sort descending; stable in the original index on ties.
    let mut order = [0usize, 1, 2];
    order[..d].sort_by(|&i, &j| lambda[j].partial_cmp(&lambda[i]).unwrap().then(i.cmp(&j)));
    let mut qs = Mat::zero(d);
    let mut ls = [0.0; 3];
    for (new, &old) in order[..d].iter().enumerate() {
        ls[new] = lambda[old];
        // Sign convention: largest-magnitude entry positive.
        let mut pivot = 0;
        for k in 1..d {
            if q.get(k, old).abs() > q.get(pivot, old).abs() {
                pivot = k;
            }
        }
        let sgn = if q.get(pivot, old) < 0.0 { -1.0 } else { 1.0 };
        for k in 0..d {
            qs.set(k, new, sgn * q.get(k, old));
        }
    }
    SymEig { q: qs, lambda: ls }
}

/// Polar decomposition F = R S with R orthogonal and S symmetric positive
/// semi-definite, computed through the eigendecomposition of FᵀF.
#[derive(Clone, Copy, Debug)]
pub struct Polar {
    pub r: Mat,
    pub s: Mat,
    /// Eigenvectors of FᵀF (shared by S and S⁻¹).
    pub q: Mat,
    /// Singular values of F, descending.
    pub sigma: [f64; 3],
}

pub fn polar(f: &Mat) -> Polar {
    let d = f.dim;
    let c = f.transpose().matmul(f);
    let eig = sym_eig(&c);
    let mut sigma = [0.0; 3];
    for i in 0..d {
        sigma[i] = eig.lambda[i].max(0.0).sqrt();
    }
    let s = reconstruct(&eig.q, &sigma, d);
    // R = F S⁻¹; the caller guards against vanishing singular values.
    let mut inv_sigma = [0.0; 3];
    for i in 0..d {
        inv_sigma[i] = 1.0 / sigma[i];
    }
    let s_inv = reconstruct(&eig.q, &inv_sigma, d);
    Polar { r: f.matmul(&s_inv), s, q: eig.q, sigma }
}

/// Q diag(d) Qᵀ
pub fn reconstruct(q: &Mat, d: &[f64; 3], dim: usize) -> Mat {
    let mut r = Mat::zero(dim);
    for i in 0..dim {
        for j in 0..dim {
            let mut acc = 0.0;
            for k in 0..dim {
                acc += q.get(i, k) * d[k] * q.get(j, k);
            }
            r.set(i, j, acc);
        }
    }
    r
}

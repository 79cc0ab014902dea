//! 2×2 complex band matrices.
//!
//! Every band-space product in the solver is a 2×2 product, so the
//! arithmetic is written out entry by entry instead of going through a
//! general matrix type.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64 as C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Row-major 2×2 complex matrix indexed by (band j, band m).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Mat2(pub [C64; 4]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([ZERO; 4]);
    pub const IDENTITY: Mat2 = Mat2([ONE, ZERO, ZERO, ONE]);

    #[inline]
    pub const fn new(a00: C64, a01: C64, a10: C64, a11: C64) -> Self {
        Mat2([a00, a01, a10, a11])
    }

    #[inline]
    pub fn diag(a: C64, b: C64) -> Self {
        Mat2([a, ZERO, ZERO, b])
    }

    #[inline(always)]
    pub fn get(&self, j: usize, m: usize) -> C64 {
        self.0[2 * j + m]
    }

    #[inline(always)]
    pub fn set(&mut self, j: usize, m: usize, v: C64) {
        self.0[2 * j + m] = v;
    }

    /// Conjugate transpose.
    #[inline]
    pub fn adjoint(&self) -> Self {
        let a = &self.0;
        Mat2([a[0].conj(), a[2].conj(), a[1].conj(), a[3].conj()])
    }

    /// `-A†`, the map relating G(t',t) to G(t,t').
    #[inline]
    pub fn neg_adjoint(&self) -> Self {
        -self.adjoint()
    }

    #[inline]
    pub fn scale(&self, s: C64) -> Self {
        let a = &self.0;
        Mat2([a[0] * s, a[1] * s, a[2] * s, a[3] * s])
    }

    #[inline]
    pub fn scale_re(&self, s: f64) -> Self {
        let a = &self.0;
        Mat2([a[0] * s, a[1] * s, a[2] * s, a[3] * s])
    }

    pub fn trace(&self) -> C64 {
        self.0[0] + self.0[3]
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Projects onto the anti-Hermitian part, `(A - A†)/2`.
    pub fn anti_hermitian_part(&self) -> Self {
        (*self - self.adjoint()).scale_re(0.5)
    }

    /// `exp(-i h dt)` for Hermitian `h`, in closed form.
    ///
    /// Writing `h = a·1 + b·σ`, the exponential is
    /// `e^{-i a dt} (cos(|b| dt)·1 - i sin(|b| dt) b̂·σ)`.
    pub fn propagator(h: &Mat2, dt: f64) -> Mat2 {
        let a = 0.5 * (h.0[0].re + h.0[3].re);
        let bz = 0.5 * (h.0[0].re - h.0[3].re);
        // h01 = bx - i by
        let bx = h.0[1].re;
        let by = -h.0[1].im;
        let b = (bx * bx + by * by + bz * bz).sqrt();
        let theta = b * dt;
        let c = theta.cos();
        // sin(|b| dt)/|b| with the removable singularity at b = 0
        let s = if theta.abs() < 1e-8 {
            dt * (1.0 - theta * theta / 6.0)
        } else {
            theta.sin() / b
        };
        let mi = C64::new(0.0, -1.0);
        // b·σ = [[bz, bx - i by], [bx + i by, -bz]]
        let u = Mat2([
            C64::new(c, 0.0) + mi * (s * bz),
            mi * C64::new(s * bx, -s * by),
            mi * C64::new(s * bx, s * by),
            C64::new(c, 0.0) - mi * (s * bz),
        ]);
        let phase = C64::from_polar(1.0, -a * dt);
        u.scale(phase)
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    #[inline]
    fn add(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2([a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]])
    }
}

impl AddAssign for Mat2 {
    #[inline]
    fn add_assign(&mut self, o: Mat2) {
        for (a, b) in self.0.iter_mut().zip(o.0) {
            *a += b;
        }
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    #[inline]
    fn sub(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2([a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]])
    }
}

impl SubAssign for Mat2 {
    #[inline]
    fn sub_assign(&mut self, o: Mat2) {
        for (a, b) in self.0.iter_mut().zip(o.0) {
            *a -= b;
        }
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    #[inline]
    fn neg(self) -> Mat2 {
        let a = &self.0;
        Mat2([-a[0], -a[1], -a[2], -a[3]])
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, o: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &o.0);
        Mat2([
            a[0] * b[0] + a[1] * b[2],
            a[0] * b[1] + a[1] * b[3],
            a[2] * b[0] + a[3] * b[2],
            a[2] * b[1] + a[3] * b[3],
        ])
    }
}

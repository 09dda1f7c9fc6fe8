use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

/// Scalar arithmetic shared by plain `f64` evaluation and the forward-mode
/// dual types. Networks and PDE right-hand sides written against this trait
/// can be differentiated in any number of directions.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
{
    fn cst(v: f64) -> Self;
    fn val(&self) -> f64;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn recip(self) -> Self;
    /// `x · sigmoid(x)`.
    fn swish(self) -> Self;

    /// `acc + w · self`.
    #[inline]
    fn mul_add_f(self, w: f64, acc: Self) -> Self {
        acc + self * w
    }

    #[inline]
    fn zero() -> Self {
        Self::cst(0.0)
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Swish and its first two derivatives.
#[inline]
pub fn swish3(x: f64) -> (f64, f64, f64) {
    let s = sigmoid(x);
    let ds = s * (1.0 - s);
    (x * s, s + x * ds, ds * (2.0 + x * (1.0 - 2.0 * s)))
}

impl Real for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn val(&self) -> f64 {
        *self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    #[inline]
    fn recip(self) -> Self {
        1.0 / self
    }
    #[inline]
    fn swish(self) -> Self {
        self * sigmoid(self)
    }
    #[inline]
    fn mul_add_f(self, w: f64, acc: Self) -> Self {
        acc + self * w
    }
}

/// First-order dual number with `K` tangent directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const K: usize> {
    pub val: f64,
    pub d1: [f64; K],
}

impl<const K: usize> Dual<K> {
    pub fn constant(val: f64) -> Self {
        Dual { val, d1: [0.0; K] }
    }

    /// A variable seeded with unit tangent in direction `dir`.
    pub fn variable(val: f64, dir: usize) -> Self {
        let mut d = Dual::constant(val);
        d.d1[dir] = 1.0;
        d
    }

    #[inline]
    fn chain(self, g: f64, g1: f64) -> Self {
        let mut d1 = self.d1;
        for v in d1.iter_mut() {
            *v *= g1;
        }
        Dual { val: g, d1 }
    }
}

impl<const K: usize> Add for Dual<K> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.val += o.val;
        for i in 0..K {
            self.d1[i] += o.d1[i];
        }
        self
    }
}

impl<const K: usize> AddAssign for Dual<K> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<const K: usize> Sub for Dual<K> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self.val -= o.val;
        for i in 0..K {
            self.d1[i] -= o.d1[i];
        }
        self
    }
}

impl<const K: usize> Mul for Dual<K> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut d1 = [0.0; K];
        for i in 0..K {
            d1[i] = self.d1[i] * o.val + self.val * o.d1[i];
        }
        Dual {
            val: self.val * o.val,
            d1,
        }
    }
}

impl<const K: usize> Neg for Dual<K> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl<const K: usize> Add<f64> for Dual<K> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: f64) -> Self {
        self.val += o;
        self
    }
}

impl<const K: usize> Mul<f64> for Dual<K> {
    type Output = Self;
    #[inline]
    fn mul(mut self, o: f64) -> Self {
        self.val *= o;
        for v in self.d1.iter_mut() {
            *v *= o;
        }
        self
    }
}

impl<const K: usize> Real for Dual<K> {
    fn cst(v: f64) -> Self {
        Dual::constant(v)
    }
    #[inline]
    fn val(&self) -> f64 {
        self.val
    }
    fn sin(self) -> Self {
        self.chain(self.val.sin(), self.val.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.val.cos(), -self.val.sin())
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.chain(e, e)
    }
    fn powi(self, n: i32) -> Self {
        let g1 = if n == 0 {
            0.0
        } else {
            n as f64 * self.val.powi(n - 1)
        };
        self.chain(self.val.powi(n), g1)
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.val;
        self.chain(r, -r * r)
    }
    fn swish(self) -> Self {
        let (g, g1, _) = swish3(self.val);
        self.chain(g, g1)
    }
    #[inline]
    fn mul_add_f(self, w: f64, mut acc: Self) -> Self {
        acc.val += w * self.val;
        for i in 0..K {
            acc.d1[i] += w * self.d1[i];
        }
        acc
    }
}

/// Second-order dual number: value, `K` first directional derivatives and
/// the matching `K` pure second directional derivatives (no cross terms).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual2<const K: usize> {
    pub val: f64,
    pub d1: [f64; K],
    pub d2: [f64; K],
}

impl<const K: usize> Dual2<K> {
    pub fn constant(val: f64) -> Self {
        Dual2 {
            val,
            d1: [0.0; K],
            d2: [0.0; K],
        }
    }

    /// A variable with first-order seed `seed[j]` along direction `j`.
    pub fn seeded(val: f64, seed: [f64; K]) -> Self {
        Dual2 {
            val,
            d1: seed,
            d2: [0.0; K],
        }
    }

    /// Applies a scalar function given its value and first two derivatives
    /// at `self.val`.
    #[inline]
    pub fn chain(self, g: f64, g1: f64, g2: f64) -> Self {
        let mut out = Dual2::constant(g);
        for i in 0..K {
            out.d1[i] = g1 * self.d1[i];
            out.d2[i] = g1 * self.d2[i] + g2 * self.d1[i] * self.d1[i];
        }
        out
    }
}

impl<const K: usize> Add for Dual2<K> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: Self) -> Self {
        self.val += o.val;
        for i in 0..K {
            self.d1[i] += o.d1[i];
            self.d2[i] += o.d2[i];
        }
        self
    }
}

impl<const K: usize> AddAssign for Dual2<K> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<const K: usize> Sub for Dual2<K> {
    type Output = Self;
    #[inline]
    fn sub(mut self, o: Self) -> Self {
        self.val -= o.val;
        for i in 0..K {
            self.d1[i] -= o.d1[i];
            self.d2[i] -= o.d2[i];
        }
        self
    }
}

impl<const K: usize> Mul for Dual2<K> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        let mut out = Dual2::constant(self.val * o.val);
        for i in 0..K {
            out.d1[i] = self.d1[i] * o.val + self.val * o.d1[i];
            out.d2[i] =
                self.d2[i] * o.val + 2.0 * self.d1[i] * o.d1[i] + self.val * o.d2[i];
        }
        out
    }
}

impl<const K: usize> Neg for Dual2<K> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl<const K: usize> Add<f64> for Dual2<K> {
    type Output = Self;
    #[inline]
    fn add(mut self, o: f64) -> Self {
        self.val += o;
        self
    }
}

impl<const K: usize> Mul<f64> for Dual2<K> {
    type Output = Self;
    #[inline]
    fn mul(mut self, o: f64) -> Self {
        self.val *= o;
        for i in 0..K {
            self.d1[i] *= o;
            self.d2[i] *= o;
        }
        self
    }
}

impl<const K: usize> Real for Dual2<K> {
    fn cst(v: f64) -> Self {
        Dual2::constant(v)
    }
    #[inline]
    fn val(&self) -> f64 {
        self.val
    }
    fn sin(self) -> Self {
        let (s, c) = self.val.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.val.sin_cos();
        self.chain(c, -s, -c)
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.chain(e, e, e)
    }
    fn powi(self, n: i32) -> Self {
        let x = self.val;
        let nf = n as f64;
        let g1 = if n == 0 { 0.0 } else { nf * x.powi(n - 1) };
        let g2 = if n == 0 || n == 1 {
            0.0
        } else {
            nf * (nf - 1.0) * x.powi(n - 2)
        };
        self.chain(x.powi(n), g1, g2)
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.val;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
    fn swish(self) -> Self {
        let (g, g1, g2) = swish3(self.val);
        self.chain(g, g1, g2)
    }
    #[inline]
    fn mul_add_f(self, w: f64, mut acc: Self) -> Self {
        acc.val += w * self.val;
        for i in 0..K {
            acc.d1[i] += w * self.d1[i];
            acc.d2[i] += w * self.d2[i];
        }
        acc
    }
}

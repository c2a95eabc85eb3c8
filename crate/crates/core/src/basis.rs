//! Angular and radial basis functions on the unit disk and the order sets
//! used to build feature vectors.
//!
//! Every basis is separable in polar form, `V_nm(r, theta) = R_n(r) A_m(theta)`
//! with `A_m(theta) = exp(j m theta)`. The radial factors satisfy the weighted
//! orthogonality `int_0^1 R_n R_n'^* r dr = delta_nn' / (2 pi)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Radius below which singular radial factors (`1/sqrt(r)`) are clamped.
pub const SINGULAR_RADIUS_EPS: f64 = 1e-6;

/// Largest radial order accepted for the factorial-based OFMM polynomial.
pub const OFMM_MAX_ORDER: i32 = 20;

/// Radial basis family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BasisKind {
    /// Polar cosine transform.
    Pct,
    /// Polar complex exponential transform.
    Pcet,
    /// Polar sine transform.
    Pst,
    /// Zernike moments.
    Zm,
    /// Orthogonal Fourier-Mellin moments.
    Ofmm,
    /// Exponent-Fourier moments.
    Efm,
    /// Radial harmonic Fourier moments.
    Rhfm,
}

impl BasisKind {
    pub const ALL: [BasisKind; 7] = [
        BasisKind::Pct,
        BasisKind::Pcet,
        BasisKind::Pst,
        BasisKind::Zm,
        BasisKind::Ofmm,
        BasisKind::Efm,
        BasisKind::Rhfm,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            BasisKind::Pct => "PCT",
            BasisKind::Pcet => "PCET",
            BasisKind::Pst => "PST",
            BasisKind::Zm => "ZM",
            BasisKind::Ofmm => "OFMM",
            BasisKind::Efm => "EFM",
            BasisKind::Rhfm => "RHFM",
        }
    }

    /// Stable one-byte code used by the binary containers.
    pub fn code(self) -> u8 {
        match self {
            BasisKind::Pct => 0,
            BasisKind::Pcet => 1,
            BasisKind::Pst => 2,
            BasisKind::Zm => 3,
            BasisKind::Ofmm => 4,
            BasisKind::Efm => 5,
            BasisKind::Rhfm => 6,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    /// Whether `R_n(r)` is real-valued.
    pub fn has_real_radial(self) -> bool {
        !matches!(self, BasisKind::Pcet | BasisKind::Efm)
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BasisKind::ALL
            .into_iter()
            .find(|k| k.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig {
                field: "basis",
                reason: format!("unknown basis `{s}`"),
            })
    }
}

/// Radial order `n` and angular repetition `m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OrderPair {
    pub n: i32,
    pub m: i32,
}

impl OrderPair {
    pub const fn new(n: i32, m: i32) -> Self {
        Self { n, m }
    }
}

impl fmt::Display for OrderPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.n, self.m)
    }
}

/// Checks the kind-specific validity rules for an order pair.
pub fn validate_order(kind: BasisKind, order: OrderPair) -> Result<()> {
    let OrderPair { n, m } = order;
    let bad = |reason| {
        Err(Error::InvalidOrder {
            kind,
            n,
            m,
            reason,
        })
    };
    match kind {
        BasisKind::Pcet | BasisKind::Efm => Ok(()),
        _ if n < 0 => bad("radial order must be non-negative"),
        BasisKind::Pst if n == 0 => bad("PST radial function vanishes for n = 0"),
        BasisKind::Zm if m.abs() > n => bad("ZM requires |m| <= n"),
        BasisKind::Zm if (n - m.abs()) % 2 != 0 => bad("ZM requires n - |m| even"),
        BasisKind::Ofmm if n > OFMM_MAX_ORDER => bad("OFMM order above the supported cap of 20"),
        _ => Ok(()),
    }
}

/// Norm used to bound the order set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Norm {
    L1,
    LInf,
}

impl Norm {
    fn measure(self, order: OrderPair) -> i32 {
        match self {
            Norm::L1 => order.n.abs() + order.m.abs(),
            Norm::LInf => order.n.abs().max(order.m.abs()),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Norm::L1 => "1",
            Norm::LInf => "inf",
        }
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "l1" => Ok(Norm::L1),
            "inf" | "infinity" | "linf" | "max" => Ok(Norm::LInf),
            _ => Err(Error::InvalidConfig {
                field: "norm",
                reason: format!("expected `1` or `inf`, got `{s}`"),
            }),
        }
    }
}

/// Deterministically ordered set of valid order pairs with `||(n,m)||_p <= K`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OrderSet {
    pub kind: BasisKind,
    pub norm: Norm,
    pub bound: u32,
    pairs: Vec<OrderPair>,
}

impl OrderSet {
    /// An explicit list of pairs; each is validated and the list is sorted.
    pub fn from_pairs(kind: BasisKind, norm: Norm, bound: u32, mut pairs: Vec<OrderPair>) -> Result<Self> {
        for &p in &pairs {
            validate_order(kind, p)?;
        }
        pairs.sort();
        pairs.dedup();
        Ok(Self {
            kind,
            norm,
            bound,
            pairs,
        })
    }

    pub fn pairs(&self) -> &[OrderPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = OrderPair> + '_ {
        self.pairs.iter().copied()
    }

    pub fn position(&self, order: OrderPair) -> Option<usize> {
        self.pairs.binary_search(&order).ok()
    }
}

/// All valid pairs with `m >= 0` (and `n >= 0`) inside the norm ball.
///
/// Negative `m` (and negative `n` for PCET/EFM) are left out: for real
/// images their moments are conjugates of the enumerated ones.
pub fn order_set(kind: BasisKind, norm: Norm, bound: u32) -> OrderSet {
    let k = bound as i32;
    let mut pairs = Vec::new();
    for n in 0..=k {
        for m in 0..=k {
            let p = OrderPair::new(n, m);
            if norm.measure(p) <= k && validate_order(kind, p).is_ok() {
                pairs.push(p);
            }
        }
    }
    OrderSet {
        kind,
        norm,
        bound,
        pairs,
    }
}

/// `A_m(theta) = exp(j m theta)`.
#[inline]
pub fn angular_eval(m: i32, theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, m as f64 * theta)
}

/// Precomputed radial function for one `(kind, order)`.
#[derive(Clone, Debug)]
pub struct RadialBasis {
    kind: BasisKind,
    n: i32,
    /// Polynomial coefficients by ascending power (ZM, OFMM).
    poly: Vec<f64>,
}

impl RadialBasis {
    pub fn new(kind: BasisKind, order: OrderPair) -> Result<Self> {
        validate_order(kind, order)?;
        let poly = match kind {
            BasisKind::Zm => zernike_coefficients(order.n, order.m),
            BasisKind::Ofmm => ofmm_coefficients(order.n),
            _ => Vec::new(),
        };
        Ok(Self {
            kind,
            n: order.n,
            poly,
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    /// `R_n(r)`. Radii below [`SINGULAR_RADIUS_EPS`] are clamped for RHFM and EFM.
    #[inline]
    pub fn eval(&self, r: f64) -> Complex64 {
        let n = self.n as f64;
        match self.kind {
            BasisKind::Pct => {
                if self.n == 0 {
                    Complex64::new(1.0 / PI.sqrt(), 0.0)
                } else {
                    Complex64::new((2.0 / PI).sqrt() * (n * PI * r * r).cos(), 0.0)
                }
            }
            BasisKind::Pst => Complex64::new((2.0 / PI).sqrt() * (n * PI * r * r).sin(), 0.0),
            BasisKind::Pcet => Complex64::from_polar(1.0 / PI.sqrt(), 2.0 * n * PI * r * r),
            BasisKind::Efm => {
                let r = r.max(SINGULAR_RADIUS_EPS);
                Complex64::from_polar(1.0 / (2.0 * PI * r).sqrt(), 2.0 * n * PI * r)
            }
            BasisKind::Rhfm => {
                let r = r.max(SINGULAR_RADIUS_EPS);
                let value = if self.n == 0 {
                    1.0 / (2.0 * PI * r).sqrt()
                } else if self.n % 2 == 1 {
                    (1.0 / (PI * r)).sqrt() * (PI * (n + 1.0) * r).sin()
                } else {
                    (1.0 / (PI * r)).sqrt() * (PI * n * r).cos()
                };
                Complex64::new(value, 0.0)
            }
            BasisKind::Zm | BasisKind::Ofmm => {
                let value = self.poly.iter().rev().fold(0.0, |acc, &c| acc * r + c);
                Complex64::new(value, 0.0)
            }
        }
    }
}

fn ln_factorial(k: i32) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

fn zernike_coefficients(n: i32, m: i32) -> Vec<f64> {
    let m = m.abs();
    let norm = ((n + 1) as f64 / PI).sqrt();
    let mut poly = vec![0.0; n as usize + 1];
    for k in 0..=(n - m) / 2 {
        let ln_mag = ln_factorial(n - k)
            - ln_factorial(k)
            - ln_factorial((n + m) / 2 - k)
            - ln_factorial((n - m) / 2 - k);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        poly[(n - 2 * k) as usize] += sign * ln_mag.exp() * norm;
    }
    poly
}

// log-factorial accumulation keeps intermediate magnitudes bounded; the
// alternating sum itself still loses precision as n grows, hence the cap.
fn ofmm_coefficients(n: i32) -> Vec<f64> {
    let norm = ((n + 1) as f64 / PI).sqrt();
    (0..=n)
        .map(|k| {
            let ln_mag = ln_factorial(n + k + 1)
                - ln_factorial(k)
                - ln_factorial(n - k)
                - ln_factorial(k + 1);
            let sign = if (n + k) % 2 == 0 { 1.0 } else { -1.0 };
            sign * ln_mag.exp() * norm
        })
        .collect()
}

/// Closed-form `R_n(r)` for `r` in `[0, 1]`. Only ZM reads `order.m`.
pub fn radial_eval(kind: BasisKind, order: OrderPair, r: f64) -> Result<Complex64> {
    Ok(RadialBasis::new(kind, order)?.eval(r))
}

/// Local frame: disk of radius `w` centered at `(u, v)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalFrame {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl LocalFrame {
    pub fn new(u: f64, v: f64, w: f64) -> Self {
        Self { u, v, w }
    }

    /// Normalized polar coordinates `(r', theta')` with `theta'` in `[0, 2 pi)`.
    #[inline]
    pub fn polar(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = (x - self.u) / self.w;
        let dy = (y - self.v) / self.w;
        (dx.hypot(dy), wrapped_atan2(dy, dx))
    }

    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = x - self.u;
        let dy = y - self.v;
        dx * dx + dy * dy <= self.w * self.w
    }
}

/// Quadrant-aware arctangent mapped to `[0, 2 pi)`.
#[inline]
pub fn wrapped_atan2(y: f64, x: f64) -> f64 {
    let t = y.atan2(x);
    if t < 0.0 {
        t + 2.0 * PI
    } else {
        t
    }
}

/// `V_nm^{uvw}(x, y) = R_n(r') A_m(theta')` inside the frame's disk.
pub fn basis_eval(kind: BasisKind, order: OrderPair, frame: LocalFrame, x: f64, y: f64) -> Result<Complex64> {
    if !frame.contains(x, y) {
        return Err(Error::OutsideDomain {
            x,
            y,
            u: frame.u,
            v: frame.v,
            w: frame.w,
        });
    }
    let (r, theta) = frame.polar(x, y);
    Ok(radial_eval(kind, order, r)? * angular_eval(order.m, theta))
}

const GAUSS_LEGENDRE_4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_85),
];

/// `int_0^1 R_a(r) R_b(r)^* r dr` by composite 4-point Gauss-Legendre with
/// `quad_points` nodes in total. The contract value is `delta_ab / (2 pi)`.
pub fn radial_orthogonality(kind: BasisKind, a: OrderPair, b: OrderPair, quad_points: usize) -> Result<Complex64> {
    if quad_points < 64 {
        return Err(Error::SizeTooSmall(format!(
            "orthogonality quadrature needs at least 64 points, got {quad_points}"
        )));
    }
    let ra = RadialBasis::new(kind, a)?;
    let rb = RadialBasis::new(kind, b)?;
    let panels = quad_points.div_ceil(4);
    let h = 1.0 / panels as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for &(x, wt) in &GAUSS_LEGENDRE_4 {
            let r = mid + 0.5 * h * x;
            acc += ra.eval(r) * rb.eval(r).conj() * (r * wt * 0.5 * h);
        }
    }
    Ok(acc)
}

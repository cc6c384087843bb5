//! Parameter algebra for `u_t = Δu + |u|^p + t^σ w(x)`.
//!
//! Every exponent is derived in exact rational arithmetic from the binary
//! value of the `f64` inputs (each finite `f64` is a dyadic rational), then
//! rounded once on the way out. Identities that hold algebraically therefore
//! evaluate to exactly zero instead of drifting with rounding.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};

use crate::error::{Error, Result};

pub type Rational = BigRational;

fn rat(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

fn rat_from_f64(x: f64) -> Result<Rational> {
    Rational::from_float(x).ok_or_else(|| Error::InvalidParams(format!("non-finite value {x}")))
}

fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn max_rat(a: Rational, b: Rational) -> Rational {
    if a >= b {
        a
    } else {
        b
    }
}

fn min_rat(a: Rational, b: Rational) -> Rational {
    if a <= b {
        a
    } else {
        b
    }
}

/// The triple (N, p, σ).
///
/// `σ = 0` and `N = 1` are accepted for baseline runs; see
/// [`Params::in_theorem_scope`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    dim: u32,
    p: f64,
    sigma: f64,
}

impl Params {
    pub fn new(dim: u32, p: f64, sigma: f64) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidParams(format!("N = {dim} must be >= 1")));
        }
        if !p.is_finite() || p <= 1.0 {
            return Err(Error::InvalidParams(format!("p = {p} must be > 1")));
        }
        if !sigma.is_finite() || sigma <= -1.0 {
            return Err(Error::InvalidParams(format!("sigma = {sigma} must be > -1")));
        }
        Ok(Self { dim, p, sigma })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// False for the diagnostic cases `N = 1` or `σ = 0`.
    pub fn in_theorem_scope(&self) -> bool {
        self.dim >= 2 && self.sigma != 0.0
    }

    pub fn exact(&self) -> ExactParams {
        ExactParams {
            dim: self.dim,
            p: rat_from_f64(self.p).expect("validated finite"),
            sigma: rat_from_f64(self.sigma).expect("validated finite"),
        }
    }
}

/// Rational counterpart of [`Params`], used where exact equalities matter
/// (for instance `k = 1` at `p = p*(σ)`).
#[derive(Debug, Clone, PartialEq)]
pub struct ExactParams {
    pub dim: u32,
    pub p: Rational,
    pub sigma: Rational,
}

impl ExactParams {
    pub fn new(dim: u32, p: Rational, sigma: Rational) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidParams(format!("N = {dim} must be >= 1")));
        }
        if p <= Rational::one() {
            return Err(Error::InvalidParams(format!("p = {p} must be > 1")));
        }
        if sigma <= -Rational::one() {
            return Err(Error::InvalidParams(format!("sigma = {sigma} must be > -1")));
        }
        Ok(Self { dim, p, sigma })
    }

    /// Exact `p*(σ)`, `None` when it is infinite.
    pub fn p_star(&self) -> Option<Rational> {
        critical_exponent_exact(self.dim, &self.sigma)
    }

    pub fn to_params(&self) -> Result<Params> {
        Params::new(self.dim, to_f64(&self.p), to_f64(&self.sigma))
    }

    pub fn derive(&self) -> ExactExponents {
        let n = rat(self.dim as i64);
        let one = Rational::one();
        let two = rat(2);
        let p = &self.p;
        let sigma = &self.sigma;
        let pm1 = p - &one;

        let p_fujita = &one + &two / &n;
        let p_star = self.p_star();
        let d = &n * &pm1 / &two;
        let k = &d / (p * (sigma + &one) - sigma);

        let lower = &two / &n * max_rat(one.clone() / (p * &pm1), sigma + &one / &pm1);
        let upper = min_rat(&two / (&n * &pm1), &one / p);
        let window = (lower < upper).then_some(ExactWindow {
            inv_lower: lower,
            inv_upper: upper,
        });

        ExactExponents {
            p_fujita,
            p_star,
            d,
            k,
            window,
        }
    }

    /// `2σp² − (N + 2σ − 2)p + N`.
    pub fn gap_polynomial(&self) -> Rational {
        let n = rat(self.dim as i64);
        let two = rat(2);
        let p = &self.p;
        let s = &self.sigma;
        &two * s * p * p - (&n + &two * s - &two) * p + &n
    }
}

fn critical_exponent_exact(dim: u32, sigma: &Rational) -> Option<Rational> {
    if sigma.is_positive() {
        return None;
    }
    let n = rat(dim as i64);
    let two = rat(2);
    let den = &n - &two - &two * sigma;
    if !den.is_positive() {
        return None;
    }
    Some((&n - &two * sigma) / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactWindow {
    pub inv_lower: Rational,
    pub inv_upper: Rational,
}

impl ExactWindow {
    pub fn midpoint_inv(&self) -> Rational {
        (&self.inv_lower + &self.inv_upper) / rat(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactExponents {
    pub p_fujita: Rational,
    pub p_star: Option<Rational>,
    pub d: Rational,
    pub k: Rational,
    pub window: Option<ExactWindow>,
}

/// `p*(σ)`; infinite for `σ > 0` and whenever the denominator
/// `N − 2 − 2σ` is not positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CriticalExponent {
    Finite(f64),
    Infinite,
}

impl CriticalExponent {
    pub fn value(&self) -> f64 {
        match self {
            CriticalExponent::Finite(v) => *v,
            CriticalExponent::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, CriticalExponent::Infinite)
    }
}

impl fmt::Display for CriticalExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CriticalExponent::Finite(v) => write!(f, "{v}"),
            CriticalExponent::Infinite => write!(f, "inf"),
        }
    }
}

/// Open interval of admissible `1/q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QWindow {
    pub inv_lower: f64,
    pub inv_upper: f64,
}

impl QWindow {
    pub fn contains(&self, q: f64) -> bool {
        let inv = 1.0 / q;
        inv > self.inv_lower && inv < self.inv_upper
    }

    /// Range of `q` itself, `(q_min, q_max)`.
    pub fn q_range(&self) -> (f64, f64) {
        (1.0 / self.inv_upper, 1.0 / self.inv_lower)
    }

    /// Midpoint in `1/q` coordinates.
    pub fn default_q(&self) -> f64 {
        2.0 / (self.inv_lower + self.inv_upper)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedExponents {
    pub p_fujita: f64,
    pub p_star: CriticalExponent,
    pub d: f64,
    pub k: f64,
    pub q_window: Option<QWindow>,
    pub q_default: Option<f64>,
    pub beta_default: Option<f64>,
}

pub fn p_star(dim: u32, sigma: f64) -> CriticalExponent {
    match Rational::from_float(sigma).and_then(|s| critical_exponent_exact(dim, &s)) {
        Some(v) => CriticalExponent::Finite(to_f64(&v)),
        None => CriticalExponent::Infinite,
    }
}

pub fn derive(params: &Params) -> DerivedExponents {
    let exact = params.exact().derive();
    let q_window = exact.window.as_ref().map(|w| QWindow {
        inv_lower: to_f64(&w.inv_lower),
        inv_upper: to_f64(&w.inv_upper),
    });
    let (q_default, beta_default) = match &exact.window {
        Some(w) => {
            let inv_q = w.midpoint_inv();
            let q = to_f64(&(Rational::one() / &inv_q));
            (Some(q), Some(to_f64(&exact_beta(&params.exact(), &inv_q))))
        }
        None => (None, None),
    };
    DerivedExponents {
        p_fujita: to_f64(&exact.p_fujita),
        p_star: match &exact.p_star {
            Some(v) => CriticalExponent::Finite(to_f64(v)),
            None => CriticalExponent::Infinite,
        },
        d: to_f64(&exact.d),
        k: to_f64(&exact.k),
        q_window,
        q_default,
        beta_default,
    }
}

fn exact_beta(params: &ExactParams, inv_q: &Rational) -> Rational {
    let n = rat(params.dim as i64);
    Rational::one() / (&params.p - Rational::one()) - n * inv_q / rat(2)
}

/// `β = 1/(p−1) − N/(2q)`.
pub fn beta(params: &Params, q: f64) -> f64 {
    1.0 / (params.p - 1.0) - params.dim as f64 / (2.0 * q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    SubcriticalBlowUp,
    SupercriticalGlobal,
    ForcedBlowUp,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::SubcriticalBlowUp => "SubcriticalBlowUp",
            Regime::SupercriticalGlobal => "SupercriticalGlobal",
            Regime::ForcedBlowUp => "ForcedBlowUp",
        };
        f.write_str(s)
    }
}

/// Which side of the dichotomy `params` falls on. Ties `p = p*(σ)` are global.
pub fn classify_regime(params: &Params) -> Result<Regime> {
    if params.sigma == 0.0 {
        return Err(Error::SigmaZero);
    }
    if params.sigma > 0.0 {
        return Ok(Regime::ForcedBlowUp);
    }
    let exact = params.exact();
    Ok(match exact.p_star() {
        Some(ps) if exact.p >= ps => Regime::SupercriticalGlobal,
        _ => Regime::SubcriticalBlowUp,
    })
}

/// `2σp² − (N + 2σ − 2)p + N`, negative whenever `σ ∈ (−1, 0)` and `p ≥ p*(σ)`.
pub fn gap_polynomial(params: &Params) -> f64 {
    to_f64(&params.exact().gap_polynomial())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    pub q: f64,
    pub beta: f64,
    pub beta_p: f64,
    /// The three scaling expressions, evaluated exactly then rounded.
    pub identities: [f64; 3],
    /// The same expressions evaluated in plain `f64`.
    pub float_identities: [f64; 3],
    pub beta_positive: bool,
    pub beta_p_below_one: bool,
    pub q_gt_p: bool,
    /// `q > d > k ≥ 1`.
    pub ordering: bool,
}

impl IdentityReport {
    pub fn all_hold(&self, tol: f64) -> bool {
        self.identities.iter().all(|v| v.abs() <= tol)
            && self.beta_positive
            && self.beta_p_below_one
            && self.q_gt_p
    }
}

/// Evaluates
/// `β − N/2 (1/d − 1/q)`, `β(1−p) + 1 − N(p−1)/(2q)` and
/// `β − N/2 (1/k − 1/q) + σ + 1`, all of which vanish inside the window.
pub fn verify_scaling_identities(params: &Params, q: f64) -> Result<IdentityReport> {
    let exact = params.exact();
    let derived = exact.derive();
    let window = derived.window.as_ref().ok_or_else(|| Error::QOutsideWindow {
        q,
        bound: "the admissible window is empty for these parameters".into(),
    })?;
    if !q.is_finite() || q <= 0.0 {
        return Err(Error::QOutsideWindow {
            q,
            bound: "q must be a positive finite number".into(),
        });
    }
    let inv_q = Rational::one() / rat_from_f64(q)?;
    if inv_q <= window.inv_lower {
        return Err(Error::QOutsideWindow {
            q,
            bound: format!(
                "1/q must exceed (2/N)·max{{1/(p(p-1)), σ+1/(p-1)}} = {}",
                to_f64(&window.inv_lower)
            ),
        });
    }
    if inv_q >= window.inv_upper {
        return Err(Error::QOutsideWindow {
            q,
            bound: format!(
                "1/q must be below min{{2/(N(p-1)), 1/p}} = {}",
                to_f64(&window.inv_upper)
            ),
        });
    }

    let n = rat(params.dim as i64);
    let one = Rational::one();
    let two = rat(2);
    let p = &exact.p;
    let beta = exact_beta(&exact, &inv_q);
    let e1 = &beta - &n / &two * (&one / &derived.d - &inv_q);
    let e2 = &beta * (&one - p) + &one - &n * &inv_q / &two * (p - &one);
    let e3 = &beta - &n / &two * (&one / &derived.k - &inv_q) + &exact.sigma + &one;

    let nf = params.dim as f64;
    let (pf, sf) = (params.p, params.sigma);
    let df = nf * (pf - 1.0) / 2.0;
    let kf = df / (pf * (sf + 1.0) - sf);
    let bf = 1.0 / (pf - 1.0) - nf / (2.0 * q);
    let float_identities = [
        bf - nf / 2.0 * (1.0 / df - 1.0 / q),
        bf * (1.0 - pf) + 1.0 - nf / (2.0 * q) * (pf - 1.0),
        bf - nf / 2.0 * (1.0 / kf - 1.0 / q) + sf + 1.0,
    ];

    let q_exact = &one / &inv_q;
    let ordering = q_exact > derived.d && derived.d > derived.k && derived.k >= one;
    let beta_p = &beta * p;
    Ok(IdentityReport {
        q,
        beta: to_f64(&beta),
        beta_p: to_f64(&beta_p),
        identities: [to_f64(&e1), to_f64(&e2), to_f64(&e3)],
        float_identities,
        beta_positive: beta.is_positive(),
        beta_p_below_one: beta_p < one,
        q_gt_p: q_exact > *p,
        ordering,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalExistenceBudget {
    pub delta_inf: f64,
    pub t_guarantee: f64,
}

/// Largest `T ≤ 1` with `T^{σ+1}/(σ+1) + 2^p δ^{p−1} T ≤ 1`.
pub fn local_existence_time(delta_inf: f64, params: &Params) -> Result<LocalExistenceBudget> {
    if !(delta_inf >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "delta_inf = {delta_inf} must be >= 0"
        )));
    }
    let s1 = params.sigma + 1.0;
    let coupling = 2f64.powf(params.p) * delta_inf.powf(params.p - 1.0);
    let lhs = |t: f64| t.powf(s1) / s1 + coupling * t;
    let t_guarantee = if !coupling.is_finite() {
        0.0
    } else if lhs(1.0) <= 1.0 {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while hi - lo > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            if lhs(mid) <= 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    Ok(LocalExistenceBudget {
        delta_inf,
        t_guarantee,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallnessBudget {
    /// Largest admissible ball radius `(1/(2C*))^{1/(p−1)}`.
    pub delta_max: f64,
    /// `δ_max / (2C*)`, the allowed `‖u0‖_d + ‖w‖_k`.
    pub data_budget: f64,
}

pub fn picard_smallness(params: &Params, c_star: f64) -> Result<SmallnessBudget> {
    if !(c_star > 0.0) {
        return Err(Error::InvalidArgument(format!("C* = {c_star} must be > 0")));
    }
    let delta_max = (1.0 / (2.0 * c_star)).powf(1.0 / (params.p - 1.0));
    Ok(SmallnessBudget {
        delta_max,
        data_budget: delta_max / (2.0 * c_star),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn rejects_invalid() {
        assert!(Params::new(2, 1.0, 0.5).is_err());
        assert!(Params::new(2, 0.5, 0.5).is_err());
        assert!(Params::new(2, 2.0, -1.0).is_err());
        assert!(Params::new(0, 2.0, 0.0).is_err());
        assert!(Params::new(2, f64::NAN, 0.0).is_err());
        let base = Params::new(1, 2.0, 0.0).unwrap();
        assert!(!base.in_theorem_scope());
    }

    #[test]
    fn critical_and_fujita_values() {
        let d = derive(&Params::new(3, 5.0, -0.5).unwrap());
        assert_eq!(d.p_star, CriticalExponent::Finite(2.0));
        assert_eq!(derive(&Params::new(2, 2.0, 0.3).unwrap()).p_fujita, 2.0);
        assert!(derive(&Params::new(2, 2.0, 0.5).unwrap()).p_star.is_infinite());
        assert!(p_star(1, -0.5).is_infinite());
        assert!((p_star(2, -0.4).value() - 3.5).abs() < 1e-14);
    }

    #[test]
    fn derive_n3_p3() {
        let d = derive(&Params::new(3, 3.0, -0.5).unwrap());
        assert_eq!(d.d, 3.0);
        assert_eq!(d.k, 1.5);
        let w = d.q_window.unwrap();
        assert_eq!(w.q_range(), (3.0, 9.0));
        assert_eq!(beta(&Params::new(3, 3.0, -0.5).unwrap(), 6.0), 0.25);
        assert_eq!(d.q_default, Some(4.5));
    }

    #[test]
    fn k_is_one_on_the_critical_line() {
        let d = derive(&Params::new(3, 2.0, -0.5).unwrap());
        assert_eq!(d.k, 1.0);
        let exact = ExactParams::new(4, r(5, 3), r(-1, 2)).unwrap();
        assert_eq!(exact.derive().k, Rational::one());
    }

    #[test]
    fn regimes() {
        let sub = Params::new(3, 1.5, -0.5).unwrap();
        assert_eq!(classify_regime(&sub).unwrap(), Regime::SubcriticalBlowUp);
        let tie = Params::new(3, 2.0, -0.5).unwrap();
        assert_eq!(classify_regime(&tie).unwrap(), Regime::SupercriticalGlobal);
        let forced = Params::new(2, 10.0, 0.5).unwrap();
        assert_eq!(classify_regime(&forced).unwrap(), Regime::ForcedBlowUp);
        let zero = Params::new(3, 2.0, 0.0).unwrap();
        assert_eq!(classify_regime(&zero), Err(Error::SigmaZero));
    }

    #[test]
    fn gap_polynomial_values() {
        assert_eq!(gap_polynomial(&Params::new(3, 2.0, -0.5).unwrap()), -1.0);
        // p = 1 sits outside Params; evaluate the polynomial exactly instead.
        let at_one = ExactParams {
            dim: 3,
            p: Rational::one(),
            sigma: r(-1, 2),
        };
        assert_eq!(at_one.gap_polynomial(), rat(2));
        let e = ExactParams::new(4, r(5, 3), r(-1, 2)).unwrap();
        assert_eq!(e.gap_polynomial(), r(-4, 9));
    }

    #[test]
    fn identities_vanish_and_edges_fail() {
        let p = Params::new(3, 3.0, -0.5).unwrap();
        let rep = verify_scaling_identities(&p, 6.0).unwrap();
        assert_eq!(rep.identities, [0.0, 0.0, 0.0]);
        assert_eq!(rep.beta, 0.25);
        assert_eq!(rep.beta_p, 0.75);
        assert!(rep.all_hold(0.0) && rep.ordering);

        let p2 = Params::new(2, 3.0, -0.5).unwrap();
        let q = derive(&p2).q_default.unwrap();
        assert!(verify_scaling_identities(&p2, q).unwrap().all_hold(1e-12));

        assert!(matches!(
            verify_scaling_identities(&p, 3.0),
            Err(Error::QOutsideWindow { .. })
        ));
        assert!(matches!(
            verify_scaling_identities(&p, 9.0),
            Err(Error::QOutsideWindow { .. })
        ));
    }

    #[test]
    fn local_time() {
        let p = Params::new(2, 2.0, -0.5).unwrap();
        let b = local_existence_time(0.0, &p).unwrap();
        assert!((b.t_guarantee - 0.25).abs() < 1e-12);
        // 2√T + 4T = 1  ⇒  √T = (−1 + √5)/4
        let t1 = local_existence_time(1.0, &p).unwrap().t_guarantee;
        let s = (5f64.sqrt() - 1.0) / 4.0;
        assert!((t1 - s * s).abs() < 1e-11);
        let big = local_existence_time(1e12, &p).unwrap().t_guarantee;
        assert!(big < 1e-12);
        let mut last = 1.0;
        for delta in [0.0, 0.1, 0.5, 1.0, 3.0, 10.0, 1e3] {
            let t = local_existence_time(delta, &p).unwrap().t_guarantee;
            assert!(t <= last);
            last = t;
        }
        assert!(local_existence_time(-1.0, &p).is_err());
    }

    #[test]
    fn smallness_plugins() {
        let p2 = Params::new(2, 2.0, -0.5).unwrap();
        let b = picard_smallness(&p2, 0.5).unwrap();
        assert_eq!((b.delta_max, b.data_budget), (1.0, 1.0));
        let p3 = Params::new(2, 3.0, -0.5).unwrap();
        let b = picard_smallness(&p3, 2.0).unwrap();
        assert!((b.delta_max - 0.5).abs() < 1e-15);
        assert!((b.data_budget - 0.125).abs() < 1e-15);
        let huge = picard_smallness(&p3, 1e30).unwrap();
        assert!(huge.delta_max < 1e-14 && huge.data_budget < 1e-44);
        assert!(picard_smallness(&p3, 0.0).is_err());
    }
}

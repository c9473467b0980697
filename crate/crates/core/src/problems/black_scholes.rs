//! European call under Black–Scholes: closed-form price and its partial
//! derivatives in (S, t).

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::Result;
use crate::jets::Jet2;

use super::check_positive;

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlackScholes {
    pub strike: f64,
    pub rate: f64,
    pub sigma: f64,
    pub maturity: f64,
}

/// Price and the partial derivatives entering a second-order jet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CallGreeks {
    pub price: f64,
    /// ∂u/∂S
    pub delta: f64,
    /// ∂²u/∂S²
    pub gamma: f64,
    /// ∂u/∂t (calendar time, not time to maturity)
    pub theta: f64,
    /// ∂²u/∂S∂t
    pub charm: f64,
    /// ∂²u/∂t²
    pub theta_t: f64,
}

impl BlackScholes {
    pub fn new(strike: f64, rate: f64, sigma: f64, maturity: f64) -> Result<Self> {
        check_positive("strike", strike)?;
        check_positive("sigma", sigma)?;
        check_positive("maturity", maturity)?;
        if !rate.is_finite() {
            return Err(crate::Error::InvalidParameter(format!("rate {rate}")));
        }
        Ok(Self {
            strike,
            rate,
            sigma,
            maturity,
        })
    }

    pub fn payoff(&self, s: f64) -> f64 {
        (s - self.strike).max(0.0)
    }

    pub fn price(&self, s: f64, t: f64) -> f64 {
        let tau = self.maturity - t;
        if tau <= 0.0 || s <= 0.0 {
            return self.payoff(s);
        }
        let (d1, d2) = self.d1_d2(s, tau);
        s * norm_cdf(d1) - self.strike * (-self.rate * tau).exp() * norm_cdf(d2)
    }

    fn d1_d2(&self, s: f64, tau: f64) -> (f64, f64) {
        let sq = self.sigma * tau.sqrt();
        let d1 = ((s / self.strike).ln() + (self.rate + 0.5 * self.sigma * self.sigma) * tau) / sq;
        (d1, d1 - sq)
    }

    pub fn greeks(&self, s: f64, t: f64) -> CallGreeks {
        let (k, r, sig) = (self.strike, self.rate, self.sigma);
        let tau = self.maturity - t;
        if tau <= 0.0 || s <= 0.0 {
            // payoff limit away from the kink: u = S - K in the money, which
            // the PDE evolves with u_t = -rK
            let itm = if s > k { 1.0 } else { 0.0 };
            return CallGreeks {
                price: self.payoff(s),
                delta: itm,
                gamma: 0.0,
                theta: -r * k * itm,
                charm: 0.0,
                theta_t: -r * r * k * itm,
            };
        }
        let sqrt_tau = tau.sqrt();
        let (d1, d2) = self.d1_d2(s, tau);
        let (n1, n2) = (norm_cdf(d1), norm_cdf(d2));
        let (p1, p2) = (norm_pdf(d1), norm_pdf(d2));
        let disc = (-r * tau).exp();

        // derivatives of d1, d2 with respect to tau
        let d1_tau = (r + 0.5 * sig * sig) / (sig * sqrt_tau) - d1 / (2.0 * tau);
        let d2_tau = d1_tau - sig / (2.0 * sqrt_tau);

        let price = s * n1 - k * disc * n2;
        let delta = n1;
        let gamma = p1 / (s * sig * sqrt_tau);
        // u_tau = S σ φ(d1) / (2√τ) + r K e^{-rτ} N(d2); u_t = -u_tau
        let a = s * sig * p1 / (2.0 * sqrt_tau);
        let b = r * k * disc * n2;
        let theta = -(a + b);
        // ∂/∂τ of delta is φ(d1) d1_tau
        let charm = -p1 * d1_tau;
        let a_tau = s * sig / 2.0 * (-d1 * p1 * d1_tau / sqrt_tau - 0.5 * p1 / (tau * sqrt_tau));
        let b_tau = r * k * disc * (-r * n2 + p2 * d2_tau);
        let theta_t = a_tau + b_tau;
        CallGreeks {
            price,
            delta,
            gamma,
            theta,
            charm,
            theta_t,
        }
    }

    /// Closed-form jet in (S, t).
    pub fn jet(&self, s: f64, t: f64) -> Jet2 {
        let g = self.greeks(s, t);
        let mut j = Jet2::constant(g.price, 2);
        j.grad_mut()[0] = g.delta;
        j.grad_mut()[1] = g.theta;
        j.set_hess(0, 0, g.gamma);
        j.set_hess(0, 1, g.charm);
        j.set_hess(1, 1, g.theta_t);
        j
    }
}

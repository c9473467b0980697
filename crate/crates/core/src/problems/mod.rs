//! The four benchmark PDEs: residual operators over jets, constraint sets
//! and reference solutions.

pub mod allen_cahn;
pub mod black_scholes;
pub mod burgers;
pub mod navier_stokes;
pub mod oracle;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::{Jet2, Order};
use crate::net::{InputScale, MlpNetwork};

pub use allen_cahn::{AllenCahnSettings, AllenCahnSolver};
pub use black_scholes::BlackScholes;
pub use burgers::ColeHopf;
pub use navier_stokes::TaylorGreen;
pub use oracle::OracleGrid;

/// Axis-aligned box in physical coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Index of the time coordinate, if any.
    pub time_axis: Option<usize>,
}

impl DomainBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, time_axis: Option<usize>) -> Result<Self> {
        let b = Self { lo, hi, time_axis };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.len() != self.hi.len() || self.lo.is_empty() {
            return Err(Error::Shape(
                "box bounds must be nonempty and equal length".into(),
            ));
        }
        if self.lo.len() > crate::jets::MAX_DIM {
            return Err(Error::Dimension(self.lo.len()));
        }
        for (l, h) in self.lo.iter().zip(&self.hi) {
            if !(l < h) {
                return Err(Error::InvalidParameter(format!(
                    "box needs lo < hi, got [{l}, {h}]"
                )));
            }
        }
        if matches!(self.time_axis, Some(t) if t >= self.lo.len()) {
            return Err(Error::InvalidParameter("time axis out of range".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }

    /// Product of the widths.
    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.width(i)).product()
    }

    /// Closed-box membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    /// Maps a point of the unit cube onto the box.
    pub fn from_unit(&self, u: &[f64], out: &mut [f64]) {
        for i in 0..self.dim() {
            out[i] = self.lo[i] + u[i] * self.width(i);
        }
    }

    pub fn input_scale(&self) -> InputScale {
        InputScale::new(self.lo.clone(), self.hi.clone()).expect("validated box")
    }
}

/// Which dataset a sample belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Collocation,
    Boundary,
    Terminal,
    Initial,
    Distillation,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Collocation => "collocation",
            Role::Boundary => "boundary",
            Role::Terminal => "terminal",
            Role::Initial => "initial",
            Role::Distillation => "distillation",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One face of a constraint locus: coordinate `axis` pinned at `value`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Face {
    pub axis: usize,
    pub value: f64,
}

/// Serializable problem selection with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ProblemSpec {
    BlackScholes {
        strike: f64,
        rate: f64,
        sigma: f64,
        maturity: f64,
    },
    Burgers {
        nu: f64,
    },
    AllenCahn {
        nu: f64,
    },
    NavierStokes {
        nu: f64,
    },
}

impl ProblemSpec {
    pub fn black_scholes_default() -> Self {
        ProblemSpec::BlackScholes {
            strike: 1.0,
            rate: 0.05,
            sigma: 0.2,
            maturity: 1.0,
        }
    }

    pub fn burgers_default() -> Self {
        ProblemSpec::Burgers { nu: 0.01 / PI }
    }

    pub fn allen_cahn_default() -> Self {
        ProblemSpec::AllenCahn { nu: 1e-3 }
    }

    pub fn navier_stokes_default() -> Self {
        ProblemSpec::NavierStokes { nu: 1e-2 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::BlackScholes { .. } => "black_scholes",
            ProblemSpec::Burgers { .. } => "burgers",
            ProblemSpec::AllenCahn { .. } => "allen_cahn",
            ProblemSpec::NavierStokes { .. } => "navier_stokes",
        }
    }

    pub fn build(&self) -> Result<PdeProblem> {
        match *self {
            ProblemSpec::BlackScholes {
                strike,
                rate,
                sigma,
                maturity,
            } => black_scholes_problem(strike, rate, sigma, maturity),
            ProblemSpec::Burgers { nu } => burgers_problem(nu),
            ProblemSpec::AllenCahn { nu } => allen_cahn_problem(nu),
            ProblemSpec::NavierStokes { nu } => navier_stokes_problem(nu),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    ClosedForm,
    /// Pointwise quadrature of an integral representation.
    Quadrature,
    OracleGrid,
}

/// Ground truth for a problem.
#[derive(Clone, Debug)]
pub enum ReferenceSolution {
    BlackScholes(BlackScholes),
    Burgers(ColeHopf),
    AllenCahn(Arc<OracleGrid>),
    NavierStokes(TaylorGreen),
}

impl ReferenceSolution {
    pub fn kind(&self) -> ReferenceKind {
        match self {
            ReferenceSolution::BlackScholes(_) | ReferenceSolution::NavierStokes(_) => {
                ReferenceKind::ClosedForm
            }
            ReferenceSolution::Burgers(_) => ReferenceKind::Quadrature,
            ReferenceSolution::AllenCahn(_) => ReferenceKind::OracleGrid,
        }
    }

    pub fn provenance(&self) -> &'static str {
        match self {
            ReferenceSolution::BlackScholes(_) => {
                "closed-form European call price, normal CDF via erfc"
            }
            ReferenceSolution::Burgers(_) => {
                "Cole-Hopf whole-line integral, trapezoid quadrature in log-sum-exp form"
            }
            ReferenceSolution::AllenCahn(_) => {
                "Crank-Nicolson diffusion with Adams-Bashforth reaction, cubic-in-x linear-in-t interpolation"
            }
            ReferenceSolution::NavierStokes(_) => "Taylor-Green vortex closed form",
        }
    }

    /// Reference outputs at one point.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        match self {
            ReferenceSolution::BlackScholes(bs) => out[0] = bs.price(x[0], x[1]),
            ReferenceSolution::Burgers(ch) => out[0] = ch.eval(x[0], x[1]),
            ReferenceSolution::AllenCahn(grid) => out[0] = grid.interpolate(x[0], x[1])?,
            ReferenceSolution::NavierStokes(tg) => out.copy_from_slice(&tg.eval(x[0], x[1], x[2])),
        }
        Ok(())
    }

    /// Outputs with analytic input derivatives, for closed forms only.
    pub fn jets(&self, x: &[f64]) -> Option<Vec<Jet2>> {
        match self {
            ReferenceSolution::BlackScholes(bs) => Some(vec![bs.jet(x[0], x[1])]),
            ReferenceSolution::NavierStokes(tg) => Some(tg.jets(x[0], x[1], x[2]).to_vec()),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PdeProblem {
    spec: ProblemSpec,
    domain: DomainBox,
    n_outputs: usize,
    n_equations: usize,
    reference: ReferenceSolution,
}

pub fn black_scholes_problem(
    strike: f64,
    rate: f64,
    sigma: f64,
    maturity: f64,
) -> Result<PdeProblem> {
    let bs = BlackScholes::new(strike, rate, sigma, maturity)?;
    Ok(PdeProblem {
        spec: ProblemSpec::BlackScholes {
            strike,
            rate,
            sigma,
            maturity,
        },
        domain: DomainBox::new(
            vec![0.5 * strike, 0.0],
            vec![1.5 * strike, maturity],
            Some(1),
        )?,
        n_outputs: 1,
        n_equations: 1,
        reference: ReferenceSolution::BlackScholes(bs),
    })
}

pub fn burgers_problem(nu: f64) -> Result<PdeProblem> {
    let ch = ColeHopf::new(nu)?;
    Ok(PdeProblem {
        spec: ProblemSpec::Burgers { nu },
        domain: DomainBox::new(vec![0.0, 0.0], vec![1.0, 1.0], Some(1))?,
        n_outputs: 1,
        n_equations: 1,
        reference: ReferenceSolution::Burgers(ch),
    })
}

/// Allen–Cahn with the default oracle resolution (512 x 2000).
pub fn allen_cahn_problem(nu: f64) -> Result<PdeProblem> {
    allen_cahn_problem_with(nu, AllenCahnSettings::default())
}

pub fn allen_cahn_problem_with(nu: f64, settings: AllenCahnSettings) -> Result<PdeProblem> {
    let grid = AllenCahnSolver::new(nu, settings)?.solve();
    allen_cahn_problem_from_grid(Arc::new(grid))
}

/// Allen–Cahn backed by an existing (e.g. cached) oracle grid.
pub fn allen_cahn_problem_from_grid(grid: Arc<OracleGrid>) -> Result<PdeProblem> {
    let nu = grid.meta.nu;
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "nu must be positive, got {nu}"
        )));
    }
    Ok(PdeProblem {
        spec: ProblemSpec::AllenCahn { nu },
        domain: DomainBox::new(vec![-1.0, 0.0], vec![1.0, 1.0], Some(1))?,
        n_outputs: 1,
        n_equations: 1,
        reference: ReferenceSolution::AllenCahn(grid),
    })
}

pub fn navier_stokes_problem(nu: f64) -> Result<PdeProblem> {
    let tg = TaylorGreen::new(nu)?;
    let two_pi = 2.0 * PI;
    Ok(PdeProblem {
        spec: ProblemSpec::NavierStokes { nu },
        domain: DomainBox::new(vec![0.0, 0.0, 0.0], vec![two_pi, two_pi, 1.0], Some(2))?,
        n_outputs: 3,
        n_equations: 3,
        reference: ReferenceSolution::NavierStokes(tg),
    })
}

impl PdeProblem {
    pub fn name(&self) -> &'static str {
        self.spec.name()
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    pub fn n_equations(&self) -> usize {
        self.n_equations
    }

    /// Column names for exported point data.
    pub fn coordinate_names(&self) -> &'static [&'static str] {
        match self.spec {
            ProblemSpec::BlackScholes { .. } => &["S", "t"],
            ProblemSpec::Burgers { .. } | ProblemSpec::AllenCahn { .. } => &["x", "t"],
            ProblemSpec::NavierStokes { .. } => &["x", "y", "t"],
        }
    }

    pub fn output_names(&self) -> &'static [&'static str] {
        match self.spec {
            ProblemSpec::NavierStokes { .. } => &["u", "v", "p"],
            _ => &["u"],
        }
    }

    /// Output carrying a pressure defined up to a constant, compared after
    /// removing its spatial mean at each time.
    pub fn gauge_output(&self) -> Option<usize> {
        match self.spec {
            ProblemSpec::NavierStokes { .. } => Some(2),
            _ => None,
        }
    }

    pub fn reference(&self) -> &ReferenceSolution {
        &self.reference
    }

    /// Constraint datasets used in training besides the collocation set.
    pub fn constraint_roles(&self) -> &'static [Role] {
        match self.spec {
            ProblemSpec::BlackScholes { .. } => &[Role::Boundary, Role::Terminal],
            _ => &[Role::Boundary, Role::Initial],
        }
    }

    pub fn supports_role(&self, role: Role) -> bool {
        matches!(role, Role::Collocation | Role::Distillation)
            || self.constraint_roles().contains(&role)
    }

    fn check_role(&self, role: Role) -> Result<()> {
        if self.supports_role(role) {
            Ok(())
        } else {
            Err(Error::InvalidRole {
                role: role.to_string(),
                problem: self.name().to_string(),
            })
        }
    }

    /// Faces making up a constraint locus. Points of the locus have one
    /// coordinate pinned to the face value and the rest free in the box.
    pub fn faces(&self, role: Role) -> Result<Vec<Face>> {
        self.check_role(role)?;
        let d = &self.domain;
        let face = |axis: usize, value: f64| Face { axis, value };
        Ok(match (role, &self.spec) {
            (Role::Boundary, ProblemSpec::NavierStokes { .. }) => vec![
                face(0, d.lo[0]),
                face(0, d.hi[0]),
                face(1, d.lo[1]),
                face(1, d.hi[1]),
            ],
            (Role::Boundary, _) => vec![face(0, d.lo[0]), face(0, d.hi[0])],
            (Role::Terminal, _) => {
                let t = d.time_axis.expect("time-dependent problem");
                vec![face(t, d.hi[t])]
            }
            (Role::Initial, _) => {
                let t = d.time_axis.expect("time-dependent problem");
                vec![face(t, d.lo[t])]
            }
            (Role::Collocation | Role::Distillation, _) => Vec::new(),
        })
    }

    /// Target outputs at a constraint point.
    pub fn constraint_target(&self, role: Role, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_role(role)?;
        match (&self.reference, role) {
            (ReferenceSolution::BlackScholes(bs), Role::Terminal) => out[0] = bs.payoff(x[0]),
            (ReferenceSolution::BlackScholes(bs), Role::Boundary) => out[0] = bs.price(x[0], x[1]),
            (ReferenceSolution::Burgers(_), Role::Boundary)
            | (ReferenceSolution::AllenCahn(_), Role::Boundary) => out[0] = 0.0,
            (ReferenceSolution::Burgers(_), Role::Initial) => out[0] = burgers::initial(x[0]),
            (ReferenceSolution::AllenCahn(_), Role::Initial) => out[0] = allen_cahn::initial(x[0]),
            (ReferenceSolution::NavierStokes(tg), Role::Boundary | Role::Initial) => {
                out.copy_from_slice(&tg.eval(x[0], x[1], x[2]))
            }
            _ => {
                return Err(Error::InvalidRole {
                    role: role.to_string(),
                    problem: self.name().to_string(),
                })
            }
        }
        Ok(())
    }

    /// PDE residuals at `x` given the output fields as jets in raw
    /// coordinates; one entry per governing equation.
    pub fn residuals(&self, x: &[f64], f: &[Jet2], out: &mut [f64]) {
        match self.spec {
            ProblemSpec::BlackScholes { rate, sigma, .. } => {
                let s = x[0];
                let u = &f[0];
                out[0] = u.grad()[1]
                    + rate * s * u.grad()[0]
                    + 0.5 * sigma * sigma * s * s * u.hess(0, 0)
                    - rate * u.value();
            }
            ProblemSpec::Burgers { nu } => {
                let u = &f[0];
                out[0] = u.grad()[1] + u.value() * u.grad()[0] - nu * u.hess(0, 0);
            }
            ProblemSpec::AllenCahn { nu } => {
                let u = &f[0];
                let v = u.value();
                out[0] = u.grad()[1] - nu * u.hess(0, 0) + v * v * v - v;
            }
            ProblemSpec::NavierStokes { nu } => {
                let (u, v, p) = (&f[0], &f[1], &f[2]);
                out[0] =
                    u.grad()[2] + u.value() * u.grad()[0] + v.value() * u.grad()[1] + p.grad()[0]
                        - nu * (u.hess(0, 0) + u.hess(1, 1));
                out[1] =
                    v.grad()[2] + u.value() * v.grad()[0] + v.value() * v.grad()[1] + p.grad()[1]
                        - nu * (v.hess(0, 0) + v.hess(1, 1));
                out[2] = u.grad()[0] + v.grad()[1];
            }
        }
    }

    /// Reverse mode of [`Self::residuals`]: adds `Σ_e r_bar[e] ∂r_e/∂(jet
    /// entries)` into `f_bar`. Diagonal Hessian adjoints are stored on the
    /// diagonal; none of the operators involve mixed derivatives.
    pub fn residual_pullback(&self, x: &[f64], f: &[Jet2], r_bar: &[f64], f_bar: &mut [Jet2]) {
        match self.spec {
            ProblemSpec::BlackScholes { rate, sigma, .. } => {
                let s = x[0];
                let rb = r_bar[0];
                let a = &mut f_bar[0];
                a.set_value(a.value() - rate * rb);
                a.grad_mut()[0] += rate * s * rb;
                a.grad_mut()[1] += rb;
                a.add_hess(0, 0, 0.5 * sigma * sigma * s * s * rb);
            }
            ProblemSpec::Burgers { nu } => {
                let u = &f[0];
                let rb = r_bar[0];
                let a = &mut f_bar[0];
                a.set_value(a.value() + u.grad()[0] * rb);
                a.grad_mut()[0] += u.value() * rb;
                a.grad_mut()[1] += rb;
                a.add_hess(0, 0, -nu * rb);
            }
            ProblemSpec::AllenCahn { nu } => {
                let v = f[0].value();
                let rb = r_bar[0];
                let a = &mut f_bar[0];
                a.set_value(a.value() + (3.0 * v * v - 1.0) * rb);
                a.grad_mut()[1] += rb;
                a.add_hess(0, 0, -nu * rb);
            }
            ProblemSpec::NavierStokes { nu } => {
                let (u, v) = (&f[0], &f[1]);
                let (r1, r2, r3) = (r_bar[0], r_bar[1], r_bar[2]);
                let (fu, rest) = f_bar.split_at_mut(1);
                let (fv, fp) = rest.split_at_mut(1);
                let (ub, vb, pb) = (&mut fu[0], &mut fv[0], &mut fp[0]);

                ub.set_value(ub.value() + r1 * u.grad()[0] + r2 * v.grad()[0]);
                vb.set_value(vb.value() + r1 * u.grad()[1] + r2 * v.grad()[1]);

                let ug = ub.grad_mut();
                ug[0] += r1 * u.value() + r3;
                ug[1] += r1 * v.value();
                ug[2] += r1;
                let vg = vb.grad_mut();
                vg[0] += r2 * u.value();
                vg[1] += r2 * v.value() + r3;
                vg[2] += r2;
                let pg = pb.grad_mut();
                pg[0] += r1;
                pg[1] += r2;

                ub.add_hess(0, 0, -nu * r1);
                ub.add_hess(1, 1, -nu * r1);
                vb.add_hess(0, 0, -nu * r2);
                vb.add_hess(1, 1, -nu * r2);
            }
        }
    }

    /// Reference outputs at many points (`n x d` → `n x n_outputs`).
    pub fn reference_batch(&self, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if points.ncols() != self.dim() {
            return Err(Error::Shape(format!(
                "points have {} columns, problem has {} coordinates",
                points.ncols(),
                self.dim()
            )));
        }
        let mut out = Array2::zeros((points.nrows(), self.n_outputs));
        let mut buf = vec![0.0; self.n_outputs];
        for (p, row) in points.rows().into_iter().enumerate() {
            let x: Vec<f64> = row.to_vec();
            self.reference.eval(&x, &mut buf)?;
            out.row_mut(p).assign(&ndarray::ArrayView1::from(&buf));
        }
        Ok(out)
    }

    /// PDE residuals of a network at many points (`n x d` → `n x
    /// n_equations`), through its second-order jets.
    pub fn network_residuals(
        &self,
        net: &MlpNetwork,
        points: ArrayView2<'_, f64>,
    ) -> Result<Array2<f64>> {
        self.check_network(net)?;
        let tape = net.forward_tape(points, Order::Second)?;
        let field = tape.output_field();
        let n = points.nrows();
        let mut out = Array2::zeros((n, self.n_equations));
        let mut jets = Vec::with_capacity(self.n_outputs);
        let mut r = vec![0.0; self.n_equations];
        for (p, x) in points.rows().into_iter().enumerate() {
            jets.clear();
            jets.extend((0..self.n_outputs).map(|o| field.jet(o, p)));
            let x = x.to_vec();
            self.residuals(&x, &jets, &mut r);
            out.row_mut(p).assign(&ndarray::ArrayView1::from(&r));
        }
        Ok(out)
    }

    /// Checks that a network's input and output widths fit this problem.
    pub fn check_network(&self, net: &MlpNetwork) -> Result<()> {
        let spec = net.spec();
        if spec.input_dim() != self.dim() || spec.output_dim() != self.n_outputs {
            return Err(Error::Shape(format!(
                "network {:?} does not fit {} ({} inputs, {} outputs)",
                spec.sizes,
                self.name(),
                self.dim(),
                self.n_outputs
            )));
        }
        Ok(())
    }

    /// Residuals of the closed-form reference using its analytic
    /// derivatives; `None` when no closed form exists.
    pub fn reference_residuals(&self, x: &[f64]) -> Option<Vec<f64>> {
        let jets = self.reference.jets(x)?;
        let mut r = vec![0.0; self.n_equations];
        self.residuals(x, &jets, &mut r);
        Some(r)
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

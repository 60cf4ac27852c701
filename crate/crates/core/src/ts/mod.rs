//! Polytopic Takagi-Sugeno model: bell memberships, product-rule firing,
//! normalization and convex blending of affine vertex systems.
//!
//! Each of the three state components has its own single-output sub-model.
//! Sub-model `j` predicts `x_j⁺ = Σ_i μ̄_ji(ζ) · (p_i · [ζ, 1])`, and because the
//! regressor `[ζ, 1] = [vx, vy, ω, δ, a, 1]` stacks state and input, the blended
//! consequent row splits directly into row `j` of `A(ζ)`, `B(ζ)` and `C(ζ)`.
//!
//! Rules are enumerated lexicographically over the per-input membership
//! indices with the first scheduling input most significant: for two inputs
//! and two membership functions the order is `(0,0), (0,1), (1,0), (1,1)`.

mod io;
mod membership;

use nalgebra::{Matrix3, Matrix3x2, Vector3};
use serde::{Deserialize, Serialize};

pub use io::{load_model, model_from_json, model_to_json, save_model, MODEL_VERSION};
pub use membership::{gbell, gbell_jet, GBellJet, GBellParams};

use crate::error::{Error, Result};
use crate::vehicle::{ControlInput, DynamicState};

/// Number of scheduling variables `(vx, vy, ω, δ, a)`.
pub const N_SCHEDULING: usize = 5;

pub const SCHEDULING_NAMES: [&str; N_SCHEDULING] = ["vx", "vy", "omega", "delta", "a"];

/// Sampling time the learned model is discretized at.
pub const DEFAULT_DT: f64 = 1.0 / 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateComponent {
    Vx,
    Vy,
    Omega,
}

impl StateComponent {
    pub const ALL: [StateComponent; 3] = [
        StateComponent::Vx,
        StateComponent::Vy,
        StateComponent::Omega,
    ];

    pub fn index(self) -> usize {
        match self {
            StateComponent::Vx => 0,
            StateComponent::Vy => 1,
            StateComponent::Omega => 2,
        }
    }

    pub fn name(self) -> &'static str {
        SCHEDULING_NAMES[self.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// Per-variable scheduling intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub intervals: Vec<Interval>,
}

impl Domain {
    pub fn new(intervals: Vec<Interval>) -> Self {
        Self { intervals }
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, iv) in self.intervals.iter().enumerate() {
            if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo <= iv.hi) {
                return Err(Error::InvalidParameter(format!(
                    "domain interval {i} is malformed: [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
        }
        Ok(())
    }

    pub fn center(&self) -> Vec<f64> {
        self.intervals.iter().map(Interval::center).collect()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.len() && self.intervals.iter().zip(z).all(|(iv, &v)| iv.contains(v))
    }

    /// Clips every entry into its interval; the flag reports whether any entry moved.
    pub fn clamp(&self, z: &[f64]) -> (Vec<f64>, bool) {
        let mut clipped = false;
        let out = self
            .intervals
            .iter()
            .zip(z)
            .map(|(iv, &v)| {
                let c = v.clamp(iv.lo, iv.hi);
                clipped |= c != v;
                c
            })
            .collect();
        (out, clipped)
    }
}

/// Scheduling vector `ζ = (vx, vy, ω, δ, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SchedulingVector(pub [f64; N_SCHEDULING]);

impl SchedulingVector {
    pub fn new(state: &DynamicState, input: &ControlInput) -> Self {
        Self([state.vx, state.vy, state.omega, input.delta, input.a])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn state(&self) -> DynamicState {
        DynamicState::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn input(&self) -> ControlInput {
        ControlInput::new(self.0[3], self.0[4])
    }
}

/// One fuzzy rule: a membership choice per input and an affine consequent
/// `(p_1, …, p_n, p_{n+1})` applied to `[ζ, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub mf_index: Vec<usize>,
    pub consequent: Vec<f64>,
}

/// All membership-index tuples in lexicographic order.
pub fn lexicographic_rules(n_inputs: usize, n_mf: usize) -> Vec<Vec<usize>> {
    let count = n_mf.pow(n_inputs as u32);
    (0..count)
        .map(|mut r| {
            let mut idx = vec![0; n_inputs];
            for slot in idx.iter_mut().rev() {
                *slot = r % n_mf;
                r /= n_mf;
            }
            idx
        })
        .collect()
}

/// Product t-norm firing strength of every rule given per-input degrees.
pub fn rule_firing(degrees: &[Vec<f64>], rules: &[Rule]) -> Vec<f64> {
    rules
        .iter()
        .map(|rule| {
            rule.mf_index
                .iter()
                .zip(degrees)
                .map(|(&m, d)| d[m])
                .product()
        })
        .collect()
}

pub fn normalize(mu: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = mu.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateFiring);
    }
    Ok(mu.iter().map(|m| m / total).collect())
}

/// Convex combination of rule consequents.
pub fn blend_consequents(weights: &[f64], rules: &[Rule]) -> Vec<f64> {
    let len = rules.first().map_or(0, |r| r.consequent.len());
    let mut row = vec![0.0; len];
    for (w, rule) in weights.iter().zip(rules) {
        for (acc, p) in row.iter_mut().zip(&rule.consequent) {
            *acc += w * p;
        }
    }
    row
}

/// Single-output TS sub-model over a grid partition of its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsSubModel {
    pub target: StateComponent,
    /// `mfs[input][k]` is the k-th membership function of that input.
    pub mfs: Vec<Vec<GBellParams>>,
    pub rules: Vec<Rule>,
}

impl TsSubModel {
    /// Builds a sub-model with lexicographically ordered rules.
    pub fn grid(
        target: StateComponent,
        mfs: Vec<Vec<GBellParams>>,
        consequents: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n_inputs = mfs.len();
        let n_mf = mfs.first().map_or(0, Vec::len);
        let indices = lexicographic_rules(n_inputs, n_mf);
        if consequents.len() != indices.len() {
            return Err(Error::Dimension(format!(
                "{} consequents given for {} rules",
                consequents.len(),
                indices.len()
            )));
        }
        let rules = indices
            .into_iter()
            .zip(consequents)
            .map(|(mf_index, consequent)| Rule {
                mf_index,
                consequent,
            })
            .collect();
        let sub = Self { target, mfs, rules };
        sub.validate()?;
        Ok(sub)
    }

    pub fn n_inputs(&self) -> usize {
        self.mfs.len()
    }

    pub fn n_mf(&self) -> usize {
        self.mfs.first().map_or(0, Vec::len)
    }

    pub fn n_rules(&self) -> usize {
        self.rules.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n_inputs = self.n_inputs();
        let n_mf = self.n_mf();
        if n_inputs == 0 || n_mf == 0 {
            return Err(Error::Dimension(
                "sub-model has no membership functions".into(),
            ));
        }
        if self.mfs.iter().any(|row| row.len() != n_mf) {
            return Err(Error::Dimension("ragged membership grid".into()));
        }
        for p in self.mfs.iter().flatten() {
            p.validate()?;
        }
        let expected = lexicographic_rules(n_inputs, n_mf);
        if expected.len() != self.rules.len() {
            return Err(Error::Dimension(format!(
                "expected {} rules, found {}",
                expected.len(),
                self.rules.len()
            )));
        }
        for (i, (rule, idx)) in self.rules.iter().zip(&expected).enumerate() {
            if &rule.mf_index != idx {
                return Err(Error::InvalidParameter(format!(
                    "rule {i} is out of lexicographic order: {:?}",
                    rule.mf_index
                )));
            }
            if rule.consequent.len() != n_inputs + 1 {
                return Err(Error::Dimension(format!(
                    "rule {i} has {} consequent parameters, expected {}",
                    rule.consequent.len(),
                    n_inputs + 1
                )));
            }
            if rule.consequent.iter().any(|p| !p.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "rule {i} has a non-finite consequent"
                )));
            }
        }
        Ok(())
    }

    pub fn degrees(&self, z: &[f64]) -> Vec<Vec<f64>> {
        self.mfs
            .iter()
            .zip(z)
            .map(|(row, &v)| row.iter().map(|p| gbell(v, p)).collect())
            .collect()
    }

    pub fn firing_strengths(&self, z: &[f64]) -> Vec<f64> {
        rule_firing(&self.degrees(z), &self.rules)
    }

    pub fn normalized_weights(&self, z: &[f64]) -> Result<Vec<f64>> {
        normalize(&self.firing_strengths(z))
    }

    /// Blended consequent row `Σ_i μ̄_i p_i` at `z`.
    pub fn blended_row(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(blend_consequents(&self.normalized_weights(z)?, &self.rules))
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        let row = self.blended_row(z)?;
        let (last, lin) = row.split_last().expect("validated sub-model");
        Ok(lin.iter().zip(z).map(|(p, v)| p * v).sum::<f64>() + last)
    }

    /// Output and its gradient in `z`, membership slopes included.
    pub fn gradient(&self, z: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.n_inputs();
        // d ln m / dz for every (input, mf); the bell depends on z − c
        let dlog: Vec<Vec<f64>> = self
            .mfs
            .iter()
            .zip(z)
            .map(|(row, &v)| {
                row.iter()
                    .map(|p| {
                        let jet = gbell_jet(v, p);
                        -jet.dc / jet.value
                    })
                    .collect()
            })
            .collect();
        let w = self.normalized_weights(z)?;
        let outputs: Vec<f64> = self
            .rules
            .iter()
            .map(|r| {
                let (last, lin) = r.consequent.split_last().expect("validated sub-model");
                lin.iter().zip(z).map(|(p, v)| p * v).sum::<f64>() + last
            })
            .collect();
        let y: f64 = w.iter().zip(&outputs).map(|(w, o)| w * o).sum();
        let mut grad = blend_consequents(&w, &self.rules);
        grad.truncate(n);
        for (j, g) in grad.iter_mut().enumerate() {
            let rule_dlog = |r: &Rule| dlog[j][r.mf_index[j]];
            let mean: f64 = w
                .iter()
                .zip(&self.rules)
                .map(|(w, r)| w * rule_dlog(r))
                .sum();
            *g += w
                .iter()
                .zip(&self.rules)
                .zip(&outputs)
                .map(|((w, r), o)| w * (rule_dlog(r) - mean) * o)
                .sum::<f64>();
        }
        Ok((y, grad))
    }
}

/// Discrete-time affine system `x⁺ = A x + B u + C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineModel {
    pub a: Matrix3<f64>,
    pub b: Matrix3x2<f64>,
    pub c: Vector3<f64>,
}

impl AffineModel {
    pub fn zeros() -> Self {
        Self {
            a: Matrix3::zeros(),
            b: Matrix3x2::zeros(),
            c: Vector3::zeros(),
        }
    }

    pub fn from_rows(rows: [&[f64]; 3]) -> Self {
        let mut m = Self::zeros();
        for (j, row) in rows.iter().enumerate() {
            m.set_row(j, row);
        }
        m
    }

    fn set_row(&mut self, j: usize, row: &[f64]) {
        for k in 0..3 {
            self.a[(j, k)] = row[k];
        }
        for k in 0..2 {
            self.b[(j, k)] = row[3 + k];
        }
        self.c[j] = row[5];
    }

    pub fn step(&self, x: &Vector3<f64>, u: &nalgebra::Vector2<f64>) -> Vector3<f64> {
        self.a * x + self.b * u + self.c
    }

    /// All 18 entries in row-major `[A | B | C]` order.
    pub fn entries(&self) -> [f64; 18] {
        let mut out = [0.0; 18];
        for j in 0..3 {
            for k in 0..3 {
                out[6 * j + k] = self.a[(j, k)];
            }
            for k in 0..2 {
                out[6 * j + 3 + k] = self.b[(j, k)];
            }
            out[6 * j + 5] = self.c[j];
        }
        out
    }
}

/// Scheduling vector after projection onto the learned domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamped {
    pub zeta: SchedulingVector,
    pub clipped: bool,
}

/// The learned three-output TS system.
#[derive(Debug, Clone, PartialEq)]
pub struct TsModel {
    dt: f64,
    domain: Domain,
    submodels: [TsSubModel; 3],
}

impl TsModel {
    pub fn new(dt: f64, domain: Domain, submodels: [TsSubModel; 3]) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "model dt must be positive, got {dt}"
            )));
        }
        domain.validate()?;
        if domain.len() != N_SCHEDULING {
            return Err(Error::Dimension(format!(
                "model domain has {} intervals, expected {N_SCHEDULING}",
                domain.len()
            )));
        }
        for (j, sub) in submodels.iter().enumerate() {
            sub.validate()?;
            if sub.n_inputs() != N_SCHEDULING {
                return Err(Error::Dimension(format!(
                    "sub-model {j} has {} inputs, expected {N_SCHEDULING}",
                    sub.n_inputs()
                )));
            }
            if sub.target.index() != j {
                return Err(Error::InvalidParameter(format!(
                    "sub-model {j} targets {:?}; sub-models must be ordered vx, vy, omega",
                    sub.target
                )));
            }
        }
        Ok(Self {
            dt,
            domain,
            submodels,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn submodels(&self) -> &[TsSubModel; 3] {
        &self.submodels
    }

    pub fn clamp_to_domain(&self, raw: &[f64; N_SCHEDULING]) -> Clamped {
        let (v, clipped) = self.domain.clamp(raw);
        let mut zeta = [0.0; N_SCHEDULING];
        zeta.copy_from_slice(&v);
        Clamped {
            zeta: SchedulingVector(zeta),
            clipped,
        }
    }

    pub fn domain_center(&self) -> SchedulingVector {
        let mut zeta = [0.0; N_SCHEDULING];
        zeta.copy_from_slice(&self.domain.center());
        SchedulingVector(zeta)
    }

    /// Blended `(A(ζ), B(ζ), C(ζ))`.
    pub fn instantiate(&self, zeta: &SchedulingVector) -> Result<AffineModel> {
        let mut m = AffineModel::zeros();
        for (j, sub) in self.submodels.iter().enumerate() {
            m.set_row(j, &sub.blended_row(zeta.as_slice())?);
        }
        Ok(m)
    }

    /// First-order expansion of the blended map about `(x, u)` at `zeta`:
    /// exact at the expansion point, with slopes that include how the rule
    /// weights move.
    pub fn linearize(&self, zeta: &SchedulingVector) -> Result<AffineModel> {
        let z = zeta.as_slice();
        let mut m = AffineModel::zeros();
        for (j, sub) in self.submodels.iter().enumerate() {
            let (y, g) = sub.gradient(z)?;
            let offset = y - g.iter().zip(z).map(|(g, v)| g * v).sum::<f64>();
            let mut row = g;
            row.push(offset);
            m.set_row(j, &row);
        }
        Ok(m)
    }

    pub fn predict_one_step(
        &self,
        x: &DynamicState,
        u: &ControlInput,
        zeta: &SchedulingVector,
    ) -> Result<DynamicState> {
        let m = self.instantiate(zeta)?;
        Ok(DynamicState::from_vector(
            &m.step(&x.to_vector(), &u.to_vector()),
        ))
    }

    /// Model whose every rule carries the same affine system, i.e. an LTI
    /// system expressed in TS form over a two-bell grid on `domain`.
    pub fn time_invariant(dt: f64, domain: Domain, system: &AffineModel) -> Result<Self> {
        domain.validate()?;
        let mfs: Vec<Vec<GBellParams>> = domain
            .intervals
            .iter()
            .map(|iv| {
                let a = (0.5 * iv.span()).max(f64::EPSILON);
                Ok(vec![
                    GBellParams::new(a, 2.0, iv.lo)?,
                    GBellParams::new(a, 2.0, iv.hi)?,
                ])
            })
            .collect::<Result<_>>()?;
        let e = system.entries();
        let n_rules = 1 << domain.len();
        let subs = StateComponent::ALL.map(|t| {
            let row = e[6 * t.index()..6 * t.index() + 6].to_vec();
            TsSubModel::grid(t, mfs.clone(), vec![row; n_rules])
        });
        let [a, b, c] = subs;
        Self::new(dt, domain, [a?, b?, c?])
    }

    /// Elementwise `[min, max]` of every matrix entry over the vertex systems.
    pub fn vertex_hull(&self) -> (AffineModel, AffineModel) {
        let mut lo = AffineModel::zeros();
        let mut hi = AffineModel::zeros();
        for (j, sub) in self.submodels.iter().enumerate() {
            let mut min = vec![f64::INFINITY; N_SCHEDULING + 1];
            let mut max = vec![f64::NEG_INFINITY; N_SCHEDULING + 1];
            for rule in &sub.rules {
                for (k, &p) in rule.consequent.iter().enumerate() {
                    min[k] = min[k].min(p);
                    max[k] = max[k].max(p);
                }
            }
            lo.set_row(j, &min);
            hi.set_row(j, &max);
        }
        (lo, hi)
    }
}

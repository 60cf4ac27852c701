//! Nonlinear dynamic bicycle model with simplified Magic-Formula lateral tires.
//!
//! The plant acts both as the data generator for identification and as the
//! closed-loop truth model. Only body-frame velocities are simulated; there is
//! no pose, no load transfer and no longitudinal tire model.

use nalgebra::{Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowest longitudinal speed at which the slip-angle equations are evaluated.
pub const VX_FLOOR: f64 = 0.05;

/// Largest RK4 substep used by [`step`].
pub const MAX_SUBSTEP: f64 = 1e-3;

/// Sign pattern of the yaw-rate terms inside the slip-angle arctangents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SlipConvention {
    /// `α_f = δ − atan((vy + lf·ω)/vx)`, `α_r = −atan((vy − lr·ω)/vx)`.
    #[default]
    Standard,
    /// `α_f = δ − atan(vy/vx − lf·ω/vx)`, `α_r = −atan(vy/vx + lr·ω/vx)`.
    ///
    /// This pattern feeds yaw rate back positively into the yaw moment and the
    /// resulting plant spins up on its own; kept for reproduction studies only.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// Center of mass to front axle [m].
    pub lf: f64,
    /// Center of mass to rear axle [m].
    pub lr: f64,
    /// Mass [kg].
    pub m: f64,
    /// Yaw inertia [kg m^2].
    pub inertia: f64,
    /// Magic-Formula stiffness factor.
    pub b: f64,
    /// Magic-Formula shape factor.
    pub c: f64,
    /// Magic-Formula peak factor [N].
    pub d: f64,
    /// Static friction coefficient.
    pub mu: f64,
    /// Gravity [m/s^2].
    pub g: f64,
    pub slip: SlipConvention,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            lf: 0.125,
            lr: 0.125,
            m: 1.98,
            inertia: 0.03,
            b: 6.0,
            c: 1.6,
            d: 7.76,
            mu: 0.1,
            g: 9.81,
            slip: SlipConvention::Standard,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lf", self.lf),
            ("lr", self.lr),
            ("m", self.m),
            ("inertia", self.inertia),
            ("b", self.b),
            ("c", self.c),
            ("d", self.d),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "vehicle parameter {name} must be positive, got {value}"
                )));
            }
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "friction coefficient must be non-negative, got {}",
                self.mu
            )));
        }
        Ok(())
    }
}

/// Body-frame velocities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DynamicState {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl DynamicState {
    pub const fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.vx, self.vy, self.omega)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.vx, self.vy, self.omega]
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    /// Front steering angle [rad].
    pub delta: f64,
    /// Rear-wheel longitudinal acceleration command [m/s^2].
    pub a: f64,
}

impl ControlInput {
    pub const fn new(delta: f64, a: f64) -> Self {
        Self { delta, a }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.delta, self.a)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self::new(v[0], v[1])
    }
}

fn check_speed(vx: f64) -> Result<()> {
    if vx >= VX_FLOOR {
        Ok(())
    } else {
        Err(Error::Domain {
            vx,
            floor: VX_FLOOR,
        })
    }
}

/// Front and rear slip angles [rad].
pub fn slip_angles(
    state: &DynamicState,
    input: &ControlInput,
    params: &VehicleParams,
) -> Result<(f64, f64)> {
    check_speed(state.vx)?;
    let DynamicState { vx, vy, omega } = *state;
    let (alpha_f, alpha_r) = match params.slip {
        SlipConvention::Standard => (
            input.delta - ((vy + params.lf * omega) / vx).atan(),
            -((vy - params.lr * omega) / vx).atan(),
        ),
        SlipConvention::Printed => (
            input.delta - (vy / vx - params.lf * omega / vx).atan(),
            -(vy / vx + params.lr * omega / vx).atan(),
        ),
    };
    Ok((alpha_f, alpha_r))
}

/// Lateral force of one axle, `d·sin(c·atan(b·α))`.
pub fn magic_formula(alpha: f64, params: &VehicleParams) -> f64 {
    params.d * (params.c * (params.b * alpha).atan()).sin()
}

/// Front and rear lateral tire forces [N].
pub fn tire_forces(alpha_f: f64, alpha_r: f64, params: &VehicleParams) -> (f64, f64) {
    (
        magic_formula(alpha_f, params),
        magic_formula(alpha_r, params),
    )
}

/// Continuous-time state derivative.
///
/// The longitudinal friction term is `(−F_yf·sinδ − μ·g)/m`, so the rolling
/// resistance deceleration is `μg/m` rather than `μg`. This is the plant the
/// controller was tuned against, so it is kept as is.
pub fn derivatives(
    state: &DynamicState,
    input: &ControlInput,
    params: &VehicleParams,
) -> Result<DynamicState> {
    let (alpha_f, alpha_r) = slip_angles(state, input, params)?;
    let (fyf, fyr) = tire_forces(alpha_f, alpha_r, params);
    let (sin_d, cos_d) = input.delta.sin_cos();
    let DynamicState { vx, vy, omega } = *state;
    Ok(DynamicState {
        vx: input.a + (-fyf * sin_d - params.mu * params.g) / params.m + omega * vy,
        vy: (fyf * cos_d + fyr) / params.m - omega * vx,
        omega: (fyf * params.lf * cos_d - fyr * params.lr) / params.inertia,
    })
}

fn axpy(x: &DynamicState, h: f64, k: &DynamicState) -> DynamicState {
    DynamicState {
        vx: x.vx + h * k.vx,
        vy: x.vy + h * k.vy,
        omega: x.omega + h * k.omega,
    }
}

/// One classical fourth-order Runge-Kutta stage of length `h`.
pub fn rk4(
    state: &DynamicState,
    input: &ControlInput,
    params: &VehicleParams,
    h: f64,
) -> Result<DynamicState> {
    let k1 = derivatives(state, input, params)?;
    let k2 = derivatives(&axpy(state, 0.5 * h, &k1), input, params)?;
    let k3 = derivatives(&axpy(state, 0.5 * h, &k2), input, params)?;
    let k4 = derivatives(&axpy(state, h, &k3), input, params)?;
    let next = DynamicState {
        vx: state.vx + h / 6.0 * (k1.vx + 2.0 * k2.vx + 2.0 * k3.vx + k4.vx),
        vy: state.vy + h / 6.0 * (k1.vy + 2.0 * k2.vy + 2.0 * k3.vy + k4.vy),
        omega: state.omega + h / 6.0 * (k1.omega + 2.0 * k2.omega + 2.0 * k3.omega + k4.omega),
    };
    check_speed(next.vx)?;
    Ok(next)
}

/// Advances the plant by `dt` with zero-order-held input.
///
/// The lateral modes are stiff at low speed, so `dt` is split into equal RK4
/// substeps no longer than [`MAX_SUBSTEP`].
pub fn step(
    state: &DynamicState,
    input: &ControlInput,
    params: &VehicleParams,
    dt: f64,
) -> Result<DynamicState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "time step must be positive, got {dt}"
        )));
    }
    let substeps = (dt / MAX_SUBSTEP).ceil().max(1.0) as usize;
    let h = dt / substeps as f64;
    let mut x = *state;
    for _ in 0..substeps {
        x = rk4(&x, input, params, h)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Variance of the vx measurement noise [(m/s)^2].
    pub co_vx: f64,
    /// Variance of the yaw-rate measurement noise [(rad/s)^2].
    pub co_omega: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            co_vx: 1e-6,
            co_omega: 4e-8,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn noiseless(seed: u64) -> Self {
        Self {
            co_vx: 0.0,
            co_omega: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.co_vx >= 0.0 && self.co_omega >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(
                "noise variances must be non-negative".into(),
            ))
        }
    }
}

/// Sensor reading: vy is not measured.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Measurement {
    pub vx: f64,
    pub omega: f64,
}

impl Measurement {
    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.vx, self.omega)
    }
}

/// Seeded source of additive Gaussian measurement noise.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    spec: NoiseSpec,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(spec: NoiseSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
        })
    }

    pub fn spec(&self) -> &NoiseSpec {
        &self.spec
    }

    pub fn measure(&mut self, state: &DynamicState) -> Measurement {
        // Both draws happen even at zero variance so the stream position does
        // not depend on the covariance values.
        let n_vx: f64 = StandardNormal.sample(&mut self.rng);
        let n_omega: f64 = StandardNormal.sample(&mut self.rng);
        Measurement {
            vx: state.vx + self.spec.co_vx.sqrt() * n_vx,
            omega: state.omega + self.spec.co_omega.sqrt() * n_omega,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn printed() -> VehicleParams {
        VehicleParams {
            slip: SlipConvention::Printed,
            ..VehicleParams::default()
        }
    }

    #[test]
    fn slip_angles_vanish_on_straight_line() {
        let p = VehicleParams::default();
        let (af, ar) = slip_angles(
            &DynamicState::new(1.0, 0.0, 0.0),
            &ControlInput::new(0.0, 0.0),
            &p,
        )
        .unwrap();
        assert_eq!((af, ar), (0.0, 0.0));
        let (af, ar) = slip_angles(
            &DynamicState::new(1.0, 0.0, 0.0),
            &ControlInput::new(0.1, 0.0),
            &p,
        )
        .unwrap();
        assert_eq!((af, ar), (0.1, 0.0));
    }

    #[test]
    fn printed_slip_angles_match_hand_substitution() {
        let (af, ar) = slip_angles(
            &DynamicState::new(1.0, 0.1, 0.2),
            &ControlInput::new(0.0, 0.0),
            &printed(),
        )
        .unwrap();
        assert!((af - (-(0.1f64 - 0.025).atan())).abs() < 1e-15);
        assert!((ar - (-(0.1f64 + 0.025).atan())).abs() < 1e-15);
        assert!((af + 0.074860).abs() < 1e-6);
        assert!((ar + 0.124355).abs() < 1e-6);
    }

    #[test]
    fn standard_slip_angles_swap_yaw_terms() {
        let (af, ar) = slip_angles(
            &DynamicState::new(1.0, 0.1, 0.2),
            &ControlInput::new(0.0, 0.0),
            &VehicleParams::default(),
        )
        .unwrap();
        assert!((af + 0.124355).abs() < 1e-6);
        assert!((ar + 0.074860).abs() < 1e-6);
    }

    #[test]
    fn slow_vehicle_is_a_domain_error() {
        let p = VehicleParams::default();
        let err = slip_angles(
            &DynamicState::new(0.0, 0.0, 0.0),
            &ControlInput::default(),
            &p,
        );
        assert!(matches!(err, Err(Error::Domain { .. })));
        let err = derivatives(
            &DynamicState::new(0.04, 0.0, 0.0),
            &ControlInput::default(),
            &p,
        );
        assert!(matches!(err, Err(Error::Domain { .. })));
    }

    #[test]
    fn tire_force_examples() {
        let p = VehicleParams::default();
        assert_eq!(magic_formula(0.0, &p), 0.0);
        for alpha in [0.01, 0.1, 0.3, 1.0] {
            assert_eq!(magic_formula(-alpha, &p), -magic_formula(alpha, &p));
        }
        let f = magic_formula(0.2485, &p);
        assert!((f - 7.7599).abs() < 1e-4, "{f}");
        assert!(f >= 0.999 * p.d);
    }

    #[test]
    fn friction_only_deceleration() {
        let p = VehicleParams::default();
        let d = derivatives(
            &DynamicState::new(1.0, 0.0, 0.0),
            &ControlInput::new(0.0, 0.0),
            &p,
        )
        .unwrap();
        assert!((d.vx + 0.495455).abs() < 1e-6);
        assert_eq!(d.vy, 0.0);
        assert_eq!(d.omega, 0.0);

        let d = derivatives(
            &DynamicState::new(1.0, 0.0, 0.0),
            &ControlInput::new(0.0, 0.4955),
            &p,
        )
        .unwrap();
        assert!(d.vx.abs() < 1e-4);
        assert_eq!((d.vy, d.omega), (0.0, 0.0));
    }

    #[test]
    fn equal_slip_and_equal_arms_give_no_yaw_moment() {
        // With δ = 0, α_f = α_r happens when the yaw terms cancel: ω = 0.
        for slip in [SlipConvention::Standard, SlipConvention::Printed] {
            let p = VehicleParams {
                slip,
                ..VehicleParams::default()
            };
            let x = DynamicState::new(1.3, 0.07, 0.0);
            let (af, ar) = slip_angles(&x, &ControlInput::default(), &p).unwrap();
            assert_eq!(af, ar);
            let d = derivatives(&x, &ControlInput::default(), &p).unwrap();
            assert!(d.omega.abs() < 1e-12);
        }
    }

    #[test]
    fn one_step_decay_matches_linear_oracle() {
        let p = VehicleParams::default();
        let x = step(
            &DynamicState::new(1.0, 0.0, 0.0),
            &ControlInput::default(),
            &p,
            1.0 / 30.0,
        )
        .unwrap();
        assert!((x.vx - (1.0 - 0.495455 / 30.0)).abs() < 1e-6);
        assert_eq!((x.vy, x.omega), (0.0, 0.0));
    }

    #[test]
    fn step_rejects_bad_dt_and_stalls() {
        let p = VehicleParams::default();
        assert!(step(
            &DynamicState::new(1.0, 0.0, 0.0),
            &ControlInput::default(),
            &p,
            0.0
        )
        .is_err());
        // Hard braking from a crawl drives vx through the floor.
        let err = step(
            &DynamicState::new(0.06, 0.0, 0.0),
            &ControlInput::new(0.0, -1.0),
            &p,
            1.0 / 30.0,
        );
        assert!(matches!(err, Err(Error::Domain { .. })));
    }

    #[test]
    fn zero_variance_measurement_passes_through() {
        let mut noise = NoiseStream::new(NoiseSpec::noiseless(3)).unwrap();
        let x = DynamicState::new(1.2, 0.05, -0.3);
        let y = noise.measure(&x);
        assert_eq!((y.vx, y.omega), (1.2, -0.3));
    }

    #[test]
    fn measurement_streams_are_reproducible() {
        let spec = NoiseSpec {
            seed: 42,
            ..NoiseSpec::default()
        };
        let mut a = NoiseStream::new(spec).unwrap();
        let mut b = NoiseStream::new(spec).unwrap();
        let x = DynamicState::new(1.0, 0.0, 0.1);
        for _ in 0..100 {
            assert_eq!(a.measure(&x), b.measure(&x));
        }
    }

    #[test]
    fn measurement_variance_is_within_chi_square_band() {
        // 1e5 samples: the sample-variance standard error is sqrt(2/n) ≈ 0.45%,
        // so the ±10% band is more than 20 sigma wide.
        let mut noise = NoiseStream::new(NoiseSpec {
            co_vx: 1e-6,
            co_omega: 4e-8,
            seed: 7,
        })
        .unwrap();
        let x = DynamicState::new(1.0, 0.0, 0.0);
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let e = noise.measure(&x).vx - 1.0;
            s += e;
            s2 += e * e;
        }
        let mean = s / n as f64;
        let var = (s2 - n as f64 * mean * mean) / (n as f64 - 1.0);
        assert!((0.9e-6..=1.1e-6).contains(&var), "{var}");
    }

    #[test]
    fn invalid_params_are_rejected() {
        let p = VehicleParams {
            m: 0.0,
            ..VehicleParams::default()
        };
        assert!(p.validate().is_err());
        let p = VehicleParams {
            mu: -0.1,
            ..VehicleParams::default()
        };
        assert!(p.validate().is_err());
        assert!(VehicleParams::default().validate().is_ok());
        assert!(NoiseStream::new(NoiseSpec {
            co_vx: -1.0,
            co_omega: 0.0,
            seed: 0
        })
        .is_err());
    }
}

//! Reduced five-mass robot model: torso+head plus four limb point masses.
//!
//! Each limb mass is located through a triangle parameterization driven by the
//! first joints of the limb. The five masses yield the aggregate CoM, a
//! lower/upper body dumbbell pair, and a principal-axes inertia decomposition.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{tilt_twist_rotation, unwrap_near};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("joint vector has {got} entries, limb expects {expected}")]
    JointDimensionMismatch { got: usize, expected: usize },
    #[error("total weight must be positive, got {0}")]
    NonPositiveWeight(f64),
    #[error("mass/weight count mismatch: {masses} masses vs {weights} weights")]
    CountMismatch { masses: usize, weights: usize },
    #[error("dumbbell axis degenerate: |m_u - m_l| = {0:.3e} m")]
    DegenerateAxis(f64),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Triangle mass-distribution parameters of a limb.
///
/// `p_s` divides the lower link, `p_l` scales the origin-to-centroid distance,
/// `a` and `c` are the triangle side lengths (lower and upper link).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TriangleParam {
    pub p_s: f64,
    pub p_l: f64,
    pub a: f64,
    pub c: f64,
}

impl TriangleParam {
    /// Uniform-density triangle distribution.
    pub fn uniform(a: f64, c: f64) -> Self {
        Self { p_s: 0.5, p_l: 2.0 / 3.0, a, c }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&self.p_s) || !(0.0..=1.0).contains(&self.p_l) {
            return Err(ModelError::InvalidConfig(format!(
                "triangle ratios must lie in [0,1]: p_s={}, p_l={}",
                self.p_s, self.p_l
            )));
        }
        if self.a <= 0.0 || self.c <= 0.0 {
            return Err(ModelError::InvalidConfig(format!(
                "triangle sides must be positive: a={}, c={}",
                self.a, self.c
            )));
        }
        Ok(())
    }
}

/// Which side of the body a limb sits on. Carries the leg sign
/// convention L = -1, R = +1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// Static description of one limb.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LimbConfig {
    /// Limb origin (hip/shoulder) in the torso frame.
    pub origin_offset: Vector3<f64>,
    pub triangle: TriangleParam,
    /// Number of joints used for the mass position; the last one is the
    /// bending joint (knee/elbow), preceded by `n_joints - 1` origin rotations.
    pub n_joints: usize,
    pub weight: f64,
    pub side: Side,
}

impl LimbConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.triangle.validate()?;
        if self.n_joints < 2 {
            return Err(ModelError::InvalidConfig(format!(
                "limb needs at least 2 joints, got {}",
                self.n_joints
            )));
        }
        if self.weight <= 0.0 {
            return Err(ModelError::NonPositiveWeight(self.weight));
        }
        Ok(())
    }

    /// Rotation axis of the k-th proximal joint (0-based).
    ///
    /// Order is pitch (y), roll (x), then yaw (z); legs and arms both use
    /// pitch-roll for their two origin rotations.
    pub fn proximal_axis(k: usize) -> Vector3<f64> {
        match k % 3 {
            0 => Vector3::y(),
            1 => Vector3::x(),
            _ => Vector3::z(),
        }
    }
}

/// Torso pose in world coordinates.
#[derive(Debug, Clone, Copy)]
pub struct TorsoPose {
    pub position: Vector3<f64>,
    pub orientation: Rotation3<f64>,
}

impl TorsoPose {
    pub fn identity() -> Self {
        Self { position: Vector3::zeros(), orientation: Rotation3::identity() }
    }
}

/// Static description of the whole five-mass robot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FiveMassConfig {
    pub torso_weight: f64,
    /// Combined torso+head mass position in the torso frame.
    pub torso_com_offset: Vector3<f64>,
    pub left_leg: LimbConfig,
    pub right_leg: LimbConfig,
    pub left_arm: LimbConfig,
    pub right_arm: LimbConfig,
    /// Base frame origin, centered between the hip joint origins (torso frame).
    pub hip_center: Vector3<f64>,
    /// IMU mounting point in the torso frame.
    pub sensor_mount: Vector3<f64>,
    /// Gravity acceleration vector (world frame), typically [0, 0, -9.81].
    pub gravity: Vector3<f64>,
}

impl FiveMassConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.torso_weight <= 0.0 {
            return Err(ModelError::NonPositiveWeight(self.torso_weight));
        }
        for limb in self.limbs() {
            limb.validate()?;
        }
        let g = self.gravity.norm();
        if !(9.0..=10.5).contains(&g) {
            return Err(ModelError::InvalidConfig(format!(
                "gravity magnitude {g:.3} outside [9.0, 10.5] m/s^2"
            )));
        }
        Ok(())
    }

    pub fn limbs(&self) -> [&LimbConfig; 4] {
        [&self.left_leg, &self.right_leg, &self.left_arm, &self.right_arm]
    }

    /// Weights ordered [torso, left leg, right leg, left arm, right arm].
    pub fn weights(&self) -> [f64; 5] {
        [
            self.torso_weight,
            self.left_leg.weight,
            self.right_leg.weight,
            self.left_arm.weight,
            self.right_arm.weight,
        ]
    }

    pub fn total_weight(&self) -> f64 {
        self.weights().iter().sum()
    }

    pub fn gravity_magnitude(&self) -> f64 {
        self.gravity.norm()
    }
}

/// Joint angles and velocities of one limb.
#[derive(Debug, Clone, Default)]
pub struct LimbJoints {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
}

/// Joint state of all four limbs, ordered like [`FiveMassConfig::limbs`].
#[derive(Debug, Clone, Default)]
pub struct JointState {
    pub left_leg: LimbJoints,
    pub right_leg: LimbJoints,
    pub left_arm: LimbJoints,
    pub right_arm: LimbJoints,
}

impl JointState {
    pub fn limbs(&self) -> [&LimbJoints; 4] {
        [&self.left_leg, &self.right_leg, &self.left_arm, &self.right_arm]
    }
}

/// The local CoM offset vector of Eq-style triangle kinematics, before any
/// origin rotation.
fn triangle_vector(tri: &TriangleParam, q_bend: f64) -> Vector3<f64> {
    let aps = tri.a * tri.p_l * tri.p_s;
    Vector3::new(-aps * q_bend.sin(), 0.0, -(aps * q_bend.cos() + tri.c * tri.p_l))
}

fn triangle_vector_derivative(tri: &TriangleParam, q_bend: f64) -> Vector3<f64> {
    let aps = tri.a * tri.p_l * tri.p_s;
    Vector3::new(-aps * q_bend.cos(), 0.0, aps * q_bend.sin())
}

fn check_joints(q: &[f64], limb: &LimbConfig) -> Result<(), ModelError> {
    if q.len() != limb.n_joints {
        return Err(ModelError::JointDimensionMismatch { got: q.len(), expected: limb.n_joints });
    }
    Ok(())
}

/// Composed rotation of the first n-1 proximal joints (torso frame).
fn proximal_rotation(q: &[f64]) -> Rotation3<f64> {
    let mut r = Rotation3::identity();
    for (k, &angle) in q[..q.len() - 1].iter().enumerate() {
        r *= Rotation3::from_axis_angle(&Unit::new_normalize(LimbConfig::proximal_axis(k)), angle);
    }
    r
}

/// Limb mass position in the torso frame, relative to the torso origin.
pub fn limb_com_torso(q: &[f64], limb: &LimbConfig) -> Result<Vector3<f64>, ModelError> {
    check_joints(q, limb)?;
    let r_o = proximal_rotation(q);
    Ok(limb.origin_offset + r_o * triangle_vector(&limb.triangle, q[q.len() - 1]))
}

/// Limb mass position in world coordinates.
pub fn limb_com(q: &[f64], limb: &LimbConfig, torso: &TorsoPose) -> Result<Vector3<f64>, ModelError> {
    Ok(torso.position + torso.orientation * limb_com_torso(q, limb)?)
}

/// Analytic limb mass Jacobian in the torso frame: d(limb_com_torso)/dq.
pub fn limb_jacobian_torso(
    q: &[f64],
    limb: &LimbConfig,
) -> Result<nalgebra::DMatrix<f64>, ModelError> {
    check_joints(q, limb)?;
    let n = q.len();
    let q_bend = q[n - 1];
    let mut jac = nalgebra::DMatrix::zeros(3, n);

    // Prefix rotations R_0..R_{k-1} and suffix products applied to the
    // triangle vector.
    let rotations: Vec<Rotation3<f64>> = (0..n - 1)
        .map(|k| {
            Rotation3::from_axis_angle(&Unit::new_normalize(LimbConfig::proximal_axis(k)), q[k])
        })
        .collect();

    // suffix[k] = R_k * ... * R_{n-2} * v
    let v = triangle_vector(&limb.triangle, q_bend);
    let mut suffix = vec![v; n];
    for k in (0..n - 1).rev() {
        suffix[k] = rotations[k] * suffix[k + 1];
    }

    let mut prefix = Rotation3::identity();
    for k in 0..n - 1 {
        let axis = LimbConfig::proximal_axis(k);
        let col = prefix * axis.cross(&suffix[k]);
        jac.set_column(k, &col);
        prefix *= rotations[k];
    }
    let col = prefix * triangle_vector_derivative(&limb.triangle, q_bend);
    jac.set_column(n - 1, &col);
    Ok(jac)
}

/// Analytic limb mass Jacobian expressed in world coordinates.
pub fn limb_jacobian(
    q: &[f64],
    limb: &LimbConfig,
    torso_orientation: &Rotation3<f64>,
) -> Result<nalgebra::DMatrix<f64>, ModelError> {
    let mut jac = limb_jacobian_torso(q, limb)?;
    for k in 0..jac.ncols() {
        let col = torso_orientation * Vector3::new(jac[(0, k)], jac[(1, k)], jac[(2, k)]);
        jac.set_column(k, &col);
    }
    Ok(jac)
}

/// Limb end-effector (foot/hand) position in the torso frame.
///
/// The triangle sides double as link lengths: `c` spans origin to the bending
/// joint, `a` the bending joint to the end effector.
pub fn limb_end_torso(q: &[f64], limb: &LimbConfig) -> Result<Vector3<f64>, ModelError> {
    check_joints(q, limb)?;
    let r_o = proximal_rotation(q);
    let q_bend = q[q.len() - 1];
    let knee_to_end = Rotation3::from_axis_angle(&Vector3::y_axis(), q_bend)
        * Vector3::new(0.0, 0.0, -limb.triangle.a);
    Ok(limb.origin_offset + r_o * (Vector3::new(0.0, 0.0, -limb.triangle.c) + knee_to_end))
}

/// Weight-weighted mean of mass positions.
pub fn aggregate_com(masses: &[Vector3<f64>], weights: &[f64]) -> Result<Vector3<f64>, ModelError> {
    if masses.len() != weights.len() {
        return Err(ModelError::CountMismatch { masses: masses.len(), weights: weights.len() });
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(ModelError::NonPositiveWeight(total));
    }
    let mut acc = Vector3::zeros();
    for (m, &w) in masses.iter().zip(weights) {
        acc += m * w;
    }
    Ok(acc / total)
}

/// Positions of the five masses, ordered [torso, ll, rl, la, ra].
#[derive(Debug, Clone, Copy)]
pub struct MassSet {
    pub positions: [Vector3<f64>; 5],
    pub weights: [f64; 5],
}

impl MassSet {
    pub fn com(&self) -> Vector3<f64> {
        aggregate_com(&self.positions, &self.weights).expect("weights validated")
    }
}

/// Lower/upper body dumbbell reduction of the five masses.
#[derive(Debug, Clone, Copy)]
pub struct DumbbellAggregates {
    /// Aggregate of the two leg masses.
    pub lower: Vector3<f64>,
    /// Aggregate of the two arm+half-torso masses.
    pub upper: Vector3<f64>,
    /// Left arm combined with half the torso mass.
    pub left_upper: Vector3<f64>,
    /// Right arm combined with half the torso mass.
    pub right_upper: Vector3<f64>,
    pub left_lower: Vector3<f64>,
    pub right_lower: Vector3<f64>,
    pub w_lower: f64,
    pub w_upper: f64,
}

/// Reduce the five masses to the lower/upper body dumbbells. Arm masses each
/// absorb half of the torso mass.
pub fn dumbbell_aggregates(set: &MassSet) -> Result<DumbbellAggregates, ModelError> {
    let [torso, ll, rl, la, ra] = set.positions;
    let [w_t, w_ll, w_rl, w_la, w_ra] = set.weights;
    for &w in &set.weights {
        if w <= 0.0 {
            return Err(ModelError::NonPositiveWeight(w));
        }
    }
    let half_t = 0.5 * w_t;
    let left_upper = aggregate_com(&[la, torso], &[w_la, half_t])?;
    let right_upper = aggregate_com(&[ra, torso], &[w_ra, half_t])?;
    let upper =
        aggregate_com(&[left_upper, right_upper], &[w_la + half_t, w_ra + half_t])?;
    let lower = aggregate_com(&[ll, rl], &[w_ll, w_rl])?;
    Ok(DumbbellAggregates {
        lower,
        upper,
        left_upper,
        right_upper,
        left_lower: ll,
        right_lower: rl,
        w_lower: w_ll + w_rl,
        w_upper: w_t + w_la + w_ra,
    })
}

/// Inertia orientation from the dumbbell axis and the blended dumbbell yaw.
///
/// The tilt z-axis points from the lower toward the upper aggregate mass, so
/// an upright halt pose maps to the identity. The yaw blend unwraps the lower
/// angle near the upper one before weighting.
pub fn inertia_orientation(
    agg: &DumbbellAggregates,
    yaw_upper: f64,
    yaw_lower: f64,
) -> Result<Rotation3<f64>, ModelError> {
    let axis = agg.upper - agg.lower;
    let norm = axis.norm();
    if norm < 1e-9 {
        return Err(ModelError::DegenerateAxis(norm));
    }
    let yaw_lower = unwrap_near(yaw_lower, yaw_upper);
    let yaw = (yaw_upper * agg.w_upper + yaw_lower * agg.w_lower) / (agg.w_upper + agg.w_lower);
    Ok(tilt_twist_rotation(&axis, yaw))
}

/// Principal-axes inertia readout of the five point masses.
#[derive(Debug, Clone)]
pub struct PrincipalMoments {
    /// Diagonal of the rotated tensor (I_xx, I_yy, I_zz).
    pub diagonal: Vector3<f64>,
    /// Full tensor expressed in the inertia frame, for diagnostics.
    pub rotated_tensor: Matrix3<f64>,
    /// Frobenius norm of the rotated tensor's off-diagonal part.
    pub off_diagonal_residual: f64,
}

/// Point-mass inertia tensor about `about`, expressed in the `frame` axes.
pub fn principal_moments(set: &MassSet, about: &Vector3<f64>, frame: &Rotation3<f64>) -> PrincipalMoments {
    let mut tensor = Matrix3::zeros();
    for (m, &w) in set.positions.iter().zip(&set.weights) {
        let d = m - about;
        tensor += w * (d.norm_squared() * Matrix3::identity() - d * d.transpose());
    }
    let rotated = frame.inverse().matrix() * tensor * frame.matrix();
    let diagonal = rotated.diagonal().into();
    let mut off = 0.0;
    for r in 0..3 {
        for c in 0..3 {
            if r != c {
                off += rotated[(r, c)] * rotated[(r, c)];
            }
        }
    }
    PrincipalMoments { diagonal, rotated_tensor: rotated, off_diagonal_residual: off.sqrt() }
}

/// Full kinematic snapshot of the five-mass model.
#[derive(Debug, Clone)]
pub struct FiveMassState {
    pub masses: [Vector3<f64>; 5],
    pub velocities: [Vector3<f64>; 5],
    pub weights: [f64; 5],
    pub com: Vector3<f64>,
    pub torso_orientation: Rotation3<f64>,
    pub inertia_orientation: Rotation3<f64>,
    pub principal_moments: Vector3<f64>,
    pub dumbbells: DumbbellAggregates,
}

/// Signed heading of `v` projected onto the plane normal to `z_axis`,
/// measured from `reference` about `z_axis`.
fn projected_heading(v: &Vector3<f64>, z_axis: &Vector3<f64>, reference: &Vector3<f64>) -> f64 {
    let proj = v - z_axis * v.dot(z_axis);
    let ref_proj = reference - z_axis * reference.dot(z_axis);
    if proj.norm() < 1e-12 || ref_proj.norm() < 1e-12 {
        return 0.0;
    }
    let sin = z_axis.dot(&ref_proj.cross(&proj));
    let cos = ref_proj.dot(&proj);
    sin.atan2(cos)
}

/// Compute the five-mass state from joints and the torso pose.
///
/// Dumbbell yaw angles are measured as the heading of the left-to-right mass
/// separation against the halt-pose separation direction (-y in world).
pub fn compute_state(
    config: &FiveMassConfig,
    joints: &JointState,
    torso: &TorsoPose,
) -> Result<FiveMassState, ModelError> {
    let torso_mass = torso.position + torso.orientation * config.torso_com_offset;
    let limbs = config.limbs();
    let limb_joints = joints.limbs();

    let mut masses = [torso_mass; 5];
    let mut velocities = [Vector3::zeros(); 5];
    for i in 0..4 {
        masses[i + 1] = limb_com(&limb_joints[i].q, limbs[i], torso)?;
        if limb_joints[i].qd.len() == limb_joints[i].q.len() {
            let jac = limb_jacobian(&limb_joints[i].q, limbs[i], &torso.orientation)?;
            let qd = nalgebra::DVector::from_column_slice(&limb_joints[i].qd);
            let v = jac * qd;
            velocities[i + 1] = Vector3::new(v[0], v[1], v[2]);
        }
    }

    let weights = config.weights();
    let set = MassSet { positions: masses, weights };
    let com = set.com();
    let dumbbells = dumbbell_aggregates(&set)?;

    let z_axis = (dumbbells.upper - dumbbells.lower).normalize();
    // Left-to-right separation headings (halt reference: right minus left = -y).
    let reference = Vector3::new(0.0, -1.0, 0.0);
    let yaw_u =
        projected_heading(&(dumbbells.right_upper - dumbbells.left_upper), &z_axis, &reference);
    let sep_l = dumbbells.right_lower - dumbbells.left_lower;
    let yaw_l = if sep_l.norm() > 1e-9 {
        projected_heading(&sep_l, &z_axis, &reference)
    } else {
        yaw_u
    };
    let inertia = inertia_orientation(&dumbbells, yaw_u, yaw_l)?;
    let moments = principal_moments(&set, &com, &inertia);

    Ok(FiveMassState {
        masses,
        velocities,
        weights,
        com,
        torso_orientation: torso.orientation,
        inertia_orientation: inertia,
        principal_moments: moments.diagonal,
        dumbbells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn leg(side: Side) -> LimbConfig {
        LimbConfig {
            origin_offset: Vector3::new(0.0, side.sign() * -0.06, -0.1),
            triangle: TriangleParam::uniform(0.3, 0.3),
            n_joints: 3,
            weight: 3.0,
            side,
        }
    }

    fn simple_limb(n_joints: usize) -> LimbConfig {
        LimbConfig {
            origin_offset: Vector3::zeros(),
            triangle: TriangleParam::uniform(0.3, 0.3),
            n_joints,
            weight: 1.0,
            side: Side::Right,
        }
    }

    #[test]
    fn limb_com_all_zero_joints() {
        let limb = simple_limb(3);
        let m = limb_com(&[0.0; 3], &limb, &TorsoPose::identity()).unwrap();
        let expected = -(0.3 * (2.0 / 3.0) * 0.5 + 0.3 * (2.0 / 3.0));
        assert_relative_eq!(m, Vector3::new(0.0, 0.0, expected), epsilon = 1e-15);
    }

    #[test]
    fn limb_com_uniform_triangle_halt() {
        // p_s = 1/2, p_l = 2/3, a = c = 0.3 -> z = -(a*p_l*p_s + c*p_l) = -0.3
        let limb = simple_limb(2);
        let m = limb_com(&[0.0, 0.0], &limb, &TorsoPose::identity()).unwrap();
        assert_relative_eq!(m.z, -0.3, epsilon = 1e-15);
    }

    #[test]
    fn limb_com_bent_knee() {
        // Single proximal joint at zero, bending joint at pi/2.
        let limb = simple_limb(2);
        let m = limb_com(&[0.0, std::f64::consts::FRAC_PI_2], &limb, &TorsoPose::identity())
            .unwrap();
        assert_relative_eq!(m, Vector3::new(-0.1, 0.0, -0.2), epsilon = 1e-12);
    }

    #[test]
    fn limb_com_rejects_dimension_mismatch() {
        let limb = simple_limb(3);
        assert!(limb_com(&[0.0, 0.0], &limb, &TorsoPose::identity()).is_err());
    }

    #[test]
    fn jacobian_bend_column_at_zero() {
        let limb = simple_limb(2);
        let jac = limb_jacobian_torso(&[0.0, 0.0], &limb).unwrap();
        let aps = 0.3 * (2.0 / 3.0) * 0.5;
        assert_relative_eq!(jac[(0, 1)], -aps, epsilon = 1e-15);
        assert_relative_eq!(jac[(1, 1)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(jac[(2, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let limb = leg(Side::Left);
        let torso = TorsoPose {
            position: Vector3::new(0.1, -0.2, 0.9),
            orientation: Rotation3::from_euler_angles(0.1, -0.2, 0.3),
        };
        let q = [0.4, -0.25, 0.7];
        let jac = limb_jacobian(&q, &limb, &torso.orientation).unwrap();
        let h = 1e-6;
        for k in 0..3 {
            let mut qp = q;
            let mut qm = q;
            qp[k] += h;
            qm[k] -= h;
            let fd = (limb_com(&qp, &limb, &torso).unwrap()
                - limb_com(&qm, &limb, &torso).unwrap())
                / (2.0 * h);
            for r in 0..3 {
                assert!((jac[(r, k)] - fd[r]).abs() <= 1e-6, "col {k} row {r}");
            }
        }
    }

    #[test]
    fn aggregate_com_coincident_masses() {
        let p = Vector3::new(0.3, -0.1, 0.7);
        let com = aggregate_com(&[p; 5], &[10.0, 3.0, 3.0, 2.0, 2.0]).unwrap();
        assert_relative_eq!(com, p, epsilon = 1e-15);
    }

    #[test]
    fn aggregate_com_two_mass_midpoint() {
        let a = Vector3::new(1.0, 0.0, 0.0);
        let b = Vector3::new(-1.0, 2.0, 0.0);
        let com = aggregate_com(&[a, b], &[1.0, 1.0]).unwrap();
        assert_relative_eq!(com, (a + b) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn aggregate_com_fixture() {
        // Independent re-evaluation of the weighted mean.
        let masses = [
            Vector3::new(0.02, 0.01, 0.60),
            Vector3::new(0.01, 0.08, 0.25),
            Vector3::new(-0.03, -0.09, 0.26),
            Vector3::new(0.05, 0.22, 0.55),
            Vector3::new(0.04, -0.21, 0.57),
        ];
        let weights = [10.0, 3.0, 3.0, 2.0, 2.0];
        let com = aggregate_com(&masses, &weights).unwrap();
        let mut expected = Vector3::zeros();
        let total: f64 = weights.iter().sum();
        for (m, w) in masses.iter().zip(&weights) {
            expected += m * (*w / total);
        }
        assert_relative_eq!(com, expected, epsilon = 1e-12);
    }

    #[test]
    fn aggregate_com_rejects_zero_weight() {
        assert!(aggregate_com(&[Vector3::zeros()], &[0.0]).is_err());
    }

    fn symmetric_set() -> MassSet {
        MassSet {
            positions: [
                Vector3::new(0.0, 0.0, 0.6),
                Vector3::new(0.0, 0.08, 0.25),
                Vector3::new(0.0, -0.08, 0.25),
                Vector3::new(0.0, 0.2, 0.55),
                Vector3::new(0.0, -0.2, 0.55),
            ],
            weights: [10.0, 3.0, 3.0, 2.0, 2.0],
        }
    }

    #[test]
    fn dumbbell_symmetry_and_weight_partition() {
        let set = symmetric_set();
        let agg = dumbbell_aggregates(&set).unwrap();
        assert_relative_eq!(agg.lower.y, 0.0, epsilon = 1e-15);
        assert_relative_eq!(agg.upper.y, 0.0, epsilon = 1e-15);
        assert_relative_eq!(
            agg.w_lower + agg.w_upper,
            set.weights.iter().sum::<f64>(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn dumbbell_asymmetric_fixture() {
        let mut set = symmetric_set();
        set.positions[3] += Vector3::new(0.1, 0.0, 0.05);
        let agg = dumbbell_aggregates(&set).unwrap();
        // Direct re-evaluation.
        let half_t = 5.0;
        let lu = (set.positions[3] * 2.0 + set.positions[0] * half_t) / 7.0;
        let ru = (set.positions[4] * 2.0 + set.positions[0] * half_t) / 7.0;
        let upper = (lu * 7.0 + ru * 7.0) / 14.0;
        assert_relative_eq!(agg.left_upper, lu, epsilon = 1e-12);
        assert_relative_eq!(agg.right_upper, ru, epsilon = 1e-12);
        assert_relative_eq!(agg.upper, upper, epsilon = 1e-12);
    }

    #[test]
    fn inertia_orientation_upright_is_identity() {
        let agg = dumbbell_aggregates(&symmetric_set()).unwrap();
        let r = inertia_orientation(&agg, 0.0, 0.0).unwrap();
        assert_relative_eq!(r.matrix(), Rotation3::identity().matrix(), epsilon = 1e-12);
    }

    #[test]
    fn inertia_orientation_equal_yaw_passthrough() {
        let agg = dumbbell_aggregates(&symmetric_set()).unwrap();
        let r = inertia_orientation(&agg, 0.4, 0.4).unwrap();
        let (_, twist) = crate::math::tilt_twist_decompose(&r);
        assert_relative_eq!(twist, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn inertia_orientation_tilt_and_twist() {
        let mut agg = dumbbell_aggregates(&symmetric_set()).unwrap();
        // Tilt the axis 10 degrees about world x.
        let tilt = Rotation3::from_axis_angle(&Vector3::x_axis(), 10f64.to_radians());
        let mid = (agg.upper + agg.lower) / 2.0;
        agg.upper = mid + tilt * (agg.upper - mid);
        agg.lower = mid + tilt * (agg.lower - mid);
        let psi = 30f64.to_radians();
        let r = inertia_orientation(&agg, psi, psi).unwrap();
        let z_expected = (agg.upper - agg.lower).normalize();
        assert_relative_eq!(r * Vector3::z(), z_expected, epsilon = 1e-12);
        let (_, twist) = crate::math::tilt_twist_decompose(&r);
        assert_relative_eq!(twist, psi, epsilon = 1e-12);
    }

    #[test]
    fn inertia_orientation_degenerate_axis() {
        let mut agg = dumbbell_aggregates(&symmetric_set()).unwrap();
        agg.lower = agg.upper;
        assert!(matches!(
            inertia_orientation(&agg, 0.0, 0.0),
            Err(ModelError::DegenerateAxis(_))
        ));
    }

    #[test]
    fn principal_moments_textbook_dumbbell() {
        let set = MassSet {
            positions: [
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(-1.0, 0.0, 0.0),
                Vector3::zeros(),
                Vector3::zeros(),
                Vector3::zeros(),
            ],
            weights: [1.0, 1.0, 1e-30, 1e-30, 1e-30],
        };
        let pm = principal_moments(&set, &Vector3::zeros(), &Rotation3::identity());
        assert_relative_eq!(pm.diagonal, Vector3::new(0.0, 2.0, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn principal_moments_collinear_masses_zero_zz() {
        let set = MassSet {
            positions: [
                Vector3::new(0.0, 0.0, 0.1),
                Vector3::new(0.0, 0.0, 0.2),
                Vector3::new(0.0, 0.0, 0.3),
                Vector3::new(0.0, 0.0, 0.4),
                Vector3::new(0.0, 0.0, 0.5),
            ],
            weights: [10.0, 3.0, 3.0, 2.0, 2.0],
        };
        let com = set.com();
        let pm = principal_moments(&set, &com, &Rotation3::identity());
        assert!(pm.diagonal.z.abs() <= 1e-12);
    }

    #[test]
    fn principal_moments_reconstruct_full_tensor() {
        let mut set = symmetric_set();
        set.positions[1] += Vector3::new(0.12, -0.02, 0.03);
        set.positions[4] += Vector3::new(-0.05, 0.04, -0.01);
        let com = set.com();
        let frame = Rotation3::from_euler_angles(0.1, 0.2, -0.3);
        let pm = principal_moments(&set, &com, &frame);

        // Direct summation oracle in world axes.
        let mut tensor = Matrix3::zeros();
        for (m, w) in set.positions.iter().zip(&set.weights) {
            let d = m - com;
            tensor += *w * (d.norm_squared() * Matrix3::identity() - d * d.transpose());
        }
        let reconstructed = frame.matrix() * pm.rotated_tensor * frame.inverse().matrix();
        assert_relative_eq!(reconstructed, tensor, epsilon = 1e-10);
    }
}

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{jacobian_from_poses, link_poses, KinError};
use crate::math::{Pose, Vec3};
use crate::scene::RobotModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IkParams {
    pub damping: f64,
    pub max_iters: usize,
    pub pos_tol: f64,
    pub ori_tol: f64,
    /// Largest joint change per iteration (rad or m).
    pub step_clamp: f64,
}

impl Default for IkParams {
    fn default() -> Self {
        Self {
            damping: 0.1,
            max_iters: 100,
            pos_tol: 1e-4,
            ori_tol: 1e-3,
            step_clamp: 0.2,
        }
    }
}

impl IkParams {
    pub fn validate(&self) -> Result<(), KinError> {
        let ok = self.damping > 0.0
            && self.max_iters > 0
            && self.pos_tol > 0.0
            && self.ori_tol > 0.0
            && self.step_clamp > 0.0;
        if ok {
            Ok(())
        } else {
            Err(KinError::BadParams(format!("{self:?}")))
        }
    }
}

/// Reach `target` with the point `local` of link `link`.
#[derive(Debug, Clone, Copy)]
pub struct IkProblem<'a> {
    pub model: &'a RobotModel,
    pub base: &'a Pose,
    pub link: usize,
    pub local: Vec3,
    pub target: Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IkResult {
    pub q: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub pos_error: f64,
    pub ori_error: f64,
}

pub trait IkSolver: Send + Sync {
    fn solve(&self, problem: &IkProblem, q0: &[f64], params: &IkParams) -> IkResult;
}

/// Damped least squares with per-iteration step clamping and line halving,
/// so the residual never increases across accepted iterations. The damping is
/// `min(params.damping, |e|)`: full far from the target, vanishing close to
/// it so convergence near singular poses does not stall at a linear rate.
#[derive(Debug, Clone, Copy)]
pub struct DlsSolver {
    pub position_only: bool,
}

struct Residual {
    e: DVector<f64>,
    pos: f64,
    ori: f64,
}

impl DlsSolver {
    fn residual(&self, p: &IkProblem, poses: &[Pose]) -> Residual {
        let pose = poses[p.link];
        let dp = p.target.translation - pose.transform_point(p.local);
        let dr = (p.target.rotation * pose.rotation.inverse()).log();
        let e = if self.position_only {
            DVector::from_vec(dp.to_array().to_vec())
        } else {
            DVector::from_vec(vec![dp.x, dp.y, dp.z, dr.x, dr.y, dr.z])
        };
        Residual {
            e,
            pos: dp.norm(),
            ori: if self.position_only { 0.0 } else { dr.norm() },
        }
    }
}

impl IkSolver for DlsSolver {
    fn solve(&self, p: &IkProblem, q0: &[f64], params: &IkParams) -> IkResult {
        let model = p.model;
        let mut q = q0.to_vec();
        model.clamp_to_limits(&mut q);
        let mut res = self.residual(p, &link_poses(model, p.base, &q));
        let done = |r: &Residual| r.pos <= params.pos_tol && r.ori <= params.ori_tol;
        let mut iterations = 0;
        let rows = if self.position_only { 3 } else { 6 };
        while !done(&res) && iterations < params.max_iters {
            iterations += 1;
            let poses = link_poses(model, p.base, &q);
            let full = jacobian_from_poses(model, &poses, p.link, p.local);
            let jac = full.rows(0, rows).into_owned();
            let lambda = params.damping.min(res.e.norm());
            let jjt = &jac * jac.transpose() + DMatrix::identity(rows, rows) * (lambda * lambda);
            let Some(y) = jjt.lu().solve(&res.e) else {
                break;
            };
            let mut dq = jac.transpose() * y;
            let biggest = dq.amax();
            if biggest > params.step_clamp {
                dq *= params.step_clamp / biggest;
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..12 {
                let mut cand: Vec<f64> = q.iter().zip(dq.iter()).map(|(a, d)| a + alpha * d).collect();
                model.clamp_to_limits(&mut cand);
                let r = self.residual(p, &link_poses(model, p.base, &cand));
                if r.e.norm() <= res.e.norm() {
                    q = cand;
                    res = r;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        IkResult {
            converged: done(&res),
            q,
            iterations,
            pos_error: res.pos,
            ori_error: res.ori,
        }
    }
}

/// Named IK solvers. Ships with `dls` (full pose) and `dls_position`.
#[derive(Clone)]
pub struct IkRegistry {
    solvers: BTreeMap<String, Arc<dyn IkSolver>>,
}

impl Default for IkRegistry {
    fn default() -> Self {
        let mut r = Self {
            solvers: BTreeMap::new(),
        };
        r.register("dls", Arc::new(DlsSolver { position_only: false }));
        r.register("dls_position", Arc::new(DlsSolver { position_only: true }));
        r
    }
}

impl IkRegistry {
    pub fn register(&mut self, name: &str, solver: Arc<dyn IkSolver>) {
        self.solvers.insert(name.to_string(), solver);
    }

    pub fn names(&self) -> Vec<String> {
        self.solvers.keys().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn IkSolver>, KinError> {
        self.solvers
            .get(name)
            .cloned()
            .ok_or_else(|| KinError::UnknownSolver(name.to_string()))
    }

    pub fn solve(&self, name: &str, problem: &IkProblem, q0: &[f64], params: &IkParams) -> Result<IkResult, KinError> {
        let solver = self.get(name)?;
        params.validate()?;
        if q0.len() != problem.model.ndof() {
            return Err(KinError::DofMismatch {
                expected: problem.model.ndof(),
                got: q0.len(),
            });
        }
        if problem.link >= problem.model.links.len() {
            return Err(KinError::UnknownLink(problem.link.to_string()));
        }
        Ok(solver.solve(problem, q0, params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{assets_dir, parse_urdf};

    fn two_link() -> RobotModel {
        parse_urdf(&std::fs::read_to_string(assets_dir().join("two_link_arm.urdf")).unwrap()).unwrap()
    }

    fn problem(m: &RobotModel, target: Vec3) -> IkProblem<'_> {
        IkProblem {
            model: m,
            base: &Pose::IDENTITY,
            link: m.link_index("tool").unwrap(),
            local: Vec3::ZERO,
            target: Pose::from_translation(target),
        }
    }

    #[test]
    fn fixed_point_needs_no_iterations() {
        let m = two_link();
        let q0 = [0.4, 0.7];
        let p = link_poses(&m, &Pose::IDENTITY, &q0)[m.link_index("tool").unwrap()];
        let mut prob = problem(&m, p.translation);
        prob.target = p;
        let r = IkRegistry::default()
            .solve("dls", &prob, &q0, &IkParams::default())
            .unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.q, q0);
    }

    #[test]
    fn reachable_planar_target_matches_closed_form() {
        let m = two_link();
        let target = Vec3::new(0.6, 0.3, 0.0);
        let r = IkRegistry::default()
            .solve("dls_position", &problem(&m, target), &[0.3, 0.5], &IkParams::default())
            .unwrap();
        assert!(r.converged, "{r:?}");
        let tool = m.link_index("tool").unwrap();
        let reached = link_poses(&m, &Pose::IDENTITY, &r.q)[tool].translation;
        assert!((reached - target).norm() <= 1e-4);
        // closed-form elbow angle: cos q2 = (x²+y²−l1²−l2²)/(2 l1 l2)
        let c2: f64 = (0.36 + 0.09 - 0.25 - 0.16) / (2.0 * 0.5 * 0.4);
        assert!((r.q[1].abs() - c2.acos()).abs() < 1e-3);
    }

    #[test]
    fn unreachable_target_points_towards_it() {
        let m = two_link();
        let r = IkRegistry::default()
            .solve(
                "dls_position",
                &problem(&m, Vec3::new(0.0, 2.0, 0.0)),
                &[0.2, 0.3],
                &IkParams::default(),
            )
            .unwrap();
        assert!(!r.converged);
        // stretched out along +y: distance 2 − 0.9
        assert!((r.pos_error - 1.1).abs() < 1e-2, "{r:?}");
    }

    #[test]
    fn unknown_solver_and_bad_length() {
        let m = two_link();
        let reg = IkRegistry::default();
        let prob = problem(&m, Vec3::X);
        assert!(matches!(
            reg.solve("trajopt", &prob, &[0.0, 0.0], &IkParams::default()),
            Err(KinError::UnknownSolver(_))
        ));
        assert!(matches!(
            reg.solve("dls", &prob, &[0.0], &IkParams::default()),
            Err(KinError::DofMismatch { .. })
        ));
    }
}

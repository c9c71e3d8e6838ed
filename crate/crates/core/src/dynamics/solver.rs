//! Sequential-impulse velocity solver.

use crate::math::{mat3_mul_vec, Mat3, Vec3};
use crate::scene::PhysicsParams;

#[derive(Debug, Clone, Copy)]
pub(super) struct SolverBody {
    pub inv_mass: f64,
    pub inv_inertia: Mat3,
    pub v: Vec3,
    pub w: Vec3,
    pub com: Vec3,
}

impl SolverBody {
    pub fn moving(inv_mass: f64, inv_inertia: Mat3, v: Vec3, w: Vec3, com: Vec3) -> Self {
        Self {
            inv_mass,
            inv_inertia,
            v,
            w,
            com,
        }
    }

    /// Infinite-mass collider with a prescribed velocity.
    pub fn kinematic(v: Vec3, w: Vec3, com: Vec3) -> Self {
        Self::moving(0.0, [[0.0; 3]; 3], v, w, com)
    }

    fn velocity_at(&self, r: Vec3) -> Vec3 {
        self.v + self.w.cross(r)
    }

    fn apply(&mut self, impulse: Vec3, r: Vec3) {
        if self.inv_mass == 0.0 {
            return;
        }
        self.v += impulse * self.inv_mass;
        self.w += mat3_mul_vec(&self.inv_inertia, r.cross(impulse));
    }

    fn response(&self, r: Vec3, dir: Vec3) -> f64 {
        if self.inv_mass == 0.0 {
            return 0.0;
        }
        let rn = r.cross(dir);
        self.inv_mass + mat3_mul_vec(&self.inv_inertia, rn).cross(r).dot(dir)
    }
}

#[derive(Debug, Clone, Copy)]
pub(super) struct Constraint {
    pub a: usize,
    pub b: usize,
    ra: Vec3,
    rb: Vec3,
    pub normal: Vec3,
    pub tangents: [Vec3; 2],
    mass_n: f64,
    mass_t: [f64; 2],
    target: f64,
    mu: f64,
    pub jn: f64,
    pub jt: [f64; 2],
}

#[allow(clippy::too_many_arguments)]
pub(super) fn prepare(
    bodies: &[SolverBody],
    a: usize,
    b: usize,
    point: Vec3,
    normal: Vec3,
    depth: f64,
    mu: f64,
    restitution: f64,
    params: &PhysicsParams,
    dt: f64,
    gravity_dv: Vec3,
    warm: Option<(f64, [f64; 2])>,
) -> Constraint {
    let (ba, bb) = (&bodies[a], &bodies[b]);
    let ra = point - ba.com;
    let rb = point - bb.com;
    let (t1, t2) = normal.orthonormal_basis();
    let eff = |d: Vec3| {
        let k = ba.response(ra, d) + bb.response(rb, d);
        if k > 0.0 {
            1.0 / k
        } else {
            0.0
        }
    };
    let vn = (bb.velocity_at(rb) - ba.velocity_at(ra)).dot(normal);
    let bias = params.baumgarte / dt * (depth - params.slop).max(0.0);
    // Restitution reflects the approach speed from before this step's gravity
    // kick; the kick is then re-applied on the way out. Reflecting the kicked
    // velocity instead would add about 2·m·g·|v|·dt of energy per bounce.
    let moving = |b: &SolverBody| if b.inv_mass > 0.0 { gravity_dv } else { Vec3::ZERO };
    let vn_pre = vn - (moving(bb) - moving(ba)).dot(normal);
    let bounce = if -vn_pre > params.restitution_threshold {
        -restitution * vn_pre + (vn - vn_pre)
    } else {
        0.0
    };
    let (jn, jt) = warm.unwrap_or((0.0, [0.0; 2]));
    Constraint {
        a,
        b,
        ra,
        rb,
        normal,
        tangents: [t1, t2],
        mass_n: eff(normal),
        mass_t: [eff(t1), eff(t2)],
        target: bias.max(bounce),
        mu,
        jn,
        jt,
    }
}

fn apply_pair(bodies: &mut [SolverBody], c: &Constraint, impulse: Vec3) {
    bodies[c.a].apply(-impulse, c.ra);
    bodies[c.b].apply(impulse, c.rb);
}

fn relative_velocity(bodies: &[SolverBody], c: &Constraint) -> Vec3 {
    bodies[c.b].velocity_at(c.rb) - bodies[c.a].velocity_at(c.ra)
}

pub(super) fn warm_start(bodies: &mut [SolverBody], cs: &[Constraint]) {
    for c in cs {
        let p = c.normal * c.jn + c.tangents[0] * c.jt[0] + c.tangents[1] * c.jt[1];
        apply_pair(bodies, c, p);
    }
}

pub(super) fn solve(bodies: &mut [SolverBody], cs: &mut [Constraint], iterations: usize) {
    for _ in 0..iterations {
        for c in cs.iter_mut() {
            if c.mass_n == 0.0 {
                continue;
            }
            // normal: vn ≥ target, accumulated impulse ≥ 0
            let vn = relative_velocity(bodies, c).dot(c.normal);
            let old = c.jn;
            c.jn = (old + (c.target - vn) * c.mass_n).max(0.0);
            let delta = c.jn - old;
            apply_pair(bodies, c, c.normal * delta);

            // friction: accumulated tangential impulse inside the disk μ·jn
            let vrel = relative_velocity(bodies, c);
            let mut jt = c.jt;
            for k in 0..2 {
                jt[k] -= vrel.dot(c.tangents[k]) * c.mass_t[k];
            }
            let limit = c.mu * c.jn;
            let mag = (jt[0] * jt[0] + jt[1] * jt[1]).sqrt();
            if mag > limit {
                let s = if mag > 0.0 { limit / mag } else { 0.0 };
                jt = [jt[0] * s, jt[1] * s];
            }
            let d = [jt[0] - c.jt[0], jt[1] - c.jt[1]];
            c.jt = jt;
            apply_pair(bodies, c, c.tangents[0] * d[0] + c.tangents[1] * d[1]);
        }
    }
}

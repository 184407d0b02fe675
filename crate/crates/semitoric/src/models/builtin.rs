//! Builtin systems. All fields are quadratic, so derivatives are exact.

use std::sync::Arc;

use super::{Domain, Manifold, QuadraticField, SystemModel};

#[derive(Clone, Copy, Debug)]
pub struct BuiltinInfo {
    pub id: &'static str,
    pub manifold: Manifold,
    pub j: &'static str,
    pub h: &'static str,
    pub j_is_proper: bool,
    pub semitoric: bool,
    pub note: &'static str,
}

pub const BUILTINS: [BuiltinInfo; 5] = [
    BuiltinInfo {
        id: "spin-oscillator",
        manifold: Manifold::SphereR2,
        j: "(u^2+v^2)/2 + z",
        h: "(u*x + v*y)/2",
        j_is_proper: true,
        semitoric: true,
        note: "coupled spin-oscillator; one focus-focus point at the north pole",
    },
    BuiltinInfo {
        id: "spherical-pendulum",
        manifold: Manifold::CotangentSphere,
        j: "lz",
        h: "(lx^2+ly^2+lz^2)/2 + gz",
        j_is_proper: false,
        semitoric: false,
        note: "focus-focus at the upright position, but J is not proper",
    },
    BuiltinInfo {
        id: "s2xs2-hyperbolic",
        manifold: Manifold::SphereSphere,
        j: "z1",
        h: "x2*y2",
        j_is_proper: true,
        semitoric: false,
        note: "integrable with hyperbolic blocks",
    },
    BuiltinInfo {
        id: "cp2-toric",
        manifold: Manifold::R4,
        j: "(x1^2+xi1^2)/2",
        h: "(x2^2+xi2^2)/2",
        j_is_proper: true,
        semitoric: true,
        note: "toric CP² of size 1 in the affine chart J + H ≤ 1",
    },
    BuiltinInfo {
        id: "cp1-toric",
        manifold: Manifold::Sphere,
        j: "z",
        h: "0",
        j_is_proper: true,
        semitoric: true,
        note: "height function on S² (one degree of freedom)",
    },
];

pub fn builtin_ids() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|b| b.id)
}

pub fn builtin(id: &str) -> Option<SystemModel> {
    Some(match id {
        "spin-oscillator" => spin_oscillator(),
        "spherical-pendulum" => spherical_pendulum(),
        "s2xs2-hyperbolic" => s2xs2_hyperbolic(),
        "cp2-toric" => cp2_toric(1.0),
        "cp1-toric" => cp1_toric(),
        _ => return None,
    })
}

pub fn spin_oscillator() -> SystemModel {
    let m = Manifold::SphereR2;
    let j = QuadraticField::new("(u²+v²)/2 + z", 5)
        .linear(2, 1.0)
        .product(3, 3, 0.5)
        .product(4, 4, 0.5);
    let h = QuadraticField::new("(ux+vy)/2", 5)
        .product(0, 3, 0.5)
        .product(1, 4, 0.5);
    SystemModel::new("spin-oscillator", m, Arc::new(j), Arc::new(h), true)
}

pub fn spherical_pendulum() -> SystemModel {
    let m = Manifold::CotangentSphere;
    let j = QuadraticField::new("L_z", 6).linear(5, 1.0);
    let h = QuadraticField::new("|L|²/2 + Γ_z", 6)
        .linear(2, 1.0)
        .product(3, 3, 0.5)
        .product(4, 4, 0.5)
        .product(5, 5, 0.5);
    SystemModel::new("spherical-pendulum", m, Arc::new(j), Arc::new(h), false)
}

pub fn s2xs2_hyperbolic() -> SystemModel {
    let m = Manifold::SphereSphere;
    let j = QuadraticField::new("z1", 6).linear(2, 1.0);
    let h = QuadraticField::new("x2·y2", 6).product(3, 4, 1.0);
    SystemModel::new("s2xs2-hyperbolic", m, Arc::new(j), Arc::new(h), true)
}

/// Toric CP² of size `lambda`, modelled on the ball J + H ≤ lambda of ℝ⁴.
pub fn cp2_toric(lambda: f64) -> SystemModel {
    let m = Manifold::R4;
    let j = QuadraticField::new("(x1²+ξ1²)/2", 4)
        .product(0, 0, 0.5)
        .product(1, 1, 0.5);
    let h = QuadraticField::new("(x2²+ξ2²)/2", 4)
        .product(2, 2, 0.5)
        .product(3, 3, 0.5);
    let mut s = SystemModel::new("cp2-toric", m, Arc::new(j), Arc::new(h), true);
    s.domain = Domain::HalfSpace {
        a: 1.0,
        b: 1.0,
        c: lambda,
    };
    s
}

pub fn cp1_toric() -> SystemModel {
    let m = Manifold::Sphere;
    let j = QuadraticField::new("z", 3).linear(2, 1.0);
    let h = QuadraticField::new("0", 3);
    SystemModel::new("cp1-toric", m, Arc::new(j), Arc::new(h), true)
}

#[cfg(test)]
mod tests {
    use super::super::parse_hamiltonian;
    use super::*;
    use crate::models::ScalarField;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn info_table_matches_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for info in BUILTINS {
            let s = builtin(info.id).unwrap();
            assert_eq!(s.manifold, info.manifold);
            assert_eq!(s.j_is_proper, info.j_is_proper);
            let j = parse_hamiltonian(info.j, info.manifold).unwrap();
            let h = parse_hamiltonian(info.h, info.manifold).unwrap();
            for _ in 0..20 {
                let p = info.manifold.random_point(&mut rng, 1.5);
                assert!((j.value(&p) - s.j.value(&p)).abs() < 1e-14, "{}", info.id);
                assert!((h.value(&p) - s.h.value(&p)).abs() < 1e-14, "{}", info.id);
            }
        }
    }
}

use paramsim::linalg::{c, cr, kron};
use paramsim::operators::{
    apply_frame, embed, local, partial_trace, project_two_level, HilbertSpace, OperatorError,
    QuantumState,
};
use paramsim::{CMatrix, CVector};
use proptest::prelude::*;

fn three_body() -> HilbertSpace {
    HilbertSpace::new([("q1", 3), ("q2", 2), ("c", 3)]).unwrap()
}

fn state_from(space: &HilbertSpace, amps: &[(f64, f64)]) -> QuantumState {
    let v = CVector::from_iterator(space.dim(), amps.iter().map(|&(re, im)| c(re, im)));
    QuantumState::pure_normalized(space.clone(), v).unwrap()
}

fn amplitudes(n: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n).prop_filter("non-zero", |v| {
        v.iter().any(|&(a, b)| a.abs() + b.abs() > 1e-3)
    })
}

/// Reduced density matrix by explicit index sums over the traced labels.
fn reduce_by_sums(space: &HilbertSpace, psi: &CVector, keep: &[usize]) -> CMatrix {
    let dims = space.dims();
    let kept: usize = keep.iter().map(|&k| dims[k]).product();
    let mut rho = CMatrix::zeros(kept, kept);
    let index = |levels: &[usize]| keep.iter().fold(0, |acc, &k| acc * dims[k] + levels[k]);
    for a in 0..space.dim() {
        let la = space.levels_of(a);
        for b in 0..space.dim() {
            let lb = space.levels_of(b);
            let traced_equal = (0..dims.len())
                .filter(|i| !keep.contains(i))
                .all(|i| la[i] == lb[i]);
            if traced_equal {
                rho[(index(&la), index(&lb))] += psi[a] * psi[b].conj();
            }
        }
    }
    rho
}

#[test]
fn random_partial_trace_matches_index_sums() {
    let space = three_body();
    let amps: Vec<(f64, f64)> = (0..space.dim())
        .map(|i| {
            let x = i as f64;
            ((0.7 * x).sin(), (1.3 * x + 0.2).cos())
        })
        .collect();
    let s = state_from(&space, &amps);
    let psi = s.as_vector().unwrap().clone();
    for keep in [vec!["q1", "c"], vec!["q2"], vec!["q1", "q2"]] {
        let idx: Vec<usize> = keep.iter().map(|l| space.index_of(l).unwrap()).collect();
        let reduced = partial_trace(&s, &keep).unwrap().density_matrix();
        let oracle = reduce_by_sums(&space, &psi, &idx);
        assert!((reduced - oracle).norm() < 1e-12, "keep {keep:?}");
    }
}

#[test]
fn leakage_equals_population_outside_the_qubit_subspace() {
    let space = HilbertSpace::new([("q1", 3), ("q2", 3)]).unwrap();
    let amps: Vec<(f64, f64)> = (0..9)
        .map(|i| (1.0 + 0.1 * i as f64, 0.05 * i as f64))
        .collect();
    let s = state_from(&space, &amps);
    let pops = s.populations();
    let outside: f64 = (0..9)
        .filter(|&i| space.levels_of(i).iter().any(|&l| l >= 2))
        .map(|i| pops[i])
        .sum();
    let proj = project_two_level(&s, 0.9).unwrap();
    assert!((proj.leakage - outside).abs() < 1e-12);
    assert_eq!(proj.state.space().dims(), vec![2, 2]);
    assert!((proj.state.weight() - 1.0).abs() < 1e-12);
}

#[test]
fn fully_leaked_state_cannot_be_projected() {
    let space = HilbertSpace::new([("q1", 3)]).unwrap();
    let s = QuantumState::basis(&space, &[2]).unwrap();
    assert!(matches!(
        project_two_level(&s, 0.5),
        Err(OperatorError::DegenerateProjection { .. })
    ));
}

#[test]
fn embed_identity_is_global_identity() {
    let space = three_body();
    let id = embed(&local::identity(2), "q2", &space).unwrap();
    assert_eq!(id.matrix(), &CMatrix::identity(space.dim(), space.dim()));
}

#[test]
fn embedding_follows_kronecker_order() {
    let space = HilbertSpace::new([("q1", 2), ("q2", 2), ("c", 3)]).unwrap();
    let a = local::lowering(3);
    let oracle = kron(&kron(&local::identity(2), &local::identity(2)), &a);
    assert_eq!(embed(&a, "c", &space).unwrap().matrix(), &oracle);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partial_trace_keeps_unit_trace_and_hermiticity(amps in amplitudes(18)) {
        let space = three_body();
        let s = state_from(&space, &amps);
        for keep in [["q1"], ["q2"], ["c"]] {
            let r = partial_trace(&s, &keep).unwrap().density_matrix();
            let tr: paramsim::C64 = r.trace();
            prop_assert!((tr - cr(1.0)).norm() < 1e-12);
            prop_assert!((&r - r.adjoint()).norm() < 1e-12);
            let ev = paramsim::linalg::eigvalsh(&r);
            prop_assert!(ev[0] > -1e-12);
        }
    }

    #[test]
    fn frame_rotation_preserves_populations(amps in amplitudes(4), t1 in -7.0f64..7.0, t2 in -7.0f64..7.0) {
        let space = HilbertSpace::new([("q1", 2), ("q2", 2)]).unwrap();
        let s = state_from(&space, &amps);
        let r = apply_frame(&s, &[("q1", t1), ("q2", t2)]).unwrap();
        for (a, b) in s.populations().iter().zip(r.populations()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let back = apply_frame(&r, &[("q1", -t1), ("q2", -t2)]).unwrap();
        let d = back.as_vector().unwrap() - s.as_vector().unwrap();
        prop_assert!(d.norm() < 1e-12);
    }

    #[test]
    fn frame_angles_are_additive_on_density_matrices(amps in amplitudes(4), a in -4.0f64..4.0, b in -4.0f64..4.0) {
        let space = HilbertSpace::new([("q1", 2), ("q2", 2)]).unwrap();
        let rho = state_from(&space, &amps).to_mixed();
        let twice = apply_frame(&apply_frame(&rho, &[("q2", a)]).unwrap(), &[("q2", b)]).unwrap();
        let once = apply_frame(&rho, &[("q2", a + b)]).unwrap();
        prop_assert!((twice.density_matrix() - once.density_matrix()).norm() < 1e-12);
    }
}

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use pfgsim::fock::{self, FockBasisState, FockVector, TransferMatrix};
use pfgsim::qudit::{self, QuditState, Sign};
use pfgsim::repeater::{self, RepeaterParams, Scheme, WaitingModel};

const TOL: f64 = 1e-9;

/// Unitary from the QR factorization of a complex matrix.
fn unitary(m: usize, raw: &[f64]) -> TransferMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |i, j| {
        let k = 2 * (i * m + j);
        Complex64::new(raw[k], raw[k + 1])
    }) + DMatrix::identity(m, m) * Complex64::new(0.1, 0.0);
    let q = a.qr().q();
    let rows = (0..m).map(|i| (0..m).map(|j| q[(i, j)]).collect()).collect();
    TransferMatrix::from_rows(rows).unwrap()
}

fn arb_unitary(m: usize) -> impl Strategy<Value = TransferMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, 2 * m * m).prop_map(move |raw| unitary(m, &raw))
}

/// Normalized superposition of up to three basis states with `n` photons in `m` modes.
fn arb_state(m: usize, n: usize) -> impl Strategy<Value = FockVector<f64>> {
    let term = (prop::collection::vec(0..m, n), -1.0f64..1.0, -1.0f64..1.0);
    prop::collection::vec(term, 1..=3).prop_map(move |terms| {
        let v = FockVector::from_terms(
            m,
            terms.into_iter().map(|(modes, re, im)| {
                let mut occ = vec![0u8; m];
                for i in modes {
                    occ[i] += 1;
                }
                (FockBasisState::new(occ), Complex64::new(re, im + 0.05))
            }),
        )
        .unwrap();
        if v.norm_sqr() < 1e-6 {
            FockVector::basis(FockBasisState::vacuum(m))
        } else {
            v.normalized().unwrap()
        }
    })
}

fn arb_modes_state() -> impl Strategy<Value = (TransferMatrix<f64>, TransferMatrix<f64>, FockVector<f64>)> {
    (1usize..=4, 0usize..=3).prop_flat_map(|(m, n)| (arb_unitary(m), arb_unitary(m), arb_state(m, n)))
}

fn arb_qudit(d: usize, n: usize) -> impl Strategy<Value = QuditState<f64>> {
    let term = (prop::collection::vec(0..d, n), -1.0f64..1.0, -1.0f64..1.0);
    prop::collection::vec(term, 1..=4).prop_map(move |terms| {
        QuditState::from_terms(
            d,
            n,
            terms.into_iter().map(|(digits, re, im)| (digits, Complex64::new(re, im))),
        )
        .unwrap()
    })
}

fn arb_qudit_pair() -> impl Strategy<Value = (QuditState<f64>, QuditState<f64>)> {
    (2usize..=5, 1usize..=4).prop_flat_map(|(d, n)| (arb_qudit(d, n), arb_qudit(d, n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transfer_is_a_homomorphism((u, v, psi) in arb_modes_state()) {
        let uv = u.matmul(&v).unwrap();
        let direct = fock::apply_transfer(&uv, &psi).unwrap();
        let staged = fock::apply_transfer(&u, &fock::apply_transfer(&v, &psi).unwrap()).unwrap();
        prop_assert!(direct.max_abs_diff(&staged) < TOL);
    }

    #[test]
    fn transfer_respects_tensor_products(
        (u, a) in (1usize..=3, 0usize..=2).prop_flat_map(|(m, n)| (arb_unitary(m), arb_state(m, n))),
        (v, b) in (1usize..=3, 0usize..=2).prop_flat_map(|(m, n)| (arb_unitary(m), arb_state(m, n))),
    ) {
        let lhs = fock::apply_transfer(&u.direct_sum(&v), &fock::tensor(&a, &b)).unwrap();
        let rhs = fock::tensor(&fock::apply_transfer(&u, &a).unwrap(), &fock::apply_transfer(&v, &b).unwrap());
        prop_assert!(lhs.max_abs_diff(&rhs) < TOL);
    }

    #[test]
    fn transfer_conserves_norm_and_photons((u, _v, psi) in arb_modes_state()) {
        let out = fock::apply_transfer(&u, &psi).unwrap();
        prop_assert!((out.norm_sqr() - psi.norm_sqr()).abs() < TOL);
        prop_assert_eq!(out.photon_numbers(), psi.photon_numbers());
    }

    #[test]
    fn permutation_matrices_permute_modes(
        (perm, psi) in (1usize..=4, 0usize..=3).prop_flat_map(|(m, n)| {
            (Just((0..m).collect::<Vec<_>>()).prop_shuffle(), arb_state(m, n))
        })
    ) {
        let p = TransferMatrix::<f64>::permutation(&perm).unwrap();
        let via_matrix = fock::apply_transfer(&p, &psi).unwrap();
        let via_relabel = fock::permute_modes(&psi, &perm).unwrap();
        prop_assert!(via_matrix.max_abs_diff(&via_relabel) < TOL);
    }

    #[test]
    fn diagonal_unitaries_keep_basis_states(
        (phases, occ) in (1usize..=4).prop_flat_map(|m| {
            (prop::collection::vec(0.0f64..std::f64::consts::TAU, m), prop::collection::vec(0u8..=2, m))
        })
    ) {
        let diag: Vec<Complex64> = phases.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        let u = TransferMatrix::diagonal(&diag).unwrap();
        let b = FockBasisState::new(occ.clone());
        let out = fock::apply_transfer(&u, &FockVector::basis(b.clone())).unwrap();
        let want: Complex64 = occ.iter().zip(&diag).map(|(&n, z)| z.powu(n as u32)).product();
        prop_assert_eq!(out.len(), 1);
        prop_assert!((out.amplitude(&b) - want).norm() < TOL);
    }

    #[test]
    fn mode_subset_matches_embedding(
        (u, psi, modes) in (1usize..=3, 0usize..=2).prop_flat_map(|(k, n)| {
            let total = k + 2;
            (
                arb_unitary(k),
                arb_state(total, n),
                Just((0..total).collect::<Vec<_>>()).prop_shuffle().prop_map(move |v| v[..k].to_vec()),
            )
        })
    ) {
        let total = psi.mode_count();
        let k = modes.len();
        let mut rows = vec![vec![Complex64::new(0.0, 0.0); total]; total];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = Complex64::new(1.0, 0.0);
        }
        for a in 0..k {
            for b in 0..k {
                rows[modes[a]][modes[b]] = u.get(a, b);
            }
        }
        let embedded = TransferMatrix::from_rows(rows).unwrap();
        let full = fock::apply_transfer(&embedded, &psi).unwrap();
        let partial = fock::apply_transfer_on_modes(&u, &modes, &psi).unwrap();
        prop_assert!(full.max_abs_diff(&partial) < TOL);
    }

    #[test]
    fn encode_is_an_isometry((a, b) in arb_qudit_pair()) {
        let ea = qudit::encode(&a);
        let eb = qudit::encode(&b);
        prop_assert!((a.inner(&b) - ea.inner(&eb)).norm() < 1e-12);
    }

    #[test]
    fn decode_inverts_encode((a, _b) in arb_qudit_pair()) {
        let back = qudit::decode(&qudit::encode(&a), a.dim()).unwrap();
        prop_assert_eq!(a.max_abs_diff(&back), 0.0);
    }

    #[test]
    fn closed_form_matches_recursion(
        p_g in 1e-6f64..1.0,
        p_s in 0.05f64..1.0,
        tau0 in 1e-6f64..1e-2,
        k in 0usize..=20,
    ) {
        let w = WaitingModel::new(p_g, p_s, tau0).unwrap();
        let a = w.t_level(k);
        let b = w.t_level_recursive(k);
        prop_assert!(((a - b) / b).abs() <= 1e-12);
    }

    #[test]
    fn memory_time_is_scaled_first_generation_time(
        eta in 0.8f64..1.0,
        d in 3usize..200,
        l in 50.0f64..5000.0,
    ) {
        let p = RepeaterParams::symmetric(eta, Scheme::Pairwise { d, k: 0 }, l).unwrap();
        let r = repeater::t_first_opt(&p, repeater::DEFAULT_N_MAX).unwrap();
        prop_assert_eq!(r.memory_time, p.p_s() * r.t);
        prop_assert!(r.t > 0.0);
    }
}

/// Largest `|<ab|M|ce> - diag(a,b) delta|` for `M = sum_s w_s |s><s|`.
fn resolution_deviation(d: usize, terms: &[(f64, QuditState<f64>)], diag: impl Fn(usize, usize) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            let bra = QuditState::<f64>::basis(d, &[a, b]).unwrap();
            for c in 0..d {
                for e in 0..d {
                    let ket = QuditState::<f64>::basis(d, &[c, e]).unwrap();
                    let sum: Complex64 = terms.iter().map(|(w, s)| bra.inner(s) * s.inner(&ket) * *w).sum();
                    let want = if (a, b) == (c, e) { diag(a, b) } else { 0.0 };
                    worst = worst.max((sum - want).norm());
                }
            }
        }
    }
    worst
}

fn pair_projectors(d: usize, ii: f64, phi: f64) -> Vec<(f64, QuditState<f64>)> {
    let mut terms = Vec::new();
    for i in 0..d {
        terms.push((ii, QuditState::<f64>::basis(d, &[i, i]).unwrap()));
        for j in (i + 1)..d {
            for s in Sign::BOTH {
                terms.push((1.0, qudit::pairwise_psi(d, i, j, s).unwrap()));
                terms.push((phi, qudit::pairwise_phi(d, i, j, s).unwrap()));
            }
        }
    }
    terms
}

#[test]
fn pairwise_states_resolve_the_identity() {
    for d in 2..=6 {
        // With the fusion-gate weights d^-k on |ii> and c_k on the phi projectors.
        for k in 0..=4 {
            let ck: f64 = pfgsim::pfg::c_k(d, k);
            let terms = pair_projectors(d, (d as f64).powi(-(k as i32)), ck);
            assert!(resolution_deviation(d, &terms, |_, _| 1.0) < 1e-12, "d={d} k={k}");
        }
        // Unit weights: the phi projectors cover every |ii> a further d - 1 times.
        let terms = pair_projectors(d, 1.0, 1.0);
        let dev = resolution_deviation(d, &terms, |a, b| if a == b { d as f64 } else { 1.0 });
        assert!(dev < 1e-12, "d={d}");
    }
}

//! Labelled tensors: contraction, QR/SVD factorization and the Lanczos
//! exponential checked against a dense exponential.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tree_tdvp::tdvp::krylov_expm;
use tree_tdvp::tnalg::{contract, dense_expm_apply, factorize, FactorizeMode, Leg, Tensor};
use tree_tdvp::C64;

fn random_tensor(rng: &mut ChaCha8Rng, legs: Vec<Leg>, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let v = (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    Tensor::from_vec(legs, shape, v).expect("shape")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t = random_tensor(&mut rng, vec![Leg::Site(0), Leg::Site(1), Leg::Link(3)], &[2, 2, 6]);

    for mode in [FactorizeMode::Qr, FactorizeMode::Svd] {
        let d = factorize(&t, &[Leg::Site(0), Leg::Site(1)], mode, None, Leg::Aux(0))?;
        let back = contract(&d.isometry, &d.remainder, &[(Leg::Aux(0), Leg::Aux(0))])?
            .permuted(t.legs())?;
        let mut diff = back.clone();
        diff.add_scaled(C64::new(-1.0, 0.0), &t)?;
        let mut bra = d.isometry.conj();
        bra.relabel(Leg::Aux(0), Leg::Aux(1))?;
        let gram = contract(&bra, &d.isometry, &[(Leg::Site(0), Leg::Site(0)), (Leg::Site(1), Leg::Site(1))])?;
        let (g, _) = gram.to_matrix(&[Leg::Aux(1)])?;
        let defect = (&g - &Array2::<C64>::eye(g.nrows())).iter().map(|z| z.norm()).fold(0.0, f64::max);
        println!(
            "{mode:?}: bond {}, reconstruction error {:.1e}, isometry defect {:.1e}",
            d.isometry.dim_of(Leg::Aux(0))?,
            diff.norm(),
            defect
        );
        if let Some(s) = d.singular_values {
            println!("  singular values {:?}", s.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>());
        }
    }

    let truncated = factorize(&t, &[Leg::Site(0), Leg::Site(1)], FactorizeMode::Svd, Some(2), Leg::Aux(0))?;
    let approx = contract(&truncated.isometry, &truncated.remainder, &[(Leg::Aux(0), Leg::Aux(0))])?.permuted(t.legs())?;
    let mut diff = approx;
    diff.add_scaled(C64::new(-1.0, 0.0), &t)?;
    println!("rank-2 truncation error {:.3e} of norm {:.3}", diff.norm(), t.norm());

    let n = 24;
    let mut h = Array2::<C64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let z = C64::new(rng.random::<f64>() - 0.5, if i == j { 0.0 } else { rng.random::<f64>() - 0.5 });
            h[[i, j]] = z;
            h[[j, i]] = z.conj();
        }
    }
    let v = random_tensor(&mut rng, vec![Leg::Aux(0)], &[n]);
    let tau = C64::new(0.7, 0.0);
    let apply = |x: &Tensor| -> Result<Tensor, tree_tdvp::tdvp::TdvpError> {
        let y = h.dot(&x.data().clone().into_dimensionality::<ndarray::Ix1>().expect("vector"));
        Ok(Tensor::new(vec![Leg::Aux(0)], y.into_dyn())?)
    };
    let k = krylov_expm(apply, &v, tau, 30, 1e-12)?;
    let exact = dense_expm_apply(&h, &v.data().clone().into_dimensionality().expect("vector"), tau)?;
    let err: f64 = k.vector.as_slice().iter().zip(exact.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    println!(
        "Lanczos exp(-iτH)v: {} vectors, estimate {:.1e}, error vs dense {:.1e}",
        k.iterations, k.error_estimate, err
    );
    Ok(())
}

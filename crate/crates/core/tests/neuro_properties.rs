use proptest::prelude::*;
use quadsync_core::genome::{decode_cpg, random_genome, GenomeKind};
use quadsync_core::neuro::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn inhibitory_pair(c: f64) -> NetworkSpec {
    let p = NeuronParams {
        t0: 0.052,
        gamma: 0.03,
        a: 2.0,
        b: 0.3,
        kappa: 4.0,
        u0: 1.0,
        c,
        d: 0.0,
        g: 0.0,
    };
    NetworkSpec::new(vec![p.clone(), p], vec![vec![0.0, -1.2], vec![-1.2, 0.0]], vec![NeuronRole::Filter; 2])
}

fn final_state(spec: &NetworkSpec, dt: f64, duration: f64) -> Vec<f64> {
    let init = NetworkState {
        u: vec![0.6, 0.1],
        v: vec![0.0, 0.0],
        t: 0.0,
    };
    let traj = simulate(spec, NeuronModel::Modified, &init, &Drive::tonic(0.0), duration, dt).unwrap();
    let last = traj.len() - 1;
    traj.u[last].iter().chain(&traj.v[last]).copied().collect()
}

#[test]
fn euler_error_halves_with_step() {
    let spec = inhibitory_pair(2.2);
    let dt = 0.002;
    let coarse = final_state(&spec, dt, 2.0);
    let mid = final_state(&spec, dt / 2.0, 2.0);
    let fine = final_state(&spec, dt / 4.0, 2.0);
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let ratio = dist(&coarse, &mid) / dist(&mid, &fine);
    assert!((ratio - 2.0).abs() <= 0.5, "error ratio {ratio}");
}

#[test]
fn mirrored_cpg_commutes_with_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let params = decode_cpg(&random_genome(GenomeKind::Cpg, &mut rng)).unwrap();
        let spec = &params.spec;
        let init = NetworkState::random(spec.n(), &mut rng);
        let fb: Vec<f64> = (0..spec.n()).map(|i| 0.01 * i as f64).collect();
        let fb_mirror: Vec<f64> = spec.mirror.iter().map(|&j| fb[j]).collect();

        let mut a = init.clone();
        let mut b = init.permuted(&spec.mirror);
        let mut ia = Integrator::new(spec, NeuronModel::Modified, DEFAULT_DT).unwrap();
        let mut ib = Integrator::new(spec, NeuronModel::Modified, DEFAULT_DT).unwrap();
        for _ in 0..500 {
            let ra = ia.step(
                &mut a,
                &StepInput {
                    i_dc: 0.5,
                    i_ext: 0.0,
                    i_fb: &fb,
                },
            );
            let rb = ib.step(
                &mut b,
                &StepInput {
                    i_dc: 0.5,
                    i_ext: 0.0,
                    i_fb: &fb_mirror,
                },
            );
            if ra.is_err() || rb.is_err() {
                assert_eq!(ra.is_err(), rb.is_err());
                break;
            }
        }
        if a.is_finite() {
            assert_eq!(a.permuted(&spec.mirror).u, b.u);
            assert_eq!(a.permuted(&spec.mirror).v, b.v);
        }
    }
}

proptest! {
    #[test]
    fn outputs_never_negative(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = decode_cpg(&random_genome(GenomeKind::Cpg, &mut rng)).unwrap();
        let init = NetworkState::random(params.spec.n(), &mut rng);
        if let Ok(traj) = simulate(&params.spec, NeuronModel::Modified, &init, &Drive::tonic(0.5), 2.0, DEFAULT_DT) {
            for n in 0..params.spec.n() {
                prop_assert!(traj.output(n).iter().all(|&h| h >= 0.0));
            }
        }
    }

    #[test]
    fn zero_state_is_fixed_for_both_models(n in 1usize..6, steps in 1usize..200) {
        let p = NeuronParams { t0: 0.052, gamma: 0.05, a: 1.0, b: 0.1, kappa: 2.0, u0: 0.5, c: 0.0, d: 0.0, g: 0.0 };
        let mut w = vec![vec![-0.7; n]; n];
        for (i, row) in w.iter_mut().enumerate() { row[i] = 0.0; }
        let spec = NetworkSpec::new(vec![p; n], w, vec![NeuronRole::Filter; n]);
        for model in [NeuronModel::Modified, NeuronModel::Classic] {
            let traj = simulate(&spec, model, &NetworkState::zeros(n), &Drive::tonic(0.0), steps as f64 * DEFAULT_DT, DEFAULT_DT).unwrap();
            prop_assert!(traj.u.iter().chain(&traj.v).all(|row| row.iter().all(|&x| x == 0.0)));
        }
    }
}

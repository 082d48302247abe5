mod common;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use irwri::acquisition::{forward_model, sample, DataSet, Discretization, Position, Survey};
use irwri::grid::{Bounds, Grid, Model};
use irwri::helmholtz::{PmlProfile, Stencil};
use irwri::scalar::diff_norm2;
use irwri::solver::Backend;
use irwri::tv::{GammaWeights, SplitState};
use irwri::wri::{
    assemble_model_system, compute_zeta, irwri_iterate, reconstruct_wavefields, residuals, update_outer_duals, Batch,
    DampingTarget, DualState, Flags, InversionState, Mode, PenaltyConfig, StepSettings,
};

struct Fixture {
    physical: Grid,
    disc: Discretization,
    survey: Survey,
    data: DataSet,
    truth: Model,
    start: Model,
}

fn velocity(physical: &Grid, blob: f64) -> Vec<f64> {
    (0..physical.len())
        .map(|i| {
            let (iz, ix) = physical.coords(i);
            let base = 1800.0 + 40.0 * iz as f64;
            let r2 = (iz as f64 - 8.0).powi(2) + (ix as f64 - 10.0).powi(2);
            base + blob * (-r2 / 8.0).exp()
        })
        .collect()
}

fn fixture() -> Fixture {
    let physical = Grid::new(16, 20, 20.0, 20.0).unwrap();
    let pad = 4;
    let disc = Discretization {
        pml: PmlProfile::with_factor(&physical, 2500.0, pad, 90.0),
        stencil: Stencil::NinePoint,
    };
    let survey = Survey {
        sources: vec![Position::new(100.0, 0.0), Position::new(280.0, 0.0)],
        receivers: (0..20).map(|i| Position::new(20.0 * i as f64, 0.0)).collect(),
        frequencies: vec![5.0, 8.0],
        ricker_peak_hz: 6.0,
    };
    let truth = Model::from_velocity(physical, &velocity(&physical, 500.0)).unwrap();
    let start = Model::from_velocity(physical, &velocity(&physical, 0.0)).unwrap();
    let data = forward_model(&truth.pad_edge(pad), &survey, &disc).unwrap();
    Fixture {
        physical,
        disc,
        survey,
        data,
        truth,
        start,
    }
}

fn batch(fx: &Fixture, freqs: &[f64]) -> Batch {
    Batch::new(fx.physical, &fx.disc, &fx.survey, &fx.data, freqs, Backend::Direct).unwrap()
}

fn rel(a: &[Complex64], b: &[Complex64]) -> f64 {
    diff_norm2(a, b) / irwri::scalar::norm2(b)
}

#[test]
fn consistent_data_reproduce_the_true_wavefield() {
    let fx = fixture();
    let b = batch(&fx, &[5.0, 8.0]);
    let truth = b.simulate(&fx.truth.values).unwrap();
    let u = reconstruct_wavefields(&b, &fx.truth.values, &b.zero_duals(), 1.0, 1e-3).unwrap();
    for (uf, tf) in u.iter().flatten().zip(truth.iter().flatten()) {
        assert!(rel(uf, tf) < 1e-9);
    }
}

#[test]
fn penalty_limits() {
    let fx = fixture();
    let b = batch(&fx, &[5.0]);
    let m = &fx.start.values;
    let physics = b.simulate(m).unwrap();
    let xi = b.xi(m, 30, 0).unwrap();
    let err = |frac: f64| {
        let u = reconstruct_wavefields(&b, m, &b.zero_duals(), 1.0, frac * xi).unwrap();
        let wave = rel(&u[0][0], &physics[0][0]);
        let fit = diff_norm2(&sample(&u[0][0], &b.receivers), &b.data[0][0]) / irwri::scalar::norm2(&b.data[0][0]);
        (wave, fit)
    };
    let (wave_small, fit_small) = err(1e-9);
    let (wave_large, fit_large) = err(1e9);
    // a large weight on the wave equation recovers A^{-1} b, a small one fits the data
    assert!(wave_large < 1e-6, "{wave_large}");
    assert!(fit_small < 1e-6, "{fit_small}");
    assert!(wave_small > wave_large && fit_large > fit_small);
}

#[test]
fn true_model_is_a_fixed_point() {
    let fx = fixture();
    let b = batch(&fx, &[5.0, 8.0]);
    let penalty = PenaltyConfig::default();
    let bounds = Bounds::from_model_range(&fx.truth).unwrap();
    let settings = StepSettings {
        mode: Mode::Irwri,
        flags: Flags {
            bounds_on: true,
            tv_on: false,
        },
        penalty: &penalty,
        bounds: Some(&bounds),
    };
    let xi = b.xi(&fx.truth.values, 20, 0).unwrap();
    let mut state = InversionState::start(&b, fx.truth.values.clone(), 1e-5 * xi, 0);
    for _ in 0..3 {
        let rec = irwri_iterate(&b, &mut state, &settings, None).unwrap();
        assert!(rec.data_residual < 1e-12 && rec.wave_residual < 1e-12, "{rec:?}");
    }
    let drift = diff_norm2(&state.m, &fx.truth.values) / irwri::scalar::norm2(&fx.truth.values);
    assert!(drift < 1e-9, "{drift}");
}

#[test]
fn wri_keeps_duals_at_zero_and_irwri_moves_them() {
    let fx = fixture();
    let b = batch(&fx, &[5.0]);
    let penalty = PenaltyConfig::default();
    let mut settings = StepSettings {
        mode: Mode::Wri,
        flags: Flags {
            bounds_on: false,
            tv_on: true,
        },
        penalty: &penalty,
        bounds: None,
    };
    let mut state = InversionState::start(&b, fx.start.values.clone(), 10.0, 0);
    irwri_iterate(&b, &mut state, &settings, None).unwrap();
    assert!(state.duals.is_zero());
    settings.mode = Mode::Irwri;
    irwri_iterate(&b, &mut state, &settings, None).unwrap();
    assert!(!state.duals.is_zero());
}

#[test]
fn dual_update_is_the_stated_increment() {
    let fx = fixture();
    let b = batch(&fx, &[5.0, 8.0]);
    let m = &fx.start.values;
    let u = reconstruct_wavefields(&b, m, &b.zero_duals(), 1.0, 1.0).unwrap();
    let mut duals = b.zero_duals();
    assert_eq!(duals, DualState::zeros(2, 2, 20, b.grid.len()));
    update_outer_duals(&b, &mut duals, m, &u, 0.5);
    let before = duals.clone();
    update_outer_duals(&b, &mut duals, m, &u, 0.5);
    let m_ext = b.extend(m);
    for f in 0..b.n_freq() {
        for s in 0..b.n_src() {
            let au = b.ops[f].apply_a(&m_ext, &u[f][s]);
            for i in 0..au.len() {
                let want = before.b_dual[f][s][i] + (b.sources[f][s][i] - au[i]) * 0.5;
                assert_eq!(duals.b_dual[f][s][i], want);
            }
            let pu = sample(&u[f][s], &b.receivers);
            for (i, p) in pu.iter().enumerate() {
                let want = before.d_dual[f][s][i] + (b.data[f][s][i] - p) * 0.5;
                assert_eq!(duals.d_dual[f][s][i], want);
            }
        }
    }
}

#[test]
fn model_system_is_symmetric_and_sums_over_frequencies() {
    let fx = fixture();
    let m = &fx.start.values;
    let both = batch(&fx, &[5.0, 8.0]);
    let u = reconstruct_wavefields(&both, m, &both.zero_duals(), 1.0, 1.0).unwrap();
    let split = SplitState::from_model(&fx.physical, m, None);
    let gw = GammaWeights { gamma0: 0.0, gamma: 0.0 };
    let sys = assemble_model_system(&both, m, &u, &both.zero_duals(), &split, gw, 2.0, 0.0).unwrap();

    let dense = sys.h.to_dense();
    let scale = sys.h.max_abs();
    for (i, row) in dense.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!((v - dense[j][i]).abs() <= 1e-13 * scale);
        }
    }

    let mut h_sum = vec![vec![0.0; m.len()]; m.len()];
    let mut g_sum = vec![0.0; m.len()];
    for (f, hz) in [5.0, 8.0].into_iter().enumerate() {
        let one = batch(&fx, &[hz]);
        let part = assemble_model_system(&one, m, &u[f..f + 1].to_vec(), &one.zero_duals(), &split, gw, 2.0, 0.0)
            .unwrap();
        for (acc, row) in h_sum.iter_mut().zip(part.h.to_dense()) {
            acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
        g_sum.iter_mut().zip(&part.g).for_each(|(a, v)| *a += v);
    }
    for (row, want) in dense.iter().zip(&h_sum) {
        for (v, w) in row.iter().zip(want) {
            assert!((v - w).abs() <= 1e-13 * scale);
        }
    }
    let g_scale = sys.g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for (v, w) in sys.g.iter().zip(&g_sum) {
        assert!((v - w).abs() <= 1e-13 * g_scale);
    }
}

#[test]
fn zeta_is_quadratic_in_the_wavefield() {
    let fx = fixture();
    let b = batch(&fx, &[5.0]);
    let u = b.simulate(&fx.start.values).unwrap();
    let doubled: Vec<Vec<Vec<Complex64>>> = u
        .iter()
        .map(|f| f.iter().map(|s| s.iter().map(|v| v * 2.0).collect()).collect())
        .collect();
    let z = compute_zeta(&b, &u).unwrap();
    assert!(z > 0.0);
    assert!((compute_zeta(&b, &doubled).unwrap() - 4.0 * z).abs() <= 1e-12 * z);
}

#[test]
fn extension_and_fold_are_adjoint() {
    let fx = fixture();
    let b = batch(&fx, &[5.0]);
    let x: Vec<f64> = (0..fx.physical.len()).map(|i| (i as f64 * 0.37).sin()).collect();
    let y: Vec<f64> = (0..b.grid.len()).map(|i| (i as f64 * 0.11).cos()).collect();
    let ex = b.extend(&x);
    let lhs: f64 = ex.iter().zip(&y).map(|(a, c)| a * c).sum();
    let rhs: f64 = x.iter().zip(b.fold(&y)).map(|(a, c)| a * c).sum();
    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    assert_eq!(ex, Model::unchecked(fx.physical, x).pad_edge(b.pad).values);
}

#[test]
fn objective_and_residuals_are_finite() {
    let fx = fixture();
    let b = batch(&fx, &[5.0, 8.0]);
    let penalty = PenaltyConfig::default();
    let bounds = Bounds::from_model_range(&fx.truth).unwrap();
    let settings = StepSettings {
        mode: Mode::Irwri,
        flags: Flags {
            bounds_on: true,
            tv_on: true,
        },
        penalty: &penalty,
        bounds: Some(&bounds),
    };
    let xi = b.xi(&fx.start.values, 20, 0).unwrap();
    let mut state = InversionState::start(&b, fx.start.values.clone(), 1e-5 * xi, 0);
    for _ in 0..4 {
        let rec = irwri_iterate(&b, &mut state, &settings, None).unwrap();
        assert!(rec.objective_j.is_finite() && rec.objective_j >= 0.0);
        assert!(state.m.iter().all(|v| v.is_finite()));
        assert!(bounds.contains(&state.split.p0));
        let u = reconstruct_wavefields(&b, &state.m, &state.duals, state.lambda0, state.lambda1).unwrap();
        let (d, w) = residuals(&b, &state.m, &u);
        assert!(d.is_finite() && w.is_finite());
    }
}

type Fields = Vec<Vec<Complex64>>;

fn random_fields(rng: &mut ChaCha8Rng, like: &Fields, scale: f64) -> Fields {
    like.iter()
        .map(|f| f.iter().map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale).collect())
        .collect()
}

fn max_norm(x: &[Complex64]) -> f64 {
    x.iter().fold(0.0, |a, v| a.max(v.norm()))
}

#[test]
fn irwri_step_with_duals_matches_dense_reference() {
    let fx = fixture();
    let b = batch(&fx, &[5.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m0 = fx.start.values.clone();
    let lambda1 = 1e-5 * b.xi(&m0, 20, 0).unwrap();
    let alpha = 0.5;
    let penalty = PenaltyConfig {
        gamma_over_lambda1_init: 0.0,
        gamma_floor: 0.0,
        damping_frac: 0.05,
        damping_target: DampingTarget::Zero,
        alpha,
        ..PenaltyConfig::default()
    };
    let settings = StepSettings {
        mode: Mode::Irwri,
        flags: Flags {
            bounds_on: false,
            tv_on: false,
        },
        penalty: &penalty,
        bounds: None,
    };
    let mut state = InversionState::start(&b, m0.clone(), lambda1, 0);
    let d_scale = max_norm(&b.data[0][0]);
    let b_scale = max_norm(&b.sources[0][0]);
    state.duals.d_dual[0] = random_fields(&mut rng, &state.duals.d_dual[0], 0.1 * d_scale);
    state.duals.b_dual[0] = random_fields(&mut rng, &state.duals.b_dual[0], 1e-3 * b_scale);
    let duals0 = state.duals.clone();
    irwri_iterate(&b, &mut state, &settings, None).unwrap();

    let op = &b.ops[0];
    let n = b.grid.len();
    let np = fx.physical.len();
    let a0 = op.assemble_a_values(&b.extend(&m0)).unwrap().to_dense();
    let mut normal = common::dense::gram(&a0, lambda1);
    for &r in &b.receivers {
        normal[r][r] += 1.0;
    }
    let ext: Vec<Vec<f64>> = (0..np)
        .map(|j| {
            let mut e = vec![0.0; np];
            e[j] = 1.0;
            b.extend(&e)
        })
        .collect();

    let mut u_ref = Vec::new();
    let mut bd_half = Vec::new();
    let mut h = vec![vec![0.0; np]; np];
    let mut g = vec![0.0; np];
    for s in 0..b.n_src() {
        let target_b: Vec<Complex64> = b.sources[0][s].iter().zip(&duals0.b_dual[0][s]).map(|(x, y)| x + y).collect();
        let mut rhs = common::dense::adjoint_mul(&a0, &target_b, lambda1);
        for (k, &r) in b.receivers.iter().enumerate() {
            rhs[r] += b.data[0][s][k] + duals0.d_dual[0][s][k];
        }
        let u = common::dense::solve(normal.clone(), rhs);
        let au: Vec<Complex64> = a0.iter().map(|row| row.iter().zip(&u).map(|(x, y)| x * y).sum()).collect();
        let half: Vec<Complex64> = duals0.b_dual[0][s]
            .iter()
            .zip(&b.sources[0][s])
            .zip(&au)
            .map(|((bd, bs), a)| bd + (bs - a) * alpha)
            .collect();
        let lap = op.apply_a(&vec![0.0; n], &u);
        let l = op.apply_l(&u).unwrap().to_dense();
        let le: Vec<Vec<Complex64>> = (0..n)
            .map(|i| (0..np).map(|j| (0..n).map(|k| l[i][k] * ext[j][k]).sum::<Complex64>()).collect())
            .collect();
        let y: Vec<Complex64> = (0..n).map(|k| b.sources[0][s][k] + half[k] - lap[k]).collect();
        for i in 0..np {
            for j in 0..np {
                h[i][j] += lambda1 * (0..n).map(|k| (le[k][i].conj() * le[k][j]).re).sum::<f64>();
            }
            g[i] += lambda1 * (0..n).map(|k| (le[k][i].conj() * y[k]).re).sum::<f64>();
        }
        u_ref.push(u);
        bd_half.push(half);
    }
    let zeta = compute_zeta(&b, &vec![u_ref.clone()]).unwrap();
    for (i, row) in h.iter_mut().enumerate() {
        row[i] += 0.05 * zeta * lambda1;
    }
    let m_ref: Vec<f64> = common::dense::solve(
        h.iter().map(|r| r.iter().map(|&v| Complex64::new(v, 0.0)).collect()).collect(),
        g.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    )
    .iter()
    .map(|v| v.re)
    .collect();

    let num: f64 = state.m.iter().zip(&m_ref).map(|(a, c)| (a - c).powi(2)).sum();
    let den: f64 = m_ref.iter().map(|v| v * v).sum();
    let m_err = (num / den).sqrt();
    assert!(m_err < 1e-9, "model {m_err}");

    let a1 = op.assemble_a_values(&b.extend(&m_ref)).unwrap().to_dense();
    for s in 0..b.n_src() {
        let u = &u_ref[s];
        let au: Vec<Complex64> = a1.iter().map(|row| row.iter().zip(u).map(|(x, y)| x * y).sum()).collect();
        let bd: Vec<Complex64> = (0..n).map(|k| bd_half[s][k] + (b.sources[0][s][k] - au[k]) * alpha).collect();
        let pu: Vec<Complex64> = b.receivers.iter().map(|&r| u[r]).collect();
        let dd: Vec<Complex64> = (0..pu.len())
            .map(|k| duals0.d_dual[0][s][k] + (b.data[0][s][k] - pu[k]) * (2.0 * alpha))
            .collect();
        assert!(rel(&state.duals.b_dual[0][s], &bd) < 1e-8, "b dual {}", rel(&state.duals.b_dual[0][s], &bd));
        assert!(rel(&state.duals.d_dual[0][s], &dd) < 1e-8, "d dual {}", rel(&state.duals.d_dual[0][s], &dd));
    }
}

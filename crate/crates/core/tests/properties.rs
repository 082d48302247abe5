use proptest::prelude::*;

use irwri::continuation::{gamma_schedule, make_schedule, stopping_check, BatchSchedule, Decision};
use irwri::grid::{slowness2_to_velocity, velocity_to_slowness2, Bounds, Grid, Model};
use irwri::io::{self, DType, GridHeader};
use irwri::tv::{self, SplitState};
use num_complex::Complex64;

fn grid_and_values() -> impl Strategy<Value = (Grid, Vec<f64>)> {
    (3usize..12, 3usize..12).prop_flat_map(|(nz, nx)| {
        let g = Grid::new(nz, nx, 1.0, 1.0).unwrap();
        (Just(g), prop::collection::vec(-5.0f64..5.0, nz * nx))
    })
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #[test]
    fn tv_ignores_constants((g, m) in grid_and_values(), c in -10.0f64..10.0) {
        let shifted: Vec<f64> = m.iter().map(|v| v + c).collect();
        prop_assert!(close(tv::tv_norm(&g, &shifted), tv::tv_norm(&g, &m), 1e-12));
    }

    #[test]
    fn tv_is_absolutely_homogeneous((g, m) in grid_and_values(), a in -4.0f64..4.0) {
        let scaled: Vec<f64> = m.iter().map(|v| v * a).collect();
        prop_assert!(close(tv::tv_norm(&g, &scaled), a.abs() * tv::tv_norm(&g, &m), 1e-12));
    }

    #[test]
    fn velocity_round_trip(v in prop::collection::vec(1000.0f64..6000.0, 9)) {
        let g = Grid::new(3, 3, 5.0, 5.0).unwrap();
        let back = slowness2_to_velocity(&velocity_to_slowness2(g, &v).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&v) {
            prop_assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn gradient_adjoints((g, x) in grid_and_values(), seed in any::<u64>()) {
        let w: Vec<f64> = (0..g.len()).map(|i| ((i as u64).wrapping_mul(seed | 1) % 1000) as f64 / 500.0 - 1.0).collect();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let norm = |a: &[f64]| dot(a, a).sqrt();
        let g1 = tv::grad1(&g, &x);
        let g2 = tv::grad2(&g, &x);
        let lhs = dot(&g1, &w) + dot(&g2, &w) + dot(&x, &w);
        let back: Vec<f64> = tv::grad1_adjoint(&g, &w)
            .iter()
            .zip(tv::grad2_adjoint(&g, &w))
            .zip(&w)
            .map(|((a, b), c)| a + b + c)
            .collect();
        let rhs = dot(&x, &back);
        let scale = (norm(&x) * norm(&w)).max(1e-300);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * 3.0 * scale);
    }

    #[test]
    fn prox_magnitude_is_soft_thresholded(
        z in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..50),
        t in 0.0f64..2.0,
    ) {
        let (z1, z2): (Vec<f64>, Vec<f64>) = z.into_iter().unzip();
        let (p1, p2) = tv::prox_isotropic_tv(&z1, &z2, t);
        for i in 0..z1.len() {
            let r = z1[i].hypot(z2[i]);
            let want = (r - t).max(0.0);
            prop_assert!((p1[i].hypot(p2[i]) - want).abs() <= 1e-14 * r.max(1.0));
        }
    }

    #[test]
    fn prox_is_nonexpansive(
        z in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0), 1..50),
        t in 0.0f64..2.0,
    ) {
        let a1: Vec<f64> = z.iter().map(|v| v.0).collect();
        let a2: Vec<f64> = z.iter().map(|v| v.1).collect();
        let b1: Vec<f64> = z.iter().map(|v| v.2).collect();
        let b2: Vec<f64> = z.iter().map(|v| v.3).collect();
        let (pa1, pa2) = tv::prox_isotropic_tv(&a1, &a2, t);
        let (pb1, pb2) = tv::prox_isotropic_tv(&b1, &b2, t);
        let dist = |x1: &[f64], x2: &[f64], y1: &[f64], y2: &[f64]| {
            (0..x1.len()).map(|i| (x1[i] - y1[i]).powi(2) + (x2[i] - y2[i]).powi(2)).sum::<f64>().sqrt()
        };
        prop_assert!(dist(&pa1, &pa2, &pb1, &pb2) <= dist(&a1, &a2, &b1, &b2) * (1.0 + 1e-14) + 1e-15);
    }

    #[test]
    fn projection_respects_bounds_and_is_idempotent(
        x in prop::collection::vec(0.0f64..4.0, 20),
        lo in prop::collection::vec(0.5f64..1.5, 20),
        width in prop::collection::vec(0.0f64..1.5, 20),
    ) {
        let hi: Vec<f64> = lo.iter().zip(&width).map(|(l, w)| l + w).collect();
        let b = Bounds::new(lo, hi).unwrap();
        let p = tv::project_box(&x, &b);
        prop_assert!(b.contains(&p));
        prop_assert_eq!(tv::project_box(&p, &b), p);
    }

    #[test]
    fn p0_stays_in_bounds((g, m) in grid_and_values(), t in 0.0f64..1.0) {
        let m: Vec<f64> = m.iter().map(|v| v.abs() + 0.1).collect();
        let b = Bounds::uniform(g.len(), 1.0, 2.0).unwrap();
        let state = SplitState::from_model(&g, &m, Some(&b));
        prop_assert!(b.contains(&state.p0));
        let shifted: Vec<f64> = m.iter().map(|v| v * 1.7).collect();
        let next = tv::update_p(&g, &shifted, &state, Some(&b), t);
        prop_assert!(b.contains(&next.p0));
    }

    #[test]
    fn gamma_schedule_nonincreasing_above_floor(
        init in 0.01f64..10.0,
        every in 0usize..20,
        factor in 1.0f64..4.0,
        floor_frac in 0.0f64..1.0,
    ) {
        let floor = init * floor_frac;
        let mut last = f64::INFINITY;
        for k in 0..100 {
            let g = gamma_schedule(k, init, every, factor, floor);
            prop_assert!(g <= last);
            prop_assert!(g >= floor);
            last = g;
        }
    }

    #[test]
    fn schedule_batches_overlap_as_configured(
        start_steps in 1usize..10,
        len_steps in 2usize..30,
        size in 2usize..5,
        overlap_raw in 0usize..4,
    ) {
        let overlap = overlap_raw.min(size - 1);
        let df = 0.5;
        let f_start = start_steps as f64 * df;
        let f_end = f_start + len_steps as f64 * df;
        let a = make_schedule(f_start, f_end, df, size, overlap).unwrap();
        prop_assert_eq!(&a, &make_schedule(f_start, f_end, df, size, overlap).unwrap());
        prop_assert!(a.iter().all(|b| !b.is_empty() && b.len() <= size));
        prop_assert!((a[0][0] - f_start).abs() < 1e-9);
        prop_assert!((a.last().unwrap().last().unwrap() - f_end).abs() < 1e-9);
        for pair in a.windows(2) {
            let shared = pair[1].iter().filter(|f| pair[0].iter().any(|g| (*g - **f).abs() < 1e-9)).count();
            prop_assert_eq!(shared, overlap);
        }
    }

    #[test]
    fn no_stop_before_first_iteration(d in 0.0f64..1.0, b in 0.0f64..1.0, k_max in 1usize..20) {
        let sched = BatchSchedule { batches: vec![vec![1.0]], k_max, eps_b: 1.0, eps_d: 1.0 };
        prop_assert_eq!(stopping_check(d, b, 0, &sched), Decision::Continue);
    }

    #[test]
    fn grid_files_round_trip((g, m) in grid_and_values(), im in -1.0f64..1.0) {
        let dir = tempfile::tempdir().unwrap();
        let model = Model::unchecked(g, m.iter().map(|v| v.abs() + 1e-9).collect());
        let path = dir.path().join("m.bin");
        io::write_model(&path, &model).unwrap();
        prop_assert_eq!(io::read_model(&path).unwrap(), model);

        let c: Vec<Complex64> = m.iter().map(|&v| Complex64::new(v, v * im)).collect();
        let header = GridHeader::for_grid(&g, DType::C128);
        let cpath = dir.path().join("c.bin");
        io::write_complex_grid(&cpath, &header, &c).unwrap();
        let (h2, c2) = io::read_complex_grid(&cpath).unwrap();
        prop_assert_eq!(h2, header);
        prop_assert_eq!(c2, c);
    }
}

use alkatherm_core::control::{
    pid_i_step, pid_step, FeedforwardMap, Measurement, Mpc, MpcConfig, PidConfig, PidState,
};
use alkatherm_core::linalg::Matrix;
use alkatherm_core::lpv::{build_table, LpvTable};
use alkatherm_core::params::{Preset, SystemParameters};
use alkatherm_core::qp::{kkt_residual, solve_box_qp, BoxQp, QpOptions, QpStatus};
use proptest::prelude::*;

fn taylor_expm(a: &Matrix, terms: usize) -> Matrix {
    let n = a.rows();
    let mut sum = Matrix::identity(n);
    let mut term = Matrix::identity(n);
    for k in 1..terms {
        term = (&term * a).scale(1.0 / k as f64);
        sum = &sum + &term;
    }
    sum
}

/// Accelerated projected gradient, run until the fixed-point gap vanishes.
fn projected_gradient(qp: &BoxQp) -> Vec<f64> {
    let n = qp.dim();
    let lip = qp.h.norm_one().max(1e-12);
    let project = |v: &mut Vec<f64>| {
        for i in 0..n {
            v[i] = v[i].clamp(qp.lower[i], qp.upper[i]);
        }
    };
    let mut x: Vec<f64> = (0..n).map(|i| 0.5 * (qp.lower[i] + qp.upper[i])).collect();
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let g = qp.h.mul_vec(&y);
        let mut next: Vec<f64> = (0..n).map(|i| y[i] - (g[i] + qp.f[i]) / lip).collect();
        project(&mut next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let gap = (0..n).map(|i| (next[i] - x[i]).abs()).fold(0.0, f64::max);
        // restart momentum when the objective goes up
        let mom = if qp.objective(&next) > qp.objective(&x) {
            0.0
        } else {
            (t - 1.0) / t_next
        };
        y = (0..n).map(|i| next[i] + mom * (next[i] - x[i])).collect();
        if mom == 0.0 {
            t = 1.0;
        } else {
            t = t_next;
        }
        x = next;
        if gap < 1e-14 {
            break;
        }
    }
    x
}

fn random_qp(
    n: usize,
    entries: &[f64],
    lin: &[f64],
    lo: &[f64],
    width: &[f64],
    ridge: f64,
) -> BoxQp {
    let m = Matrix::from_row_slice(n, n, &entries[..n * n]);
    let mut h = &m.transpose() * &m;
    h = h.scale(1.0 / n as f64);
    for i in 0..n {
        h[(i, i)] += ridge;
    }
    // symmetrize exactly
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    let lower: Vec<f64> = lo[..n].to_vec();
    let upper: Vec<f64> = (0..n).map(|i| lo[i] + width[i]).collect();
    BoxQp::new(h, lin[..n].to_vec(), lower, upper).unwrap()
}

fn lab_table() -> &'static LpvTable {
    static TABLE: std::sync::OnceLock<LpvTable> = std::sync::OnceLock::new();
    TABLE.get_or_init(|| {
        let p = SystemParameters::lab_5nm3();
        build_table(&p, 70.0, 10, 120.0, Preset::Lab5Nm3.ambient()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn expm_matches_taylor_series(
        n in 1usize..=6,
        entries in prop::collection::vec(-0.5f64..0.5, 36),
        shift in 0.05f64..1.0,
    ) {
        let mut a = Matrix::from_row_slice(n, n, &entries[..n * n]);
        // push the spectrum into the left half plane
        for i in 0..n {
            a[(i, i)] -= shift + 0.5 * n as f64 * 0.5;
        }
        let fast = a.expm().unwrap();
        let slow = taylor_expm(&a, 50);
        let scale = slow.max_abs().max(1e-300);
        for i in 0..n {
            for j in 0..n {
                prop_assert!((fast[(i, j)] - slow[(i, j)]).abs() / scale < 1e-10);
            }
        }
    }

    #[test]
    fn box_qp_matches_projected_gradient(
        n in 1usize..=60,
        entries in prop::collection::vec(-1.0f64..1.0, 3600),
        lin in prop::collection::vec(-2.0f64..2.0, 60),
        lo in prop::collection::vec(-1.0f64..0.5, 60),
        width in prop::collection::vec(0.1f64..2.0, 60),
        ridge in 0.05f64..1.0,
    ) {
        let qp = random_qp(n, &entries, &lin, &lo, &width, ridge);
        let sol = solve_box_qp(&qp, &QpOptions::default()).unwrap();
        prop_assert_eq!(sol.status, QpStatus::Optimal);
        prop_assert!(sol.kkt_residual < 1e-8, "kkt {}", sol.kkt_residual);
        let oracle = projected_gradient(&qp);
        for i in 0..n {
            prop_assert!((sol.x[i] - oracle[i]).abs() < 1e-6, "x[{}] {} vs {}", i, sol.x[i], oracle[i]);
        }
        // the reported residual is reproducible from the returned point
        prop_assert_eq!(kkt_residual(&qp, &sol.x, &sol.z_lower, &sol.z_upper), sol.kkt_residual);
    }

    #[test]
    fn box_qp_merit_roughly_decreases(
        n in 1usize..=20,
        entries in prop::collection::vec(-1.0f64..1.0, 400),
        lin in prop::collection::vec(-2.0f64..2.0, 20),
        lo in prop::collection::vec(-1.0f64..0.5, 20),
        width in prop::collection::vec(0.1f64..2.0, 20),
    ) {
        let qp = random_qp(n, &entries, &lin, &lo, &width, 0.0);
        let sol = solve_box_qp(&qp, &QpOptions::default()).unwrap();
        prop_assert!(sol.status != QpStatus::Degenerate);
        prop_assert!(sol.kkt_residual < 1e-8, "kkt {}", sol.kkt_residual);
        let best = sol.merit_trace.iter().cloned().fold(f64::INFINITY, f64::min);
        let last = *sol.merit_trace.last().unwrap();
        prop_assert!(last <= best * 1.1 + 1e-15);
    }

    #[test]
    fn pid_outputs_stay_in_range(
        kp in 0.0f64..50.0,
        ki in 0.0f64..0.1,
        kd in 0.0f64..1e4,
        tf in 0.0f64..120.0,
        t_set in 40.0f64..95.0,
        temps in proptest::collection::vec(-20.0f64..150.0, 1..200),
        currents in proptest::collection::vec(0.0f64..1000.0, 200),
    ) {
        let cfg = PidConfig {
            kp, ki, kd, tau_s: 1.0, tf_s: tf, t_set_c: t_set,
            measurement: Measurement::AfterStack, out_min: 0.0, out_max: 1.0,
        };
        let ff = FeedforwardMap::lab();
        let mut a = PidState::new(temps[0], &cfg);
        let mut b = PidState::new(temps[0], &cfg);
        for (t, i) in temps.iter().zip(&currents) {
            let y = pid_step(*t, &cfg, &mut a);
            let z = pid_i_step(*t, *i, &cfg, &ff, &mut b);
            prop_assert!((0.0..=1.0).contains(&y), "pid {y}");
            prop_assert!((0.0..=1.0).contains(&z), "pid-i {z}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn mpc_outputs_stay_in_range(
        offsets in proptest::collection::vec(-5.0f64..5.0, 3),
        currents in proptest::collection::vec(150.0f64..720.0, 30),
        u0 in 0.0f64..1.0,
        r in 0.0f64..1000.0,
    ) {
        let table = lab_table();
        let e = table.entry_for(720.0);
        let xs = e.x_star();
        let x0 = [xs[0] + offsets[0], xs[1] + offsets[1], xs[2] + offsets[2]];
        let cfg = MpcConfig { r, ..MpcConfig::lab() };
        let mut mpc = Mpc::new(cfg, table, x0, u0).unwrap();
        for _ in 0..3 {
            let out = mpc.step(x0, &currents, table).unwrap();
            prop_assert!((0.0..=1.0).contains(&out.command));
            prop_assert!(out.sequence.iter().all(|u| (-1e-12..=1.0 + 1e-12).contains(u)));
        }
    }
}

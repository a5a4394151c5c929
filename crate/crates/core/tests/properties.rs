use nalgebra::Matrix2;
use num_complex::Complex64;
use proptest::prelude::*;

use ispg_core::cascade::{cascade, compare_profiles, oracle_skew};
use ispg_core::config::ChannelConfig;
use ispg_core::ispg::{counter_sweep, evaluate_profile, total_skew_direct};
use ispg_core::mode_solver::{characteristic_residual, derive_segment, estimate_delta_t_s, solve_modes};
use ispg_core::skew::{extract_skew, unwrap};
use ispg_core::sparam::{synth_segment, to_mixed_mode, SegmentSynthParams};
use ispg_core::touchstone::{read_touchstone, to_four_port, write_touchstone, DataFormat, PortMap};
use ispg_core::{
    make_grid, AsymmetryPerturbation, Block, Error, FourPortResponse, FrequencyGrid, IspgGraph,
    LcMatrices, SegmentSpec, Spacing,
};

const PS: f64 = 1e-12;

fn grid(stop: f64, n: usize) -> FrequencyGrid {
    make_grid(10e6, stop, n, Spacing::Linear).unwrap()
}

fn ps(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo..hi).prop_map(|v| v * PS)
}

fn segment() -> impl Strategy<Value = SegmentSpec> {
    prop_oneof![
        ps(-5.0, 5.0).prop_map(SegmentSpec::lc),
        (ps(1.0, 100.0), ps(-5.0, 5.0)).prop_map(|(dt, ts)| SegmentSpec::sc(dt, ts)),
    ]
}

fn graph(max: usize) -> impl Strategy<Value = IspgGraph> {
    prop::collection::vec(segment(), 1..=max).prop_map(|n| IspgGraph::new(n).unwrap())
}

fn synth_params() -> impl Strategy<Value = SegmentSynthParams> {
    (0.0..0.3f64, ps(-100.0, 100.0), ps(0.0, 500.0), ps(-5.0, 5.0))
        .prop_map(|(d, dt, cd, tl)| SegmentSynthParams::new((1.0 - d) * (1.0 - d), dt, cd, tl).unwrap())
}

fn symmetric_lc() -> impl Strategy<Value = LcMatrices> {
    (200.0..600.0f64, 0.0..0.4f64, 50.0..150.0f64, 0.05..0.4f64).prop_map(|(l, kl, c, kc)| {
        LcMatrices::from_rows(
            [[l * 1e-9, kl * l * 1e-9], [kl * l * 1e-9, l * 1e-9]],
            [[c * 1e-12, -kc * c * 1e-12], [-kc * c * 1e-12, c * 1e-12]],
        )
        .unwrap()
    })
}

/// Symmetric pair with diagonal L, so a C11 perturbation only moves P11.
fn symmetric_c_only() -> impl Strategy<Value = LcMatrices> {
    (200.0..600.0f64, 50.0..150.0f64, 0.05..0.4f64).prop_map(|(l, c, kc)| {
        LcMatrices::from_rows(
            [[l * 1e-9, 0.0], [0.0, l * 1e-9]],
            [[c * 1e-12, -kc * c * 1e-12], [-kc * c * 1e-12, c * 1e-12]],
        )
        .unwrap()
    })
}

fn random_block() -> impl Strategy<Value = Block> {
    prop::array::uniform8(-1.0..1.0f64).prop_map(|v| {
        Matrix2::new(
            Complex64::new(v[0], v[1]),
            Complex64::new(v[2], v[3]),
            Complex64::new(v[4], v[5]),
            Complex64::new(v[6], v[7]),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_round_trip(g in graph(8), reverse in any::<bool>()) {
        let g = if reverse { g.reversed() } else { g };
        let text = ChannelConfig::from_graph(&g, None).to_toml();
        prop_assert_eq!(ChannelConfig::parse(&text).unwrap().to_graph().unwrap(), g);
    }

    #[test]
    fn synthesized_segments_are_lossless_and_reciprocal(p in synth_params()) {
        let g = grid(100e9, 200);
        let r = synth_segment(&p, &g);
        prop_assert!(r.max_unitarity_error() <= 1e-12);
        prop_assert_eq!(r.max_reciprocity_error(), 0.0);
        let mm = to_mixed_mode(&r);
        for k in 0..g.len() {
            prop_assert!((mm.sdd21[k].norm_sqr() + mm.scd21[k].norm_sqr() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn cascades_stay_lossless(ps in prop::collection::vec(synth_params(), 1..8)) {
        let g = grid(100e9, 100);
        let segs: Vec<_> = ps.iter().map(|p| synth_segment(p, &g)).collect();
        let r = cascade(&segs).unwrap().response;
        prop_assert!(r.max_unitarity_error() <= 1e-12);
        prop_assert!(r.max_reciprocity_error() <= 1e-12);
    }

    #[test]
    fn cascade_is_associative(a in synth_params(), b in synth_params(), c in synth_params()) {
        let g = grid(100e9, 100);
        let (a, b, c) = (synth_segment(&a, &g), synth_segment(&b, &g), synth_segment(&c, &g));
        let ab = cascade(&[a.clone(), b.clone()]).unwrap().response;
        let left = cascade(&[ab, c.clone()]).unwrap().response;
        let bc = cascade(&[b.clone(), c.clone()]).unwrap().response;
        let right = cascade(&[a.clone(), bc]).unwrap().response;
        let flat = cascade(&[a, b, c]).unwrap().response;
        for k in 0..g.len() {
            prop_assert!((left.forward()[k] - flat.forward()[k]).norm() <= 1e-14);
            prop_assert!((right.forward()[k] - flat.forward()[k]).norm() <= 1e-14);
            prop_assert!((left.reverse()[k] - flat.reverse()[k]).norm() <= 1e-14);
        }
    }

    #[test]
    fn sweep_equals_double_sum(g in graph(12), f in 1e6..100e9f64) {
        let (s, trace) = counter_sweep(&g, f);
        prop_assert!((s - total_skew_direct(&g, f)).abs() <= 1e-15);
        let summed: f64 = trace.steps.iter().map(|st| st.contribution).sum();
        prop_assert!((summed - s).abs() <= 1e-15);
    }

    #[test]
    fn reversing_swaps_directions(g in graph(8)) {
        let grid = grid(70e9, 50);
        let a = evaluate_profile(&g, &grid).unwrap();
        let b = evaluate_profile(&g.reversed(), &grid).unwrap();
        prop_assert_eq!(b, a.swapped());
    }

    #[test]
    fn zero_delay_node_is_neutral(g in graph(8), at in any::<prop::sample::Index>()) {
        let grid = grid(70e9, 50);
        let mut nodes = g.nodes().to_vec();
        nodes.insert(at.index(nodes.len() + 1), SegmentSpec::lc(0.0));
        let padded = IspgGraph::new(nodes).unwrap();
        prop_assert_eq!(evaluate_profile(&padded, &grid).unwrap(), evaluate_profile(&g, &grid).unwrap());
    }

    #[test]
    fn lc_only_channels_are_flat(tls in prop::collection::vec(ps(-5.0, 5.0), 1..6)) {
        let grid = grid(70e9, 200);
        let total: f64 = tls.iter().sum();
        let g = IspgGraph::new(tls.into_iter().map(SegmentSpec::lc).collect()).unwrap();
        for p in [oracle_skew(&g, &grid).unwrap(), evaluate_profile(&g, &grid).unwrap()] {
            for v in p.skew_21().iter().chain(p.skew_12()) {
                prop_assert!((v - total).abs() <= 1e-12 * PS);
            }
        }
    }

    #[test]
    fn single_segment_is_direction_symmetric(d in 0.0..0.05f64, dt in ps(10.0, 100.0)) {
        let grid = grid(70e9, 2000);
        let p = SegmentSynthParams::new((1.0 - d) * (1.0 - d), dt, 5.0 * dt, 0.0).unwrap();
        let s = extract_skew(&synth_segment(&p, &grid)).unwrap();
        for (a, b) in s.skew_21().iter().zip(s.skew_12()) {
            prop_assert!((a - b).abs() <= 1e-3 * PS);
        }
    }

    #[test]
    fn unwrap_is_odd(phases in prop::collection::vec(-3.0..3.0f64, 2..60)) {
        let g = make_grid(1e9, 2e9, phases.len(), Spacing::Linear).unwrap();
        let mut acc = 0.0;
        let z: Vec<Complex64> = phases.iter().map(|d| { acc += d; Complex64::from_polar(1.0, acc) }).collect();
        let conj: Vec<Complex64> = z.iter().map(|v| v.conj()).collect();
        let (a, b) = (unwrap(&z, &g), unwrap(&conj, &g));
        match (a, b) {
            (Ok(a), Ok(b)) => {
                for (x, y) in a.phase.iter().zip(&b.phase) {
                    prop_assert_eq!(*x, -*y);
                }
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a.is_ok(), b.is_ok()),
        }
    }

    #[test]
    fn touchstone_round_trip(fwd in prop::collection::vec(random_block(), 1..6),
                             rev in prop::collection::vec(random_block(), 6)) {
        let n = fwd.len();
        let g = FrequencyGrid::new((0..n).map(|k| 1e9 + k as f64 * 1e8).collect()).unwrap();
        let resp = FourPortResponse::new(g, fwd.clone(), rev[..n].to_vec()).unwrap();
        for fmt in [DataFormat::Ri, DataFormat::Ma, DataFormat::Db] {
            let doc = read_touchstone(&write_touchstone(&resp, fmt), 4).unwrap();
            let (back, _) = to_four_port(&doc, &PortMap::identity()).unwrap();
            for k in 0..n {
                for (a, b) in back.forward()[k].iter().chain(back.reverse()[k].iter())
                    .zip(resp.forward()[k].iter().chain(resp.reverse()[k].iter()))
                {
                    prop_assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-300), "{:?} {} {}", fmt, a, b);
                }
            }
        }
    }

    #[test]
    fn parser_is_total(bytes in prop::collection::vec(any::<u8>(), 0..400), ports in prop::sample::select(vec![2usize, 4])) {
        let text = String::from_utf8_lossy(&bytes);
        check_structured(read_touchstone(&text, ports))?;
    }

    #[test]
    fn parser_is_total_on_mutations(seed in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..8)) {
        let mut bytes = fixture().into_bytes();
        for (at, b) in seed {
            let i = at.index(bytes.len());
            bytes[i] = b;
        }
        let text = String::from_utf8_lossy(&bytes);
        check_structured(read_touchstone(&text, 4))?;
    }

    #[test]
    fn port_swap_negates_skew(ps in prop::collection::vec(synth_params(), 1..4)) {
        let g = grid(20e9, 400);
        let segs: Vec<_> = ps.iter().map(|p| synth_segment(p, &g)).collect();
        let resp = cascade(&segs).unwrap().response;
        let doc = read_touchstone(&write_touchstone(&resp, DataFormat::Ri), 4).unwrap();
        let map = PortMap::identity();
        let (a, _) = to_four_port(&doc, &map).unwrap();
        let (b, _) = to_four_port(&doc, &map.swapped_pn()).unwrap();
        if let (Ok(a), Ok(b)) = (extract_skew(&a), extract_skew(&b)) {
            for (x, y) in a.skew_21().iter().chain(a.skew_12()).zip(b.skew_21().iter().chain(b.skew_12())) {
                prop_assert_eq!(*x, -*y);
            }
        }
    }

    #[test]
    fn symmetric_pairs_have_closed_form_modes(lc in symmetric_lc()) {
        let m = solve_modes(&lc).unwrap();
        prop_assert_eq!(m.p, 1.0);
        prop_assert_eq!(m.delta_t_s, 0.0);
        let (l, c) = (lc.l(), lc.c());
        let s_even = ((l[(0, 0)] + l[(0, 1)]) * (c[(0, 0)] + c[(0, 1)])).sqrt();
        let s_odd = ((l[(0, 0)] - l[(0, 1)]) * (c[(0, 0)] - c[(0, 1)])).sqrt();
        let (lo, hi) = (s_even.min(s_odd), s_even.max(s_odd));
        prop_assert!((m.slowness_c - lo).abs() <= 1e-12 * lo);
        prop_assert!((m.slowness_pi - hi).abs() <= 1e-12 * hi);
        prop_assert!(characteristic_residual(&lc, m.slowness_c) < 1e-10);
        prop_assert!(characteristic_residual(&lc, m.slowness_pi) < 1e-10);
    }

    #[test]
    fn scaling_keeps_modes(lc in symmetric_c_only(), e in 1e-3..5e-2f64, k in -4i32..4) {
        let mut c = *lc.c();
        c[(0, 0)] *= 1.0 + e;
        let base = LcMatrices::new(*lc.l(), c).unwrap();
        let a = 2f64.powi(k);
        let scaled = LcMatrices::new(lc.l() * a, c / a).unwrap();
        let (m0, m1) = (solve_modes(&base).unwrap(), solve_modes(&scaled).unwrap());
        prop_assert_eq!(m0.v_c, m1.v_c);
        prop_assert_eq!(m0.v_pi, m1.v_pi);
        prop_assert_eq!(m0.p, m1.p);
        prop_assert_eq!(m0.delta_t_s, m1.delta_t_s);
    }

    #[test]
    fn perturbation_estimate_is_second_order(lc in symmetric_c_only()) {
        let eps = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2];
        let errs: Vec<f64> = eps.iter().map(|&e| {
            let mut c = *lc.c();
            c[(0, 0)] *= 1.0 + e;
            let p = LcMatrices::new(*lc.l(), c).unwrap();
            let m = solve_modes(&p).unwrap();
            let est = estimate_delta_t_s(&AsymmetryPerturbation::from_lc(&p), m.v_c, m.v_pi).unwrap();
            ((1.0 - m.p.sqrt()) - est).abs()
        }).collect();
        let s = log_slope(&eps, &errs);
        prop_assert!((s - 2.0).abs() <= 0.2, "slope {} {:?}", s, errs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Physical lines with at most 5 % asymmetry joined by short flat runs.
    #[test]
    fn model_tracks_exact_cascade(
        lines in prop::collection::vec((10.0..100.0f64, 0.01..0.05f64, 0.2..1.0f64), 1..3),
        gaps in prop::collection::vec(ps(-1.0, 1.0), 3),
    ) {
        let mut nodes = vec![SegmentSpec::lc(gaps[0])];
        for (i, &(dt, d, len)) in lines.iter().enumerate() {
            let lc = LcMatrices::with_mode_targets(400e-9, 100e-12, dt * PS / len, d).unwrap();
            nodes.push(derive_segment(&lc, len, None).unwrap());
            nodes.push(SegmentSpec::lc(gaps[i + 1]));
        }
        let g = IspgGraph::new(nodes).unwrap();
        // physical lines carry nanoseconds of common delay: 10 MHz steps
        let grid = grid(70e9, 7000);
        let c = compare_profiles(&evaluate_profile(&g, &grid).unwrap(), &oracle_skew(&g, &grid).unwrap()).unwrap();
        prop_assert!(c.rms <= 0.05 * c.peak_to_peak_ref, "rms {:e} p2p {:e}", c.rms, c.peak_to_peak_ref);
    }
}

fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    num / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>()
}

fn fixture() -> String {
    let g = grid(10e9, 3);
    let p = SegmentSynthParams::new(0.9, 33.4 * PS, 100.0 * PS, PS).unwrap();
    write_touchstone(&synth_segment(&p, &g), DataFormat::Ma)
}

fn check_structured<T>(r: Result<T, Error>) -> Result<(), TestCaseError> {
    if let Err(e) = r {
        match e {
            Error::Syntax { line, .. } | Error::NonMonotoneFrequency { line } => prop_assert!(line >= 1),
            Error::UnsupportedParameter(_) => {}
            other => prop_assert!(false, "unexpected error {other:?}"),
        }
    }
    Ok(())
}

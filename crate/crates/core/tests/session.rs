use proptest::prelude::*;

use cgrc::encoder_sim::{frame_seed, ref_quality_bonus, simulate_frame, Scenario};
use cgrc::preanalysis::PreAnalysisConfig;
use cgrc::rate_control::{RateControlConfig, Scheme};
use cgrc::rd_model::{ModelContext, ALPHA_RANGE, BETA_RANGE};
use cgrc::schedule::FrameType;
use cgrc::session::{Session, SessionConfig};
use cgrc::Error;

fn scheme() -> impl Strategy<Value = Scheme> {
    prop::sample::select(Scheme::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn closed_loop_respects_decision_invariants(
        vx in -3.0f64..3.0,
        vy in -2.0f64..2.0,
        frames in 17usize..48,
        target in 10_000.0f64..200_000.0,
        qp_min in 0i32..20,
        span in 10i32..31,
        intra_period in prop::sample::select(vec![0usize, 16, 24]),
        scheme in scheme(),
        seed in any::<u64>(),
    ) {
        let mut scenario = Scenario::preset("panning").unwrap().with_frames(frames).unwrap();
        scenario.content.velocity = [vx, vy];
        let pictures = scenario.render_all();
        let rc = RateControlConfig {
            target_bitrate: target,
            qp_min,
            qp_max: qp_min + span,
            intra_period,
            ..Default::default()
        };
        let pre = PreAnalysisConfig { lookahead_n: 10, search_range: 4, ..Default::default() };
        let mut session = Session::new(SessionConfig { video: scenario.video_spec(), rc, pre, scheme }).unwrap();
        let (lambda_lo, lambda_hi) = rc.lambda_range();
        let mut psnr = vec![f64::NAN; frames];
        let mut coded = vec![false; frames];

        let mut pushed = 0;
        while !session.is_finished() {
            let d = match session.next_decision() {
                Ok(d) => d,
                Err(Error::NeedMoreInput) => {
                    session.push_frame(&pictures[pushed]).unwrap();
                    pushed += 1;
                    continue;
                }
                Err(e) => panic!("{e}"),
            };
            prop_assert!(!coded[d.frame_index]);
            prop_assert!((rc.qp_min..=rc.qp_max).contains(&d.final_qp));
            prop_assert!(d.lambda >= lambda_lo * (1.0 - 1e-12) && d.lambda <= lambda_hi * (1.0 + 1e-12));
            prop_assert!(d.target_bits > 0.0 && d.target_bits.is_finite());
            prop_assert!(d.cu_qp_offsets.iter().all(|&o| o <= 0.0));
            if d.frame_type == FrameType::I {
                prop_assert!(d.gop_pos.is_none());
            } else if scheme == Scheme::EqualAllocation {
                prop_assert_eq!(d.w, 1.0);
            }
            if scheme != Scheme::Proposed && d.frame_type != FrameType::I {
                prop_assert_eq!(d.final_qp, cgrc::rate_control::round_half_up(d.base_qp).clamp(rc.qp_min, rc.qp_max));
            }

            let frame = session.current_frame().unwrap().clone();
            let model = scenario.frame_model(frame.index, &frame.refs);
            let refs: Vec<f64> = frame.refs.iter().map(|&r| psnr[r]).collect();
            prop_assert!(refs.iter().all(|p| p.is_finite()), "reference coded after its dependent");
            let qp = (d.final_qp as f64 + d.mean_cu_offset()).clamp(0.0, 51.0);
            let sim = simulate_frame(&model, qp, ref_quality_bonus(&refs), frame_seed(seed, frame.index),
                scenario.video_spec().pixels()).unwrap();
            psnr[frame.index] = sim.psnr;
            coded[frame.index] = true;
            session.report(sim.bits).unwrap();
        }
        prop_assert!(coded.iter().all(|&c| c));
        for ctx in ModelContext::ALL {
            let m = session.models().get(ctx);
            prop_assert!((ALPHA_RANGE.0..=ALPHA_RANGE.1).contains(&m.alpha));
            prop_assert!((BETA_RANGE.0..=BETA_RANGE.1).contains(&m.beta));
        }
        prop_assert!(matches!(session.next_decision(), Err(Error::Exhausted)));
    }
}

use num_rational::Ratio;
use proptest::prelude::*;
use skdesign::efficiency::*;
use skdesign::kernels::total_params;
use skdesign::oracles::{feasible_pairs, GroupConstraint, GroupObjective};

fn divisor_rich() -> impl Strategy<Value = u32> {
    prop::sample::select(vec![8u32, 12, 16, 24, 32, 36, 48, 60, 64, 72, 96, 128])
}

proptest! {
    #[test]
    fn ratio_times_standard_is_param_count(c in divisor_rich(), mult in 1u32..=4, pick in 0usize..64) {
        let f = c * mult;
        for fam in Family::ALL {
            let groups = if fam.has_groups() {
                let obj = if fam == Family::GcPwg { GroupObjective::GcPwg } else { GroupObjective::PwgDwPwg };
                match feasible_pairs(obj, c, f, GroupConstraint::AtMost) {
                    Ok(p) if !p.is_empty() => Some(p[pick % p.len()]),
                    _ => continue,
                }
            } else {
                None
            };
            let Ok(layers) = family_layers(fam, c, f, groups) else { continue };
            let r = ratio(fam, c, f, groups).unwrap();
            prop_assert_eq!(
                r * Ratio::from_integer(9 * u64::from(c) * u64::from(f)),
                Ratio::from_integer(total_params(&layers))
            );
        }
    }

    #[test]
    fn closed_form_agrees_when_tight(c in divisor_rich(), mult in 1u32..=4) {
        let f = c * mult;
        if let Ok(pairs) = feasible_pairs(GroupObjective::PwgDwPwg, c, f, GroupConstraint::Equal) {
            for (m, n) in pairs {
                prop_assert_eq!(closed_form_ratio(c, f, m, n).unwrap(), ratio(Family::PwgDwPwg, c, f, Some((m, n))).unwrap());
            }
        }
    }

    #[test]
    fn discrete_never_beats_continuous(c in divisor_rich(), mult in 1u32..=4) {
        let f = c * mult;
        for fam in [Family::GcPwg, Family::PwgDwPwg] {
            if let Ok(o) = optimal_group_numbers(fam, c, f) {
                prop_assert!(o.gap >= -1e-12 * o.continuous.ratio);
            }
        }
    }

    #[test]
    fn am_gm_bounds(c in divisor_rich(), mult in 1u32..=4) {
        let f = c * mult;
        let alpha = f64::from(mult);
        let cf = f64::from(c);
        for (m, n) in feasible_pairs(GroupObjective::GcPwg, c, f, GroupConstraint::Equal).unwrap_or_default() {
            let p = total_params(&family_layers(Family::GcPwg, c, f, Some((m, n))).unwrap()) as f64;
            prop_assert!(p >= 6.0 * alpha.sqrt() * cf.powf(1.5) * (1.0 - 1e-12));
        }
        for (m, n) in feasible_pairs(GroupObjective::PwgDwPwg, c, f, GroupConstraint::Equal).unwrap_or_default() {
            let p = total_params(&family_layers(Family::PwgDwPwg, c, f, Some((m, n))).unwrap()) as f64;
            prop_assert!(p >= alpha / 4.0 * cf * (9.0 + 4.0 * cf.sqrt()) * (1.0 - 1e-12));
        }
    }

    #[test]
    fn width_monotone_in_budget(p in 200u64..2_000_000, alpha in 1u32..=4) {
        let a = Ratio::from_integer(alpha);
        for fam in Family::ALL {
            let g1 = closed_form_width(fam, p, f64::from(alpha));
            let g2 = closed_form_width(fam, p * 2, f64::from(alpha));
            prop_assert!(g2 >= g1);
            let g3 = closed_form_width(fam, p, f64::from(alpha + 1));
            prop_assert!(g3 <= g1 + 1e-9);
            if let (Ok(w1), Ok(w2)) = (greatest_width(fam, p, a), greatest_width(fam, p * 2, a)) {
                prop_assert!(w2.width >= w1.width);
                prop_assert!(w1.params <= p);
            }
        }
    }
}

#[test]
fn dw_pw_ratio_ignores_input_width() {
    for c in [3, 17, 100, 256] {
        assert_eq!(ratio(Family::DwPw, c, 100, None).unwrap(), Ratio::new(1, 100) + Ratio::new(1, 9));
    }
}

#[test]
fn family_names_parse() {
    for fam in Family::ALL {
        assert_eq!(fam.name().parse::<Family>().unwrap(), fam);
        assert_eq!(fam.name().to_lowercase().parse::<Family>().unwrap(), fam);
    }
    assert!("gc+dw".parse::<Family>().is_err());
}

#[test]
fn analyze_reports_optimum() {
    let r = analyze(Family::GcPwg, 36, 36, None);
    assert!(r.is_err(), "group family needs groups");
    let r = analyze(Family::GcPwg, 36, 36, Some((18, 2))).unwrap();
    assert_eq!(r.ratio, Ratio::new(1, 9));
    assert_eq!(r.params, 1296);
    assert_eq!(r.optimal.unwrap().discrete, vec![(18, 2)]);
}

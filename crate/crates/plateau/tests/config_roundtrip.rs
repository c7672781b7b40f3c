use proptest::prelude::*;

use plateau::RunConfig;
use plateau_core::families::{PsiFamily, SubsolutionFamily};

const BASE: &str = r#"[problem]
n = 2
k = 2
sigma = 0.55
psi = { family = "radial-gaussian", center = [0.0, 0.0], base = 0.36, amp = 0.2, width = 1.0 }
subsolution = { family = "perturbed-cap", sigma = 0.7, radius = 0.5, center = [0.0, 0.0], eta = 0.05 }

[grid]
h = 0.03125
h_ratio = 0.5

[path]
eps = [0.1, 0.05]
probe_eps = 0.12

[solver]
tol_newton = 1e-11

[diagnostics]
alpha = 2.0
ball_radius = 0.2

[output]
dir = "runs/gauss"

[verify]
seed = 17
barrier_trials = 10
"#;

#[test]
fn full_config_round_trips() {
    let cfg = RunConfig::from_toml(BASE).unwrap();
    assert_eq!(cfg.solver.tol_newton, 1e-11);
    assert_eq!(cfg.diagnostics.ball_radius, Some(0.2));
    let again = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
    assert_eq!(cfg, again);
}

#[test]
fn unknown_keys_are_rejected() {
    let text = BASE.replace("h_ratio = 0.5", "h_ratio = 0.5\nbox = [0.0, 1.0]");
    assert!(RunConfig::from_toml(&text).is_err());
}

#[test]
fn seeds_beyond_toml_integers_are_rejected() {
    let mut cfg = RunConfig::from_toml(BASE).unwrap();
    cfg.verify.seed = u64::MAX;
    assert!(cfg.validate().is_err());
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4);
}

fn psi_strategy() -> impl Strategy<Value = PsiFamily> {
    prop_oneof![
        (0.01f64..0.99).prop_map(|c| PsiFamily::Constant { c }),
        (0.01f64..0.5, prop::collection::vec(0.0f64..1.0, 0..3)).prop_map(|(c0, rest)| {
            let mut coeffs = vec![c0];
            coeffs.extend(rest);
            PsiFamily::RadialPolynomial { center: vec![0.01, -0.02], coeffs }
        }),
        (0.01f64..0.5, -0.5f64..1.0, 0.1f64..3.0).prop_map(|(base, amp, width)| PsiFamily::RadialGaussian {
            center: vec![0.0, 0.0],
            base,
            amp,
            width
        }),
        (0.01f64..1.0, prop::collection::vec(0.0f64..1.0, 2), -2.0f64..4.0)
            .prop_map(|(scale, a, power)| PsiFamily::SeparableProduct { scale, a, power }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_serialize_parse_is_identity(
        psi in psi_strategy(),
        sub_sigma in 0.3f64..0.9,
        radius in 0.3f64..2.0,
        h in 0.005f64..0.1,
        first in 0.02f64..0.08,
        ratio in 0.2f64..0.9,
        levels in 1usize..5,
        seed in 0..=i64::MAX as u64,
        perturbed in any::<bool>(),
    ) {
        let mut cfg = RunConfig::from_toml(BASE).unwrap();
        cfg.problem.psi = psi;
        cfg.problem.subsolution = if perturbed {
            SubsolutionFamily::PerturbedCap { sigma: sub_sigma, radius, center: vec![0.0, 0.0], eta: 0.01 }
        } else {
            SubsolutionFamily::Cap { sigma: sub_sigma, radius, center: vec![0.0, 0.0] }
        };
        cfg.grid.h = h;
        cfg.path.eps = (0..levels).map(|j| first * ratio.powi(j as i32)).collect();
        cfg.path.probe_eps = None;
        cfg.verify.seed = seed;
        prop_assume!(cfg.validate().is_ok());
        let text = cfg.to_toml().unwrap();
        let again = RunConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&cfg, &again);
        prop_assert_eq!(text, again.to_toml().unwrap());
    }
}

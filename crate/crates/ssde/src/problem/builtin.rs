use super::spec::ProblemSpec;

/// The shipped benchmark problems, embedded so the suites need no paths.
pub const BUILTIN_PROBLEMS: &[(&str, &str)] = &[
    ("gamma01", include_str!("../../problems/gamma01.txt")),
    ("gamma02", include_str!("../../problems/gamma02.txt")),
    ("gamma03", include_str!("../../problems/gamma03.txt")),
    ("gamma04", include_str!("../../problems/gamma04.txt")),
    ("gamma05", include_str!("../../problems/gamma05.txt")),
    ("gamma06", include_str!("../../problems/gamma06.txt")),
    ("gamma07", include_str!("../../problems/gamma07.txt")),
    ("gamma08", include_str!("../../problems/gamma08.txt")),
    ("gamma09", include_str!("../../problems/gamma09.txt")),
    ("gamma10", include_str!("../../problems/gamma10.txt")),
    ("gamma11", include_str!("../../problems/gamma11.txt")),
    ("gamma12", include_str!("../../problems/gamma12.txt")),
    ("poisson2d", include_str!("../../problems/poisson2d.txt")),
    ("poisson3d", include_str!("../../problems/poisson3d.txt")),
    ("heat2d", include_str!("../../problems/heat2d.txt")),
    ("heat3d", include_str!("../../problems/heat3d.txt")),
    ("wave2d", include_str!("../../problems/wave2d.txt")),
    ("wave3d", include_str!("../../problems/wave3d.txt")),
];

pub const GAMMA_NAMES: [&str; 12] = [
    "gamma01", "gamma02", "gamma03", "gamma04", "gamma05", "gamma06", "gamma07", "gamma08",
    "gamma09", "gamma10", "gamma11", "gamma12",
];

pub const HD_NAMES: [&str; 6] = [
    "poisson2d",
    "poisson3d",
    "heat2d",
    "heat3d",
    "wave2d",
    "wave3d",
];

/// Loads a shipped problem by name.
pub fn builtin(name: &str) -> Option<ProblemSpec> {
    let (_, text) = BUILTIN_PROBLEMS.iter().find(|(n, _)| *n == name)?;
    Some(ProblemSpec::parse(text).expect("shipped problem parses"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{metric_lphy, sample_collocation, Candidate};

    #[test]
    fn all_builtins_parse() {
        for (name, _) in BUILTIN_PROBLEMS {
            let spec = builtin(name).unwrap();
            assert_eq!(&spec.name, name);
            assert!(spec.ground_truth.is_some(), "{name} lacks a ground truth");
        }
    }

    #[test]
    fn ground_truths_annihilate_their_residuals() {
        for (name, _) in BUILTIN_PROBLEMS {
            let spec = builtin(name).unwrap();
            let colloc = sample_collocation(&spec, (256, 64, 64), 0xBEEF);
            let truth = Candidate::new(spec.ground_truth.clone().unwrap(), vec![]);
            let lphy = metric_lphy(&truth, &spec, &colloc);
            assert!(
                lphy < 1e-8,
                "{name}: ground truth violates its own constraints, L_PHY = {lphy:.3e}"
            );
        }
    }
}

//! Seeded multi-domain synthetic benchmark generation.
//!
//! Class means sit on a random direction frame scaled so the closest pair of
//! means is exactly `class_sep` apart (in units of the unit cluster std).
//! Each sample is mean + standard Gaussian noise, mapped through its
//! domain's affine transform. The support set holds known classes from the
//! source domains; the test set holds known + unknown classes from the
//! target domain.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Affine domain shift: `y = scale * R(x) + translation`, with `R` built
/// from plane rotations on coordinate pairs (0,1), (2,3), ... cycling
/// through `rotations_deg`. The translation is added to every coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainTransform {
    pub rotations_deg: Vec<f32>,
    pub translation: f32,
    pub scale: f32,
}

impl DomainTransform {
    pub fn identity() -> Self {
        DomainTransform {
            rotations_deg: Vec::new(),
            translation: 0.0,
            scale: 1.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        (self.rotations_deg.is_empty() || self.rotations_deg.iter().all(|&a| a == 0.0))
            && self.translation == 0.0
            && self.scale == 1.0
    }

    fn apply(&self, x: &mut [f32]) {
        if !self.rotations_deg.is_empty() {
            for (plane, pair) in x.chunks_exact_mut(2).enumerate() {
                let deg = self.rotations_deg[plane % self.rotations_deg.len()];
                if deg == 0.0 {
                    continue;
                }
                let rad = (deg as f64).to_radians();
                let (sin, cos) = (rad.sin() as f32, rad.cos() as f32);
                let (a, b) = (pair[0], pair[1]);
                pair[0] = cos * a - sin * b;
                pair[1] = sin * a + cos * b;
            }
        }
        for v in x.iter_mut() {
            *v = self.scale * *v + self.translation;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub dims: usize,
    pub known_classes: usize,
    pub unknown_classes: usize,
    pub samples_per_class: usize,
    /// Minimum distance between class means, in cluster-std units.
    pub class_sep: f32,
    pub domains: Vec<DomainTransform>,
    pub source_domains: Vec<usize>,
    pub target_domain: usize,
    /// Known-class subset visible to each source domain (indexes
    /// `source_domains` positionally). `None` means every source sees all
    /// known classes.
    pub partial_overlap: Option<Vec<Vec<usize>>>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            dims: 16,
            known_classes: 5,
            unknown_classes: 5,
            samples_per_class: 100,
            class_sep: 6.0,
            domains: vec![DomainTransform::identity()],
            source_domains: vec![0],
            target_domain: 0,
            partial_overlap: None,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.class_sep <= 0.0 {
            return Err(Error::Config("class_sep must be > 0".into()));
        }
        if self.dims == 0 || self.known_classes == 0 || self.samples_per_class == 0 {
            return Err(Error::Config(
                "dims, known_classes and samples_per_class must be positive".into(),
            ));
        }
        if self.domains.is_empty() {
            return Err(Error::Config("at least one domain is required".into()));
        }
        for &d in self.source_domains.iter().chain([&self.target_domain]) {
            if d >= self.domains.len() {
                return Err(Error::Config(format!(
                    "domain index {d} out of range ({} domains)",
                    self.domains.len()
                )));
            }
        }
        if self.source_domains.is_empty() {
            return Err(Error::Config("at least one source domain is required".into()));
        }
        if let Some(overlap) = &self.partial_overlap {
            if overlap.len() != self.source_domains.len() {
                return Err(Error::Config(format!(
                    "partial_overlap has {} entries for {} source domains",
                    overlap.len(),
                    self.source_domains.len()
                )));
            }
            for subset in overlap {
                for &c in subset {
                    if c >= self.known_classes {
                        return Err(Error::Config(format!(
                            "partial_overlap class {c} out of {} known classes",
                            self.known_classes
                        )));
                    }
                }
            }
            for c in 0..self.known_classes {
                if !overlap.iter().any(|s| s.contains(&c)) {
                    return Err(Error::Config(format!(
                        "known class {c} appears in no source domain"
                    )));
                }
            }
        }
        Ok(())
    }

    fn source_classes(&self, source_pos: usize) -> Vec<usize> {
        match &self.partial_overlap {
            Some(overlap) => {
                let mut cs = overlap[source_pos].clone();
                cs.sort_unstable();
                cs.dedup();
                cs
            }
            None => (0..self.known_classes).collect(),
        }
    }
}

/// Class means on a seeded random direction frame, min pairwise distance
/// exactly `class_sep`.
fn class_means(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f32>> {
    let total = spec.known_classes + spec.unknown_classes;
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(total);
    for _ in 0..total {
        let mut v: Vec<f64> = (0..spec.dims)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        for x in v.iter_mut() {
            *x /= norm;
        }
        dirs.push(v);
    }
    let mut min_dist = f64::INFINITY;
    for i in 0..total {
        for j in (i + 1)..total {
            let d = dirs[i]
                .iter()
                .zip(&dirs[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            min_dist = min_dist.min(d);
        }
    }
    let radius = if min_dist.is_finite() && min_dist > 0.0 {
        spec.class_sep as f64 / min_dist
    } else {
        1.0
    };
    dirs.into_iter()
        .map(|v| v.into_iter().map(|x| (x * radius) as f32).collect())
        .collect()
}

fn sample_block(
    spec: &SyntheticSpec,
    rng: &mut ChaCha8Rng,
    means: &[Vec<f32>],
    class: usize,
    domain: usize,
    features: &mut Vec<f32>,
    labels: &mut Vec<i64>,
    domains: &mut Vec<i64>,
) {
    let transform = &spec.domains[domain];
    for _ in 0..spec.samples_per_class {
        let start = features.len();
        for &m in &means[class] {
            let noise: f32 = rng.sample(StandardNormal);
            features.push(m + noise);
        }
        transform.apply(&mut features[start..]);
        labels.push(class as i64);
        domains.push(domain as i64);
    }
}

/// Generate (support, test) datasets. Known classes get ids `0..known`,
/// unknown classes `known..known+unknown`; unknowns appear only in the test
/// set. Deterministic under `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let means = class_means(spec, &mut rng);

    let mut feats = Vec::new();
    let mut labels = Vec::new();
    let mut domains = Vec::new();
    for (pos, &src) in spec.source_domains.iter().enumerate() {
        for class in spec.source_classes(pos) {
            sample_block(spec, &mut rng, &means, class, src, &mut feats, &mut labels, &mut domains);
        }
    }
    let n_support = labels.len();
    let support = LabeledDataset::new(
        "synthetic-support",
        Tensor::matrix(n_support, spec.dims, feats)?,
        labels,
        domains,
    )?;

    let mut feats = Vec::new();
    let mut labels = Vec::new();
    let mut domains = Vec::new();
    for class in 0..(spec.known_classes + spec.unknown_classes) {
        sample_block(
            spec,
            &mut rng,
            &means,
            class,
            spec.target_domain,
            &mut feats,
            &mut labels,
            &mut domains,
        );
    }
    let n_test = labels.len();
    let test = LabeledDataset::new(
        "synthetic-test",
        Tensor::matrix(n_test, spec.dims, feats)?,
        labels,
        domains,
    )?;
    Ok((support, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_the_spec() {
        let spec = SyntheticSpec {
            known_classes: 3,
            unknown_classes: 2,
            samples_per_class: 50,
            ..SyntheticSpec::default()
        };
        let (support, test) = generate_synthetic(&spec).unwrap();
        assert_eq!(support.len(), 150);
        assert_eq!(test.len(), 250);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let spec = SyntheticSpec::default();
        let (s1, t1) = generate_synthetic(&spec).unwrap();
        let (s2, t2) = generate_synthetic(&spec).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(t1, t2);
    }

    #[test]
    fn unknown_classes_never_in_support() {
        let spec = SyntheticSpec::default();
        let (support, _) = generate_synthetic(&spec).unwrap();
        assert!(support
            .labels()
            .iter()
            .all(|&l| (l as usize) < spec.known_classes));
    }

    #[test]
    fn class_means_at_least_class_sep_apart() {
        let spec = SyntheticSpec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let means = class_means(&spec, &mut rng);
        for i in 0..means.len() {
            for j in (i + 1)..means.len() {
                let d: f32 = means[i]
                    .iter()
                    .zip(&means[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f32>()
                    .sqrt();
                assert!(d >= spec.class_sep * 0.999, "pair ({i},{j}) at {d}");
            }
        }
    }

    #[test]
    fn empirical_means_converge() {
        let spec = SyntheticSpec {
            samples_per_class: 400,
            ..SyntheticSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let means = class_means(&spec, &mut rng);
        let (support, _) = generate_synthetic(&spec).unwrap();
        let tol = 5.0 / (spec.samples_per_class as f32).sqrt();
        for (class, idx) in support.indices_by_class() {
            let mut emp = vec![0.0f32; spec.dims];
            for &i in &idx {
                for (e, &v) in emp.iter_mut().zip(support.features().row(i)) {
                    *e += v;
                }
            }
            for e in emp.iter_mut() {
                *e /= idx.len() as f32;
            }
            for (d, (&e, &m)) in emp.iter().zip(&means[class as usize]).enumerate() {
                assert!(
                    (e - m).abs() <= tol,
                    "class {class} coord {d}: |{e} - {m}| > {tol}"
                );
            }
        }
    }

    #[test]
    fn rotation_preserves_norm_translation_shifts() {
        let t = DomainTransform {
            rotations_deg: vec![90.0],
            translation: 0.0,
            scale: 1.0,
        };
        let mut x = vec![1.0f32, 0.0];
        t.apply(&mut x);
        assert!((x[0]).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6);

        let t = DomainTransform {
            rotations_deg: vec![],
            translation: 0.5,
            scale: 2.0,
        };
        let mut x = vec![1.0f32, -1.0];
        t.apply(&mut x);
        assert_eq!(x, vec![2.5, -1.5]);
    }

    #[test]
    fn non_positive_separation_rejected() {
        let spec = SyntheticSpec {
            class_sep: 0.0,
            ..SyntheticSpec::default()
        };
        assert!(matches!(generate_synthetic(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn partial_overlap_must_cover_all_known_classes() {
        let spec = SyntheticSpec {
            source_domains: vec![0, 0],
            partial_overlap: Some(vec![vec![0, 1], vec![1, 2]]),
            known_classes: 4,
            ..SyntheticSpec::default()
        };
        assert!(matches!(generate_synthetic(&spec), Err(Error::Config(_))));
    }

    #[test]
    fn partial_overlap_controls_support_composition() {
        let spec = SyntheticSpec {
            known_classes: 3,
            unknown_classes: 1,
            samples_per_class: 10,
            domains: vec![DomainTransform::identity(), DomainTransform::identity()],
            source_domains: vec![0, 1],
            partial_overlap: Some(vec![vec![0, 1], vec![1, 2]]),
            ..SyntheticSpec::default()
        };
        let (support, _) = generate_synthetic(&spec).unwrap();
        assert_eq!(support.len(), 40);
        for (i, &l) in support.labels().iter().enumerate() {
            let dom = support.domain_ids()[i];
            match dom {
                0 => assert!(l == 0 || l == 1),
                1 => assert!(l == 1 || l == 2),
                _ => panic!("unexpected domain {dom}"),
            }
        }
    }
}

use rand::Rng;

use crate::evo::{Gene, Genome, InnovationCounter};
use crate::io::NewGeneKinds;
use crate::nn::{Activation, LayerKind, Role};

/// Kernel sizes a new or changed gene may take.
pub const KERNEL_CHOICES: [usize; 2] = [3, 5];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MutationConfig {
    pub prob_add: f64,
    pub prob_remove: f64,
    pub prob_change: f64,
    pub genome_limit: usize,
    pub channels_min: usize,
    pub channels_max: usize,
    pub new_gene_kinds: NewGeneKinds,
}

/// Which mutations fired and which actually changed the genome.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MutationLog {
    pub add_triggered: bool,
    pub add_applied: bool,
    pub remove_triggered: bool,
    pub remove_applied: bool,
    pub change_triggered: bool,
    pub change_applied: bool,
}

impl MutationLog {
    pub fn changed(&self) -> bool {
        self.add_applied || self.remove_applied || self.change_applied
    }
}

pub fn random_gene<R: Rng + ?Sized>(
    kind: LayerKind,
    cfg: &MutationConfig,
    innovations: &mut InnovationCounter,
    rng: &mut R,
) -> Gene {
    let activation = Activation::GENE_CHOICES[rng.random_range(0..Activation::GENE_CHOICES.len())];
    let out = rng.random_range(cfg.channels_min..=cfg.channels_max);
    let id = innovations.next_id();
    match kind {
        LayerKind::Linear => Gene::linear(id, activation, out),
        LayerKind::Conv2d => Gene::conv(id, activation, out, KERNEL_CHOICES[rng.random_range(0..KERNEL_CHOICES.len())]),
        LayerKind::Deconv2d => {
            Gene::deconv(id, activation, out, KERNEL_CHOICES[rng.random_range(0..KERNEL_CHOICES.len())])
        }
    }
}

/// The spatial kind a role uses, and the kinds an add-mutation may create.
pub fn new_gene_kinds(role: Role, which: NewGeneKinds) -> &'static [LayerKind] {
    match (role, which) {
        (Role::Discriminator, NewGeneKinds::Conv) => &[LayerKind::Conv2d],
        (Role::Generator, NewGeneKinds::Conv) => &[LayerKind::Deconv2d],
        (Role::Discriminator, NewGeneKinds::All) => &[LayerKind::Conv2d, LayerKind::Linear],
        (Role::Generator, NewGeneKinds::All) => &[LayerKind::Linear, LayerKind::Deconv2d],
    }
}

/// Applies add, remove and change, each independently with its probability.
pub fn mutate<R: Rng + ?Sized>(
    genome: &Genome,
    cfg: &MutationConfig,
    innovations: &mut InnovationCounter,
    rng: &mut R,
) -> (Genome, MutationLog) {
    let mut out = genome.clone();
    let mut log = MutationLog {
        add_triggered: rng.random_bool(cfg.prob_add),
        remove_triggered: rng.random_bool(cfg.prob_remove),
        change_triggered: rng.random_bool(cfg.prob_change),
        ..Default::default()
    };

    if log.add_triggered && out.len() < cfg.genome_limit {
        let kinds = new_gene_kinds(out.role, cfg.new_gene_kinds);
        let kind = kinds[rng.random_range(0..kinds.len())];
        // Genes of the role's leading kind sit before the others.
        let leading = match out.role {
            Role::Discriminator => LayerKind::Conv2d,
            Role::Generator => LayerKind::Linear,
        };
        let boundary = out.count(leading);
        let range = if kind == leading { 0..=boundary } else { boundary..=out.len() };
        let pos = rng.random_range(range);
        let gene = random_gene(kind, cfg, innovations, rng);
        out.genes.insert(pos, gene);
        log.add_applied = true;
    }

    if log.remove_triggered && out.len() > 1 {
        let pos = rng.random_range(0..out.len());
        out.genes.remove(pos);
        log.remove_applied = true;
    }

    if log.change_triggered {
        let pos = rng.random_range(0..out.len());
        let gene = &mut out.genes[pos];
        let attrs = if gene.kernel.is_some() { 3 } else { 2 };
        match rng.random_range(0..attrs) {
            0 => {
                let others: Vec<Activation> = Activation::GENE_CHOICES
                    .iter()
                    .copied()
                    .filter(|a| *a != gene.activation)
                    .collect();
                gene.activation = others[rng.random_range(0..others.len())];
            }
            1 => {
                if cfg.channels_max > cfg.channels_min {
                    let mut v = rng.random_range(cfg.channels_min..cfg.channels_max);
                    if v >= gene.out {
                        v += 1;
                    }
                    gene.out = v;
                } else {
                    gene.out = cfg.channels_min;
                }
            }
            _ => {
                let others: Vec<usize> = KERNEL_CHOICES
                    .iter()
                    .copied()
                    .filter(|k| Some(*k) != gene.kernel)
                    .collect();
                gene.kernel = Some(others[rng.random_range(0..others.len())]);
            }
        }
        gene.id = innovations.next_id();
        log.change_applied = true;
    }
    (out, log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg(p: (f64, f64, f64)) -> MutationConfig {
        MutationConfig {
            prob_add: p.0,
            prob_remove: p.1,
            prob_change: p.2,
            genome_limit: 4,
            channels_min: 32,
            channels_max: 512,
            new_gene_kinds: NewGeneKinds::All,
        }
    }

    fn start(role: Role) -> Genome {
        let g = match role {
            Role::Discriminator => Gene::conv(0, Activation::Elu, 64, 3),
            Role::Generator => Gene::deconv(0, Activation::Elu, 64, 3),
        };
        Genome::new(role, vec![g]).unwrap()
    }

    #[test]
    fn zero_probabilities_leave_genome_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut inn = InnovationCounter::starting_at(1);
        let g = start(Role::Discriminator);
        for _ in 0..100 {
            let (m, log) = mutate(&g, &cfg((0.0, 0.0, 0.0)), &mut inn, &mut rng);
            assert_eq!(m, g);
            assert!(!log.changed());
        }
    }

    #[test]
    fn add_at_limit_is_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut inn = InnovationCounter::starting_at(10);
        let genes = (0..4).map(|i| Gene::conv(i, Activation::Relu, 32, 3)).collect();
        let g = Genome::new(Role::Discriminator, genes).unwrap();
        let (m, log) = mutate(&g, &cfg((1.0, 0.0, 0.0)), &mut inn, &mut rng);
        assert!(log.add_triggered && !log.add_applied);
        assert_eq!(m.len(), 4);
    }

    #[test]
    fn remove_never_empties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut inn = InnovationCounter::starting_at(1);
        let (m, log) = mutate(&start(Role::Generator), &cfg((0.0, 1.0, 0.0)), &mut inn, &mut rng);
        assert_eq!(m.len(), 1);
        assert!(log.remove_triggered && !log.remove_applied);
    }

    #[test]
    fn change_assigns_new_innovation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut inn = InnovationCounter::starting_at(100);
        let g = start(Role::Discriminator);
        for _ in 0..50 {
            let (m, _) = mutate(&g, &cfg((0.0, 0.0, 1.0)), &mut inn, &mut rng);
            assert_ne!(m.genes[0], g.genes[0]);
            assert!(m.genes[0].id >= 100);
            let diffs = [
                m.genes[0].activation != g.genes[0].activation,
                m.genes[0].out != g.genes[0].out,
                m.genes[0].kernel != g.genes[0].kernel,
            ];
            assert_eq!(diffs.iter().filter(|d| **d).count(), 1);
        }
    }

    #[test]
    fn mutated_genomes_stay_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut inn = InnovationCounter::starting_at(1);
        for role in [Role::Discriminator, Role::Generator] {
            let mut g = start(role);
            for _ in 0..2000 {
                g = mutate(&g, &cfg((0.3, 0.1, 0.1)), &mut inn, &mut rng).0;
                g.validate(4).unwrap();
                for gene in &g.genes {
                    assert!((32..=512).contains(&gene.out));
                }
            }
        }
    }

    #[test]
    fn trigger_frequencies_match_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut inn = InnovationCounter::starting_at(1);
        let g = start(Role::Discriminator);
        let trials = 10_000;
        let mut hits = [0usize; 3];
        for _ in 0..trials {
            let (_, log) = mutate(&g, &cfg((0.3, 0.1, 0.1)), &mut inn, &mut rng);
            hits[0] += log.add_triggered as usize;
            hits[1] += log.remove_triggered as usize;
            hits[2] += log.change_triggered as usize;
        }
        for (h, p) in hits.iter().zip([0.3, 0.1, 0.1]) {
            let f = *h as f64 / trials as f64;
            assert!((f - p).abs() <= 0.02, "frequency {f} vs {p}");
        }
    }
}

use rand::Rng;

use crate::error::{Error, Result};
use crate::evo::mutation::{mutate, MutationConfig, MutationLog};
use crate::evo::species::species_groups;
use crate::evo::{build_phenotype, Individual, InnovationCounter, PhenotypeSpec};

/// Mutation attempts after the first before an offspring falls back to a
/// plain copy of its parent.
pub const MUTATION_RETRIES: usize = 5;

/// Inverse-rank score per individual: rank 1 (best) scores `n`, rank `n`
/// scores 1. Tied fitness values share the average of their ranks.
pub fn inverse_rank_scores(pop: &[Individual]) -> Vec<f64> {
    let n = pop.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pop[a].sort_fitness().total_cmp(&pop[b].sort_fitness()));
    let mut scores = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && pop[order[j + 1]].sort_fitness() == pop[order[i]].sort_fitness() {
            j += 1;
        }
        // Positions i..=j hold ranks i+1..=j+1.
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            scores[k] = n as f64 + 1.0 - rank;
        }
        i = j + 1;
    }
    scores
}

/// Offspring count per species, proportional to the species' mean
/// inverse-rank score, rounded by largest remainder (ties to the lower
/// species id). Returns `(species id, member indices, quota)`.
pub fn species_quotas(pop: &[Individual], total: usize) -> Vec<(usize, Vec<usize>, usize)> {
    let scores = inverse_rank_scores(pop);
    let groups = species_groups(pop);
    let means: Vec<f64> = groups
        .iter()
        .map(|(_, m)| m.iter().map(|&i| scores[i]).sum::<f64>() / m.len() as f64)
        .collect();
    let sum: f64 = means.iter().sum();
    let exact: Vec<f64> = means.iter().map(|m| total as f64 * m / sum).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut left = total - quotas.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(groups[a].0.cmp(&groups[b].0))
    });
    for &g in order.iter().cycle() {
        if left == 0 {
            break;
        }
        quotas[g] += 1;
        left -= 1;
    }
    groups
        .into_iter()
        .zip(quotas)
        .map(|((id, members), q)| (id, members, q))
        .collect()
}

/// Tournament of size `k` drawn with replacement from `members`.
pub fn tournament<R: Rng + ?Sized>(pop: &[Individual], members: &[usize], k: usize, rng: &mut R) -> usize {
    let mut best = members[rng.random_range(0..members.len())];
    for _ in 1..k.max(1) {
        let c = members[rng.random_range(0..members.len())];
        let better = pop[c]
            .sort_fitness()
            .total_cmp(&pop[best].sort_fitness())
            .then(pop[c].id.cmp(&pop[best].id))
            .is_lt();
        if better {
            best = c;
        }
    }
    best
}

/// Parent index for each of `total` offspring slots, species by species.
pub fn select_parents<R: Rng + ?Sized>(pop: &[Individual], k: usize, total: usize, rng: &mut R) -> Vec<usize> {
    let mut parents = Vec::with_capacity(total);
    for (_, members, quota) in species_quotas(pop, total) {
        for _ in 0..quota {
            parents.push(tournament(pop, &members, k, rng));
        }
    }
    parents
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReproductionStats {
    pub mutations: Vec<MutationLog>,
    /// Offspring that needed at least one retry.
    pub retried: usize,
    /// Offspring that ended as unmutated copies of their parent.
    pub copied: usize,
}

/// Builds the next population: selection, mutation and weight transfer.
/// Offspring take ids starting at `*next_id`.
#[allow(clippy::too_many_arguments)]
pub fn select_and_reproduce<R: Rng + ?Sized>(
    pop: &[Individual],
    k: usize,
    mutation: &MutationConfig,
    spec: &PhenotypeSpec,
    innovations: &mut InnovationCounter,
    next_id: &mut u64,
    rng: &mut R,
) -> Result<(Vec<Individual>, ReproductionStats)> {
    if pop.is_empty() {
        return Err(Error::invalid("cannot reproduce an empty population"));
    }
    let mut stats = ReproductionStats::default();
    let mut out = Vec::with_capacity(pop.len());
    for p in select_parents(pop, k, pop.len(), rng) {
        let parent = &pop[p];
        let mut child = None;
        for attempt in 0..=MUTATION_RETRIES {
            let (genome, log) = mutate(&parent.genome, mutation, innovations, rng);
            match build_phenotype(&genome, spec, &parent.params, rng) {
                Ok(ph) => {
                    if attempt > 0 {
                        stats.retried += 1;
                    }
                    stats.mutations.push(log);
                    child = Some((genome, ph.params()));
                    break;
                }
                Err(Error::Unviable(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        let (genome, params) = child.unwrap_or_else(|| {
            stats.copied += 1;
            stats.mutations.push(MutationLog::default());
            (parent.genome.clone(), parent.params.clone())
        });
        let mut ind = Individual::new(*next_id, genome);
        *next_id += 1;
        ind.params = params;
        ind.parent = Some(parent.id);
        ind.species = parent.species;
        out.push(ind);
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evo::{Gene, Genome};
    use crate::nn::{Activation, Role};

    fn pop(fitness: &[f64], species: &[usize]) -> Vec<Individual> {
        fitness
            .iter()
            .zip(species)
            .enumerate()
            .map(|(i, (&f, &s))| {
                let g = Genome::new(Role::Discriminator, vec![Gene::conv(0, Activation::Elu, 32, 3)]).unwrap();
                let mut ind = Individual::new(i as u64, g);
                ind.fitness = Some(f);
                ind.species = s;
                ind
            })
            .collect()
    }

    #[test]
    fn fractional_ranks() {
        let p = pop(&[3.0, 1.0, 3.0, 2.0], &[0; 4]);
        assert_eq!(inverse_rank_scores(&p), vec![1.5, 4.0, 1.5, 3.0]);
    }

    #[test]
    fn equal_fitness_uniform_quotas() {
        let p = pop(&[1.0; 9], &[0, 0, 0, 0, 1, 1, 2, 2, 2]);
        let q: Vec<usize> = species_quotas(&p, 9).iter().map(|s| s.2).collect();
        assert_eq!(q, vec![3, 3, 3]);
        let p = pop(&[1.0; 10], &[0, 0, 0, 0, 1, 1, 2, 2, 2, 2]);
        let q: Vec<usize> = species_quotas(&p, 10).iter().map(|s| s.2).collect();
        assert_eq!(q, vec![4, 3, 3]);
    }

    #[test]
    fn better_species_gets_larger_quota() {
        // Species 0 holds ranks 1 and 2, species 1 ranks 3 and 4: means 3.5 vs 1.5.
        let p = pop(&[0.1, 0.2, 0.3, 0.4], &[0, 0, 1, 1]);
        let q = species_quotas(&p, 4);
        assert!(q[0].2 > q[1].2);
        assert_eq!(q[0].2 + q[1].2, 4);
    }

    #[test]
    fn tournament_tie_goes_to_lower_id() {
        use rand::SeedableRng;
        let p = pop(&[1.0, 1.0], &[0, 0]);
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let wins = (0..4000).filter(|_| tournament(&p, &[0, 1], 2, &mut r) == 1).count();
        // Id 1 wins only when drawn twice: probability 1/4.
        assert!((800..1200).contains(&wins), "{wins}");
    }
}

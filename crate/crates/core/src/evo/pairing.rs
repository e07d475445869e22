use rand::seq::index::sample;
use rand::Rng;

/// Every generator index with every discriminator index, generator-major.
pub fn pair_all_vs_all(n_gens: usize, n_discs: usize) -> Vec<(usize, usize)> {
    (0..n_gens)
        .flat_map(|g| (0..n_discs).map(move |d| (g, d)))
        .collect()
}

/// Indices of the `k` lowest fitness values (ties to the lower index), or
/// `None` if any fitness is unknown.
fn k_best(fitness: &[Option<f64>], k: usize) -> Option<Vec<usize>> {
    let f: Option<Vec<f64>> = fitness.iter().copied().collect();
    let f = f?;
    let mut idx: Vec<usize> = (0..f.len()).collect();
    idx.sort_by(|&a, &b| f[a].total_cmp(&f[b]).then(a.cmp(&b)));
    idx.truncate(k);
    Some(idx)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KBestPairs {
    pub pairs: Vec<(usize, usize)>,
    /// True when fitness was unknown and random individuals were used.
    pub fallback: bool,
}

/// Each generator meets the `k` best discriminators and each discriminator
/// the `k` best generators, judged by the fitness each individual (or its
/// parent) had in the previous generation. Individuals are given in id
/// order, so index ties resolve to the lower id.
pub fn pair_all_vs_k_best<R: Rng + ?Sized>(
    gen_fitness: &[Option<f64>],
    disc_fitness: &[Option<f64>],
    k: usize,
    rng: &mut R,
) -> KBestPairs {
    let (ng, nd) = (gen_fitness.len(), disc_fitness.len());
    let (kg, kd) = (k.min(ng), k.min(nd));
    let best = (k_best(gen_fitness, kg), k_best(disc_fitness, kd));
    let fallback = best.0.is_none() || best.1.is_none();
    let best_g = best.0.unwrap_or_else(|| sorted(sample(rng, ng, kg).into_vec()));
    let best_d = best.1.unwrap_or_else(|| sorted(sample(rng, nd, kd).into_vec()));
    let mut pairs: Vec<(usize, usize)> = (0..ng)
        .flat_map(|g| best_d.iter().map(move |&d| (g, d)))
        .chain((0..nd).flat_map(|d| best_g.iter().map(move |&g| (g, d))))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    KBestPairs { pairs, fallback }
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Groups pairs into rounds in which no individual appears twice, keeping
/// each individual's matches in list order.
pub fn schedule_rounds(pairs: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut next_g: Vec<usize> = Vec::new();
    let mut next_d: Vec<usize> = Vec::new();
    let mut rounds: Vec<Vec<usize>> = Vec::new();
    for (i, &(g, d)) in pairs.iter().enumerate() {
        if next_g.len() <= g {
            next_g.resize(g + 1, 0);
        }
        if next_d.len() <= d {
            next_d.resize(d + 1, 0);
        }
        let r = next_g[g].max(next_d[d]);
        if rounds.len() <= r {
            rounds.resize(r + 1, Vec::new());
        }
        rounds[r].push(i);
        next_g[g] = r + 1;
        next_d[d] = r + 1;
    }
    rounds
}

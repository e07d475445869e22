use crate::evo::{genome_distance, Genome, Individual};

/// Maximum number of threshold adjustments per speciation call.
const MAX_ADJUSTMENTS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct SpeciationReport {
    pub species: usize,
    /// `species − target`; zero when the target was met.
    pub deviation: i64,
    pub delta: f64,
}

/// Greedy representative-based clustering with an adaptive threshold δ.
#[derive(Clone, Debug, PartialEq)]
pub struct Speciator {
    pub delta: f64,
    next_id: usize,
    /// Representatives of the species alive after the previous call.
    representatives: Vec<(usize, Genome)>,
}

impl Default for Speciator {
    fn default() -> Self {
        Self::new(0.5)
    }
}

impl Speciator {
    pub fn new(delta: f64) -> Self {
        Self {
            delta,
            next_id: 0,
            representatives: Vec::new(),
        }
    }

    /// Assigns members to species by first representative within δ.
    fn cluster(&self, pop: &[Individual], delta: f64) -> Vec<(usize, Genome, Vec<usize>)> {
        let mut species: Vec<(usize, Genome, Vec<usize>)> = self
            .representatives
            .iter()
            .map(|(id, g)| (*id, g.clone(), Vec::new()))
            .collect();
        let mut next = self.next_id;
        for (i, ind) in pop.iter().enumerate() {
            match species
                .iter_mut()
                .find(|(_, rep, _)| genome_distance(rep, &ind.genome) < delta)
            {
                Some(s) => s.2.push(i),
                None => {
                    species.push((next, ind.genome.clone(), vec![i]));
                    next += 1;
                }
            }
        }
        species.retain(|s| !s.2.is_empty());
        species
    }

    /// Partitions `pop` into `target` species where possible, writing each
    /// individual's species id.
    pub fn speciate(&mut self, pop: &mut [Individual], target: usize) -> SpeciationReport {
        assert!(!pop.is_empty(), "speciation of an empty population");
        let target = target.max(1);
        if pop.len() <= target {
            self.representatives.clear();
            for ind in pop.iter_mut() {
                ind.species = self.next_id;
                self.representatives.push((self.next_id, ind.genome.clone()));
                self.next_id += 1;
            }
            return SpeciationReport {
                species: pop.len(),
                deviation: pop.len() as i64 - target as i64,
                delta: self.delta,
            };
        }

        let mut delta = self.delta;
        let mut species = self.cluster(pop, delta);
        for _ in 0..MAX_ADJUSTMENTS {
            if species.len() == target {
                break;
            }
            delta *= if species.len() > target { 1.1 } else { 0.9 };
            species = self.cluster(pop, delta);
        }
        self.delta = delta;

        // Distances are discrete, so δ alone may oscillate around the target.
        while species.len() > target {
            let mut best = (f64::INFINITY, 0, 1);
            for a in 0..species.len() {
                for b in a + 1..species.len() {
                    let d = genome_distance(&species[a].1, &species[b].1);
                    if d < best.0 {
                        best = (d, a, b);
                    }
                }
            }
            let (_, a, b) = best;
            let merged = species.remove(b);
            species[a].2.extend(merged.2);
            species[a].2.sort_unstable();
        }
        while species.len() < target {
            let mut far: Option<(f64, usize, usize)> = None;
            for (si, (_, rep, members)) in species.iter().enumerate() {
                if members.len() < 2 {
                    continue;
                }
                for (mi, &m) in members.iter().enumerate() {
                    let d = genome_distance(rep, &pop[m].genome);
                    if d > 0.0 && far.is_none_or(|(fd, _, _)| d > fd) {
                        far = Some((d, si, mi));
                    }
                }
            }
            let Some((_, si, mi)) = far else { break };
            let m = species[si].2.remove(mi);
            let id = self.next_id.max(species.iter().map(|s| s.0 + 1).max().unwrap_or(0));
            species.push((id, pop[m].genome.clone(), vec![m]));
            self.next_id = id + 1;
        }

        for (id, _, members) in &species {
            for &m in members {
                pop[m].species = *id;
            }
        }
        self.next_id = self
            .next_id
            .max(species.iter().map(|s| s.0 + 1).max().unwrap_or(0));
        self.representatives = species.iter().map(|(id, rep, _)| (*id, rep.clone())).collect();
        SpeciationReport {
            species: species.len(),
            deviation: species.len() as i64 - target as i64,
            delta: self.delta,
        }
    }
}

/// Member indices grouped by species id, in ascending id order.
pub fn species_groups(pop: &[Individual]) -> Vec<(usize, Vec<usize>)> {
    let mut ids: Vec<usize> = pop.iter().map(|i| i.species).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter()
        .map(|s| (s, (0..pop.len()).filter(|&i| pop[i].species == s).collect()))
        .collect()
}

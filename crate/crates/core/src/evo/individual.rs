use crate::evo::{Genome, ParamStore};

/// Fitness given to individuals whose evaluation failed.
pub const WORST_FITNESS: f64 = f64::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub id: u64,
    pub genome: Genome,
    pub params: ParamStore,
    /// Lower is better; `None` until evaluated.
    pub fitness: Option<f64>,
    pub species: usize,
    pub parent: Option<u64>,
    /// Set when evaluation produced a non-finite value.
    pub flagged: bool,
}

impl Individual {
    pub fn new(id: u64, genome: Genome) -> Self {
        Self {
            id,
            genome,
            params: ParamStore::new(),
            fitness: None,
            species: 0,
            parent: None,
            flagged: false,
        }
    }

    /// Fitness for ordering: unevaluated individuals sort last.
    pub fn sort_fitness(&self) -> f64 {
        self.fitness.unwrap_or(f64::INFINITY)
    }
}

/// Index of the individual with minimal fitness; ties go to the lower id.
pub fn best_index(pop: &[Individual]) -> Option<usize> {
    (0..pop.len()).min_by(|&a, &b| {
        pop[a]
            .sort_fitness()
            .total_cmp(&pop[b].sort_fitness())
            .then(pop[a].id.cmp(&pop[b].id))
    })
}

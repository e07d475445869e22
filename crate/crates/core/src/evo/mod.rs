//! The evolutionary engine: genomes, phenotypes, variation, speciation,
//! selection, pairing and the generation loop.

pub mod evolve;
mod genome;
mod individual;
pub mod mutation;
pub mod pairing;
mod phenotype;
pub mod selection;
pub mod species;

pub use genome::{genome_distance, Gene, Genome, InnovationCounter};
pub use individual::{best_index, Individual, WORST_FITNESS};
pub use mutation::{mutate, MutationConfig, MutationLog};
pub use pairing::{pair_all_vs_all, pair_all_vs_k_best, schedule_rounds};
pub use phenotype::{
    build_phenotype, ParamKey, ParamStore, Phenotype, PhenotypeSpec, GENERATOR_OUTPUT_ACTIVATION, OUTPUT_KERNEL,
};
pub use selection::{select_and_reproduce, species_quotas};
pub use species::{SpeciationReport, Speciator};
pub use evolve::{checkpoint_path, evolve, read_metrics, write_metrics, EvolveSummary, FidContext, MetricsRow};

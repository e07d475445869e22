//! Evaluation by joint embedding: discriminator features of dataset and
//! generated samples are reduced with PCA, embedded with exact t-SNE, and
//! generators are scored by how much of the dataset map they cover.

pub mod eval;
mod map;
mod montage;
mod pca;
mod tsne;

pub use eval::{
    evaluate_run, evaluate_sources, load_report, rerender_report, DiscriminatorSnapshot, EvalReport, EvalSettings,
    Evaluation, GeneratorSamples, ReportRow, RunEvalOptions, TauSource,
};
pub use map::{jaccard_index, map_distances, median, normalize_map, threshold_tau, EmbeddingMap, Jaccard, MapLabel, Tau};
pub use montage::{cell_cost, grid_montage, render_montage, smallest_grid, write_montage};
pub use pca::{feature_matrix_to_dmatrix, pca_reduce, Pca};
pub use tsne::{
    affinities, perplexity_calibrate, squared_distances, tsne_embed, Affinities, CalibratedRow, TsneConfig,
    TsneResult, CALIBRATION_ITERATIONS, PERPLEXITY_TOLERANCE,
};

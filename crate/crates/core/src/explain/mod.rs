//! Integrated Gradients, rank aggregation, patient heatmaps and t-SNE.

pub mod heatmap;
pub mod ig;
pub mod ranks;
pub mod tsne;

pub use heatmap::{icd_chapter, patient_heatmap, EpisodeHeatmap};
pub use ig::{embedded_inputs, integrated_gradients, model_output, path_integral, EpisodeAttribution, IgConfig, PathIntegral};
pub use ranks::{aggregate_ranks, rank_scores, AggregateRank, RunRanks};
pub use tsne::{nn1_accuracy, project_embeddings, Projection, TsneConfig};

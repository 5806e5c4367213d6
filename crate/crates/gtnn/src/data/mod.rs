//! Dataset generators and loaders: weighted circulant graphs with a
//! polynomial regression target, and user-correlation graphs built from
//! movie ratings.

mod circulant;
mod movielens;

pub use circulant::{
    circulant_shift, downsample_experiment, generator_polynomial, synth_circulant_dataset, CirculantParams,
    Downsampled,
};
pub use movielens::{
    center_ratings, correlation_graph, load_movielens, movie_samples, pearson_matrix, synthetic_ratings,
    write_u_data, CorrelationGraph, Deviations, MovieSplit, Rating, RatingsTable, SyntheticRatingsParams,
};

use crate::network::Samples;

/// Train and test samples.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub train: Samples,
    pub test: Samples,
}

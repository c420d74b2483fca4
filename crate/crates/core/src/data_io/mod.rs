//! Synthetic data, minibatch sampling and on-disk formats.

mod formats;
mod synth;

pub use formats::{
    load_edges, load_labels, load_matrix, parse_csv_matrix, parse_edges, read_binary_matrix,
    save_edges, save_labels, save_matrix, write_binary_matrix, write_csv_matrix, BINARY_MAGIC,
};
pub use synth::{
    sample_batch, synth_covariance, synth_covariance_with_basis, Dataset, SamplerState, Sampling,
    Spectrum,
};

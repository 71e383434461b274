//! A small CPU neural-network toolkit: convolution layers with hand-written
//! backward passes, an Adam optimizer and the weight archive format.

mod adam;
pub mod archive;
pub mod im2col;
mod layers;
mod sequential;

pub use adam::Adam;
pub(crate) use archive::hex;
pub use archive::{write_atomic, WeightArchive};
pub use layers::{
    maxpool_backward, maxpool_forward, upsample_backward, upsample_forward, Conv2d, ConvTranspose2d,
};
pub use sequential::{Chw, Layer, LayerSpec, Sequential, Tape};

use ndarray::ArrayD;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;

/// The one random generator type used for everything seeded.
pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Global L2 norm of a gradient list.
pub fn grad_norm<T: Scalar>(grads: &[ArrayD<T>]) -> T {
    grads
        .iter()
        .flat_map(|g| g.iter())
        .fold(T::zero(), |a, &v| a + v * v)
        .sqrt()
}

#[cfg(test)]
mod gradcheck;

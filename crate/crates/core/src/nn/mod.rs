//! Dense networks with hand-written backpropagation.
//!
//! Everything runs in `f64`. Parameters and their gradient buffers live side by
//! side in each layer; optimizers reach them through [`Parameters`].

mod checkpoint;
pub mod gradcheck;
mod head;
mod mlp;
mod optim;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use head::PerFeatureHead;
pub use mlp::{Dense, ForwardCache, Mlp, MlpSpec};
pub use optim::{AdamW, AdamWConfig, CosineSchedule};

/// Access to trainable parameters and their accumulated gradients.
pub trait Parameters {
    /// Visit `(params, grads)` pairs in a fixed order.
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &[f64]));

    /// Visit `(params, grads)` pairs read-only, in the same order as [`Parameters::visit_mut`].
    fn visit(&self, f: &mut dyn FnMut(&[f64], &[f64]));

    fn zero_grad(&mut self);

    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p, _| n += p.len());
        n
    }

    /// Order-sensitive hash of the parameter bits.
    fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        self.visit(&mut |p, _| {
            for v in p {
                for b in v.to_bits().to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        });
        h
    }
}

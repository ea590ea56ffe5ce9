//! End-to-end experiment drivers shared by the command-line front end, the
//! benchmarks and the acceptance tests.

mod bench;
mod inpainting;
mod toy;
mod video;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use bench::{
    convex_pair, descent_table, monotone_table, random_lasso, random_unified, rate_table, DescentRow, MonotoneRow,
    RateRow,
};
pub use inpainting::{compare_inpainting, random_mask, toy_held_out, toy_inpainting, InpaintRow, InpaintSummary};
pub use toy::{run_toy, toy_samples, ToyMode, ToyRun, ToySetup};
pub use video::{
    beta_sweep, held_out_sequences, nondecreasing, prepare_images, synthetic_images, train_split, training_sequences, video_sequences, width_summary, SplitRun, SweepRow,
    VideoSetup, WidthSummary,
};

/// Independent random stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream identifiers, fixed so that changing one stage never shifts the
/// random numbers seen by another.
pub(crate) mod streams {
    pub const TRAIN_DATA: u64 = 1;
    pub const EVAL_DATA: u64 = 2;
    pub const IMAGES: u64 = 3;
    pub const MASKS: u64 = 4;
    pub const HELD_OUT: u64 = 5;
    pub const PROBLEMS: u64 = 6;
}

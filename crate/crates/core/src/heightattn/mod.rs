//! Height partition/reverse, vanilla and height attention, the pre-norm
//! transformer block, and the closed-form cost of the attention products.

pub mod attention;
pub mod block;
pub mod complexity;
pub mod partition;

pub use attention::{attention_backward, height_attention, height_attention_with, vanilla_attention, Execution};
pub use block::{block_backward, block_forward, transformer_block, transformer_block_backward, transformer_block_with};
pub use complexity::{complexity_height, complexity_vanilla};
pub use partition::{height_partition, height_reverse, HeightSequences, PartitionSpec};

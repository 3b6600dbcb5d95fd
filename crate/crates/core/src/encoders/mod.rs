//! Learned encoders producing the representations consumed by the router:
//! base node embeddings, masked relational embeddings, the one-hop expert
//! and the virtual-hub (high-order) expert.
//!
//! Every function here records onto a caller-owned [`Tape`](crate::tensor::Tape)
//! and reads parameters from a [`ParamStore`](crate::tensor::ParamStore).
//! Node-level values are `N x D` tape handles, one row per agent.

mod edge;
mod node;
mod one_hop;
mod relational;
mod virtual_nodes;

pub use edge::{edge_features, edge_geometry, init_edge_encoder, EDGE_GEOMETRY_DIM};
pub use node::{embed_nodes, init_node_encoder};
pub use one_hop::{init_one_hop, one_hop_expert};
pub use relational::{init_relational, relational_encode};
pub use virtual_nodes::{
    init_virtual_graph, init_virtual_nodes, orthogonal_rows, real_to_virtual, virtual_to_real, VirtualNodeBank,
};

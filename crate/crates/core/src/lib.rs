//! Exact, desk-scale machinery around the graph removal lemma: partite copy
//! counting, superregular extraction, shattering, the entropy-increment
//! refinement process and a one-sided sampling tester.

pub mod constants;
pub mod driver;
pub mod entropy;
pub mod graph;
pub mod hypergraph;
pub mod instances;
pub mod partition;
pub mod pattern;
pub mod rational;
pub mod regularity;
pub mod shattering;
pub mod tester;

pub use graph::{density, parse_edge_list, Graph, GraphError};
pub use hypergraph::{hyperdensity, HypergraphError, KUniformHypergraph};
pub use partition::{is_refinement, Partition, PartitionError};
pub use pattern::{Packing, PackingMode, Pattern, PatternError};
pub use rational::{Density, Rational};

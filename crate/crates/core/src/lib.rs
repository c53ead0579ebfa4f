//! Fair, skill-diverse group formation from course marks.
//!
//! The pipeline embeds students with a Laplacian eigenmap of their mark
//! correlation graph, then partitions the complete distance graph of the
//! embedding exactly, maximizing (or minimizing) within-group distance under
//! group-size and attribute-balance bounds.

pub mod cohort;
pub mod fairness;
pub mod graph;
pub mod linalg;
pub mod partition;
pub mod report;
pub mod spectral;

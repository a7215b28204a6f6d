//! Classification metrics, annotator agreement, intrusion tests and
//! cluster/frame mutual information.

mod alpha;
mod intrusion;
mod metrics;
mod mi;

pub use alpha::{krippendorff_alpha, AnnotationMatrix};
pub use intrusion::{intrusion_generate, intrusion_score, BlindedItem, IntrusionItem, IntrusionScore, CANDIDATES};
pub use metrics::{macro_metrics, mean_std, ClassMetrics, MeanStd, Metrics};
pub use mi::{binary_mi, mutual_information, top_clusters_per_frame, MiEntry};

//! Trace analysis: TTL-honoring estimates, LDNS/client association by
//! origin AS, distribution fits and median confidence intervals.

pub mod associate;
pub mod ci;
pub mod fit;
pub mod interarrival;
pub mod plan;
pub mod prefix;

pub use associate::{associate, AssociationResult, DnsLogEntry, FlowLogEntry};
pub use ci::{median, median_ci, MedianCi};
pub use fit::{fit_distribution, select_family, Family, FitParams, FitResult};
pub use interarrival::{min_interarrival_per_ldns, InterarrivalReport};
pub use plan::AddressPlan;
pub use prefix::PrefixTable;

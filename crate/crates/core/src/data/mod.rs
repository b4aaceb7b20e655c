mod io;
mod record;
mod selection;

pub use io::{load_dataset, write_dataset, write_records, Schema, FIELDS};
pub use record::{Dataset, Gender, HouseholdRecord, SCHEMA_VERSION};
pub use selection::{select_sample, Bounds, SelectionReport, SelectionRules};


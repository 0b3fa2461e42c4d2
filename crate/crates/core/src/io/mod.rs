//! Dataset ingestion, report serialization and model persistence.

mod persist;
mod report;
mod table;

pub use persist::{decode_classifier, encode_classifier, load_classifier, save_classifier, FORMAT_VERSION, MAGIC};
pub use report::{json_number, leakage_json, tai_json, to_json_string, write_report_json, Report};
pub use table::{
    load_labeled_csv, load_labels_csv, load_matrix_csv, parse_labeled_csv, parse_labels_csv, parse_matrix_csv,
    write_matrix_csv, LabeledDataset,
};

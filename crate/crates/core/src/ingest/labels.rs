use std::collections::HashMap;
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{Label, TransactionGraph};
use crate::error::{Error, Result};

/// Outcome of attaching labels to a graph.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelReport {
    pub attached: usize,
    /// Accounts that carry a label but do not occur in the graph.
    pub skipped_missing: usize,
    pub missing_examples: Vec<String>,
}

impl TransactionGraph {
    /// Records labels for accounts present in the graph. Absent accounts are
    /// counted, not inserted; two different labels for one account is fatal.
    pub fn attach_labels<I, S>(&mut self, labels: I) -> Result<LabelReport>
    where
        I: IntoIterator<Item = (S, Label)>,
        S: AsRef<str>,
    {
        let mut seen: HashMap<String, Label> = HashMap::new();
        let mut report = LabelReport::default();
        let mut resolved = Vec::new();
        for (account, label) in labels {
            let account = account.as_ref().trim();
            if let Some(&prev) = seen.get(account) {
                if prev != label {
                    return Err(Error::LabelConflict {
                        account: account.to_string(),
                        first: prev.as_u8(),
                        second: label.as_u8(),
                    });
                }
                continue;
            }
            seen.insert(account.to_string(), label);
            match self.node(account) {
                Some(node) => resolved.push((node, label)),
                None => {
                    report.skipped_missing += 1;
                    if report.missing_examples.len() < 10 {
                        report.missing_examples.push(account.to_string());
                    }
                }
            }
        }
        let existing = self.labels_mut();
        for (node, label) in resolved {
            existing.insert(node, label);
            report.attached += 1;
        }
        Ok(report)
    }
}

/// Reads an `account,label` CSV. A header row is optional.
pub fn read_labels_csv<R: Read>(reader: R) -> Result<Vec<(String, Label)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let (Some(account), Some(label)) = (rec.get(0), rec.get(1)) else {
            return Err(Error::Data(format!("label row {} has fewer than 2 columns", i + 1)));
        };
        if i == 0 && account.eq_ignore_ascii_case("account") {
            continue;
        }
        let label = match label {
            "0" => Label::Benign,
            "1" => Label::Fraud,
            other => {
                return Err(Error::Precondition(format!(
                    "label for {account} must be 0 or 1, got {other:?}"
                )))
            }
        };
        out.push((account.to_string(), label));
    }
    Ok(out)
}

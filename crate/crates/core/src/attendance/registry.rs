use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use serde::{Deserialize, Serialize};

use super::{AttendanceError, MacAddr, TagUid};

/// Binds a student to the two credentials checked at the door.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentRecord {
    pub student_id: String,
    pub display_name: String,
    pub tag_uid: TagUid,
    pub mac: MacAddr,
}

/// Student registry with unique ids, tags and MACs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<StudentRecord>", into = "Vec<StudentRecord>")]
pub struct Registry {
    students: BTreeMap<String, StudentRecord>,
    by_tag: HashMap<TagUid, String>,
    by_mac: HashMap<MacAddr, String>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses and registers a student.
    pub fn register(
        &mut self,
        student_id: &str,
        display_name: &str,
        tag_uid: &str,
        mac: &str,
    ) -> Result<&StudentRecord, AttendanceError> {
        let record = StudentRecord {
            student_id: student_id.trim().to_string(),
            display_name: display_name.trim().to_string(),
            tag_uid: tag_uid.parse()?,
            mac: mac.parse()?,
        };
        self.insert(record)
    }

    pub fn insert(&mut self, record: StudentRecord) -> Result<&StudentRecord, AttendanceError> {
        self.check(&record)?;
        let id = record.student_id.clone();
        self.by_tag.insert(record.tag_uid.clone(), id.clone());
        self.by_mac.insert(record.mac, id.clone());
        Ok(self.students.entry(id).or_insert(record))
    }

    /// Validates `record` against the registry without inserting it.
    pub fn check(&self, record: &StudentRecord) -> Result<(), AttendanceError> {
        if record.student_id.is_empty() {
            return Err(AttendanceError::EmptyField("student_id"));
        }
        if self.students.contains_key(&record.student_id) {
            return Err(AttendanceError::DuplicateStudentId(record.student_id.clone()));
        }
        if self.by_tag.contains_key(&record.tag_uid) {
            return Err(AttendanceError::DuplicateTag(record.tag_uid.clone()));
        }
        if self.by_mac.contains_key(&record.mac) {
            return Err(AttendanceError::DuplicateMac(record.mac));
        }
        Ok(())
    }

    pub fn get(&self, student_id: &str) -> Option<&StudentRecord> {
        self.students.get(student_id)
    }

    pub fn by_tag(&self, tag: &TagUid) -> Option<&StudentRecord> {
        self.by_tag.get(tag).and_then(|id| self.students.get(id))
    }

    pub fn by_mac(&self, mac: &MacAddr) -> Option<&StudentRecord> {
        self.by_mac.get(mac).and_then(|id| self.students.get(id))
    }

    /// Students in ascending `student_id` order.
    pub fn iter(&self) -> impl Iterator<Item = &StudentRecord> {
        self.students.values()
    }

    pub fn len(&self) -> usize {
        self.students.len()
    }

    pub fn is_empty(&self) -> bool {
        self.students.is_empty()
    }

    /// Loads a bootstrap file: one comma-separated record per line with the
    /// fields `student_id, display_name, tag_uid, mac`. Blank lines and lines
    /// starting with `#` are skipped; there is no header row.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, AttendanceError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(reader);
        let mut registry = Registry::new();
        for row in rdr.records() {
            let row = row.map_err(|e| AttendanceError::Bootstrap {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })?;
            let line = row.position().map_or(0, |p| p.line());
            if row.len() != 4 {
                return Err(AttendanceError::Bootstrap {
                    line,
                    message: format!("expected 4 fields, found {}", row.len()),
                });
            }
            registry
                .register(&row[0], &row[1], &row[2], &row[3])
                .map_err(|e| AttendanceError::Bootstrap { line, message: e.to_string() })?;
        }
        Ok(registry)
    }
}

impl From<Vec<StudentRecord>> for Registry {
    fn from(records: Vec<StudentRecord>) -> Self {
        let mut registry = Registry::new();
        for r in records {
            // Persisted registries were validated on the way in.
            let _ = registry.insert(r);
        }
        registry
    }
}

impl From<Registry> for Vec<StudentRecord> {
    fn from(r: Registry) -> Self {
        r.students.into_values().collect()
    }
}

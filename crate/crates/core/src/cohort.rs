//! Cohort inputs: course-mark matrices, sensitive-attribute tables and a
//! seeded generator for synthetic cohorts with planted skill affinities.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MIN_MARK: f64 = 0.0;
pub const MAX_MARK: f64 = 100.0;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("file not found: {0}")]
    MissingFile(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("mark out of range for student {student}, course {course}: {value}")]
    MarkOutOfRange {
        student: String,
        course: String,
        value: f64,
    },
    #[error("duplicate id: {0}")]
    DuplicateId(String),
    #[error("non-binary value {value:?} in row {row}, column {column}")]
    NonBinaryValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("student id mismatch: {0}")]
    IdMismatch(String),
    #[error("unknown attribute: {0}")]
    UnknownAttribute(String),
    #[error("mark matrix must have at least 2 students and 2 courses (got {students}x{courses})")]
    TooSmall { students: usize, courses: usize },
    #[error("profile length {got} does not match course count {expected}")]
    ProfileLengthMismatch { expected: usize, got: usize },
    #[error("affinity spec list is empty or has a zero count")]
    EmptySpec,
    #[error("invalid noise standard deviation {0}")]
    InvalidNoise(f64),
}

/// N students by L courses of marks in percent.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkMatrix {
    student_ids: Vec<String>,
    course_ids: Vec<String>,
    marks: Vec<f64>,
}

impl MarkMatrix {
    /// Validates shape, id uniqueness and the [0, 100] mark range.
    /// `marks` is row-major, one row per student.
    pub fn new(
        student_ids: Vec<String>,
        course_ids: Vec<String>,
        marks: Vec<f64>,
    ) -> Result<Self, CohortError> {
        let (n, l) = (student_ids.len(), course_ids.len());
        if n < 2 || l < 2 {
            return Err(CohortError::TooSmall {
                students: n,
                courses: l,
            });
        }
        if marks.len() != n * l {
            return Err(CohortError::MalformedRow {
                row: 0,
                reason: format!("expected {} marks, got {}", n * l, marks.len()),
            });
        }
        check_unique(&student_ids)?;
        check_unique(&course_ids)?;
        for (i, row) in marks.chunks(l).enumerate() {
            for (k, &v) in row.iter().enumerate() {
                if !(MIN_MARK..=MAX_MARK).contains(&v) {
                    return Err(CohortError::MarkOutOfRange {
                        student: student_ids[i].clone(),
                        course: course_ids[k].clone(),
                        value: v,
                    });
                }
            }
        }
        Ok(Self {
            student_ids,
            course_ids,
            marks,
        })
    }

    pub fn n_students(&self) -> usize {
        self.student_ids.len()
    }

    pub fn n_courses(&self) -> usize {
        self.course_ids.len()
    }

    pub fn student_ids(&self) -> &[String] {
        &self.student_ids
    }

    pub fn course_ids(&self) -> &[String] {
        &self.course_ids
    }

    /// Mark vector of student `m` across all courses.
    pub fn row(&self, m: usize) -> &[f64] {
        let l = self.n_courses();
        &self.marks[m * l..(m + 1) * l]
    }

    pub fn get(&self, m: usize, k: usize) -> f64 {
        self.marks[m * self.n_courses() + k]
    }

    /// Rows restricted to `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self, CohortError> {
        let ids = indices
            .iter()
            .map(|&i| self.student_ids[i].clone())
            .collect();
        let marks = indices
            .iter()
            .flat_map(|&i| self.row(i).iter().copied())
            .collect();
        Self::new(ids, self.course_ids.clone(), marks)
    }
}

/// Binary sensitive attributes, one column per attribute, rows aligned with
/// a [`MarkMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTable {
    student_ids: Vec<String>,
    columns: BTreeMap<String, Vec<bool>>,
}

impl AttributeTable {
    pub fn new(
        student_ids: Vec<String>,
        columns: BTreeMap<String, Vec<bool>>,
    ) -> Result<Self, CohortError> {
        check_unique(&student_ids)?;
        for (name, col) in &columns {
            if col.len() != student_ids.len() {
                return Err(CohortError::MalformedRow {
                    row: 0,
                    reason: format!(
                        "attribute {name} has {} entries for {} students",
                        col.len(),
                        student_ids.len()
                    ),
                });
            }
        }
        Ok(Self {
            student_ids,
            columns,
        })
    }

    /// A table with no attributes, for runs without fairness constraints.
    pub fn empty(student_ids: Vec<String>) -> Self {
        Self {
            student_ids,
            columns: BTreeMap::new(),
        }
    }

    pub fn student_ids(&self) -> &[String] {
        &self.student_ids
    }

    pub fn len(&self) -> usize {
        self.student_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.student_ids.is_empty()
    }

    pub fn attribute_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn column(&self, s: &str) -> Result<&[bool], CohortError> {
        self.columns
            .get(s)
            .map(Vec::as_slice)
            .ok_or_else(|| CohortError::UnknownAttribute(s.to_string()))
    }

    pub fn count(&self, s: &str) -> Result<usize, CohortError> {
        Ok(self.column(s)?.iter().filter(|&&b| b).count())
    }

    /// Fails unless the student ids equal `marks`' ids in the same order.
    pub fn check_aligned(&self, marks: &MarkMatrix) -> Result<(), CohortError> {
        if self.student_ids.len() != marks.n_students() {
            return Err(CohortError::IdMismatch(format!(
                "attribute table has {} students, marks have {}",
                self.student_ids.len(),
                marks.n_students()
            )));
        }
        for (a, b) in self.student_ids.iter().zip(marks.student_ids()) {
            if a != b {
                return Err(CohortError::IdMismatch(format!("{a} (expected {b})")));
            }
        }
        Ok(())
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            student_ids: indices
                .iter()
                .map(|&i| self.student_ids[i].clone())
                .collect(),
            columns: self
                .columns
                .iter()
                .map(|(k, col)| (k.clone(), indices.iter().map(|&i| col[i]).collect()))
                .collect(),
        }
    }
}

/// Fraction of the population carrying attribute `s`.
pub fn population_ratio(table: &AttributeTable, s: &str) -> Result<f64, CohortError> {
    let count = table.count(s)?;
    Ok(count as f64 / table.len() as f64)
}

fn check_unique(ids: &[String]) -> Result<(), CohortError> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(CohortError::DuplicateId(id.clone()));
        }
    }
    Ok(())
}

fn open_reader(path: &Path, delimiter: u8) -> Result<csv::Reader<std::fs::File>, CohortError> {
    if !path.exists() {
        return Err(CohortError::MissingFile(path.display().to_string()));
    }
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CohortError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
}

/// Header columns after the id column, and (id, cells) per data row.
type Table = (Vec<String>, Vec<(String, Vec<String>)>);

/// Reads a header-plus-rows table. Row indices in errors are 1-based file
/// lines (the header is row 1).
fn read_table(path: &Path, delimiter: u8) -> Result<Table, CohortError> {
    let mut reader = open_reader(path, delimiter)?;
    let mut records = reader.records();
    let header = match records.next() {
        Some(Ok(h)) => h,
        Some(Err(e)) => {
            return Err(CohortError::MalformedRow {
                row: 1,
                reason: e.to_string(),
            })
        }
        None => {
            return Err(CohortError::MalformedRow {
                row: 1,
                reason: "missing header".into(),
            })
        }
    };
    let header: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if header.len() < 2 {
        return Err(CohortError::MalformedRow {
            row: 1,
            reason: "header needs an id column and at least one data column".into(),
        });
    }
    let columns = header[1..].to_vec();
    let mut rows = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| CohortError::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        if rec.len() == 1 && rec.get(0).is_some_and(|c| c.trim().is_empty()) {
            continue;
        }
        if rec.len() != header.len() {
            return Err(CohortError::MalformedRow {
                row,
                reason: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        let id = rec[0].trim().to_string();
        if id.is_empty() {
            return Err(CohortError::MalformedRow {
                row,
                reason: "empty student id".into(),
            });
        }
        let cells = rec.iter().skip(1).map(|c| c.trim().to_string()).collect();
        rows.push((id, cells));
    }
    Ok((columns, rows))
}

/// Loads a marks CSV: header `student_id,<course_1>,...`, then one row per
/// student. Blank cells are rejected.
pub fn load_marks(path: impl AsRef<Path>, delimiter: u8) -> Result<MarkMatrix, CohortError> {
    let (courses, rows) = read_table(path.as_ref(), delimiter)?;
    let mut ids = Vec::with_capacity(rows.len());
    let mut marks = Vec::with_capacity(rows.len() * courses.len());
    for (i, (id, cells)) in rows.into_iter().enumerate() {
        let row = i + 2;
        for (k, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(CohortError::MalformedRow {
                    row,
                    reason: format!("blank mark for course {}", courses[k]),
                });
            }
            let v: f64 = cell.parse().map_err(|_| CohortError::MalformedRow {
                row,
                reason: format!("non-numeric mark {cell:?} for course {}", courses[k]),
            })?;
            marks.push(v);
        }
        ids.push(id);
    }
    MarkMatrix::new(ids, courses, marks)
}

/// Writes a marks CSV in the same layout [`load_marks`] reads.
pub fn write_marks<W: Write>(marks: &MarkMatrix, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["student_id".to_string()];
    header.extend(marks.course_ids().iter().cloned());
    w.write_record(&header)?;
    for m in 0..marks.n_students() {
        let mut rec = vec![marks.student_ids()[m].clone()];
        rec.extend(marks.row(m).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads an attributes CSV. If `expected_ids` is given the rows must match
/// those ids in order.
pub fn load_attributes(
    path: impl AsRef<Path>,
    delimiter: u8,
    expected_ids: Option<&[String]>,
) -> Result<AttributeTable, CohortError> {
    let (names, rows) = read_table(path.as_ref(), delimiter)?;
    check_unique(&names)?;
    let mut ids = Vec::with_capacity(rows.len());
    let mut cols: Vec<Vec<bool>> = vec![Vec::with_capacity(rows.len()); names.len()];
    for (i, (id, cells)) in rows.into_iter().enumerate() {
        for (k, cell) in cells.iter().enumerate() {
            let bit = match cell.as_str() {
                "0" => false,
                "1" => true,
                _ => {
                    return Err(CohortError::NonBinaryValue {
                        row: i + 2,
                        column: names[k].clone(),
                        value: cell.clone(),
                    })
                }
            };
            cols[k].push(bit);
        }
        ids.push(id);
    }
    if let Some(expected) = expected_ids {
        if expected.len() != ids.len() {
            return Err(CohortError::IdMismatch(format!(
                "attribute file has {} students, expected {}",
                ids.len(),
                expected.len()
            )));
        }
        if let Some((got, want)) = ids.iter().zip(expected).find(|(a, b)| a != b) {
            return Err(CohortError::IdMismatch(format!("{got} (expected {want})")));
        }
    }
    AttributeTable::new(ids, names.into_iter().zip(cols).collect())
}

/// One planted affinity: `count` students whose marks are `profile` plus
/// Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinitySpec {
    #[serde(default)]
    pub label: Option<String>,
    pub count: usize,
    pub profile: Vec<f64>,
    pub noise_std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCohort {
    pub marks: MarkMatrix,
    /// Index into the spec list for each student.
    pub labels: Vec<usize>,
    pub label_names: Vec<String>,
}

/// Draws a synthetic cohort. Output is a pure function of the arguments;
/// marks are clamped to [0, 100].
pub fn synth_cohort(
    specs: &[AffinitySpec],
    courses: usize,
    seed: u64,
) -> Result<SynthCohort, CohortError> {
    if specs.is_empty() || specs.iter().any(|s| s.count == 0) {
        return Err(CohortError::EmptySpec);
    }
    for s in specs {
        if s.profile.len() != courses {
            return Err(CohortError::ProfileLengthMismatch {
                expected: courses,
                got: s.profile.len(),
            });
        }
        if !(s.noise_std >= 0.0 && s.noise_std.is_finite()) {
            return Err(CohortError::InvalidNoise(s.noise_std));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: usize = specs.iter().map(|s| s.count).sum();
    let width = total.to_string().len().max(3);
    let mut ids = Vec::with_capacity(total);
    let mut labels = Vec::with_capacity(total);
    let mut marks = Vec::with_capacity(total * courses);
    for (a, spec) in specs.iter().enumerate() {
        let noise = Normal::new(0.0, spec.noise_std)
            .map_err(|_| CohortError::InvalidNoise(spec.noise_std))?;
        for _ in 0..spec.count {
            ids.push(format!("s{:0width$}", ids.len() + 1));
            labels.push(a);
            for &base in &spec.profile {
                let v = if spec.noise_std == 0.0 {
                    base
                } else {
                    base + noise.sample(&mut rng)
                };
                marks.push(v.clamp(MIN_MARK, MAX_MARK));
            }
        }
    }
    let course_ids = (1..=courses).map(|k| format!("c{k:02}")).collect();
    let label_names = specs
        .iter()
        .enumerate()
        .map(|(i, s)| s.label.clone().unwrap_or_else(|| format!("affinity{i}")))
        .collect();
    Ok(SynthCohort {
        marks: MarkMatrix::new(ids, course_ids, marks)?,
        labels,
        label_names,
    })
}

/// Three-affinity profile set over `courses` courses: weak in mathematics,
/// strong in mathematics, and consistent high achievers. The first quarter
/// of the courses (at least two) are the mathematics courses.
pub fn three_affinity_specs(
    courses: usize,
    per_affinity: usize,
    noise_std: f64,
) -> Vec<AffinitySpec> {
    let math = (courses / 4).max(2).min(courses);
    // Course difficulty pattern shared by everyone so that non-math courses
    // are not flat.
    let base: Vec<f64> = (0..courses)
        .map(|k| 62.0 + 10.0 * ((k as f64) * 1.7).sin())
        .collect();
    let weak: Vec<f64> = base
        .iter()
        .enumerate()
        .map(|(k, &b)| if k < math { b - 15.0 } else { b + 3.0 })
        .collect();
    let strong: Vec<f64> = base
        .iter()
        .enumerate()
        .map(|(k, &b)| if k < math { b + 15.0 } else { b - 3.0 })
        .collect();
    let high: Vec<f64> = base
        .iter()
        .enumerate()
        .map(|(k, &b)| b + 14.0 + 6.0 * ((k as f64) * 0.9 + 1.0).cos())
        .collect();
    vec![
        AffinitySpec {
            label: Some("math_weak".into()),
            count: per_affinity,
            profile: weak,
            noise_std,
        },
        AffinitySpec {
            label: Some("math_strong".into()),
            count: per_affinity,
            profile: strong,
            noise_std,
        },
        AffinitySpec {
            label: Some("high_achiever".into()),
            count: per_affinity,
            profile: high,
            noise_std,
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_small_matrix() {
        let f = write_tmp("student_id,c1,c2\na,55,70\nb,62,48\nc,91,85\n");
        let m = load_marks(f.path(), b',').unwrap();
        assert_eq!(m.n_students(), 3);
        assert_eq!(m.n_courses(), 2);
        assert_eq!(m.row(0), &[55.0, 70.0]);
        assert_eq!(m.row(1), &[62.0, 48.0]);
        assert_eq!(m.row(2), &[91.0, 85.0]);
        assert_eq!(m.student_ids(), &["a", "b", "c"]);
    }

    #[test]
    fn rejects_out_of_range_mark() {
        let f = write_tmp("student_id,c1,c2\na,55,105\nb,62,48\n");
        match load_marks(f.path(), b',') {
            Err(CohortError::MarkOutOfRange {
                student,
                course,
                value,
            }) => {
                assert_eq!(student, "a");
                assert_eq!(course, "c2");
                assert_eq!(value, 105.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn loads_cohort_of_54_by_23() {
        let mut s = String::from("student_id");
        for k in 0..23 {
            s.push_str(&format!(",course{k}"));
        }
        s.push('\n');
        for m in 0..54 {
            s.push_str(&format!("st{m}"));
            for k in 0..23 {
                s.push_str(&format!(",{}", (m * 7 + k * 3) % 101));
            }
            s.push('\n');
        }
        let f = write_tmp(&s);
        let m = load_marks(f.path(), b',').unwrap();
        assert_eq!((m.n_students(), m.n_courses()), (54, 23));
    }

    #[test]
    fn load_errors() {
        assert!(matches!(
            load_marks("/nonexistent/marks.csv", b','),
            Err(CohortError::MissingFile(_))
        ));
        let f = write_tmp("student_id,c1,c2\na,55\nb,62,48\n");
        assert!(matches!(
            load_marks(f.path(), b','),
            Err(CohortError::MalformedRow { row: 2, .. })
        ));
        let f = write_tmp("student_id,c1,c2\na,55,\nb,62,48\n");
        assert!(matches!(
            load_marks(f.path(), b','),
            Err(CohortError::MalformedRow { row: 2, .. })
        ));
        let f = write_tmp("student_id,c1,c2\na,55,1\na,62,48\n");
        assert!(matches!(
            load_marks(f.path(), b','),
            Err(CohortError::DuplicateId(id)) if id == "a"
        ));
        let f = write_tmp("student_id;c1;c2\na;55;1\nb;62;x\n");
        assert!(matches!(
            load_marks(f.path(), b';'),
            Err(CohortError::MalformedRow { row: 3, .. })
        ));
    }

    #[test]
    fn write_then_load_round_trips() {
        let m = MarkMatrix::new(
            vec!["x".into(), "y".into()],
            vec!["p".into(), "q".into(), "r".into()],
            vec![0.0, 12.5, 100.0, 33.333333333333336, 70.1, 0.1],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_marks(&m, &mut buf).unwrap();
        let f = write_tmp(std::str::from_utf8(&buf).unwrap());
        assert_eq!(load_marks(f.path(), b',').unwrap(), m);
    }

    fn ten_ids() -> Vec<String> {
        (0..10).map(|i| format!("s{i}")).collect()
    }

    #[test]
    fn attributes_and_population_ratio() {
        let mut s = String::from("student_id,flag\n");
        for i in 0..10 {
            s.push_str(&format!("s{i},{}\n", u8::from(i == 3 || i == 7)));
        }
        let f = write_tmp(&s);
        let ids = ten_ids();
        let t = load_attributes(f.path(), b',', Some(&ids)).unwrap();
        assert_eq!(t.count("flag").unwrap(), 2);
        assert_eq!(population_ratio(&t, "flag").unwrap(), 0.2);
        assert!(matches!(
            population_ratio(&t, "gender"),
            Err(CohortError::UnknownAttribute(_))
        ));
    }

    #[test]
    fn population_ratio_extremes() {
        let ids = ten_ids();
        let cols = BTreeMap::from([
            ("all".to_string(), vec![true; 10]),
            ("none".to_string(), vec![false; 10]),
        ]);
        let t = AttributeTable::new(ids, cols).unwrap();
        assert_eq!(population_ratio(&t, "all").unwrap(), 1.0);
        assert_eq!(population_ratio(&t, "none").unwrap(), 0.0);
    }

    #[test]
    fn attribute_errors() {
        let f = write_tmp("student_id,flag\ns0,0\ns1,2\n");
        assert!(matches!(
            load_attributes(f.path(), b',', None),
            Err(CohortError::NonBinaryValue { row: 3, .. })
        ));
        let f = write_tmp("student_id,flag\ns0,0\nzz,1\n");
        let ids = vec!["s0".to_string(), "s1".to_string()];
        assert!(matches!(
            load_attributes(f.path(), b',', Some(&ids)),
            Err(CohortError::IdMismatch(_))
        ));
        assert!(matches!(
            load_attributes("/nope.csv", b',', None),
            Err(CohortError::MissingFile(_))
        ));
    }

    #[test]
    fn synth_zero_noise_is_exact() {
        let spec = AffinitySpec {
            label: None,
            count: 4,
            profile: vec![70.0; 5],
            noise_std: 0.0,
        };
        let c = synth_cohort(&[spec], 5, 9).unwrap();
        assert!((0..4).all(|m| c.marks.row(m).iter().all(|&v| v == 70.0)));
    }

    #[test]
    fn synth_is_deterministic() {
        let specs = three_affinity_specs(23, 18, 5.0);
        let a = synth_cohort(&specs, 23, 42).unwrap();
        let b = synth_cohort(&specs, 23, 42).unwrap();
        assert_eq!(a, b);
        let c = synth_cohort(&specs, 23, 43).unwrap();
        assert_ne!(a.marks, c.marks);
        assert_eq!(a.marks.n_students(), 54);
    }

    #[test]
    fn synth_errors() {
        assert!(matches!(
            synth_cohort(&[], 3, 0),
            Err(CohortError::EmptySpec)
        ));
        let spec = AffinitySpec {
            label: None,
            count: 2,
            profile: vec![50.0; 4],
            noise_std: 1.0,
        };
        assert!(matches!(
            synth_cohort(&[spec], 3, 0),
            Err(CohortError::ProfileLengthMismatch {
                expected: 3,
                got: 4
            })
        ));
    }

    proptest::proptest! {
        #[test]
        fn synth_marks_stay_in_range(seed in proptest::prelude::any::<u64>(), noise in 0.0f64..60.0) {
            let specs = vec![
                AffinitySpec { label: None, count: 3, profile: vec![2.0, 98.0, 50.0], noise_std: noise },
                AffinitySpec { label: None, count: 2, profile: vec![100.0, 0.0, 50.0], noise_std: noise },
            ];
            let c = synth_cohort(&specs, 3, seed).unwrap();
            for m in 0..5 {
                proptest::prop_assert!(c.marks.row(m).iter().all(|v| (0.0..=100.0).contains(v)));
            }
        }

        #[test]
        fn population_count_is_integral(bits in proptest::collection::vec(proptest::bool::ANY, 1..40)) {
            let ids: Vec<String> = (0..bits.len()).map(|i| i.to_string()).collect();
            let t = AttributeTable::new(ids, BTreeMap::from([("s".to_string(), bits.clone())])).unwrap();
            let scaled = population_ratio(&t, "s").unwrap() * bits.len() as f64;
            proptest::prop_assert!((scaled - scaled.round()).abs() < 1e-9);
        }
    }
}

//! Corpus data model and CSV ingestion.
//!
//! A corpus is three pre-aligned tables keyed by `movement_id`:
//!
//! ```text
//! notes.csv    movement_id,note_id,onset_qn,duration_qn,midi_pitch,measure,beat,dynamic_level,expressive_marks
//! harmony.csv  movement_id,onset_qn,local_key,function_zone,is_secondary,complexity
//! motifs.csv   movement_id,motif_class_id,instance_id,note_ids
//! ```
//!
//! `note_ids` is a semicolon-separated list. Times are in quarter notes from
//! the start of the movement. `dynamic_level` is an annotator-supplied ordinal
//! (the suggested mapping is pp=1 through ff=8; it is not enforced). Lines
//! starting with `#` are ignored so that pipeline artifacts can carry a
//! provenance header.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used whenever two score times are compared.
pub const ONSET_TOLERANCE: f64 = 1e-6;

pub const NOTES_HEADER: [&str; 9] = [
    "movement_id",
    "note_id",
    "onset_qn",
    "duration_qn",
    "midi_pitch",
    "measure",
    "beat",
    "dynamic_level",
    "expressive_marks",
];
pub const HARMONY_HEADER: [&str; 6] = [
    "movement_id",
    "onset_qn",
    "local_key",
    "function_zone",
    "is_secondary",
    "complexity",
];
pub const MOTIFS_HEADER: [&str; 4] = ["movement_id", "motif_class_id", "instance_id", "note_ids"];
pub const MANIFEST_HEADER: [&str; 2] = ["movement_id", "period"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub movement_id: String,
    pub note_id: i64,
    pub onset_qn: f64,
    pub duration_qn: f64,
    pub midi_pitch: u8,
    pub measure: i64,
    pub beat: f64,
    pub dynamic_level: f64,
    pub expressive_marks: u32,
}

impl NoteEvent {
    pub fn offset_qn(&self) -> f64 {
        self.onset_qn + self.duration_qn
    }
}

/// Harmonic function of a chord.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FunctionZone {
    T,
    PD,
    D,
}

impl FromStr for FunctionZone {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "T" => Ok(FunctionZone::T),
            "PD" => Ok(FunctionZone::PD),
            "D" => Ok(FunctionZone::D),
            other => Err(format!(
                "unknown function zone `{other}` (expected T, PD or D)"
            )),
        }
    }
}

impl fmt::Display for FunctionZone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FunctionZone::T => "T",
            FunctionZone::PD => "PD",
            FunctionZone::D => "D",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonyEvent {
    pub movement_id: String,
    pub onset_qn: f64,
    /// Tonic spelling plus mode by case: `C` is C major, `c` is C minor.
    pub local_key: String,
    pub function_zone: FunctionZone,
    pub is_secondary: bool,
    pub complexity: f64,
}

/// Pitch class (0 = C) of a key name such as `Eb`, `f#` or `C`.
pub fn key_tonic_pitch_class(key: &str) -> Option<u8> {
    let mut chars = key.trim().chars();
    let letter = chars.next()?;
    let base: i32 = match letter.to_ascii_uppercase() {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => 5,
        'G' => 7,
        'A' => 9,
        'B' => 11,
        _ => return None,
    };
    let mut shift = 0i32;
    for c in chars {
        match c {
            '#' => shift += 1,
            'b' | '-' => shift -= 1,
            _ => return None,
        }
    }
    Some((base + shift).rem_euclid(12) as u8)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifInstance {
    pub movement_id: String,
    pub motif_class_id: i64,
    pub instance_id: i64,
    /// Ordered by onset.
    pub note_ids: Vec<i64>,
    pub segment_id: Option<usize>,
    pub is_anchor: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Movement {
    pub id: String,
    pub notes: Vec<NoteEvent>,
    pub harmony: Vec<HarmonyEvent>,
    pub instances: Vec<MotifInstance>,
    pub period: Option<String>,
}

impl Movement {
    pub fn note(&self, note_id: i64) -> Option<&NoteEvent> {
        self.notes.iter().find(|n| n.note_id == note_id)
    }

    pub fn note_index(&self) -> HashMap<i64, &NoteEvent> {
        self.notes.iter().map(|n| (n.note_id, n)).collect()
    }

    /// Notes of an instance in stored (onset) order.
    pub fn instance_notes(&self, instance: &MotifInstance) -> Result<Vec<&NoteEvent>> {
        let index = self.note_index();
        instance
            .note_ids
            .iter()
            .map(|id| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::DanglingReference {
                        movement_id: self.id.clone(),
                        instance_id: instance.instance_id,
                        note_id: *id,
                    })
            })
            .collect()
    }

    /// End of the last sounding note.
    pub fn end_qn(&self) -> f64 {
        self.notes
            .iter()
            .map(NoteEvent::offset_qn)
            .fold(0.0, f64::max)
    }

    /// Harmony event in effect at `onset_qn` (last event starting at or before it).
    pub fn harmony_at(&self, onset_qn: f64) -> Result<&HarmonyEvent> {
        self.harmony
            .iter()
            .take_while(|h| h.onset_qn <= onset_qn + ONSET_TOLERANCE)
            .last()
            .ok_or_else(|| Error::HarmonyGap {
                movement_id: self.id.clone(),
                onset_qn,
            })
    }

    /// Harmony events sounding anywhere in `[start, end)`, including the one
    /// already in effect at `start`.
    pub fn harmony_overlapping(&self, start: f64, end: f64) -> Result<Vec<&HarmonyEvent>> {
        let first = self.harmony_at(start)?;
        let mut out = vec![first];
        out.extend(self.harmony.iter().filter(|h| {
            h.onset_qn > first.onset_qn + ONSET_TOLERANCE && h.onset_qn < end - ONSET_TOLERANCE
        }));
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub movements: BTreeMap<String, Movement>,
    /// Period selected when the corpus was filtered, if any.
    pub period_tag: Option<String>,
}

impl Corpus {
    pub fn instance_count(&self) -> usize {
        self.movements.values().map(|m| m.instances.len()).sum()
    }

    /// Sorts every table into canonical order.
    pub fn canonicalize(&mut self) {
        for movement in self.movements.values_mut() {
            movement.notes.sort_by(|a, b| {
                a.onset_qn
                    .total_cmp(&b.onset_qn)
                    .then(a.midi_pitch.cmp(&b.midi_pitch))
                    .then(a.note_id.cmp(&b.note_id))
            });
            movement.harmony.sort_by(|a, b| {
                a.onset_qn
                    .total_cmp(&b.onset_qn)
                    .then_with(|| a.local_key.cmp(&b.local_key))
                    .then(a.function_zone.cmp(&b.function_zone))
                    .then(a.is_secondary.cmp(&b.is_secondary))
                    .then(a.complexity.total_cmp(&b.complexity))
            });
            let order: HashMap<i64, usize> = movement
                .notes
                .iter()
                .enumerate()
                .map(|(i, n)| (n.note_id, i))
                .collect();
            for inst in &mut movement.instances {
                inst.note_ids
                    .sort_by_key(|id| (order.get(id).copied().unwrap_or(usize::MAX), *id));
            }
            let first_onset = |inst: &MotifInstance| {
                inst.note_ids
                    .first()
                    .and_then(|id| order.get(id))
                    .map(|&i| movement.notes[i].onset_qn)
                    .unwrap_or(f64::INFINITY)
            };
            let mut keyed: Vec<(f64, MotifInstance)> = movement
                .instances
                .drain(..)
                .map(|inst| (first_onset(&inst), inst))
                .collect();
            keyed.sort_by(|(oa, a), (ob, b)| {
                oa.total_cmp(ob)
                    .then(a.motif_class_id.cmp(&b.motif_class_id))
                    .then(a.instance_id.cmp(&b.instance_id))
            });
            movement.instances = keyed.into_iter().map(|(_, inst)| inst).collect();
        }
    }

    /// Keeps only the movements tagged with `period`.
    pub fn filter_period(&mut self, period: &str) {
        self.movements
            .retain(|_, m| m.period.as_deref() == Some(period));
        self.period_tag = Some(period.to_string());
    }
}

/// A rule violation found by [`validate_corpus`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub movement_id: String,
    pub entity: String,
    pub rule: String,
}

impl Diagnostic {
    pub fn new(movement_id: &str, entity: impl Into<String>, rule: impl Into<String>) -> Self {
        Diagnostic {
            movement_id: movement_id.to_string(),
            entity: entity.into(),
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.movement_id, self.entity, self.rule)
    }
}

pub fn validate_corpus(corpus: &Corpus) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (mid, movement) in &corpus.movements {
        let mut seen = HashSet::new();
        for note in &movement.notes {
            let entity = format!("note {}", note.note_id);
            if !seen.insert(note.note_id) {
                out.push(Diagnostic::new(mid, &entity, "duplicate note id"));
            }
            if !(note.duration_qn > 0.0) {
                out.push(Diagnostic::new(mid, &entity, "non-positive duration"));
            }
            if !(note.onset_qn >= 0.0) {
                out.push(Diagnostic::new(mid, &entity, "negative onset"));
            }
            if note.midi_pitch > 127 {
                out.push(Diagnostic::new(mid, &entity, "pitch out of MIDI range"));
            }
            if note.measure < 1 {
                out.push(Diagnostic::new(mid, &entity, "measure below 1"));
            }
            if !(note.beat >= 1.0) {
                out.push(Diagnostic::new(mid, &entity, "beat below 1"));
            }
            if !note.dynamic_level.is_finite() {
                out.push(Diagnostic::new(mid, &entity, "non-finite dynamic level"));
            }
        }
        if !movement
            .harmony
            .iter()
            .any(|h| h.onset_qn.abs() <= ONSET_TOLERANCE)
        {
            out.push(Diagnostic::new(mid, "harmony", "no initial harmony"));
        }
        if movement
            .harmony
            .windows(2)
            .any(|w| w[1].onset_qn < w[0].onset_qn)
        {
            out.push(Diagnostic::new(
                mid,
                "harmony",
                "events not sorted by onset",
            ));
        }
        for h in &movement.harmony {
            let entity = format!("harmony at {}", h.onset_qn);
            if !(h.complexity >= 0.0) {
                out.push(Diagnostic::new(mid, &entity, "negative complexity"));
            }
            if key_tonic_pitch_class(&h.local_key).is_none() {
                out.push(Diagnostic::new(mid, &entity, "unparseable local key"));
            }
        }
        let index = movement.note_index();
        let mut instance_ids = HashSet::new();
        for inst in &movement.instances {
            let entity = format!("instance {}", inst.instance_id);
            if !instance_ids.insert(inst.instance_id) {
                out.push(Diagnostic::new(mid, &entity, "duplicate instance id"));
            }
            if inst.note_ids.is_empty() {
                out.push(Diagnostic::new(mid, &entity, "empty motif instance"));
            }
            let mut onsets = Vec::with_capacity(inst.note_ids.len());
            for id in &inst.note_ids {
                match index.get(id) {
                    Some(n) => onsets.push(n.onset_qn),
                    None => out.push(Diagnostic::new(mid, &entity, "dangling note reference")),
                }
            }
            if onsets.windows(2).any(|w| w[1] < w[0]) {
                out.push(Diagnostic::new(mid, &entity, "notes not ordered by onset"));
            }
        }
    }
    out
}

fn malformed(path: &str, line: u64, message: impl Into<String>) -> Error {
    Error::MalformedRow {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input)
}

/// Reads a headed CSV table, checking the header and column count and
/// handing each record (with its line number) to `parse`.
fn read_table<R: Read, T>(
    input: R,
    name: &str,
    header: &[&str],
    mut parse: impl FnMut(&csv::StringRecord, u64) -> Result<T>,
) -> Result<Vec<T>> {
    let mut rdr = reader(input);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(malformed(
            name,
            1,
            format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                found.join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(malformed(
                name,
                line,
                format!("expected {} columns, found {}", header.len(), record.len()),
            ));
        }
        rows.push(parse(&record, line)?);
    }
    Ok(rows)
}

fn field<T: FromStr>(
    rec: &csv::StringRecord,
    col: usize,
    header: &[&str],
    name: &str,
    line: u64,
) -> Result<T> {
    let raw = &rec[col];
    raw.parse::<T>().map_err(|_| {
        malformed(
            name,
            line,
            format!("column `{}`: cannot parse `{raw}`", header[col]),
        )
    })
}

fn parse_bool01(raw: &str, name: &str, line: u64) -> Result<bool> {
    match raw {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(malformed(
            name,
            line,
            format!("column `is_secondary`: expected 0 or 1, found `{raw}`"),
        )),
    }
}

pub fn read_notes<R: Read>(input: R, name: &str) -> Result<Vec<NoteEvent>> {
    let h = &NOTES_HEADER;
    read_table(input, name, h, |r, line| {
        Ok(NoteEvent {
            movement_id: r[0].to_string(),
            note_id: field(r, 1, h, name, line)?,
            onset_qn: field(r, 2, h, name, line)?,
            duration_qn: field(r, 3, h, name, line)?,
            midi_pitch: {
                let p: u8 = field(r, 4, h, name, line)?;
                if p > 127 {
                    return Err(malformed(
                        name,
                        line,
                        format!("midi_pitch {p} outside 0..=127"),
                    ));
                }
                p
            },
            measure: field(r, 5, h, name, line)?,
            beat: field(r, 6, h, name, line)?,
            dynamic_level: field(r, 7, h, name, line)?,
            expressive_marks: field(r, 8, h, name, line)?,
        })
    })
}

pub fn read_harmony<R: Read>(input: R, name: &str) -> Result<Vec<HarmonyEvent>> {
    let h = &HARMONY_HEADER;
    read_table(input, name, h, |r, line| {
        Ok(HarmonyEvent {
            movement_id: r[0].to_string(),
            onset_qn: field(r, 1, h, name, line)?,
            local_key: r[2].to_string(),
            function_zone: r[3].parse().map_err(|e: String| malformed(name, line, e))?,
            is_secondary: parse_bool01(&r[4], name, line)?,
            complexity: field(r, 5, h, name, line)?,
        })
    })
}

pub fn read_motifs<R: Read>(input: R, name: &str) -> Result<Vec<MotifInstance>> {
    let h = &MOTIFS_HEADER;
    read_table(input, name, h, |r, line| {
        let note_ids = r[3]
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<i64>().map_err(|_| {
                    malformed(name, line, format!("column `note_ids`: cannot parse `{s}`"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if note_ids.is_empty() {
            return Err(malformed(name, line, "column `note_ids`: empty list"));
        }
        Ok(MotifInstance {
            movement_id: r[0].to_string(),
            motif_class_id: field(r, 1, h, name, line)?,
            instance_id: field(r, 2, h, name, line)?,
            note_ids,
            segment_id: None,
            is_anchor: false,
        })
    })
}

/// Reads `movement_id,period` rows.
pub fn read_manifest<R: Read>(input: R, name: &str) -> Result<Vec<(String, String)>> {
    read_table(input, name, &MANIFEST_HEADER, |r, _| {
        Ok((r[0].to_string(), r[1].to_string()))
    })
}

/// Assembles and cross-checks a corpus from already-parsed tables.
pub fn assemble_corpus(
    notes: Vec<NoteEvent>,
    harmony: Vec<HarmonyEvent>,
    motifs: Vec<MotifInstance>,
) -> Result<Corpus> {
    let mut movements: BTreeMap<String, Movement> = BTreeMap::new();
    let entry = |movements: &mut BTreeMap<String, Movement>, id: &str| {
        if !movements.contains_key(id) {
            movements.insert(
                id.to_string(),
                Movement {
                    id: id.to_string(),
                    ..Default::default()
                },
            );
        }
    };
    let mut note_ids: HashMap<String, HashSet<i64>> = HashMap::new();
    for note in notes {
        if !note_ids
            .entry(note.movement_id.clone())
            .or_default()
            .insert(note.note_id)
        {
            return Err(Error::DuplicateNoteId {
                movement_id: note.movement_id,
                note_id: note.note_id,
            });
        }
        entry(&mut movements, &note.movement_id);
        movements
            .get_mut(&note.movement_id)
            .unwrap()
            .notes
            .push(note);
    }
    for h in harmony {
        entry(&mut movements, &h.movement_id);
        movements.get_mut(&h.movement_id).unwrap().harmony.push(h);
    }
    for inst in motifs {
        let known = note_ids.get(&inst.movement_id);
        if let Some(missing) = inst
            .note_ids
            .iter()
            .find(|id| !known.is_some_and(|k| k.contains(id)))
        {
            return Err(Error::DanglingReference {
                movement_id: inst.movement_id.clone(),
                instance_id: inst.instance_id,
                note_id: *missing,
            });
        }
        entry(&mut movements, &inst.movement_id);
        movements
            .get_mut(&inst.movement_id)
            .unwrap()
            .instances
            .push(inst);
    }
    let mut corpus = Corpus {
        movements,
        period_tag: None,
    };
    corpus.canonicalize();
    Ok(corpus)
}

/// Loads the three annotation tables and returns a cross-referenced corpus
/// in canonical order.
pub fn load_corpus(
    notes_path: impl AsRef<Path>,
    harmony_path: impl AsRef<Path>,
    motifs_path: impl AsRef<Path>,
) -> Result<Corpus> {
    let open = |p: &Path| -> Result<(std::fs::File, String)> {
        Ok((std::fs::File::open(p)?, p.display().to_string()))
    };
    let (f, name) = open(notes_path.as_ref())?;
    let notes = read_notes(f, &name)?;
    let (f, name) = open(harmony_path.as_ref())?;
    let harmony = read_harmony(f, &name)?;
    let (f, name) = open(motifs_path.as_ref())?;
    let motifs = read_motifs(f, &name)?;
    assemble_corpus(notes, harmony, motifs)
}

/// Tags movements with their period and sets the corpus tag when filtering.
pub fn apply_manifest(corpus: &mut Corpus, manifest: &[(String, String)]) {
    let map: HashMap<&str, &str> = manifest
        .iter()
        .map(|(m, p)| (m.as_str(), p.as_str()))
        .collect();
    for (id, movement) in corpus.movements.iter_mut() {
        movement.period = map.get(id.as_str()).map(|p| p.to_string());
    }
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(out)
}

pub fn write_notes<W: Write>(corpus: &Corpus, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(NOTES_HEADER)?;
    for n in corpus.movements.values().flat_map(|m| &m.notes) {
        w.write_record([
            n.movement_id.clone(),
            n.note_id.to_string(),
            n.onset_qn.to_string(),
            n.duration_qn.to_string(),
            n.midi_pitch.to_string(),
            n.measure.to_string(),
            n.beat.to_string(),
            n.dynamic_level.to_string(),
            n.expressive_marks.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_harmony<W: Write>(corpus: &Corpus, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(HARMONY_HEADER)?;
    for h in corpus.movements.values().flat_map(|m| &m.harmony) {
        w.write_record([
            h.movement_id.clone(),
            h.onset_qn.to_string(),
            h.local_key.clone(),
            h.function_zone.to_string(),
            u8::from(h.is_secondary).to_string(),
            h.complexity.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_motifs<W: Write>(corpus: &Corpus, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(MOTIFS_HEADER)?;
    for i in corpus.movements.values().flat_map(|m| &m.instances) {
        let ids: Vec<String> = i.note_ids.iter().map(i64::to_string).collect();
        w.write_record([
            i.movement_id.clone(),
            i.motif_class_id.to_string(),
            i.instance_id.to_string(),
            ids.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_manifest<W: Write>(corpus: &Corpus, out: W) -> Result<()> {
    let mut w = writer(out);
    w.write_record(MANIFEST_HEADER)?;
    for m in corpus.movements.values() {
        if let Some(p) = &m.period {
            w.write_record([m.id.as_str(), p.as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `notes.csv`, `harmony.csv` and `motifs.csv` into `dir`.
pub fn save_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    write_notes(corpus, std::fs::File::create(dir.join("notes.csv"))?)?;
    write_harmony(corpus, std::fs::File::create(dir.join("harmony.csv"))?)?;
    write_motifs(corpus, std::fs::File::create(dir.join("motifs.csv"))?)?;
    Ok(())
}

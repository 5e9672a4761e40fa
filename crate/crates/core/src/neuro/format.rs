//! The neutral neural-data container, `crossrsa-neuro/1`.
//!
//! Text variant (UTF-8, `\n` line endings, CSV sections introduced by `#`):
//!
//! ```text
//! #crossrsa-neuro/1
//! species,region,n_stimuli,n_neurons,n_repetitions
//! macaque,V1,135,102,20
//! #stimuli
//! index,id
//! 0,tex_000
//! #neurons
//! index,id
//! 0,unit_000
//! #responses
//! stimulus,neuron,repetition,value
//! 0,0,0,12.5
//! ```
//!
//! Binary variant, all integers and doubles little-endian, strings as `u32`
//! length + UTF-8 bytes:
//!
//! ```text
//! str "crossrsa-neuro/1" | str species | str region
//! u32 n_stimuli | u32 n_neurons | u32 n_repetitions
//! n_stimuli x str id | n_neurons x str id
//! u64 n_records | n_records x (u32 stimulus, u32 neuron, u32 repetition, f64 value)
//! ```
//!
//! Missing repetitions are absent records in both variants. Doubles in the
//! text variant use the shortest representation that parses back exactly.

use std::path::Path;

use ndarray::Array3;

use super::{DataError, NeuralDataset, Species};
use crate::binio::{FormatError, Reader, Writer};
use crate::error::{Error, Result};

pub const NEURO_MAGIC: &str = "crossrsa-neuro/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeuroFormat {
    Text,
    Binary,
}

impl NeuroFormat {
    /// `.bin` selects the binary variant; anything else is text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") => NeuroFormat::Binary,
            _ => NeuroFormat::Text,
        }
    }
}

pub fn save_neural_dataset(data: &NeuralDataset, path: impl AsRef<Path>, format: NeuroFormat) -> Result<()> {
    let bytes = match format {
        NeuroFormat::Text => encode_text(data)?.into_bytes(),
        NeuroFormat::Binary => encode_binary(data),
    };
    std::fs::write(path.as_ref(), bytes).map_err(|e| Error::io(path, e))
}

/// Loads either variant, sniffing the first bytes.
pub fn load_neural_dataset(path: impl AsRef<Path>) -> Result<NeuralDataset> {
    let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(&path, e))?;
    Ok(decode(&bytes)?)
}

pub fn decode(bytes: &[u8]) -> Result<NeuralDataset, DataError> {
    if bytes.starts_with(b"#") {
        let text = std::str::from_utf8(bytes).map_err(|_| FormatError::Utf8("neural text file"))?;
        decode_text(text)
    } else {
        decode_binary(bytes)
    }
}

fn check_field(value: &str, what: &str) -> Result<(), DataError> {
    if value.is_empty() || value.contains([',', '\n', '\r']) || value.starts_with('#') {
        return Err(DataError::Invalid(format!(
            "{what} {value:?} cannot be written to the text format"
        )));
    }
    Ok(())
}

fn records(data: &NeuralDataset) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
    data.responses
        .indexed_iter()
        .filter(|(_, v)| !v.is_nan())
        .map(|((s, n, r), &v)| (s, n, r, v))
}

pub fn encode_text(data: &NeuralDataset) -> Result<String, DataError> {
    use std::fmt::Write;
    check_field(&data.region, "region")?;
    for id in data.stimulus_ids.iter().chain(&data.neuron_ids) {
        check_field(id, "id")?;
    }
    let mut out = String::new();
    let (s, n, r) = data.responses.dim();
    writeln!(out, "#{NEURO_MAGIC}").unwrap();
    out.push_str("species,region,n_stimuli,n_neurons,n_repetitions\n");
    writeln!(out, "{},{},{s},{n},{r}", data.species, data.region).unwrap();
    out.push_str("#stimuli\nindex,id\n");
    for (i, id) in data.stimulus_ids.iter().enumerate() {
        writeln!(out, "{i},{id}").unwrap();
    }
    out.push_str("#neurons\nindex,id\n");
    for (i, id) in data.neuron_ids.iter().enumerate() {
        writeln!(out, "{i},{id}").unwrap();
    }
    out.push_str("#responses\nstimulus,neuron,repetition,value\n");
    for (si, ni, ri, v) in records(data) {
        writeln!(out, "{si},{ni},{ri},{v}").unwrap();
    }
    Ok(out)
}

pub fn encode_binary(data: &NeuralDataset) -> Vec<u8> {
    let mut w = Writer::new();
    let (s, n, r) = data.responses.dim();
    w.str(NEURO_MAGIC)
        .str(&data.species.to_string())
        .str(&data.region)
        .u32(s as u32)
        .u32(n as u32)
        .u32(r as u32);
    for id in data.stimulus_ids.iter().chain(&data.neuron_ids) {
        w.str(id);
    }
    let recs: Vec<_> = records(data).collect();
    w.u64(recs.len() as u64);
    for (si, ni, ri, v) in recs {
        w.u32(si as u32).u32(ni as u32).u32(ri as u32).f64(v);
    }
    w.finish()
}

/// Collects records into the dense array, rejecting duplicates and out-of-range keys.
struct Assembler {
    responses: Array3<f64>,
    filled: Vec<bool>,
}

impl Assembler {
    fn new(s: usize, n: usize, r: usize) -> Self {
        Assembler {
            responses: Array3::from_elem((s, n, r), f64::NAN),
            filled: vec![false; s * n * r],
        }
    }

    fn put(
        &mut self,
        (si, ni, ri): (usize, usize, usize),
        v: f64,
        stimuli: &[String],
        neurons: &[String],
        line: usize,
    ) -> Result<(), DataError> {
        let (s, n, r) = self.responses.dim();
        let schema = |msg: String| DataError::Schema { line, msg };
        if si >= s || ni >= n || ri >= r {
            return Err(schema(format!("record ({si}, {ni}, {ri}) out of range for {s}x{n}x{r}")));
        }
        if !v.is_finite() {
            return Err(schema(format!("non-finite value {v} at ({si}, {ni}, {ri})")));
        }
        let flat = (si * n + ni) * r + ri;
        if std::mem::replace(&mut self.filled[flat], true) {
            return Err(DataError::DuplicateKey {
                stimulus: stimuli[si].clone(),
                neuron: neurons[ni].clone(),
                repetition: ri,
            });
        }
        self.responses[[si, ni, ri]] = v;
        Ok(())
    }
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        let (i, l) = self.inner.next()?;
        self.last = i + 1;
        Some((i + 1, l))
    }

    fn expect(&mut self, want: &str) -> Result<(), DataError> {
        match self.next_line() {
            Some((_, l)) if l == want => Ok(()),
            Some((line, l)) => Err(DataError::Schema {
                line,
                msg: format!("expected {want:?}, found {l:?}"),
            }),
            None => Err(DataError::Schema {
                line: self.last + 1,
                msg: format!("unexpected end of file, expected {want:?}"),
            }),
        }
    }

    fn fields(&mut self, count: usize, what: &str) -> Result<(usize, Vec<&'a str>), DataError> {
        let (line, l) = self.next_line().ok_or_else(|| DataError::Schema {
            line: self.last + 1,
            msg: format!("unexpected end of file in {what}"),
        })?;
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != count {
            return Err(DataError::Schema {
                line,
                msg: format!("{what}: expected {count} fields, found {}", f.len()),
            });
        }
        Ok((line, f))
    }
}

fn parse<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T, DataError> {
    s.trim().parse().map_err(|_| DataError::Schema {
        line,
        msg: format!("invalid {what} {s:?}"),
    })
}

fn id_table(lines: &mut Lines, header: &str, count: usize) -> Result<Vec<String>, DataError> {
    lines.expect(header)?;
    lines.expect("index,id")?;
    let mut ids = Vec::with_capacity(count);
    for expected in 0..count {
        let (line, f) = lines.fields(2, header)?;
        let index: usize = parse(f[0], line, "index")?;
        if index != expected {
            return Err(DataError::Schema {
                line,
                msg: format!("index {index} out of order, expected {expected}"),
            });
        }
        ids.push(f[1].to_string());
    }
    Ok(ids)
}

pub fn decode_text(text: &str) -> Result<NeuralDataset, DataError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    lines.expect(&format!("#{NEURO_MAGIC}"))?;
    lines.expect("species,region,n_stimuli,n_neurons,n_repetitions")?;
    let (line, h) = lines.fields(5, "header")?;
    let species: Species = h[0].parse().map_err(|msg| DataError::Schema { line, msg })?;
    let region = h[1].to_string();
    let s: usize = parse(h[2], line, "n_stimuli")?;
    let n: usize = parse(h[3], line, "n_neurons")?;
    let r: usize = parse(h[4], line, "n_repetitions")?;
    let stimuli = id_table(&mut lines, "#stimuli", s)?;
    let neurons = id_table(&mut lines, "#neurons", n)?;
    lines.expect("#responses")?;
    lines.expect("stimulus,neuron,repetition,value")?;
    let mut asm = Assembler::new(s, n, r);
    while let Some((line, l)) = lines.next_line() {
        if l.is_empty() {
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 4 {
            return Err(DataError::Schema {
                line,
                msg: format!("response record: expected 4 fields, found {}", f.len()),
            });
        }
        let key = (
            parse(f[0], line, "stimulus index")?,
            parse(f[1], line, "neuron index")?,
            parse(f[2], line, "repetition index")?,
        );
        let v: f64 = parse(f[3], line, "value")?;
        asm.put(key, v, &stimuli, &neurons, line)?;
    }
    NeuralDataset::new(species, region, stimuli, neurons, asm.responses)
}

pub fn decode_binary(bytes: &[u8]) -> Result<NeuralDataset, DataError> {
    let mut rd = Reader::new(bytes);
    rd.magic(NEURO_MAGIC)?;
    let species: Species = rd
        .str("species")?
        .parse()
        .map_err(FormatError::Header)?;
    let region = rd.str("region")?;
    let s = rd.u32("n_stimuli")? as usize;
    let n = rd.u32("n_neurons")? as usize;
    let r = rd.u32("n_repetitions")? as usize;
    let stimuli = (0..s).map(|_| rd.str("stimulus id")).collect::<Result<Vec<_>, _>>()?;
    let neurons = (0..n).map(|_| rd.str("neuron id")).collect::<Result<Vec<_>, _>>()?;
    let count = rd.u64("n_records")?;
    let mut asm = Assembler::new(s, n, r);
    for rec in 0..count {
        let key = (
            rd.u32("record")? as usize,
            rd.u32("record")? as usize,
            rd.u32("record")? as usize,
        );
        let v = rd.f64("record")?;
        // binary records are numbered from 1 in diagnostics
        asm.put(key, v, &stimuli, &neurons, rec as usize + 1)?;
    }
    rd.finish()?;
    NeuralDataset::new(species, region, stimuli, neurons, asm.responses)
}

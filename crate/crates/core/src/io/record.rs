//! Multi-channel recordings on disk.
//!
//! CSV: a `# rate=<hz> channels=<a,b,..>` header line, optionally followed
//! on the same line by `id=<id>` and `annotations=<i;j;..>`, then one row
//! per sample.
//!
//! BIN: `FREC`, a u32 version, then the header (f64 rate, id, labels,
//! sample count, annotations) and the little-endian f32 samples,
//! channel-interleaved.

use std::fmt::Write as _;
use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::atomic_write;
use crate::analysis::PeakList;
use crate::error::{Error, Result};
use crate::signal::{MultiSignal, Signal};

pub const RECORD_MAGIC: &[u8; 4] = b"FREC";
pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
    Bin,
}

impl RecordFormat {
    /// From the file extension, `.csv` or `.bin`.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => Ok(Self::Csv),
            Some("bin") => Ok(Self::Bin),
            _ => Err(Error::invalid(format!(
                "{}: record files end in .csv or .bin",
                path.display()
            ))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Bin => "bin",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordFile {
    pub id: String,
    pub sample_rate_hz: f64,
    pub labels: Vec<String>,
    /// One sample stream per channel.
    pub channels: Vec<Vec<f32>>,
    /// Sorted R-peak sample indices.
    pub annotations: Option<Vec<usize>>,
}

fn check_token(what: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(|c| c.is_whitespace() || c == ',' || c == '=' || c == ';') {
        return Err(Error::invalid(format!("{what} `{s}` must be non-empty without spaces, `,`, `;` or `=`")));
    }
    Ok(())
}

impl RecordFile {
    pub fn new(
        id: impl Into<String>,
        sample_rate_hz: f64,
        labels: Vec<String>,
        channels: Vec<Vec<f32>>,
        annotations: Option<Vec<usize>>,
    ) -> Result<Self> {
        let r = Self {
            id: id.into(),
            sample_rate_hz,
            labels,
            channels,
            annotations,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        check_token("record id", &self.id)?;
        for l in &self.labels {
            check_token("channel label", l)?;
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if self.channels.is_empty() || self.labels.len() != self.channels.len() {
            return Err(Error::shape(format!(
                "{} labels for {} channels",
                self.labels.len(),
                self.channels.len()
            )));
        }
        let n = self.len();
        if self.channels.iter().any(|c| c.len() != n) {
            return Err(Error::shape("channel lengths differ"));
        }
        if let Some(a) = &self.annotations {
            PeakList::new(a.clone(), self.sample_rate_hz)?.check_bounds(n)?;
        }
        Ok(())
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Labels `ch1..chN`.
    pub fn default_labels(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("ch{i}")).collect()
    }

    /// Stores the signals as f32.
    pub fn from_multi(id: impl Into<String>, m: &MultiSignal, labels: Option<Vec<String>>, annotations: Option<&PeakList>) -> Result<Self> {
        let channels = m
            .channels()
            .iter()
            .map(|c| c.samples().iter().map(|&v| v as f32).collect())
            .collect();
        Self::new(
            id,
            m.sample_rate_hz(),
            labels.unwrap_or_else(|| Self::default_labels(m.channel_count())),
            channels,
            annotations.map(|p| p.indices().to_vec()),
        )
    }

    pub fn from_signal(id: impl Into<String>, s: &Signal, label: &str, annotations: Option<&PeakList>) -> Result<Self> {
        Self::new(
            id,
            s.sample_rate_hz(),
            vec![label.to_string()],
            vec![s.samples().iter().map(|&v| v as f32).collect()],
            annotations.map(|p| p.indices().to_vec()),
        )
    }

    pub fn channel_signal(&self, i: usize) -> Result<Signal> {
        let c = self
            .channels
            .get(i)
            .ok_or_else(|| Error::invalid(format!("record has no channel {i}")))?;
        Signal::new(c.iter().map(|&v| v as f64).collect(), self.sample_rate_hz)
    }

    pub fn to_multi(&self) -> Result<MultiSignal> {
        MultiSignal::new((0..self.channels.len()).map(|i| self.channel_signal(i)).collect::<Result<_>>()?)
    }

    pub fn peaks(&self) -> Result<Option<PeakList>> {
        self.annotations
            .as_ref()
            .map(|a| PeakList::new(a.clone(), self.sample_rate_hz))
            .transpose()
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# rate={} channels={} id={}", self.sample_rate_hz, self.labels.join(","), self.id);
        if let Some(a) = &self.annotations {
            let list: Vec<String> = a.iter().map(usize::to_string).collect();
            let _ = write!(s, " annotations={}", list.join(";"));
        }
        s.push('\n');
        for i in 0..self.len() {
            for (k, c) in self.channels.iter().enumerate() {
                if k > 0 {
                    s.push(',');
                }
                let _ = write!(s, "{}", c[i]);
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Malformed { what: "record CSV", msg };
        let mut lines = text.lines();
        let header = lines
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| bad("missing `# rate=.. channels=..` header".into()))?;
        let (mut rate, mut labels, mut id, mut annotations) = (None, None, None, None);
        for field in header.split_whitespace() {
            let (k, v) = field.split_once('=').ok_or_else(|| bad(format!("header field `{field}`")))?;
            match k {
                "rate" => rate = Some(v.parse::<f64>().map_err(|e| bad(format!("rate `{v}`: {e}")))?),
                "channels" => labels = Some(v.split(',').map(str::to_string).collect::<Vec<_>>()),
                "id" => id = Some(v.to_string()),
                "annotations" => {
                    annotations = Some(if v.is_empty() {
                        Vec::new()
                    } else {
                        v.split(';')
                            .map(|x| x.parse::<usize>().map_err(|e| bad(format!("annotation `{x}`: {e}"))))
                            .collect::<Result<Vec<_>>>()?
                    })
                }
                _ => return Err(bad(format!("unknown header key `{k}`"))),
            }
        }
        let rate = rate.ok_or_else(|| bad("header lacks rate".into()))?;
        let labels = labels.ok_or_else(|| bad("header lacks channels".into()))?;
        let mut channels = vec![Vec::new(); labels.len()];
        for (row, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut n = 0;
            for (k, cell) in line.split(',').enumerate() {
                let v = cell
                    .trim()
                    .parse::<f32>()
                    .map_err(|e| bad(format!("row {}: `{cell}`: {e}", row + 1)))?;
                channels
                    .get_mut(k)
                    .ok_or_else(|| bad(format!("row {} has more than {} columns", row + 1, labels.len())))?
                    .push(v);
                n += 1;
            }
            if n != labels.len() {
                return Err(bad(format!("row {} has {n} columns, expected {}", row + 1, labels.len())));
            }
        }
        Self::new(id.unwrap_or_else(|| "record".into()), rate, labels, channels, annotations)
    }

    pub fn to_bin(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(64 + 4 * self.len() * self.channels.len());
        b.extend_from_slice(RECORD_MAGIC);
        b.write_u32::<LE>(RECORD_VERSION).unwrap();
        b.write_f64::<LE>(self.sample_rate_hz).unwrap();
        write_str(&mut b, &self.id);
        b.write_u16::<LE>(self.labels.len() as u16).unwrap();
        for l in &self.labels {
            write_str(&mut b, l);
        }
        b.write_u64::<LE>(self.len() as u64).unwrap();
        match &self.annotations {
            None => b.write_u8(0).unwrap(),
            Some(a) => {
                b.write_u8(1).unwrap();
                b.write_u64::<LE>(a.len() as u64).unwrap();
                for &i in a {
                    b.write_u64::<LE>(i as u64).unwrap();
                }
            }
        }
        for i in 0..self.len() {
            for c in &self.channels {
                b.write_f32::<LE>(c[i]).unwrap();
            }
        }
        b
    }

    pub fn from_bin(bytes: &[u8]) -> Result<Self> {
        let mut r = Cursor::new(bytes);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != RECORD_MAGIC {
            return Err(Error::Corrupt("not a record file (bad magic)".into()));
        }
        let version = r.read_u32::<LE>().map_err(truncated)?;
        if version != RECORD_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let rate = r.read_f64::<LE>().map_err(truncated)?;
        let id = read_str(&mut r)?;
        let nch = r.read_u16::<LE>().map_err(truncated)? as usize;
        let labels = (0..nch).map(|_| read_str(&mut r)).collect::<Result<Vec<_>>>()?;
        let n = r.read_u64::<LE>().map_err(truncated)? as usize;
        let annotations = match r.read_u8().map_err(truncated)? {
            0 => None,
            1 => {
                let k = r.read_u64::<LE>().map_err(truncated)? as usize;
                let remaining = bytes.len() - r.position() as usize;
                if k > remaining / 8 {
                    return Err(truncated_msg());
                }
                Some((0..k).map(|_| r.read_u64::<LE>().map(|v| v as usize)).collect::<std::io::Result<Vec<_>>>().map_err(truncated)?)
            }
            f => return Err(Error::Corrupt(format!("annotation flag {f}"))),
        };
        let expected = n.checked_mul(nch).and_then(|v| v.checked_mul(4)).ok_or_else(truncated_msg)?;
        let remaining = bytes.len() - r.position() as usize;
        if remaining < expected {
            return Err(Error::Corrupt(format!(
                "payload holds {remaining} bytes, header promises {expected}"
            )));
        }
        if remaining > expected {
            return Err(Error::Corrupt(format!("{} trailing bytes", remaining - expected)));
        }
        let mut channels = vec![Vec::with_capacity(n); nch];
        for _ in 0..n {
            for c in channels.iter_mut() {
                c.push(r.read_f32::<LE>().map_err(truncated)?);
            }
        }
        Self::new(id, rate, labels, channels, annotations).map_err(|e| Error::Corrupt(e.to_string()))
    }

    pub fn to_bytes(&self, format: RecordFormat) -> Vec<u8> {
        match format {
            RecordFormat::Csv => self.to_csv().into_bytes(),
            RecordFormat::Bin => self.to_bin(),
        }
    }
}

fn truncated(_: std::io::Error) -> Error {
    truncated_msg()
}

fn truncated_msg() -> Error {
    Error::Corrupt("file ends inside the header".into())
}

fn write_str(b: &mut Vec<u8>, s: &str) {
    b.write_u16::<LE>(s.len() as u16).unwrap();
    b.extend_from_slice(s.as_bytes());
}

fn read_str(r: &mut Cursor<&[u8]>) -> Result<String> {
    let n = r.read_u16::<LE>().map_err(truncated)? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(truncated)?;
    String::from_utf8(buf).map_err(|_| Error::Corrupt("header text is not UTF-8".into()))
}

/// Format from the extension.
pub fn read_record(path: &Path) -> Result<RecordFile> {
    let format = RecordFormat::from_path(path)?;
    let bytes = fs::read(path)?;
    match format {
        RecordFormat::Csv => {
            let text = String::from_utf8(bytes).map_err(|_| Error::Malformed {
                what: "record CSV",
                msg: "not UTF-8".into(),
            })?;
            RecordFile::from_csv(&text)
        }
        RecordFormat::Bin => RecordFile::from_bin(&bytes),
    }
}

/// Format from the extension; written atomically.
pub fn write_record(path: &Path, rec: &RecordFile) -> Result<()> {
    rec.validate()?;
    atomic_write(path, &rec.to_bytes(RecordFormat::from_path(path)?))
}

/// Peak list as text: `# rate=<hz>` then one sample index per line.
pub fn peaks_to_text(p: &PeakList) -> String {
    let mut s = format!("# rate={}\n", p.sample_rate_hz());
    for i in p.indices() {
        let _ = writeln!(s, "{i}");
    }
    s
}

pub fn peaks_from_text(text: &str) -> Result<PeakList> {
    let bad = |msg: String| Error::Malformed { what: "peak list", msg };
    let mut lines = text.lines();
    let rate = lines
        .next()
        .and_then(|l| l.trim().strip_prefix("# rate="))
        .ok_or_else(|| bad("missing `# rate=` header".into()))?;
    let rate: f64 = rate.parse().map_err(|e| bad(format!("rate `{rate}`: {e}")))?;
    let idx = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse::<usize>().map_err(|e| bad(format!("`{l}`: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    PeakList::new(idx, rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RecordFile {
        RecordFile::new(
            "r01",
            512.0,
            vec!["a".into(), "b".into()],
            vec![vec![0.1, -2.5, 3.0e-7, 1.0], vec![4.0, 5.5, -6.25, 0.0]],
            Some(vec![1, 3]),
        )
        .unwrap()
    }

    #[test]
    fn csv_shape_and_round_trip() {
        let r = sample();
        let text = r.to_csv();
        assert_eq!(text.lines().count(), 5);
        assert!(text.starts_with("# rate=512 channels=a,b"));
        assert_eq!(RecordFile::from_csv(&text).unwrap(), r);
    }

    #[test]
    fn bin_round_trip_and_corruption() {
        let r = sample();
        let b = r.to_bin();
        assert_eq!(RecordFile::from_bin(&b).unwrap(), r);
        for cut in [3, 10, b.len() - 1] {
            assert!(matches!(RecordFile::from_bin(&b[..cut]), Err(Error::Corrupt(_))), "cut {cut}");
        }
        let mut v = b.clone();
        v[4] = 9;
        assert!(matches!(RecordFile::from_bin(&v), Err(Error::UnsupportedVersion(9))));
    }

    #[test]
    fn malformed_csv() {
        assert!(RecordFile::from_csv("1,2\n").is_err());
        assert!(RecordFile::from_csv("# rate=500 channels=a,b\n1,2\n3\n").is_err());
        assert!(RecordFile::from_csv("# rate=x channels=a\n1\n").is_err());
        assert!(RecordFile::from_csv("# rate=500 channels=a annotations=5\n1\n").is_err());
    }

    #[test]
    fn rejects_uneven_channels() {
        assert!(RecordFile::new("x", 1.0, vec!["a".into(), "b".into()], vec![vec![1.0], vec![]], None).is_err());
    }

    #[test]
    fn peak_text_round_trip() {
        let p = PeakList::new(vec![3, 70, 900], 512.0).unwrap();
        assert_eq!(peaks_from_text(&peaks_to_text(&p)).unwrap(), p);
    }
}

//! RIFF/WAVE decoding into floating-point audio.
//!
//! Supported: integer PCM at 8 (unsigned), 16, 24 and 32 bits, and 32-bit
//! IEEE float, any channel count and sample rate. `WAVE_FORMAT_EXTENSIBLE`
//! is mapped through its sub-format tag. Anything else is an error.

use thiserror::Error;

use crate::scalar::Scalar;

const TAG_PCM: u16 = 1;
const TAG_FLOAT: u16 = 3;
const TAG_EXTENSIBLE: u16 = 0xFFFE;

/// Channels beyond this are dropped at decode.
pub const MAX_DECODED_CHANNELS: usize = 2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WavError {
    #[error("invalid RIFF header")]
    InvalidRiff,
    #[error("missing fmt chunk")]
    MissingFmt,
    #[error("malformed fmt chunk: {0}")]
    InvalidFmt(&'static str),
    #[error("missing data chunk")]
    MissingData,
    #[error("unsupported codec tag {0:#06x}")]
    UnsupportedCodec(u16),
    #[error("unsupported bit depth {bits} for {codec:?}")]
    UnsupportedBitDepth { codec: Codec, bits: u16 },
    #[error("chunk `{id}` declares {declared} bytes but only {available} remain")]
    ChunkOverrun { id: String, declared: usize, available: usize },
    #[error("audio has no channels or no samples")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Codec {
    IntegerPcm,
    IeeeFloat,
}

/// Header summary of a WAV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavFormat {
    pub codec: Codec,
    pub bits_per_sample: u16,
    pub channel_count: u16,
    pub sample_rate_hz: u32,
}

impl WavFormat {
    fn validate(&self) -> Result<(), WavError> {
        let ok = match self.codec {
            Codec::IntegerPcm => matches!(self.bits_per_sample, 8 | 16 | 24 | 32),
            Codec::IeeeFloat => self.bits_per_sample == 32,
        };
        if !ok {
            return Err(WavError::UnsupportedBitDepth { codec: self.codec, bits: self.bits_per_sample });
        }
        if self.channel_count == 0 {
            return Err(WavError::InvalidFmt("zero channels"));
        }
        if self.sample_rate_hz == 0 {
            return Err(WavError::InvalidFmt("zero sample rate"));
        }
        Ok(())
    }

    fn bytes_per_frame(&self) -> usize {
        self.channel_count as usize * self.bits_per_sample as usize / 8
    }
}

/// Decoded audio: equal-length per-channel sample arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip<T> {
    channels: Vec<Vec<T>>,
    sample_rate_hz: u32,
}

impl<T: Scalar> AudioClip<T> {
    /// Builds a clip; channels must be non-empty and of equal length.
    pub fn new(channels: Vec<Vec<T>>, sample_rate_hz: u32) -> Result<Self, WavError> {
        if channels.is_empty() {
            return Err(WavError::Empty);
        }
        if sample_rate_hz == 0 {
            return Err(WavError::InvalidFmt("zero sample rate"));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(WavError::InvalidFmt("channels differ in length"));
        }
        Ok(Self { channels, sample_rate_hz })
    }

    pub fn mono(samples: Vec<T>, sample_rate_hz: u32) -> Result<Self, WavError> {
        Self::new(vec![samples], sample_rate_hz)
    }

    pub fn channels(&self) -> &[Vec<T>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<T>> {
        self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz as f64
    }
}

struct Chunks<'a> {
    fmt: Option<&'a [u8]>,
    data: Option<&'a [u8]>,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

fn scan_chunks(bytes: &[u8]) -> Result<Chunks<'_>, WavError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(WavError::InvalidRiff);
    }
    let mut chunks = Chunks { fmt: None, data: None };
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let declared = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let available = bytes.len() - body_start;
        if declared > available {
            return Err(WavError::ChunkOverrun {
                id: String::from_utf8_lossy(id).into_owned(),
                declared,
                available,
            });
        }
        let body = &bytes[body_start..body_start + declared];
        match id {
            b"fmt " if chunks.fmt.is_none() => chunks.fmt = Some(body),
            b"data" if chunks.data.is_none() => chunks.data = Some(body),
            _ => {}
        }
        if chunks.fmt.is_some() && chunks.data.is_some() {
            break;
        }
        // chunk bodies are padded to an even length
        pos = body_start + declared + (declared & 1);
    }
    Ok(chunks)
}

fn parse_fmt(body: &[u8]) -> Result<WavFormat, WavError> {
    if body.len() < 16 {
        return Err(WavError::InvalidFmt("fmt chunk shorter than 16 bytes"));
    }
    let mut tag = u16_at(body, 0);
    let channel_count = u16_at(body, 2);
    let sample_rate_hz = u32_at(body, 4);
    let bits_per_sample = u16_at(body, 14);
    if tag == TAG_EXTENSIBLE {
        if body.len() < 26 {
            return Err(WavError::InvalidFmt("extensible fmt chunk too short"));
        }
        // sub-format GUID starts at offset 24; its first two bytes are the tag
        tag = u16_at(body, 24);
    }
    let codec = match tag {
        TAG_PCM => Codec::IntegerPcm,
        TAG_FLOAT => Codec::IeeeFloat,
        other => return Err(WavError::UnsupportedCodec(other)),
    };
    let format = WavFormat { codec, bits_per_sample, channel_count, sample_rate_hz };
    format.validate()?;
    Ok(format)
}

/// Reads the format from the headers without touching sample data.
pub fn probe_format(bytes: &[u8]) -> Result<WavFormat, WavError> {
    let chunks = scan_chunks(bytes)?;
    let format = parse_fmt(chunks.fmt.ok_or(WavError::MissingFmt)?)?;
    if chunks.data.is_none() {
        return Err(WavError::MissingData);
    }
    Ok(format)
}

fn decode_sample(format: &WavFormat, s: &[u8]) -> f64 {
    match (format.codec, format.bits_per_sample) {
        (Codec::IntegerPcm, 8) => (s[0] as f64 - 128.0) / 128.0,
        (Codec::IntegerPcm, 16) => i16::from_le_bytes([s[0], s[1]]) as f64 / 32768.0,
        (Codec::IntegerPcm, 24) => {
            let v = i32::from_le_bytes([0, s[0], s[1], s[2]]) >> 8;
            v as f64 / 8_388_608.0
        }
        (Codec::IntegerPcm, 32) => i32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64 / 2_147_483_648.0,
        (Codec::IeeeFloat, 32) => f32::from_le_bytes([s[0], s[1], s[2], s[3]]) as f64,
        _ => unreachable!("validated format"),
    }
}

/// Decodes a WAV buffer. Integer samples are scaled by `2^(bits-1)` (8-bit
/// is offset by 128 first), float samples pass through, and only the first
/// two channels are kept.
pub fn decode_wav<T: Scalar>(bytes: &[u8]) -> Result<AudioClip<T>, WavError> {
    let chunks = scan_chunks(bytes)?;
    let format = parse_fmt(chunks.fmt.ok_or(WavError::MissingFmt)?)?;
    let data = chunks.data.ok_or(WavError::MissingData)?;

    let frame_bytes = format.bytes_per_frame();
    let sample_bytes = format.bits_per_sample as usize / 8;
    let frames = data.len() / frame_bytes;
    if frames == 0 {
        return Err(WavError::Empty);
    }
    let kept = (format.channel_count as usize).min(MAX_DECODED_CHANNELS);
    let mut channels = vec![Vec::with_capacity(frames); kept];
    for frame in data.chunks_exact(frame_bytes) {
        for (ch, out) in channels.iter_mut().enumerate() {
            let s = &frame[ch * sample_bytes..(ch + 1) * sample_bytes];
            out.push(T::from_f64(decode_sample(&format, s)).unwrap_or_else(T::zero));
        }
    }
    AudioClip::new(channels, format.sample_rate_hz)
}

/// Encodes a clip as canonical 44-byte-header 16-bit PCM. Samples are
/// rounded to the nearest step of 1/32768 and clipped to the i16 range.
pub fn encode_wav_pcm16<T: Scalar>(clip: &AudioClip<T>) -> Vec<u8> {
    let channels = clip.channel_count();
    let frames = clip.len();
    let data_len = frames * channels * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&TAG_PCM.to_le_bytes());
    out.extend_from_slice(&(channels as u16).to_le_bytes());
    out.extend_from_slice(&clip.sample_rate_hz().to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate_hz() * channels as u32 * 2).to_le_bytes());
    out.extend_from_slice(&((channels * 2) as u16).to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for i in 0..frames {
        for ch in clip.channels() {
            let v = (ch[i].to_f64().unwrap_or(0.0) * 32768.0).round().clamp(-32768.0, 32767.0);
            out.extend_from_slice(&(v as i16).to_le_bytes());
        }
    }
    out
}

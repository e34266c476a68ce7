//! Fixed-layout little-endian command and telemetry frames.
//!
//! Command (23 bytes): magic 0xA8, version, seq u16, mode u8, 8 × position u16, crc u16.
//! Telemetry (41 bytes): magic 0xA9, version, seq_echo u16, 8 × position u16,
//! 8 × current u16 (mA), battery_mv u16, battery_pct u8, crc u16.
//! The CRC covers every preceding byte.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::crc::crc16_ccitt_false;

pub const COMMAND_MAGIC: u8 = 0xA8;
pub const TELEMETRY_MAGIC: u8 = 0xA9;
pub const VERSION: u8 = 0x01;
pub const COMMAND_LEN: usize = 23;
pub const TELEMETRY_LEN: usize = 41;
/// Largest position tick a frame may carry (12-bit encoder).
pub const MAX_TICK: u16 = 4095;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("bad length: expected {expected} bytes, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("bad crc: frame says {stored:#06x}, computed {computed:#06x}")]
    BadCrc { stored: u16, computed: u16 },
    #[error("bad magic byte {0:#04x}")]
    BadMagic(u8),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown mode {0}")]
    BadMode(u8),
    #[error("position {index} = {value} exceeds {MAX_TICK}")]
    PositionOutOfRange { index: usize, value: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Mode {
    TorqueOff = 0,
    #[default]
    Hold = 1,
    Stream = 2,
}

impl TryFrom<u8> for Mode {
    type Error = FrameError;

    fn try_from(b: u8) -> Result<Self, FrameError> {
        match b {
            0 => Ok(Mode::TorqueOff),
            1 => Ok(Mode::Hold),
            2 => Ok(Mode::Stream),
            other => Err(FrameError::BadMode(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CommandFrame {
    pub seq: u16,
    pub mode: Mode,
    pub positions: [u16; 8],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub seq_echo: u16,
    pub positions: [u16; 8],
    /// mA.
    pub currents: [u16; 8],
    pub battery_mv: u16,
    pub battery_pct: u8,
}

fn check_positions(positions: &[u16; 8]) -> Result<(), FrameError> {
    match positions.iter().position(|&p| p > MAX_TICK) {
        Some(index) => Err(FrameError::PositionOutOfRange {
            index,
            value: positions[index],
        }),
        None => Ok(()),
    }
}

fn seal<const N: usize>(mut buf: [u8; N]) -> [u8; N] {
    let crc = crc16_ccitt_false(&buf[..N - 2]);
    buf[N - 2..].copy_from_slice(&crc.to_le_bytes());
    buf
}

/// Length, CRC, magic and version checks shared by both frame types.
fn open(bytes: &[u8], expected: usize, magic: u8) -> Result<(), FrameError> {
    if bytes.len() != expected {
        return Err(FrameError::BadLength {
            expected,
            got: bytes.len(),
        });
    }
    let stored = u16::from_le_bytes([bytes[expected - 2], bytes[expected - 1]]);
    let computed = crc16_ccitt_false(&bytes[..expected - 2]);
    if stored != computed {
        return Err(FrameError::BadCrc { stored, computed });
    }
    if bytes[0] != magic {
        return Err(FrameError::BadMagic(bytes[0]));
    }
    if bytes[1] != VERSION {
        return Err(FrameError::BadVersion(bytes[1]));
    }
    Ok(())
}

fn u16_at(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

fn u16_array(bytes: &[u8], at: usize) -> [u16; 8] {
    std::array::from_fn(|i| u16_at(bytes, at + 2 * i))
}

pub fn encode_command(f: &CommandFrame) -> Result<[u8; COMMAND_LEN], FrameError> {
    check_positions(&f.positions)?;
    let mut buf = [0u8; COMMAND_LEN];
    buf[0] = COMMAND_MAGIC;
    buf[1] = VERSION;
    buf[2..4].copy_from_slice(&f.seq.to_le_bytes());
    buf[4] = f.mode as u8;
    for (i, p) in f.positions.iter().enumerate() {
        buf[5 + 2 * i..7 + 2 * i].copy_from_slice(&p.to_le_bytes());
    }
    Ok(seal(buf))
}

pub fn decode_command(bytes: &[u8]) -> Result<CommandFrame, FrameError> {
    open(bytes, COMMAND_LEN, COMMAND_MAGIC)?;
    let mode = Mode::try_from(bytes[4])?;
    let positions = u16_array(bytes, 5);
    check_positions(&positions)?;
    Ok(CommandFrame {
        seq: u16_at(bytes, 2),
        mode,
        positions,
    })
}

pub fn encode_telemetry(f: &TelemetryFrame) -> Result<[u8; TELEMETRY_LEN], FrameError> {
    check_positions(&f.positions)?;
    let mut buf = [0u8; TELEMETRY_LEN];
    buf[0] = TELEMETRY_MAGIC;
    buf[1] = VERSION;
    buf[2..4].copy_from_slice(&f.seq_echo.to_le_bytes());
    for (i, p) in f.positions.iter().enumerate() {
        buf[4 + 2 * i..6 + 2 * i].copy_from_slice(&p.to_le_bytes());
    }
    for (i, c) in f.currents.iter().enumerate() {
        buf[20 + 2 * i..22 + 2 * i].copy_from_slice(&c.to_le_bytes());
    }
    buf[36..38].copy_from_slice(&f.battery_mv.to_le_bytes());
    buf[38] = f.battery_pct;
    Ok(seal(buf))
}

pub fn decode_telemetry(bytes: &[u8]) -> Result<TelemetryFrame, FrameError> {
    open(bytes, TELEMETRY_LEN, TELEMETRY_MAGIC)?;
    let positions = u16_array(bytes, 4);
    check_positions(&positions)?;
    Ok(TelemetryFrame {
        seq_echo: u16_at(bytes, 2),
        positions,
        currents: u16_array(bytes, 20),
        battery_mv: u16_at(bytes, 36),
        battery_pct: bytes[38],
    })
}

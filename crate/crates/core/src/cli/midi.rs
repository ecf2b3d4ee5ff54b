//! Standard MIDI File export of transcriptions, and a reader for the subset
//! the exporter writes (plus running status and zero-velocity note-offs).

use std::path::Path;

use crate::env::NoteEvent;
use crate::error::{Error, Result};

pub const TICKS_PER_QUARTER: u16 = 480;
/// 120 bpm.
pub const TEMPO_US_PER_QUARTER: u32 = 500_000;
const QUARTERS_PER_SECOND: f64 = 2.0;

fn bad(msg: impl Into<String>) -> Error {
    Error::Format { kind: "MIDI", msg: msg.into() }
}

fn ticks_per_frame(frame_duration_s: f64) -> f64 {
    frame_duration_s * QUARTERS_PER_SECOND * TICKS_PER_QUARTER as f64
}

pub fn frame_to_tick(frame: u32, frame_duration_s: f64) -> u32 {
    (frame as f64 * ticks_per_frame(frame_duration_s)).round() as u32
}

pub fn tick_to_frame(tick: u32, frame_duration_s: f64) -> u32 {
    (tick as f64 / ticks_per_frame(frame_duration_s)).round() as u32
}

fn write_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 5];
    let mut i = buf.len() - 1;
    buf[i] = (value & 0x7f) as u8;
    value >>= 7;
    while value > 0 {
        i -= 1;
        buf[i] = 0x80 | (value & 0x7f) as u8;
        value >>= 7;
    }
    out.extend_from_slice(&buf[i..]);
}

fn read_vlq(data: &[u8], pos: &mut usize) -> Result<u32> {
    let mut value: u32 = 0;
    for _ in 0..4 {
        let b = *data.get(*pos).ok_or_else(|| bad("truncated variable-length quantity"))?;
        *pos += 1;
        value = (value << 7) | (b & 0x7f) as u32;
        if b & 0x80 == 0 {
            return Ok(value);
        }
    }
    Err(bad("variable-length quantity longer than 4 bytes"))
}

/// Type-0 file bytes. At equal ticks, note-offs come before note-ons so a
/// key released and struck again on the same tick reads back correctly.
pub fn midi_bytes(notes: &[NoteEvent], frame_duration_s: f64) -> Result<Vec<u8>> {
    if !(frame_duration_s > 0.0 && frame_duration_s.is_finite()) {
        return Err(Error::domain("frame duration must be positive"));
    }
    // (tick, 0 = off / 1 = on, pitch, velocity)
    let mut events: Vec<(u32, u8, u8, u8)> = Vec::with_capacity(2 * notes.len());
    for n in notes {
        if !(0..128).contains(&n.pitch) || n.velocity > 127 || n.offset_frame <= n.onset_frame {
            return Err(Error::domain(format!("note {n:?} cannot be written as MIDI")));
        }
        let pitch = n.pitch as u8;
        events.push((frame_to_tick(n.onset_frame, frame_duration_s), 1, pitch, n.velocity));
        events.push((frame_to_tick(n.offset_frame, frame_duration_s), 0, pitch, 0));
    }
    events.sort();

    let mut track = Vec::new();
    write_vlq(&mut track, 0);
    let tempo = TEMPO_US_PER_QUARTER.to_be_bytes();
    track.extend_from_slice(&[0xff, 0x51, 0x03, tempo[1], tempo[2], tempo[3]]);
    write_vlq(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x58, 0x04, 4, 2, 24, 8]);
    let mut last = 0;
    for (tick, kind, pitch, velocity) in events {
        write_vlq(&mut track, tick - last);
        last = tick;
        if kind == 1 {
            track.extend_from_slice(&[0x90, pitch, velocity]);
        } else {
            track.extend_from_slice(&[0x80, pitch, 0x40]);
        }
    }
    write_vlq(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(22 + track.len());
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&TICKS_PER_QUARTER.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    Ok(out)
}

pub fn export_midi(notes: &[NoteEvent], frame_duration_s: f64, path: &Path) -> Result<()> {
    let bytes = midi_bytes(notes, frame_duration_s)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// A note as stored in a MIDI file, in ticks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MidiNote {
    pub on_tick: u32,
    pub off_tick: u32,
    pub pitch: u8,
    pub velocity: u8,
}

/// Notes of every track, sorted by onset then pitch. Note-offs close the
/// oldest open note of their pitch.
pub fn parse_midi(bytes: &[u8]) -> Result<(u16, Vec<MidiNote>)> {
    if bytes.len() < 14 || &bytes[..4] != b"MThd" {
        return Err(bad("missing MThd header"));
    }
    let header_len = u32::from_be_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    if header_len < 6 || bytes.len() < 8 + header_len {
        return Err(bad("short header chunk"));
    }
    let n_tracks = u16::from_be_bytes([bytes[10], bytes[11]]);
    let division = u16::from_be_bytes([bytes[12], bytes[13]]);
    if division & 0x8000 != 0 {
        return Err(bad("SMPTE time division is not supported"));
    }

    let mut notes = Vec::new();
    let mut pos = 8 + header_len;
    for _ in 0..n_tracks {
        if bytes.len() < pos + 8 || &bytes[pos..pos + 4] != b"MTrk" {
            return Err(bad("missing MTrk chunk"));
        }
        let len = u32::from_be_bytes(bytes[pos + 4..pos + 8].try_into().expect("4 bytes")) as usize;
        let start = pos + 8;
        let track = bytes.get(start..start + len).ok_or_else(|| bad("truncated track"))?;
        parse_track(track, &mut notes)?;
        pos = start + len;
    }
    notes.sort_by_key(|n| (n.on_tick, n.pitch, n.off_tick));
    Ok((division, notes))
}

fn parse_track(track: &[u8], notes: &mut Vec<MidiNote>) -> Result<()> {
    let mut open: Vec<Vec<(u32, u8)>> = vec![Vec::new(); 128];
    let mut pos = 0;
    let mut tick: u32 = 0;
    let mut status: Option<u8> = None;
    while pos < track.len() {
        tick = tick
            .checked_add(read_vlq(track, &mut pos)?)
            .ok_or_else(|| bad("tick overflow"))?;
        let first = *track.get(pos).ok_or_else(|| bad("event without status"))?;
        let st = if first & 0x80 != 0 {
            pos += 1;
            first
        } else {
            status.ok_or_else(|| bad("running status without a previous status"))?
        };
        match st {
            0xff => {
                let kind = *track.get(pos).ok_or_else(|| bad("truncated meta event"))?;
                pos += 1;
                let len = read_vlq(track, &mut pos)? as usize;
                pos += len;
                if kind == 0x2f {
                    break;
                }
                continue;
            }
            0xf0 | 0xf7 => {
                let len = read_vlq(track, &mut pos)? as usize;
                pos += len;
                continue;
            }
            _ => {}
        }
        status = Some(st);
        let n_data = match st & 0xf0 {
            0xc0 | 0xd0 => 1,
            0x80..=0xe0 => 2,
            _ => return Err(bad(format!("unsupported status byte {st:#04x}"))),
        };
        let data = track
            .get(pos..pos + n_data)
            .ok_or_else(|| bad("truncated channel event"))?;
        pos += n_data;
        let kind = st & 0xf0;
        if kind == 0x90 && data[1] > 0 {
            open[data[0] as usize & 0x7f].push((tick, data[1]));
        } else if kind == 0x80 || kind == 0x90 {
            let pitch = data[0] & 0x7f;
            let stack = &mut open[pitch as usize];
            if !stack.is_empty() {
                let (on_tick, velocity) = stack.remove(0);
                notes.push(MidiNote { on_tick, off_tick: tick, pitch, velocity });
            }
        }
    }
    if pos > track.len() {
        return Err(bad("event runs past the end of the track"));
    }
    if open.iter().any(|s| !s.is_empty()) {
        return Err(bad("note-on without a matching note-off"));
    }
    Ok(())
}

/// Reads notes back into frame units.
pub fn notes_from_midi(bytes: &[u8], frame_duration_s: f64) -> Result<Vec<NoteEvent>> {
    let (division, notes) = parse_midi(bytes)?;
    let scale = TICKS_PER_QUARTER as f64 / division as f64;
    let frame = |tick: u32| tick_to_frame((tick as f64 * scale).round() as u32, frame_duration_s);
    let mut out: Vec<NoteEvent> = notes
        .iter()
        .map(|n| NoteEvent {
            onset_frame: frame(n.on_tick),
            offset_frame: frame(n.off_tick),
            pitch: n.pitch as i32,
            velocity: n.velocity,
        })
        .collect();
    out.sort_by_key(|n| (n.onset_frame, n.pitch));
    Ok(out)
}

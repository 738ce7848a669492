//! Spike-list serialization: two-column CSV and a packed little-endian
//! binary layout (u32 afferent index followed by f64 time in ms).

use std::io::{BufRead, Read, Write};

use super::Spike;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "afferent_index,time_ms";
const RECORD_BYTES: usize = 12;

pub fn write_csv<W: Write>(spikes: &[Spike], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for s in spikes {
        // `{}` on f64 prints the shortest representation that parses back
        // to the same value
        writeln!(out, "{},{}", s.afferent, s.time)?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(input: R) -> Result<Vec<Spike>> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim) != Some(CSV_HEADER) {
        return Err(Error::Format(format!("expected header `{CSV_HEADER}`")));
    }
    let mut spikes = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Format(format!("line {}: `{line}`", n + 2));
        let (index, time) = line.split_once(',').ok_or_else(bad)?;
        let afferent = index.trim().parse().map_err(|_| bad())?;
        let time = time.trim().parse().map_err(|_| bad())?;
        spikes.push(Spike { afferent, time });
    }
    Ok(spikes)
}

pub fn write_binary<W: Write>(spikes: &[Spike], mut out: W) -> Result<()> {
    let mut buf = Vec::with_capacity(spikes.len() * RECORD_BYTES);
    for s in spikes {
        buf.extend_from_slice(&s.afferent.to_le_bytes());
        buf.extend_from_slice(&s.time.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

pub fn read_binary<R: Read>(mut input: R) -> Result<Vec<Spike>> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    if buf.len() % RECORD_BYTES != 0 {
        return Err(Error::Format(format!(
            "binary spike data length {} is not a multiple of {RECORD_BYTES}",
            buf.len()
        )));
    }
    Ok(buf
        .chunks_exact(RECORD_BYTES)
        .map(|c| Spike {
            afferent: u32::from_le_bytes(c[..4].try_into().unwrap()),
            time: f64::from_le_bytes(c[4..].try_into().unwrap()),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spikes() -> impl Strategy<Value = Vec<Spike>> {
        prop::collection::vec(
            (any::<u32>(), -1e6f64..1e6).prop_map(|(a, t)| Spike::new(a, t)),
            0..200,
        )
    }

    proptest! {
        #[test]
        fn csv_round_trips_exactly(list in spikes()) {
            let mut buf = Vec::new();
            write_csv(&list, &mut buf).unwrap();
            let back = read_csv(&buf[..]).unwrap();
            prop_assert_eq!(back, list);
        }

        #[test]
        fn binary_round_trips_exactly(list in spikes()) {
            let mut buf = Vec::new();
            write_binary(&list, &mut buf).unwrap();
            prop_assert_eq!(buf.len(), list.len() * 12);
            let back = read_binary(&buf[..]).unwrap();
            prop_assert_eq!(back, list);
        }
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(read_csv("time,afferent\n1,2\n".as_bytes()).is_err());
        assert!(read_csv("afferent_index,time_ms\n1;2\n".as_bytes()).is_err());
        assert!(read_binary(&[0u8; 13][..]).is_err());
    }

    #[test]
    fn binary_layout_is_little_endian() {
        let mut buf = Vec::new();
        write_binary(&[Spike::new(1, 2.0)], &mut buf).unwrap();
        assert_eq!(&buf[..4], &[1, 0, 0, 0]);
        assert_eq!(&buf[4..], &2.0f64.to_le_bytes());
    }
}

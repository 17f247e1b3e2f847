//! CSV (`r_um,force_pN`) and JSON (`K,delta,A,C,r_max`) formats.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{ForceSample, OpticalForceParams};
use crate::{Error, Result};

pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<ForceSample>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["r_um", "force_pN"] {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!(
                "expected header `r_um,force_pN`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn write_samples_csv<W: Write>(writer: W, samples: &[ForceSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        w.serialize(s)?;
    }
    if samples.is_empty() {
        w.write_record(["r_um", "force_pN"])?;
    }
    w.flush().map_err(Error::from)
}

pub fn read_params_json(path: &Path) -> Result<OpticalForceParams> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let p: OpticalForceParams = serde_json::from_reader(f)?;
    p.validate()?;
    Ok(p)
}

pub fn write_params_json(path: &Path, params: &OpticalForceParams) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(f, params)?;
    Ok(())
}

//! CSV trace files written by the training loops.

use std::io::Write;
use std::marker::PhantomData;

use crate::error::Result;

/// A record that can be written as one CSV row.
pub trait TraceRow {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

/// Writes a header on creation and one row per record.
pub struct TraceWriter<W: Write, T: TraceRow> {
    inner: csv::Writer<W>,
    _row: PhantomData<T>,
}

impl<W: Write, T: TraceRow> TraceWriter<W, T> {
    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(T::header())?;
        Ok(Self {
            inner,
            _row: PhantomData,
        })
    }

    pub fn write(&mut self, row: &T) -> Result<()> {
        self.inner.write_record(row.fields())?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Renders records to a CSV string.
pub fn to_csv_string<T: TraceRow>(rows: &[T]) -> Result<String> {
    let mut buf = Vec::new();
    {
        let mut w = TraceWriter::<_, T>::new(&mut buf)?;
        for r in rows {
            w.write(r)?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

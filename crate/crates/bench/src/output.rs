//! Optional output directory for CSV and VTK files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mmd_core::fvm::{write_solution_csv, write_solution_vtk};
use mmd_core::Point;

use crate::BenchError;

/// Where result files go; `Output::none()` discards them.
#[derive(Clone, Debug, Default)]
pub struct Output {
    dir: Option<PathBuf>,
    vtk: bool,
}

impl Output {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn to_dir(dir: impl Into<PathBuf>, vtk: bool) -> Result<Self, BenchError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self {
            dir: Some(dir),
            vtk,
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Runs `f` on a buffered writer for `name`, if there is a directory.
    pub fn write(
        &self,
        name: &str,
        f: impl FnOnce(&mut dyn Write) -> Result<(), BenchError>,
    ) -> Result<(), BenchError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let mut w = BufWriter::new(File::create(dir.join(name))?);
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// `<stem>.csv`, plus `<stem>.vtk` when VTK output is on.
    pub fn solution(
        &self,
        stem: &str,
        points: &[Point],
        u: &[f64],
        flux: &[Point],
    ) -> Result<(), BenchError> {
        self.write(&format!("{stem}.csv"), |w| {
            Ok(write_solution_csv(w, points, u, flux)?)
        })?;
        if self.vtk {
            self.write(&format!("{stem}.vtk"), |w| {
                Ok(write_solution_vtk(w, points, u, flux)?)
            })?;
        }
        Ok(())
    }
}

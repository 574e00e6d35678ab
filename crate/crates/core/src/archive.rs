//! In-memory named-tensor container behind the `.i2pw` weight format.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::tensor::Tensor;

/// Whether an archive holds 2D source filters or inflated 3D filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Dimensionality {
    Source2d = 2,
    Inflated3d = 3,
}

impl Dimensionality {
    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            2 => Some(Self::Source2d),
            3 => Some(Self::Inflated3d),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveTensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub values: Vec<f32>,
}

impl ArchiveTensor {
    pub fn dims_usize(&self) -> Vec<usize> {
        self.dims.iter().map(|&d| d as usize).collect()
    }

    pub fn to_tensor(&self) -> Result<Tensor<f32>> {
        Tensor::from_vec(&self.dims_usize(), self.values.clone())
    }
}

/// Ordered records with unique names.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightArchive {
    dimensionality: Dimensionality,
    records: Vec<ArchiveTensor>,
}

impl WeightArchive {
    pub fn new(dimensionality: Dimensionality) -> Self {
        Self { dimensionality, records: Vec::new() }
    }

    #[inline]
    pub fn dimensionality(&self) -> Dimensionality {
        self.dimensionality
    }

    pub fn records(&self) -> &[ArchiveTensor] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn insert(&mut self, record: ArchiveTensor) -> Result<()> {
        let n: u64 = record.dims.iter().product();
        if n != record.values.len() as u64 {
            bail!(Archive, "tensor {} has {} values for dims {:?}", record.name, record.values.len(), record.dims);
        }
        if record.values.iter().any(|v| !v.is_finite()) {
            bail!(Archive, "tensor {} holds a non-finite value", record.name);
        }
        if self.get(&record.name).is_some() {
            bail!(Archive, "duplicate tensor name {}", record.name);
        }
        self.records.push(record);
        Ok(())
    }

    pub fn insert_tensor(&mut self, name: &str, t: &Tensor<f32>) -> Result<()> {
        self.insert(ArchiveTensor {
            name: name.into(),
            dims: t.dims().iter().map(|&d| d as u64).collect(),
            values: t.data().to_vec(),
        })
    }

    pub fn get(&self, name: &str) -> Option<&ArchiveTensor> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&ArchiveTensor> {
        match self.get(name) {
            Some(r) => Ok(r),
            None => bail!(Archive, "missing tensor {name}"),
        }
    }
}

use super::Tensor;
use crate::{Error, Result, Scalar};

/// One named block of parameters inside a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Ordered named parameter segments over one flat vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    segments: Vec<Segment>,
    values: Vec<T>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { segments: Vec::new(), values: Vec::new() }
    }

    pub fn push(&mut self, name: &str, shape: &[usize], values: Vec<T>) -> Result<()> {
        let len: usize = shape.iter().product();
        if len != values.len() || shape.is_empty() {
            return Err(Error::Shape(format!(
                "segment {name}: shape {shape:?} vs {} values",
                values.len()
            )));
        }
        if self.index_of(name).is_some() {
            return Err(Error::Invalid(format!("duplicate segment {name}")));
        }
        self.segments.push(Segment {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset: self.values.len(),
            len,
        });
        self.values.extend(values);
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.segments.iter().position(|s| s.name == name)
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Result<&Segment> {
        self.index_of(name)
            .map(|i| &self.segments[i])
            .ok_or_else(|| Error::Invalid(format!("no parameter segment named {name}")))
    }

    pub fn get(&self, name: &str) -> Result<&[T]> {
        let s = self.segment(name)?;
        Ok(&self.values[s.offset..s.offset + s.len])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut [T]> {
        let s = self.segment(name)?.clone();
        Ok(&mut self.values[s.offset..s.offset + s.len])
    }

    pub fn tensor(&self, index: usize) -> Tensor<T> {
        let s = &self.segments[index];
        Tensor::new(&s.shape, self.values[s.offset..s.offset + s.len].to_vec())
            .expect("segment shape matches length")
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn set_values(&mut self, values: Vec<T>) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.values.len(),
                values.len()
            )));
        }
        self.values = values;
        Ok(())
    }

    pub fn total_count(&self) -> usize {
        self.values.len()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            segments: self.segments.clone(),
            values: self.values.iter().map(|v| U::lit(v.to_f64().unwrap_or(f64::NAN))).collect(),
        }
    }

    /// Parameter counts grouped by the segment name prefix before the first `.`,
    /// in first-appearance order.
    pub fn layer_counts(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for s in &self.segments {
            let layer = s.name.split('.').next().unwrap_or(&s.name);
            match out.iter_mut().find(|(n, _)| n == layer) {
                Some((_, c)) => *c += s.len,
                None => out.push((layer.to_string(), s.len)),
            }
        }
        out
    }
}

//! Python bindings: `import pystretchtomo`.
//!
//! Arrays cross the boundary as flat row-major `float` lists or as raw
//! little-endian `float32` bytes, so numpy is optional on the Python side
//! (`np.frombuffer(v.to_bytes(), "<f4").reshape(v.shape)`).

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use stretchtomo::augment::{self, AugmentSpec, Shift, ShiftLog};
use stretchtomo::classic::{self, FilterSpec};
use stretchtomo::phantom::{self, PhantomSpec};
use stretchtomo::projector::{self, ProjectorSpec};
use stretchtomo::stretch::{self as st, Direction, StretchSpec};
use stretchtomo::tensor::{normalize_zero_mean_unit_var, StackKind};
use stretchtomo::{eval, io, Error, Tensor, TiltGeometry};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn from_le_bytes(bytes: &[u8]) -> PyResult<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(PyValueError::new_err(format!("byte length {} is not a multiple of 4", bytes.len())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

fn to_le_bytes(data: &[f32]) -> Vec<u8> {
    data.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn parse_kind(kind: &str) -> PyResult<StackKind> {
    match kind {
        "raw" => Ok(StackKind::Raw),
        "augmented" => Ok(StackKind::Augmented),
        "stretched" => Ok(StackKind::Stretched),
        "filtered" => Ok(StackKind::Filtered),
        other => Err(PyValueError::new_err(format!("unknown stack kind `{other}`"))),
    }
}

fn parse_direction(direction: &str) -> PyResult<Direction> {
    direction.parse().map_err(py_err)
}

/// A `(depth, height, width)` float32 volume.
#[pyclass(module = "pystretchtomo", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct Volume {
    inner: stretchtomo::Volume,
}

#[pymethods]
impl Volume {
    #[new]
    fn new(shape: [usize; 3], data: Vec<f32>) -> PyResult<Self> {
        Ok(Self { inner: stretchtomo::Volume::new(shape, data).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_bytes(shape: [usize; 3], data: &[u8]) -> PyResult<Self> {
        Self::new(shape, from_le_bytes(data)?)
    }

    #[staticmethod]
    fn zeros(shape: [usize; 3]) -> PyResult<Self> {
        Ok(Self { inner: stretchtomo::Volume::zeros(shape).map_err(py_err)? })
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        let [d, h, w] = self.inner.dims();
        (d, h, w)
    }

    fn get(&self, z: usize, y: usize, x: usize) -> PyResult<f32> {
        let [d, h, w] = self.inner.dims();
        if z >= d || y >= h || x >= w {
            return Err(PyValueError::new_err(format!("index ({z}, {y}, {x}) outside shape ({d}, {h}, {w})")));
        }
        Ok(self.inner.get(z, y, x))
    }

    fn to_list(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &to_le_bytes(self.inner.data()))
    }

    fn normalized(&self) -> PyResult<Self> {
        Ok(Self { inner: self.inner.normalized().map_err(py_err)? })
    }

    fn crop(&self, corner: [usize; 3], size: [usize; 3]) -> PyResult<Self> {
        Ok(Self { inner: self.inner.crop(corner, size).map_err(py_err)? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Volume(shape={:?})", self.inner.dims())
    }
}

/// A `(views, rows, columns)` tilt series with its angles and processing stage.
#[pyclass(module = "pystretchtomo", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct TiltStack {
    inner: stretchtomo::TiltStack,
}

#[pymethods]
impl TiltStack {
    #[new]
    #[pyo3(signature = (angles_deg, shape, data, kind = "raw"))]
    fn new(angles_deg: Vec<f64>, shape: [usize; 3], data: Vec<f32>, kind: &str) -> PyResult<Self> {
        if shape[0] != angles_deg.len() {
            return Err(PyValueError::new_err(format!("{} angles for {} views", angles_deg.len(), shape[0])));
        }
        let geometry = TiltGeometry::new(angles_deg, [shape[1], shape[2]]).map_err(py_err)?;
        let inner = stretchtomo::TiltStack::new(geometry, parse_kind(kind)?, data).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (angles_deg, shape, data, kind = "raw"))]
    fn from_bytes(angles_deg: Vec<f64>, shape: [usize; 3], data: &[u8], kind: &str) -> PyResult<Self> {
        Self::new(angles_deg, shape, from_le_bytes(data)?, kind)
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        let [v, h, w] = self.inner.dims();
        (v, h, w)
    }

    #[getter]
    fn angles_deg(&self) -> Vec<f64> {
        self.inner.geometry().angles_deg().to_vec()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind().as_str()
    }

    fn view(&self, k: usize) -> PyResult<Vec<f32>> {
        if k >= self.inner.dims()[0] {
            return Err(PyValueError::new_err(format!("view {k} out of range")));
        }
        Ok(self.inner.view(k).to_vec())
    }

    fn to_list(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &to_le_bytes(self.inner.data()))
    }

    /// The stack with views as channels, shaped like a volume.
    fn to_channels(&self) -> Volume {
        Volume { inner: self.inner.to_channels() }
    }

    fn __repr__(&self) -> String {
        format!("TiltStack(shape={:?}, kind={:?}, views={})", self.inner.dims(), self.kind(), self.inner.dims()[0])
    }
}

fn projector_spec(angles_deg: Vec<f64>, dims: [usize; 3], path_weighting: bool) -> PyResult<ProjectorSpec> {
    Ok(ProjectorSpec::new(angles_deg, dims).map_err(py_err)?.with_path_weighting(path_weighting))
}

fn recon_spec(y: &TiltStack, depth: usize, path_weighting: bool) -> PyResult<ProjectorSpec> {
    let [_, h, w] = y.inner.dims();
    projector_spec(y.angles_deg(), [depth, h, w], path_weighting)
}

#[pyfunction]
#[pyo3(signature = (volume, angles_deg, path_weighting = true))]
fn project(py: Python<'_>, volume: &Volume, angles_deg: Vec<f64>, path_weighting: bool) -> PyResult<TiltStack> {
    let spec = projector_spec(angles_deg, volume.inner.dims(), path_weighting)?;
    let out = py.detach(|| projector::project(&volume.inner, &spec)).map_err(py_err)?;
    Ok(TiltStack { inner: out })
}

#[pyfunction]
#[pyo3(signature = (stack, depth, path_weighting = true))]
fn backproject(py: Python<'_>, stack: &TiltStack, depth: usize, path_weighting: bool) -> PyResult<Volume> {
    let spec = recon_spec(stack, depth, path_weighting)?;
    let out = py.detach(|| projector::backproject(&stack.inner, &spec)).map_err(py_err)?;
    Ok(Volume { inner: out })
}

#[pyfunction]
#[pyo3(signature = (stack, direction = "magnify"))]
fn stretch(stack: &TiltStack, direction: &str) -> PyResult<TiltStack> {
    let spec = StretchSpec::new(stack.inner.geometry().clone()).with_direction(parse_direction(direction)?);
    Ok(TiltStack { inner: st::stretch(&stack.inner, &spec).map_err(py_err)? })
}

#[pyfunction]
#[pyo3(signature = (stack, direction = "magnify"))]
fn stretch_adjoint(stack: &TiltStack, direction: &str) -> PyResult<TiltStack> {
    let spec = StretchSpec::new(stack.inner.geometry().clone()).with_direction(parse_direction(direction)?);
    Ok(TiltStack { inner: st::stretch_adjoint(&stack.inner, &spec).map_err(py_err)? })
}

/// Sparse stretch operator as `(row, col, weight)` triplets over flat indices.
#[pyfunction]
#[pyo3(signature = (stack, direction = "magnify"))]
fn stretch_triplets(stack: &TiltStack, direction: &str) -> PyResult<Vec<(usize, usize, f64)>> {
    let spec = StretchSpec::new(stack.inner.geometry().clone()).with_direction(parse_direction(direction)?);
    Ok(st::as_sparse_operator(&spec, stack.inner.dims()).map_err(py_err)?.triplets)
}

#[pyfunction]
#[pyo3(signature = (stack, pad_length = None))]
fn ramlak_filter(stack: &TiltStack, pad_length: Option<usize>) -> PyResult<TiltStack> {
    let spec = FilterSpec { pad_length, ..FilterSpec::default() };
    Ok(TiltStack { inner: classic::ramlak_filter(&stack.inner, &spec).map_err(py_err)? })
}

#[pyfunction]
#[pyo3(signature = (stack, depth, path_weighting = true))]
fn bp(py: Python<'_>, stack: &TiltStack, depth: usize, path_weighting: bool) -> PyResult<Volume> {
    let spec = recon_spec(stack, depth, path_weighting)?;
    Ok(Volume { inner: py.detach(|| classic::bp(&stack.inner, &spec)).map_err(py_err)? })
}

#[pyfunction]
#[pyo3(signature = (stack, depth, path_weighting = true, pad_length = None))]
fn fbp(py: Python<'_>, stack: &TiltStack, depth: usize, path_weighting: bool, pad_length: Option<usize>) -> PyResult<Volume> {
    let spec = recon_spec(stack, depth, path_weighting)?;
    let filter = FilterSpec { pad_length, ..FilterSpec::default() };
    Ok(Volume { inner: py.detach(|| classic::fbp(&stack.inner, &filter, &spec)).map_err(py_err)? })
}

fn augment_spec(noise_ratio: f64, n_misaligned: usize, shift_range: u32, seed: u64) -> AugmentSpec {
    AugmentSpec { noise_ratio, n_misaligned, shift_range, rng_seed: seed, ..AugmentSpec::default() }
}

/// `(view, di, dj)` per shifted view.
type Shifts = Vec<(usize, i32, i32)>;

fn shift_tuples(log: &ShiftLog) -> Shifts {
    log.shifts.iter().map(|s| (s.view, s.di, s.dj)).collect()
}

#[pyfunction]
#[pyo3(signature = (stack, noise_ratio = 0.3, seed = 0))]
fn add_noise(stack: &TiltStack, noise_ratio: f64, seed: u64) -> PyResult<TiltStack> {
    let spec = augment_spec(noise_ratio, 0, 0, seed);
    Ok(TiltStack { inner: augment::add_noise(&stack.inner, &spec).map_err(py_err)? })
}

/// Returns the shifted stack and the applied `(view, di, dj)` shifts.
#[pyfunction]
#[pyo3(signature = (stack, n_misaligned, shift_range = 3, seed = 0))]
fn misalign(stack: &TiltStack, n_misaligned: usize, shift_range: u32, seed: u64) -> PyResult<(TiltStack, Shifts)> {
    let spec = augment_spec(0.0, n_misaligned, shift_range, seed);
    let (out, log) = augment::misalign(&stack.inner, &spec).map_err(py_err)?;
    Ok((TiltStack { inner: out }, shift_tuples(&log)))
}

#[pyfunction]
fn apply_shifts(stack: &TiltStack, shifts: Shifts) -> PyResult<TiltStack> {
    let log = ShiftLog { shifts: shifts.into_iter().map(|(view, di, dj)| Shift { view, di, dj }).collect() };
    Ok(TiltStack { inner: augment::apply_shifts(&stack.inner, &log).map_err(py_err)? })
}

#[pyfunction]
fn finalize_views(stack: &TiltStack) -> PyResult<TiltStack> {
    Ok(TiltStack { inner: augment::finalize_views(&stack.inner).map_err(py_err)? })
}

/// Noise, misalignment and per-view normalization in one call.
#[pyfunction]
#[pyo3(name = "augment", signature = (stack, noise_ratio = 0.3, n_misaligned = 0, shift_range = 3, seed = 0))]
fn augment_stack(
    stack: &TiltStack,
    noise_ratio: f64,
    n_misaligned: usize,
    shift_range: u32,
    seed: u64,
) -> PyResult<(TiltStack, Shifts)> {
    let spec = augment_spec(noise_ratio, n_misaligned, shift_range, seed);
    let (out, log) = augment::augment(&stack.inner, &spec).map_err(py_err)?;
    Ok((TiltStack { inner: out }, shift_tuples(&log)))
}

#[pyfunction]
#[pyo3(signature = (shape, style = "cells", count = 40, membrane_width = 1.5, seed = 0))]
fn make_phantom(py: Python<'_>, shape: [usize; 3], style: &str, count: usize, membrane_width: f64, seed: u64) -> PyResult<Volume> {
    let spec = PhantomSpec {
        dims: shape,
        style: style.parse().map_err(py_err)?,
        cell_count: count,
        membrane_width_px: membrane_width,
        rng_seed: seed,
    };
    Ok(Volume { inner: py.detach(|| phantom::make_phantom(&spec)).map_err(py_err)? })
}

/// Patch corners `(z, y, x)` covering a volume of `shape`.
#[pyfunction]
fn plan_tiling(shape: [usize; 3], patch_shape: [usize; 3]) -> PyResult<Vec<(usize, usize, usize)>> {
    let plan = eval::plan_tiling(shape, patch_shape).map_err(py_err)?;
    Ok(plan.corners.iter().map(|c| (c[0], c[1], c[2])).collect())
}

#[pyfunction]
fn mse(a: &Volume, b: &Volume) -> PyResult<f64> {
    eval::mse(&a.inner, &b.inner).map_err(py_err)
}

/// Zero mean, unit variance; constant input maps to zeros.
#[pyfunction]
fn normalize(values: Vec<f32>) -> PyResult<Vec<f32>> {
    normalize_zero_mean_unit_var(&values).map_err(py_err)
}

/// Reads an STTO file as a `Volume`, or a `TiltStack` when a sidecar is present.
#[pyfunction]
fn read_tensor(py: Python<'_>, path: std::path::PathBuf) -> PyResult<Py<PyAny>> {
    Ok(match io::read_tensor(&path).map_err(py_err)? {
        Tensor::Volume(v) => Bound::new(py, Volume { inner: v })?.into_any().unbind(),
        Tensor::Stack(s) => Bound::new(py, TiltStack { inner: s })?.into_any().unbind(),
    })
}

#[pyfunction]
fn write_tensor(obj: &Bound<'_, PyAny>, path: std::path::PathBuf) -> PyResult<()> {
    let tensor = if let Ok(v) = obj.cast::<Volume>() {
        Tensor::Volume(v.get().inner.clone())
    } else if let Ok(s) = obj.cast::<TiltStack>() {
        Tensor::Stack(s.get().inner.clone())
    } else {
        return Err(PyValueError::new_err("write_tensor expects a Volume or TiltStack"));
    };
    io::write_tensor(&tensor, &path).map_err(py_err)
}

#[pymodule]
fn pystretchtomo(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Volume>()?;
    m.add_class::<TiltStack>()?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(backproject, m)?)?;
    m.add_function(wrap_pyfunction!(stretch, m)?)?;
    m.add_function(wrap_pyfunction!(stretch_adjoint, m)?)?;
    m.add_function(wrap_pyfunction!(stretch_triplets, m)?)?;
    m.add_function(wrap_pyfunction!(ramlak_filter, m)?)?;
    m.add_function(wrap_pyfunction!(bp, m)?)?;
    m.add_function(wrap_pyfunction!(fbp, m)?)?;
    m.add_function(wrap_pyfunction!(add_noise, m)?)?;
    m.add_function(wrap_pyfunction!(misalign, m)?)?;
    m.add_function(wrap_pyfunction!(apply_shifts, m)?)?;
    m.add_function(wrap_pyfunction!(finalize_views, m)?)?;
    m.add_function(wrap_pyfunction!(augment_stack, m)?)?;
    m.add_function(wrap_pyfunction!(make_phantom, m)?)?;
    m.add_function(wrap_pyfunction!(plan_tiling, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(write_tensor, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

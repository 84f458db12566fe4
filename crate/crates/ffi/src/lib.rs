//! C ABI over the `gdln` crate.
//!
//! Every function returns a [`GdlnStatus`]; on failure a message is available
//! from [`gdln_last_error_message`] on the same thread. Handles are opaque
//! pointers owned by the caller and released with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gdln::analytic::{crossover_delta, linear_mode_trajectory, ModeParams};
use gdln::config::Task;
use gdln::datasets::Dataset;
use gdln::gdln::{build_reln_graph, loss, train, GatedGraph, GatingTable, Init, RelnPreset, TrainConfig};
use gdln::trajectory::Trajectory;
use gdln::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GdlnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Diverged = 3,
    OutOfRange = 4,
    Io = 5,
    /// A Rust panic was caught at the boundary.
    Internal = 6,
}

pub struct GdlnDataset(Dataset);

pub struct GdlnNetwork {
    graph: GatedGraph,
    gates: GatingTable,
    dataset: Dataset,
}

pub struct GdlnTrajectory(Trajectory);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GdlnStatus {
    match e {
        Error::Diverged { .. } => GdlnStatus::Diverged,
        Error::OutOfRange { .. } => GdlnStatus::OutOfRange,
        Error::Io(_) | Error::Json(_) => GdlnStatus::Io,
        _ => GdlnStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), (GdlnStatus, String)>) -> GdlnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GdlnStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            GdlnStatus::Internal
        }
    }
}

fn lift<T>(r: gdln::Result<T>) -> Result<T, (GdlnStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (GdlnStatus, String) {
    (GdlnStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (GdlnStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (GdlnStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (GdlnStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (GdlnStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gdln_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// The linear/xor gating crossover margin.
#[no_mangle]
pub extern "C" fn gdln_crossover_delta() -> f64 {
    crossover_delta()
}

/// Closed-form strength of one mode at time `t` (epochs).
///
/// # Safety
/// `out` must be null or point to writable memory for one `double`.
#[no_mangle]
pub unsafe extern "C" fn gdln_mode_strength(s: f64, d: f64, a0: f64, tau: f64, t: f64, out: *mut f64) -> GdlnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let p = lift(ModeParams::new(s, d, a0, tau))?;
        *out = linear_mode_trajectory(&p, t);
        Ok(())
    })
}

/// Builds a task dataset from a name such as `xor(0.5)`, `hierarchy(8)` or `context3`.
///
/// # Safety
/// `task` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gdln_dataset_new(task: *const c_char, out: *mut *mut GdlnDataset) -> GdlnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let task: Task = lift(str_arg(task, "task")?.parse())?;
        let ds = lift(task.build())?;
        *out = Box::into_raw(Box::new(GdlnDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be a live dataset handle; the out pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn gdln_dataset_dims(
    ds: *const GdlnDataset,
    n_inputs: *mut usize,
    n_targets: *mut usize,
    n_datapoints: *mut usize,
) -> GdlnStatus {
    guard(|| {
        let ds = &handle(ds, "dataset")?.0;
        for (p, v) in [(n_inputs, ds.n_inputs()), (n_targets, ds.n_targets()), (n_datapoints, ds.n_datapoints())] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from [`gdln_dataset_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gdln_dataset_free(ds: *mut GdlnDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Builds a gated network (`linear`, `xor_linear`, `xor_pointwise`,
/// `contextual(C,k)`, `depth2_contextual(C)`) over a copy of `ds`.
///
/// # Safety
/// `preset` must be a NUL-terminated string, `ds` a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gdln_network_new(
    preset: *const c_char,
    ds: *const GdlnDataset,
    hidden_width: usize,
    out: *mut *mut GdlnNetwork,
) -> GdlnStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let preset: RelnPreset = lift(str_arg(preset, "preset")?.parse())?;
        let ds = handle(ds, "dataset")?.0.clone();
        let (graph, gates) = lift(build_reln_graph(preset, &ds, hidden_width))?;
        *out = Box::into_raw(Box::new(GdlnNetwork { graph, gates, dataset: ds }));
        Ok(())
    })
}

/// Current training loss of the network on its dataset.
///
/// # Safety
/// `net` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gdln_network_loss(net: *const GdlnNetwork, out: *mut f64) -> GdlnStatus {
    guard(|| {
        let net = handle(net, "network")?;
        let out = out_arg(out, "out")?;
        *out = lift(loss(&net.graph, &net.gates, &net.dataset))?;
        Ok(())
    })
}

/// Reinitializes with Gaussian weights of std `init_std` and trains for
/// `epochs` full-batch steps, recording the loss every `record_every` epochs.
///
/// # Safety
/// `net` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gdln_network_train(
    net: *mut GdlnNetwork,
    learning_rate: f64,
    epochs: usize,
    init_std: f64,
    seed: u64,
    record_every: usize,
    out: *mut *mut GdlnTrajectory,
) -> GdlnStatus {
    guard(|| {
        let net = net.as_mut().ok_or_else(|| null("network"))?;
        let out = out_arg(out, "out")?;
        let mut cfg = TrainConfig::new(learning_rate, epochs);
        cfg.init = Some(Init::Std(init_std));
        cfg.seed = seed;
        cfg.record_every = record_every;
        let traj = lift(train(&mut net.graph, &net.gates, &net.dataset, &cfg))?;
        *out = Box::into_raw(Box::new(GdlnTrajectory(traj)));
        Ok(())
    })
}

/// # Safety
/// `net` must be null or a handle from [`gdln_network_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gdln_network_free(net: *mut GdlnNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `traj` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gdln_trajectory_len(traj: *const GdlnTrajectory, out: *mut usize) -> GdlnStatus {
    guard(|| {
        let t = &handle(traj, "trajectory")?.0;
        *out_arg(out, "out")? = t.len();
        Ok(())
    })
}

/// Epoch and loss of record `index`.
///
/// # Safety
/// `traj` must be a live handle; `epoch` and `loss` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gdln_trajectory_get(
    traj: *const GdlnTrajectory,
    index: usize,
    epoch: *mut f64,
    loss: *mut f64,
) -> GdlnStatus {
    guard(|| {
        let t = &handle(traj, "trajectory")?.0;
        let epoch = out_arg(epoch, "epoch")?;
        let loss = out_arg(loss, "loss")?;
        if index >= t.len() {
            let e = Error::OutOfRange { index, len: t.len() };
            return Err((status_of(&e), e.to_string()));
        }
        *epoch = t.epochs[index];
        *loss = t.loss[index];
        Ok(())
    })
}

/// # Safety
/// `traj` must be null or a handle from [`gdln_network_train`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gdln_trajectory_free(traj: *mut GdlnTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}

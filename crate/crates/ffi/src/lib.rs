//! C interface. Every function returns an `SfStatus`; on failure the message is
//! kept per thread and read with `sf_last_error`. Handles are opaque and owned by
//! the caller, who frees them with `sf_simulation_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use shellflow::config::SimConfig;
use shellflow::driver::{exit_code, Simulation};
use shellflow::field_io::FieldSet;
use shellflow::fluid::FluidState;
use shellflow::shell::{membrane_energy, willmore_energy};
use shellflow::Error;

/// Status codes. Numerical failures use the same values as the command line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Io = 3,
    InvalidArgument = 4,
    MeshTangling = 10,
    Geometry = 11,
    Picard = 12,
    Solver = 14,
    Projection = 15,
    Panic = 99,
}

impl From<&Error> for SfStatus {
    fn from(e: &Error) -> Self {
        match exit_code(e) {
            2 => SfStatus::Config,
            3 => SfStatus::Io,
            10 => SfStatus::MeshTangling,
            11 => SfStatus::Geometry,
            12 => SfStatus::Picard,
            14 => SfStatus::Solver,
            _ => SfStatus::Projection,
        }
    }
}

/// Energies of the current state.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct SfEnergy {
    pub kinetic: f64,
    pub willmore: f64,
    pub membrane: f64,
    /// Residual of the discrete energy law over the last step; 0 before the first.
    pub balance: f64,
    /// Picard sweeps of the last step.
    pub sweeps: u32,
}

/// A simulation together with its current state.
pub struct SfSimulation {
    sim: Simulation,
    state: FluidState,
    last: SfEnergy,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), SfStatus>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SfStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside shellflow".into());
            SfStatus::Panic
        }
    }
}

fn fail(e: Error) -> SfStatus {
    let s = SfStatus::from(&e);
    set_error(e.to_string());
    s
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, SfStatus> {
    if p.is_null() {
        set_error("null string".into());
        return Err(SfStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string is not UTF-8".into());
        SfStatus::InvalidArgument
    })
}

unsafe fn handle<'a>(p: *mut SfSimulation) -> Result<&'a mut SfSimulation, SfStatus> {
    p.as_mut().ok_or_else(|| {
        set_error("null simulation handle".into());
        SfStatus::NullPointer
    })
}

fn build(config: SimConfig) -> Result<Box<SfSimulation>, SfStatus> {
    let sim = Simulation::new(config).map_err(fail)?;
    let state = sim.initial_state().map_err(fail)?;
    let mut h = Box::new(SfSimulation { sim, state, last: SfEnergy::default() });
    refresh(&mut h).map_err(fail)?;
    Ok(h)
}

fn refresh(h: &mut SfSimulation) -> shellflow::Result<()> {
    let s = &h.sim.ctx.surface;
    let p = &h.sim.ctx.params.shell;
    h.last.kinetic = h.sim.ctx.kinetic_energy(&h.state.v);
    h.last.willmore = willmore_energy(s, &h.state.h, p)?;
    h.last.membrane = membrane_energy(s, &h.state.h, p)?;
    Ok(())
}

/// Copies the last error message into `buf` (NUL terminated, truncated to `len`).
/// Returns the full message length, or 0 if there is none.
///
/// # Safety
/// `buf` must be valid for `len` bytes or null.
#[no_mangle]
pub unsafe extern "C" fn sf_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(m) => {
            let bytes = m.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Library version as a static NUL terminated string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Creates a simulation of the desk configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_simulation_new_desk(out: *mut *mut SfSimulation) -> SfStatus {
    guard(|| {
        let out = out.as_mut().ok_or(SfStatus::NullPointer)?;
        *out = Box::into_raw(build(SimConfig::desk())?);
        Ok(())
    })
}

/// Creates a simulation from TOML configuration text.
///
/// # Safety
/// `toml` must be a NUL terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_simulation_new(toml: *const c_char, out: *mut *mut SfSimulation) -> SfStatus {
    guard(|| {
        let out = out.as_mut().ok_or(SfStatus::NullPointer)?;
        let c = SimConfig::parse(text(toml)?).map_err(fail)?;
        *out = Box::into_raw(build(c)?);
        Ok(())
    })
}

/// # Safety
/// `sim` must come from `sf_simulation_new*` and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sf_simulation_free(sim: *mut SfSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances `steps` time steps. On failure the state stays at the last completed step.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sf_simulation_step(sim: *mut SfSimulation, steps: u32) -> SfStatus {
    guard(|| {
        let h = handle(sim)?;
        for _ in 0..steps {
            let out = h.sim.advance(&h.state, None).map_err(fail)?;
            h.state = out.state;
            h.last.balance = out.report.balance;
            h.last.sweeps = out.picard.sweeps() as u32;
            refresh(h).map_err(fail)?;
        }
        Ok(())
    })
}

/// Current step index and time.
///
/// # Safety
/// `sim` must be a live handle; `step` and `t` valid pointers or null.
#[no_mangle]
pub unsafe extern "C" fn sf_simulation_time(sim: *mut SfSimulation, step: *mut u64, t: *mut f64) -> SfStatus {
    guard(|| {
        let h = handle(sim)?;
        if let Some(s) = step.as_mut() {
            *s = h.state.step as u64;
        }
        if let Some(x) = t.as_mut() {
            *x = h.state.t;
        }
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sf_simulation_energy(sim: *mut SfSimulation, out: *mut SfEnergy) -> SfStatus {
    guard(|| {
        let h = handle(sim)?;
        *out.as_mut().ok_or(SfStatus::NullPointer)? = h.last;
        Ok(())
    })
}

/// Chart dimensions of the height field, `n1 * n2` values in row major order.
///
/// # Safety
/// `sim` must be a live handle; `n1` and `n2` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn sf_simulation_chart(sim: *mut SfSimulation, n1: *mut usize, n2: *mut usize) -> SfStatus {
    guard(|| {
        let h = handle(sim)?;
        let g = h.sim.ctx.grid;
        *n1.as_mut().ok_or(SfStatus::NullPointer)? = g.n1;
        *n2.as_mut().ok_or(SfStatus::NullPointer)? = g.n2;
        Ok(())
    })
}

/// Copies the boundary height into `buf`, which must hold `n1 * n2` values.
///
/// # Safety
/// `sim` must be a live handle and `buf` valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_simulation_height(sim: *mut SfSimulation, buf: *mut f64, len: usize) -> SfStatus {
    guard(|| {
        let h = handle(sim)?;
        if buf.is_null() {
            return Err(SfStatus::NullPointer);
        }
        if len != h.state.h.len() {
            set_error(format!("buffer holds {len} values, height has {}", h.state.h.len()));
            return Err(SfStatus::InvalidArgument);
        }
        ptr::copy_nonoverlapping(h.state.h.as_ptr(), buf, len);
        Ok(())
    })
}

/// Writes the current state as a checkpoint.
///
/// # Safety
/// `sim` must be a live handle and `path` a NUL terminated string.
#[no_mangle]
pub unsafe extern "C" fn sf_simulation_save(sim: *mut SfSimulation, path: *const c_char) -> SfStatus {
    guard(|| {
        let h = handle(sim)?;
        let p = text(path)?;
        h.sim.checkpoint(&h.state).and_then(|fs| fs.write(Path::new(p))).map_err(fail)
    })
}

/// Replaces the current state by a checkpoint written with the same configuration.
///
/// # Safety
/// `sim` must be a live handle and `path` a NUL terminated string.
#[no_mangle]
pub unsafe extern "C" fn sf_simulation_load(sim: *mut SfSimulation, path: *const c_char) -> SfStatus {
    guard(|| {
        let h = handle(sim)?;
        let p = text(path)?;
        h.state = FieldSet::read(Path::new(p)).and_then(|fs| h.sim.restore(&fs)).map_err(fail)?;
        h.last = SfEnergy::default();
        refresh(h).map_err(fail)
    })
}

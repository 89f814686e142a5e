//! C interface to `polchan`. Channels are opaque heap handles released with
//! `polchan_channel_free`; every call returns a `PolchanStatus` and writes
//! results through out-pointers. The message of the most recent failure on
//! the calling thread is available from `polchan_last_error`.

use std::cell::RefCell;
use std::ffi::{CString, c_char};
use std::panic::{AssertUnwindSafe, catch_unwind};
use std::ptr;

use polchan::Error;
use polchan::channel::{
    DVector, DephasingSpec, ProcessMatrix, d_matrix_from_chi, d_vector, dephasing_channel, process_fidelity,
};
use polchan::crystal::{WavePlateAngles, four_crystal_channel};
use polchan::reachability;
use polchan::sbc::{WavePacket, sbc_channel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolchanStatus {
    Ok = 0,
    NullPointer = 1,
    /// Rejected input; mirrors CLI exit code 2.
    Validation = 2,
    /// Numerical failure; mirrors CLI exit code 3.
    Numerical = 3,
    Panic = 4,
}

/// Opaque process matrix.
pub struct PolchanChannel {
    chi: ProcessMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PolchanStatus {
    if e.is_validation() { PolchanStatus::Validation } else { PolchanStatus::Numerical }
}

fn guard(f: impl FnOnce() -> Result<(), PolchanStatus>) -> PolchanStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PolchanStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            PolchanStatus::Panic
        }
    }
}

fn check<T>(r: polchan::Result<T>) -> Result<T, PolchanStatus> {
    r.map_err(|e| {
        set_error(format!("{}: {e}", e.name()));
        status_of(&e)
    })
}

fn non_null<T>(p: *const T) -> Result<(), PolchanStatus> {
    if p.is_null() {
        set_error("null pointer argument".into());
        Err(PolchanStatus::NullPointer)
    } else {
        Ok(())
    }
}

unsafe fn emit(out: *mut *mut PolchanChannel, chi: ProcessMatrix) -> Result<(), PolchanStatus> {
    non_null(out)?;
    unsafe { *out = Box::into_raw(Box::new(PolchanChannel { chi })) };
    Ok(())
}

unsafe fn channel<'a>(h: *const PolchanChannel) -> Result<&'a PolchanChannel, PolchanStatus> {
    non_null(h)?;
    Ok(unsafe { &*h })
}

/// Copies the last error message into `buf` (NUL-terminated, truncated to
/// `len`). Returns the full message length excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn polchan_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            unsafe {
                ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
        }
        bytes.len()
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn polchan_channel_identity(out: *mut *mut PolchanChannel) -> PolchanStatus {
    guard(|| unsafe { emit(out, ProcessMatrix::identity()) })
}

/// Dephasing channel with probability `p` in [0, 1].
///
/// # Safety
/// `out` must be a valid pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn polchan_channel_dephasing(p: f64, out: *mut *mut PolchanChannel) -> PolchanStatus {
    guard(|| {
        let spec = check(DephasingSpec::new(p))?;
        unsafe { emit(out, dephasing_channel(spec)) }
    })
}

/// Four-crystal channel for wave-plate angles in degrees.
///
/// # Safety
/// `out` must be a valid pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn polchan_channel_four_crystal(
    theta1_deg: f64,
    theta2_deg: f64,
    theta3_deg: f64,
    out: *mut *mut PolchanChannel,
) -> PolchanStatus {
    guard(|| {
        if ![theta1_deg, theta2_deg, theta3_deg].iter().all(|x| x.is_finite()) {
            set_error("OutOfRange: angles must be finite".into());
            return Err(PolchanStatus::Validation);
        }
        let angles = WavePlateAngles::new(theta1_deg, theta2_deg, theta3_deg);
        unsafe { emit(out, four_crystal_channel(&angles)) }
    })
}

/// Soleil-Babinet dephaser at delay `delay_fs` for a Gaussian packet.
///
/// # Safety
/// `out` must be a valid pointer.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn polchan_channel_sbc(
    delay_fs: f64,
    wavelength_nm: f64,
    coherence_time_fs: f64,
    out: *mut *mut PolchanChannel,
) -> PolchanStatus {
    guard(|| {
        let packet = check(WavePacket::new(wavelength_nm, coherence_time_fs))?;
        if !delay_fs.is_finite() {
            set_error("OutOfRange: delay must be finite".into());
            return Err(PolchanStatus::Validation);
        }
        unsafe { emit(out, sbc_channel(delay_fs, &packet)) }
    })
}

/// Builds a channel from a row-major 4×4 χ given as separate real and
/// imaginary parts.
///
/// # Safety
/// `re` and `im` must each point to 16 readable doubles; `out` must be valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn polchan_channel_from_chi(
    re: *const f64,
    im: *const f64,
    out: *mut *mut PolchanChannel,
) -> PolchanStatus {
    guard(|| {
        non_null(re)?;
        non_null(im)?;
        let (re, im) = unsafe { (std::slice::from_raw_parts(re, 16), std::slice::from_raw_parts(im, 16)) };
        let m = polchan::linalg::CMatrix4::from_fn(|r, c| polchan::linalg::C64::new(re[4 * r + c], im[4 * r + c]));
        let chi = check(ProcessMatrix::new(m))?;
        unsafe { emit(out, chi) }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `h` must come from this library and not be used afterwards.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn polchan_channel_free(h: *mut PolchanChannel) {
    if !h.is_null() {
        drop(unsafe { Box::from_raw(h) });
    }
}

/// Row-major χ.
///
/// # Safety
/// `h` must be a live handle; `re` and `im` must each hold 16 doubles.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn polchan_channel_chi(h: *const PolchanChannel, re: *mut f64, im: *mut f64) -> PolchanStatus {
    guard(|| {
        let ch = unsafe { channel(h) }?;
        non_null(re)?;
        non_null(im)?;
        let m = ch.chi.matrix();
        for r in 0..4 {
            for c in 0..4 {
                unsafe {
                    *re.add(4 * r + c) = m[(r, c)].re;
                    *im.add(4 * r + c) = m[(r, c)].im;
                }
            }
        }
        Ok(())
    })
}

/// χ eigenvalues in descending order.
///
/// # Safety
/// `h` must be a live handle; `out` must hold 4 doubles.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn polchan_channel_eigenvalues(h: *const PolchanChannel, out: *mut f64) -> PolchanStatus {
    guard(|| {
        let ch = unsafe { channel(h) }?;
        non_null(out)?;
        let e = ch.chi.eigenvalues();
        unsafe { ptr::copy_nonoverlapping(e.as_ptr(), out, 4) };
        Ok(())
    })
}

/// Signed singular values of the unital block.
///
/// # Safety
/// `h` must be a live handle; `out` must hold 3 doubles.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn polchan_channel_d_vector(h: *const PolchanChannel, out: *mut f64) -> PolchanStatus {
    guard(|| {
        let ch = unsafe { channel(h) }?;
        non_null(out)?;
        let d = d_vector(&d_matrix_from_chi(&ch.chi).d).to_array();
        unsafe { ptr::copy_nonoverlapping(d.as_ptr(), out, 3) };
        Ok(())
    })
}

/// # Safety
/// `a` and `b` must be live handles; `out` must be valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn polchan_process_fidelity(
    a: *const PolchanChannel,
    b: *const PolchanChannel,
    out: *mut f64,
) -> PolchanStatus {
    guard(|| {
        let (a, b) = unsafe { (channel(a)?, channel(b)?) };
        non_null(out)?;
        unsafe { *out = process_fidelity(&a.chi, &b.chi) };
        Ok(())
    })
}

/// Wave-plate angles (degrees) that put the four-crystal channel on the
/// dephasing locus at `theta1_deg`.
///
/// # Safety
/// `out` must hold 3 doubles.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn polchan_dephasing_locus_angles(theta1_deg: f64, out: *mut f64) -> PolchanStatus {
    guard(|| {
        non_null(out)?;
        let a = check(reachability::dephasing_locus_angles(theta1_deg))?.degrees();
        unsafe { ptr::copy_nonoverlapping(a.as_ptr(), out, 3) };
        Ok(())
    })
}

/// Searches angles whose channel matches `target_d` (3 doubles). Writes the
/// angles in degrees and the achieved fidelity.
///
/// # Safety
/// `target_d` and `angles_out` must hold 3 doubles; `fidelity_out` must be
/// valid.
#[unsafe(no_mangle)]
pub unsafe extern "C" fn polchan_find_angles(
    target_d: *const f64,
    restarts: usize,
    seed: u64,
    angles_out: *mut f64,
    fidelity_out: *mut f64,
) -> PolchanStatus {
    guard(|| {
        non_null(target_d)?;
        non_null(angles_out)?;
        non_null(fidelity_out)?;
        let t = unsafe { std::slice::from_raw_parts(target_d, 3) };
        let target = DVector::from_array([t[0], t[1], t[2]]);
        let sol = check(reachability::find_angles_for_target(&target, restarts, seed))?;
        let a = sol.angles.degrees();
        unsafe {
            ptr::copy_nonoverlapping(a.as_ptr(), angles_out, 3);
            *fidelity_out = sol.fidelity;
        }
        Ok(())
    })
}

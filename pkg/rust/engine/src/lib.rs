//! Thin wasmtime embedding exposed to Python as `limes._engine`.
//!
//! All orchestration policy (instance state machines, persistence, HTTP)
//! lives on the Python side. This module wraps only the engine primitives:
//! compilation, artifact (de)serialization, WASI-sandboxed instantiation,
//! guest invocation, and cooperative interruption.
//!
//! Deadlines are wall-clock. Each store installs an epoch callback that
//! fires whenever the engine epoch advances (a per-engine ticker thread
//! increments it at a fixed interval); the callback interrupts the guest
//! once the invocation's deadline has passed or a stop was requested.
//!
//! Shim-level failures are raised as `RuntimeError("<MARKER>: detail")`;
//! the Python wrapper maps markers to its exception taxonomy. Guest-level
//! outcomes are returned as `(code, payload)` tuples, never raised.

use pyo3::exceptions::PyRuntimeError;
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};
use wasmtime::{
    Config, Engine as WtEngine, ExternType, Linker, Memory, Module, Store, Trap, TypedFunc,
    UpdateDeadline,
};
use wasmtime_wasi::p1::WasiP1Ctx;
use wasmtime_wasi::p2::pipe::{MemoryInputPipe, MemoryOutputPipe};
use wasmtime_wasi::{FsPerms, WasiCtxBuilder};

/// Version of the embedded wasmtime crate; part of the engine fingerprint.
const WASMTIME_VERSION: &str = "48.0.0";
/// Target triple this extension was built for; part of the engine fingerprint.
const HOST_TARGET: &str = env!("LIMES_BUILD_TARGET");

/// Guest result record: [tag: u32][payload ptr: u32][payload len: u32], LE.
const RESULT_RECORD_LEN: usize = 12;
/// Upper bound on captured guest stdout.
const STDOUT_CAPACITY: usize = 64 * 1024 * 1024;

const CODE_OK: u32 = 0;
const CODE_GUEST_ERR: u32 = 1;
const CODE_INTERRUPTED: u32 = 2;
const CODE_TRAP: u32 = 3;
const CODE_ENGINE: u32 = 4;

fn shim_err(marker: &str, detail: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(format!("{marker}: {detail}"))
}

/// Per-invocation control block shared with the store's epoch callback.
#[derive(Default)]
struct InvokeCtl {
    interrupt: AtomicBool,
    deadline: Mutex<Option<Instant>>,
}

struct Ticker {
    stop: Arc<AtomicBool>,
    handle: JoinHandle<()>,
}

#[pyclass(frozen, module = "limes._engine")]
struct Engine {
    inner: WtEngine,
    ticker: Mutex<Option<Ticker>>,
}

#[pymethods]
impl Engine {
    /// Create an engine with epoch interruption enabled.
    ///
    /// `tick_ms` > 0 starts a background thread advancing the epoch at that
    /// interval; that granularity bounds how promptly deadlines and stop
    /// requests are noticed. Pass 0 for an unticked engine (no deadline
    /// enforcement, no per-tick callback work) — useful for measurement.
    #[new]
    #[pyo3(signature = (tick_ms = 10.0))]
    fn new(tick_ms: f64) -> PyResult<Self> {
        if !tick_ms.is_finite() || tick_ms < 0.0 {
            return Err(shim_err("ENGINE", "tick_ms must be finite and >= 0"));
        }
        let mut config = Config::new();
        config.epoch_interruption(true);
        let inner = WtEngine::new(&config).map_err(|e| shim_err("ENGINE", e))?;
        let ticker = if tick_ms > 0.0 {
            let interval = Duration::from_secs_f64(tick_ms / 1000.0);
            let stop = Arc::new(AtomicBool::new(false));
            let flag = Arc::clone(&stop);
            let engine = inner.clone();
            let handle = std::thread::Builder::new()
                .name("limes-epoch-ticker".into())
                .spawn(move || {
                    while !flag.load(Ordering::Relaxed) {
                        std::thread::sleep(interval);
                        engine.increment_epoch();
                    }
                })
                .map_err(|e| shim_err("ENGINE", e))?;
            Some(Ticker { stop, handle })
        } else {
            None
        };
        Ok(Engine {
            inner,
            ticker: Mutex::new(ticker),
        })
    }

    /// Advance the epoch manually (tests drive deadlines without a ticker).
    fn increment_epoch(&self, n: u64) {
        for _ in 0..n {
            self.inner.increment_epoch();
        }
    }

    /// Stop the ticker thread. Idempotent; also runs when the engine is freed.
    fn shutdown(&self) {
        stop_ticker(&self.ticker);
    }

    /// Compile a wasm binary module. Raises MALFORMED for non-wasm bytes and
    /// COMPILE for invalid modules.
    fn compile(&self, py: Python<'_>, binary: Vec<u8>) -> PyResult<ModuleRef> {
        if binary.len() < 8 || &binary[..4] != b"\0asm" {
            return Err(shim_err(
                "MALFORMED",
                "missing \\0asm magic; not a WebAssembly binary module",
            ));
        }
        let engine = self.inner.clone();
        py.detach(move || Module::new(&engine, &binary))
            .map(|inner| ModuleRef { inner })
            .map_err(|e| shim_err("COMPILE", format!("{e:#}")))
    }

    /// Validate a wasm binary without compiling it. Raises MALFORMED for
    /// non-wasm bytes or invalid modules; much cheaper than `compile`.
    fn validate(&self, py: Python<'_>, binary: Vec<u8>) -> PyResult<()> {
        if binary.len() < 8 || &binary[..4] != b"\0asm" {
            return Err(shim_err(
                "MALFORMED",
                "missing \\0asm magic; not a WebAssembly binary module",
            ));
        }
        let engine = self.inner.clone();
        py.detach(move || Module::validate(&engine, &binary))
            .map_err(|e| shim_err("MALFORMED", format!("{e:#}")))
    }

    /// Rehydrate a module from bytes produced by `ModuleRef.serialize`.
    /// Raises CORRUPT if the blob is damaged or from an incompatible engine.
    fn deserialize(&self, py: Python<'_>, blob: Vec<u8>) -> PyResult<ModuleRef> {
        let engine = self.inner.clone();
        // Safety: callers only pass blobs they persisted themselves, and the
        // Python layer verifies the engine fingerprint before calling this.
        py.detach(move || unsafe { Module::deserialize(&engine, &blob) })
            .map(|inner| ModuleRef { inner })
            .map_err(|e| shim_err("CORRUPT", format!("{e:#}")))
    }

    /// Instantiate a module inside a fresh WASI sandbox.
    ///
    /// `preopen` maps a host directory to a guest path; `readonly` controls
    /// whether the guest may write under it. `stdin` preloads the guest's
    /// stdin; `capture_stdout` buffers stdout for `Instance.stdout()`.
    #[pyo3(signature = (module, preopen = None, readonly = true, env = vec![], stdin = None, capture_stdout = false))]
    fn instantiate(
        &self,
        module: &ModuleRef,
        preopen: Option<(String, String)>,
        readonly: bool,
        env: Vec<(String, String)>,
        stdin: Option<Vec<u8>>,
        capture_stdout: bool,
    ) -> PyResult<Instance> {
        let mut linker: Linker<WasiP1Ctx> = Linker::new(&self.inner);
        wasmtime_wasi::p1::add_to_linker_sync(&mut linker, |ctx| ctx)
            .map_err(|e| shim_err("ENGINE", format!("{e:#}")))?;

        let mut builder = WasiCtxBuilder::new();
        for (key, value) in &env {
            builder.env(key, value);
        }
        if let Some((host_dir, guest_path)) = &preopen {
            let perms = if readonly {
                FsPerms::ReadOnly
            } else {
                FsPerms::ReadWrite
            };
            builder
                .preopened_dir(host_dir, guest_path, perms)
                .map_err(|e| shim_err("SANDBOX", format!("cannot preopen {host_dir:?}: {e:#}")))?;
        }
        if let Some(bytes) = stdin {
            builder.stdin(MemoryInputPipe::new(bytes));
        }
        let stdout_pipe = if capture_stdout {
            let pipe = MemoryOutputPipe::new(STDOUT_CAPACITY);
            builder.stdout(pipe.clone());
            Some(pipe)
        } else {
            None
        };

        let ctl = Arc::new(InvokeCtl::default());
        let mut store = Store::new(&self.inner, builder.build_p1());
        let cb_ctl = Arc::clone(&ctl);
        store.epoch_deadline_callback(move |_| {
            if cb_ctl.interrupt.load(Ordering::SeqCst) {
                return Ok(UpdateDeadline::Interrupt);
            }
            if let Some(deadline) = *cb_ctl.deadline.lock().unwrap() {
                if Instant::now() >= deadline {
                    return Ok(UpdateDeadline::Interrupt);
                }
            }
            Ok(UpdateDeadline::Continue(1))
        });
        store.set_epoch_deadline(1);

        let instance = linker
            .instantiate(&mut store, &module.inner)
            .map_err(classify_instantiate_error)?;
        let memory = instance
            .get_memory(&mut store, "memory")
            .ok_or_else(|| shim_err("ABI", "export `memory` is not a linear memory"))?;
        let run = instance
            .get_typed_func::<(i32, i32, i32), ()>(&mut store, "run")
            .map_err(|e| shim_err("ABI", format!("{e:#}")))?;
        let alloc = instance
            .get_typed_func::<i32, i32>(&mut store, "limes_alloc")
            .map_err(|e| shim_err("ABI", format!("{e:#}")))?;

        Ok(Instance {
            engine: self.inner.clone(),
            ctl,
            stdout: stdout_pipe,
            state: Mutex::new(InstanceState {
                store,
                run,
                alloc,
                memory,
            }),
        })
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        stop_ticker(&self.ticker);
    }
}

fn stop_ticker(slot: &Mutex<Option<Ticker>>) {
    let ticker = slot.lock().ok().and_then(|mut guard| guard.take());
    if let Some(t) = ticker {
        t.stop.store(true, Ordering::Relaxed);
        let _ = t.handle.join();
    }
}

fn classify_instantiate_error(e: wasmtime::Error) -> PyErr {
    let msg = format!("{e:#}");
    if e.downcast_ref::<Trap>().is_some() {
        shim_err("TRAP", msg)
    } else if msg.contains("unknown import") {
        shim_err("LINK", msg)
    } else {
        shim_err("ENGINE", msg)
    }
}

/// A compiled module, bound to the engine that produced it.
#[pyclass(frozen, module = "limes._engine")]
struct ModuleRef {
    inner: Module,
}

#[pymethods]
impl ModuleRef {
    /// Serialize to a native-code artifact loadable via `Engine.deserialize`.
    fn serialize<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        let blob = self
            .inner
            .serialize()
            .map_err(|e| shim_err("ENGINE", format!("{e:#}")))?;
        Ok(PyBytes::new(py, &blob))
    }

    /// Exported names with a type sketch: "memory", "func(i32,i32)->(i32)",
    /// "global", "table", ... — used by the Python layer for ABI validation.
    fn exports(&self) -> Vec<(String, String)> {
        self.inner
            .exports()
            .map(|export| {
                let ty = match export.ty() {
                    ExternType::Func(f) => {
                        let params: Vec<String> =
                            f.params().map(|v| v.to_string()).collect();
                        let results: Vec<String> =
                            f.results().map(|v| v.to_string()).collect();
                        format!("func({})->({})", params.join(","), results.join(","))
                    }
                    ExternType::Memory(_) => "memory".to_string(),
                    ExternType::Global(_) => "global".to_string(),
                    ExternType::Table(_) => "table".to_string(),
                    _ => "other".to_string(),
                };
                (export.name().to_string(), ty)
            })
            .collect()
    }

    /// Imported (module, name) pairs — surfaced in link-error diagnostics.
    fn imports(&self) -> Vec<(String, String)> {
        self.inner
            .imports()
            .map(|i| (i.module().to_string(), i.name().to_string()))
            .collect()
    }
}

struct InstanceState {
    store: Store<WasiP1Ctx>,
    run: TypedFunc<(i32, i32, i32), ()>,
    alloc: TypedFunc<i32, i32>,
    memory: Memory,
}

/// One sandboxed instantiation. The Python layer enforces single-use for
/// invocations; the mutex here only guards against concurrent misuse.
#[pyclass(frozen, module = "limes._engine")]
struct Instance {
    engine: WtEngine,
    ctl: Arc<InvokeCtl>,
    stdout: Option<MemoryOutputPipe>,
    state: Mutex<InstanceState>,
}

#[pymethods]
impl Instance {
    /// Call the guest `run` export once with `input`.
    ///
    /// Returns `(code, payload)`: 0 ok / 1 guest error (payload is the
    /// message) / 2 interrupted / 3 guest trap / 4 engine failure. Raises
    /// only for host-side bugs (e.g. a broken guest allocator).
    #[pyo3(signature = (input, deadline_ms = None))]
    fn invoke<'py>(
        &self,
        py: Python<'py>,
        input: Vec<u8>,
        deadline_ms: Option<f64>,
    ) -> PyResult<(u32, Bound<'py, PyBytes>)> {
        let outcome = py.detach(|| {
            let mut guard = self
                .state
                .lock()
                .map_err(|_| "a previous invocation panicked".to_string())?;
            run_guest(&mut guard, &self.ctl, &input, deadline_ms)
        });
        match outcome {
            Ok((code, payload)) => Ok((code, PyBytes::new(py, &payload))),
            Err(detail) => Err(shim_err("ENGINE", detail)),
        }
    }

    /// Request cooperative termination of the running invocation. Takes
    /// effect at the guest's next epoch check (≤ one tick away).
    fn interrupt(&self) {
        self.ctl.interrupt.store(true, Ordering::SeqCst);
        self.engine.increment_epoch();
    }

    /// Bytes the guest wrote to stdout; empty unless capture_stdout was set.
    fn stdout<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        match &self.stdout {
            Some(pipe) => PyBytes::new(py, &pipe.contents()),
            None => PyBytes::new(py, b""),
        }
    }
}

fn run_guest(
    st: &mut InstanceState,
    ctl: &InvokeCtl,
    input: &[u8],
    deadline_ms: Option<f64>,
) -> Result<(u32, Vec<u8>), String> {
    if let Some(ms) = deadline_ms {
        if !ms.is_finite() || ms < 0.0 {
            return Err(format!("invalid deadline_ms {ms}"));
        }
        *ctl.deadline.lock().unwrap() = Some(Instant::now() + Duration::from_secs_f64(ms / 1000.0));
    }
    let result = call_guest(st, ctl, input);
    *ctl.deadline.lock().unwrap() = None;
    result
}

fn call_guest(
    st: &mut InstanceState,
    ctl: &InvokeCtl,
    input: &[u8],
) -> Result<(u32, Vec<u8>), String> {
    if ctl.interrupt.load(Ordering::SeqCst) {
        return Ok((
            CODE_INTERRUPTED,
            b"interrupted: stop requested before guest entry".to_vec(),
        ));
    }
    if input.len() > i32::MAX as usize {
        return Err("input exceeds the 32-bit guest address space".into());
    }

    let in_ptr = match st.alloc.call(&mut st.store, input.len() as i32) {
        Ok(p) => p,
        Err(e) => return Ok(classify_call_error(ctl, e, "limes_alloc(input)")),
    };
    let ip = in_ptr as u32 as usize;
    let mem_len = st.memory.data_size(&st.store);
    if ip.checked_add(input.len()).map_or(true, |end| end > mem_len) {
        return Err(format!(
            "guest allocator returned out-of-bounds input region {ip}+{}",
            input.len()
        ));
    }
    st.memory.data_mut(&mut st.store)[ip..ip + input.len()].copy_from_slice(input);

    let ret_ptr = match st.alloc.call(&mut st.store, RESULT_RECORD_LEN as i32) {
        Ok(p) => p,
        Err(e) => return Ok(classify_call_error(ctl, e, "limes_alloc(result)")),
    };
    let rp = ret_ptr as u32 as usize;
    let mem_len = st.memory.data_size(&st.store);
    if rp.checked_add(RESULT_RECORD_LEN).map_or(true, |end| end > mem_len) {
        return Err(format!(
            "guest allocator returned out-of-bounds result region {rp}"
        ));
    }
    // Poison the tag so a guest that never fills the record is detected.
    st.memory.data_mut(&mut st.store)[rp..rp + RESULT_RECORD_LEN]
        .copy_from_slice(&[0xff; RESULT_RECORD_LEN]);

    if let Err(e) = st
        .run
        .call(&mut st.store, (in_ptr, input.len() as i32, ret_ptr))
    {
        return Ok(classify_call_error(ctl, e, "run"));
    }

    let data = st.memory.data(&st.store);
    let record = &data[rp..rp + RESULT_RECORD_LEN];
    let tag = u32::from_le_bytes(record[0..4].try_into().unwrap());
    let payload_ptr = u32::from_le_bytes(record[4..8].try_into().unwrap()) as usize;
    let payload_len = u32::from_le_bytes(record[8..12].try_into().unwrap()) as usize;
    let code = match tag {
        0 => CODE_OK,
        1 => CODE_GUEST_ERR,
        other => return Err(format!("guest wrote invalid result tag {other}")),
    };
    if payload_ptr
        .checked_add(payload_len)
        .map_or(true, |end| end > data.len())
    {
        return Err(format!(
            "guest result payload out of bounds {payload_ptr}+{payload_len}"
        ));
    }
    Ok((code, data[payload_ptr..payload_ptr + payload_len].to_vec()))
}

fn classify_call_error(ctl: &InvokeCtl, e: wasmtime::Error, context: &str) -> (u32, Vec<u8>) {
    if let Some(trap) = e.downcast_ref::<Trap>() {
        if *trap == Trap::Interrupt {
            let reason = if ctl.interrupt.load(Ordering::SeqCst) {
                "interrupted: stop requested"
            } else {
                "interrupted: deadline exceeded"
            };
            return (CODE_INTERRUPTED, reason.as_bytes().to_vec());
        }
        return (CODE_TRAP, format!("{trap} (in {context})").into_bytes());
    }
    if let Some(exit) = e.downcast_ref::<wasmtime_wasi::I32Exit>() {
        return (
            CODE_TRAP,
            format!("guest called proc_exit({}) (in {context})", exit.0).into_bytes(),
        );
    }
    (CODE_ENGINE, format!("{e:#} (in {context})").into_bytes())
}

#[pymodule]
fn _engine(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("WASMTIME_VERSION", WASMTIME_VERSION)?;
    m.add("HOST_TARGET", HOST_TARGET)?;
    m.add_class::<Engine>()?;
    m.add_class::<ModuleRef>()?;
    m.add_class::<Instance>()?;
    Ok(())
}

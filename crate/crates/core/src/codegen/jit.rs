//! Toolchain invocation, a per-process compile cache and kernel calls.

use std::collections::HashMap;
use std::ffi::c_void;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use libloading::Library;
use sha2::{Digest, Sha256};

use super::{CodegenConfig, CodegenError, CC_ENV, DUMP_ENV};
use crate::grid::{ElementType, FunctionMeta, GridFunction};

/// One argument of a compiled kernel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelArg {
    pub name: String,
    pub dtype: ElementType,
    pub shape: Vec<usize>,
}

impl From<&FunctionMeta> for KernelArg {
    fn from(m: &FunctionMeta) -> Self {
        KernelArg {
            name: m.name.clone(),
            dtype: m.dtype,
            shape: m.buffer_shape(),
        }
    }
}

/// A loaded shared library and its resolved entry point.
#[derive(Clone)]
pub struct CompiledKernel {
    lib: Arc<Library>,
    pub entry: String,
    pub signature: Vec<KernelArg>,
    pub hash: String,
    pub library_path: PathBuf,
    alignment: usize,
}

impl std::fmt::Debug for CompiledKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompiledKernel")
            .field("entry", &self.entry)
            .field("signature", &self.signature)
            .field("hash", &self.hash)
            .finish()
    }
}

type ArgvFn = unsafe extern "C" fn(*mut *mut c_void) -> i32;
type ThreadsFn = unsafe extern "C" fn(i32);

impl CompiledKernel {
    pub fn with_signature(mut self, params: &[FunctionMeta]) -> Self {
        self.signature = params.iter().map(KernelArg::from).collect();
        self
    }

    /// Requests `n` OpenMP threads for subsequent calls from this thread.
    pub fn set_threads(&self, n: usize) -> Result<(), CodegenError> {
        let name = format!("{}_set_threads", self.entry);
        // SAFETY: the symbol is emitted with this exact C signature.
        unsafe {
            let f = self
                .lib
                .get::<ThreadsFn>(name.as_bytes())
                .map_err(|_| CodegenError::SymbolNotFound(name.clone()))?;
            f(n.min(i32::MAX as usize) as i32);
        }
        Ok(())
    }

    /// Calls the kernel with `functions` in signature order and returns the
    /// entry status.
    pub fn call(&self, functions: &mut [&mut GridFunction]) -> Result<i32, CodegenError> {
        if functions.len() != self.signature.len() {
            return Err(CodegenError::SignatureMismatch(format!(
                "expected {} buffers, got {}",
                self.signature.len(),
                functions.len()
            )));
        }
        let mut ptrs: Vec<*mut c_void> = Vec::with_capacity(functions.len());
        for (arg, f) in self.signature.iter().zip(functions.iter_mut()) {
            if f.name() != arg.name || f.dtype() != arg.dtype || f.shape() != arg.shape {
                return Err(CodegenError::SignatureMismatch(format!(
                    "`{}` {} {:?} passed for `{}` {} {:?}",
                    f.name(),
                    f.dtype().name(),
                    f.shape(),
                    arg.name,
                    arg.dtype.name(),
                    arg.shape
                )));
            }
            if f.data().base_address() % self.alignment != 0 {
                return Err(CodegenError::SignatureMismatch(format!(
                    "`{}` is not aligned to {} bytes",
                    f.name(),
                    self.alignment
                )));
            }
            ptrs.push(f.data_mut().as_mut_ptr() as *mut c_void);
        }
        let name = format!("{}_argv", self.entry);
        // SAFETY: every pointer refers to a live buffer whose element type and
        // extent match the shape baked into the kernel, checked above; the
        // exclusive borrows keep the buffers unaliased for the call.
        let status = unsafe {
            let f = self
                .lib
                .get::<ArgvFn>(name.as_bytes())
                .map_err(|_| CodegenError::SymbolNotFound(name.clone()))?;
            f(ptrs.as_mut_ptr())
        };
        Ok(status)
    }
}

struct Cache {
    libs: HashMap<String, (Arc<Library>, PathBuf)>,
    per_hash: HashMap<String, usize>,
}

fn cache() -> &'static Mutex<Cache> {
    static CACHE: OnceLock<Mutex<Cache>> = OnceLock::new();
    CACHE.get_or_init(|| {
        Mutex::new(Cache {
            libs: HashMap::new(),
            per_hash: HashMap::new(),
        })
    })
}

static INVOCATIONS: AtomicUsize = AtomicUsize::new(0);

/// Number of toolchain invocations made by this process.
pub fn toolchain_invocations() -> usize {
    INVOCATIONS.load(Ordering::SeqCst)
}

/// Number of times the source with the given hash was compiled.
pub fn compile_count(hash: &str) -> usize {
    let c = cache().lock().unwrap_or_else(|e| e.into_inner());
    c.per_hash.get(hash).copied().unwrap_or(0)
}

pub fn workspace_dir() -> PathBuf {
    std::env::temp_dir().join(format!("stencilforge-{}", std::process::id()))
}

/// Deletes the temp workspace. Already loaded kernels stay usable.
pub fn clean_workspace() -> Result<(), CodegenError> {
    let dir = workspace_dir();
    if dir.exists() {
        std::fs::remove_dir_all(dir)?;
    }
    Ok(())
}

fn find_in_path(name: &str) -> Option<PathBuf> {
    let p = Path::new(name);
    if p.components().count() > 1 {
        return p.is_file().then(|| p.to_path_buf());
    }
    std::env::var_os("PATH").and_then(|paths| {
        std::env::split_paths(&paths)
            .map(|d| d.join(name))
            .find(|c| c.is_file())
    })
}

/// Compiler executable: explicit path, then `STENCILFORGE_CC`, then the preset.
pub fn resolve_toolchain(cfg: &CodegenConfig) -> Result<PathBuf, CodegenError> {
    let wanted = match (&cfg.compiler, std::env::var(CC_ENV)) {
        (Some(p), _) => p.to_string_lossy().into_owned(),
        (None, Ok(v)) if !v.is_empty() => v,
        _ => cfg.toolchain.executable().to_string(),
    };
    find_in_path(&wanted).ok_or(CodegenError::ToolchainNotFound(wanted))
}

fn dump(src: &str, cfg: &CodegenConfig) -> Result<(), CodegenError> {
    let env = std::env::var_os(DUMP_ENV).map(PathBuf::from);
    for path in cfg.dump_path.iter().chain(env.iter()) {
        std::fs::write(path, src)?;
    }
    Ok(())
}

/// Compiles `src` into a shared library, loads it and resolves the entry.
/// Identical source, compiler and flags are compiled once per process.
pub fn jit_compile(src: &str, cfg: &CodegenConfig) -> Result<CompiledKernel, CodegenError> {
    dump(src, cfg)?;
    let cc = resolve_toolchain(cfg)?;
    let flags = cfg.all_flags();
    let mut hasher = Sha256::new();
    hasher.update(src.as_bytes());
    hasher.update(cc.to_string_lossy().as_bytes());
    for f in &flags {
        hasher.update([0u8]);
        hasher.update(f.as_bytes());
    }
    let hash = hex::encode(&hasher.finalize()[..16]);

    let mut c = cache().lock().unwrap_or_else(|e| e.into_inner());
    let (lib, path) = match c.libs.get(&hash) {
        Some((lib, path)) => (lib.clone(), path.clone()),
        None => {
            let dir = workspace_dir();
            std::fs::create_dir_all(&dir)?;
            let src_path = dir.join(format!("{hash}.c"));
            let lib_path = dir.join(format!("{hash}.so"));
            std::fs::write(&src_path, src)?;
            INVOCATIONS.fetch_add(1, Ordering::SeqCst);
            *c.per_hash.entry(hash.clone()).or_insert(0) += 1;
            let out = Command::new(&cc)
                .args(&flags)
                .arg(&src_path)
                .arg("-o")
                .arg(&lib_path)
                .arg("-lm")
                .output()
                .map_err(|e| CodegenError::ToolchainNotFound(format!("{}: {e}", cc.display())))?;
            if !out.status.success() {
                let mut diagnostics = String::from_utf8_lossy(&out.stderr).into_owned();
                diagnostics.push_str(&String::from_utf8_lossy(&out.stdout));
                return Err(CodegenError::CompileFailed { diagnostics });
            }
            // SAFETY: the library was just built from emitted source, whose
            // initializers only define functions and constant tables.
            let lib = unsafe { Library::new(&lib_path) }
                .map_err(|e| CodegenError::CompileFailed { diagnostics: e.to_string() })?;
            let lib = Arc::new(lib);
            c.libs.insert(hash.clone(), (lib.clone(), lib_path.clone()));
            (lib, lib_path)
        }
    };
    drop(c);
    for sym in [cfg.entry.clone(), format!("{}_argv", cfg.entry)] {
        // SAFETY: only the symbol's presence is checked here.
        let found = unsafe { lib.get::<*const c_void>(sym.as_bytes()).is_ok() };
        if !found {
            return Err(CodegenError::SymbolNotFound(sym));
        }
    }
    Ok(CompiledKernel {
        lib,
        entry: cfg.entry.clone(),
        signature: Vec::new(),
        hash,
        library_path: path,
        alignment: cfg.alignment,
    })
}

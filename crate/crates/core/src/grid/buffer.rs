use std::alloc::{self, Layout};
use std::ptr::NonNull;

/// Element type of a data buffer and of the generated kernel arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ElementType {
    F32,
    F64,
}

impl ElementType {
    pub fn size(self) -> usize {
        match self {
            ElementType::F32 => 4,
            ElementType::F64 => 8,
        }
    }

    /// Spelling of the type in the emitted C source.
    pub fn c_name(self) -> &'static str {
        match self {
            ElementType::F32 => "float",
            ElementType::F64 => "double",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementType::F32 => "f32",
            ElementType::F64 => "f64",
        }
    }
}

impl std::str::FromStr for ElementType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "f32" | "float" => Ok(ElementType::F32),
            "f64" | "double" => Ok(ElementType::F64),
            other => Err(format!("unknown element type `{other}`")),
        }
    }
}

/// Zero-initialized heap array whose base address is aligned to `align` bytes.
pub struct AlignedVec<T: Copy> {
    ptr: NonNull<T>,
    len: usize,
    align: usize,
}

// The buffer uniquely owns its allocation.
unsafe impl<T: Copy + Send> Send for AlignedVec<T> {}
unsafe impl<T: Copy + Sync> Sync for AlignedVec<T> {}

impl<T: Copy> AlignedVec<T> {
    /// `align` must be a power of two no smaller than `align_of::<T>()`.
    pub fn zeroed(len: usize, align: usize) -> Self {
        assert!(align.is_power_of_two() && align >= std::mem::align_of::<T>());
        if len == 0 {
            return AlignedVec {
                ptr: NonNull::dangling(),
                len,
                align,
            };
        }
        let layout = Self::layout(len, align);
        // SAFETY: layout has non-zero size; all-zero bits are valid f32/f64 zeros.
        let raw = unsafe { alloc::alloc_zeroed(layout) } as *mut T;
        let ptr = NonNull::new(raw).unwrap_or_else(|| alloc::handle_alloc_error(layout));
        AlignedVec { ptr, len, align }
    }

    fn layout(len: usize, align: usize) -> Layout {
        Layout::from_size_align(len * std::mem::size_of::<T>(), align).expect("buffer too large")
    }

    pub fn alignment(&self) -> usize {
        self.align
    }

    pub fn as_slice(&self) -> &[T] {
        // SAFETY: ptr is valid for len initialized elements (or dangling with len 0).
        unsafe { std::slice::from_raw_parts(self.ptr.as_ptr(), self.len) }
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        // SAFETY: as above, and &mut self guarantees exclusivity.
        unsafe { std::slice::from_raw_parts_mut(self.ptr.as_ptr(), self.len) }
    }

    pub fn as_mut_ptr(&mut self) -> *mut T {
        self.ptr.as_ptr()
    }
}

impl<T: Copy> Clone for AlignedVec<T> {
    fn clone(&self) -> Self {
        let mut out = AlignedVec::zeroed(self.len, self.align);
        out.as_mut_slice().copy_from_slice(self.as_slice());
        out
    }
}

impl<T: Copy> Drop for AlignedVec<T> {
    fn drop(&mut self) {
        if self.len > 0 {
            // SAFETY: allocated in `zeroed` with the same layout.
            unsafe { alloc::dealloc(self.ptr.as_ptr() as *mut u8, Self::layout(self.len, self.align)) }
        }
    }
}

impl<T: Copy + std::fmt::Debug> std::fmt::Debug for AlignedVec<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AlignedVec")
            .field("len", &self.len)
            .field("align", &self.align)
            .finish()
    }
}

/// Type-erased storage for either element type.
#[derive(Debug, Clone)]
pub enum Buffer {
    F32(AlignedVec<f32>),
    F64(AlignedVec<f64>),
}

impl Buffer {
    pub fn zeroed(dtype: ElementType, len: usize, align: usize) -> Self {
        match dtype {
            ElementType::F32 => Buffer::F32(AlignedVec::zeroed(len, align)),
            ElementType::F64 => Buffer::F64(AlignedVec::zeroed(len, align)),
        }
    }

    pub fn dtype(&self) -> ElementType {
        match self {
            Buffer::F32(_) => ElementType::F32,
            Buffer::F64(_) => ElementType::F64,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Buffer::F32(v) => v.as_slice().len(),
            Buffer::F64(v) => v.as_slice().len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        match self {
            Buffer::F32(v) => v.as_slice()[i] as f64,
            Buffer::F64(v) => v.as_slice()[i],
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: f64) {
        match self {
            Buffer::F32(v) => v.as_mut_slice()[i] = value as f32,
            Buffer::F64(v) => v.as_mut_slice()[i] = value,
        }
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        match self {
            Buffer::F32(v) => v.as_slice().iter().map(|&x| x as f64).collect(),
            Buffer::F64(v) => v.as_slice().to_vec(),
        }
    }

    pub fn base_address(&self) -> usize {
        match self {
            Buffer::F32(v) => v.as_slice().as_ptr() as usize,
            Buffer::F64(v) => v.as_slice().as_ptr() as usize,
        }
    }

    pub fn as_mut_ptr(&mut self) -> *mut u8 {
        match self {
            Buffer::F32(v) => v.as_mut_ptr() as *mut u8,
            Buffer::F64(v) => v.as_mut_ptr() as *mut u8,
        }
    }

    /// Raw little-endian bytes of the contents.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        match self {
            Buffer::F32(v) => v.as_slice().iter().flat_map(|x| x.to_le_bytes()).collect(),
            Buffer::F64(v) => v.as_slice().iter().flat_map(|x| x.to_le_bytes()).collect(),
        }
    }

    /// Bitwise equality, so NaNs and signed zeros compare by representation.
    pub fn bits_eq(&self, other: &Buffer) -> bool {
        match (self, other) {
            (Buffer::F32(a), Buffer::F32(b)) => a
                .as_slice()
                .iter()
                .zip(b.as_slice())
                .all(|(x, y)| x.to_bits() == y.to_bits()) && a.as_slice().len() == b.as_slice().len(),
            (Buffer::F64(a), Buffer::F64(b)) => a
                .as_slice()
                .iter()
                .zip(b.as_slice())
                .all(|(x, y)| x.to_bits() == y.to_bits()) && a.as_slice().len() == b.as_slice().len(),
            _ => false,
        }
    }
}

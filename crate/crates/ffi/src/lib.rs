//! C ABI over `microstates`.
//!
//! Objects are opaque handles created by `ms_*_new`/`ms_*_parse` functions and
//! released with the matching `ms_*_free`. Every fallible call returns an
//! [`MsStatus`]; on failure the message is kept per thread and can be copied
//! out with [`ms_last_error_message`]. Output buffers are caller-allocated:
//! calls that fill one take its capacity and report the length needed, and
//! return [`MsStatus::BufferTooSmall`] without writing when it does not fit.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use microstates::cohomology::{coset_distance, near_cocycle_defect, solve_cocycles, Cochain1, Cohomology, RelationLoopSet, SearchMode};
use microstates::model::{product_marginal, Alphabet, LetterDistribution, Microstate, NeighbourhoodSpec, Window};
use microstates::popa::{sample_popa_model, PopaModelSpec};
use microstates::presentation::{builtin_presentation, BuiltinFamily, GroupPresentation};
use microstates::rng::Stream;
use microstates::sofic::{builtin_quotient, QuotientSpec, SchreierGraph, SoficApproximation};
use microstates::walk::{connect, VertexModelSpace, WalkConfig};
use microstates::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    SizeLimit = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsFamily {
    FreeGroup = 0,
    IntegerLattice = 1,
    Cyclic = 2,
    SurfaceGenus = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsQuotient {
    CyclicShift = 0,
    TorusShift = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsRelations {
    /// The presentation's relations plus every `s s⁻¹`.
    Presentation = 0,
    /// Only `s s⁻¹`.
    Trivial = 1,
}

/// Outcome of a Bernoulli-walk connection attempt.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MsConnectResult {
    pub success: bool,
    pub attempts: u32,
    pub max_step_distance: f64,
    pub worst_tv: f64,
}

pub struct MsPresentation {
    inner: GroupPresentation,
}

pub struct MsGraph {
    inner: SchreierGraph,
}

pub struct MsCohomology {
    inner: Cohomology,
    graph: SchreierGraph,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> MsStatus {
    match e {
        Error::Parse(_) | Error::UnknownSymbol(_) | Error::NotAPermutation { .. } | Error::InverseMismatch(_) => MsStatus::Parse,
        Error::SizeLimit(_) | Error::Overflow => MsStatus::SizeLimit,
        Error::Io { .. } => MsStatus::Io,
        _ => MsStatus::InvalidArgument,
    }
}

struct Fail(MsStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type Body<'a> = Box<dyn FnOnce() -> Result<(), Fail> + 'a>;

/// Runs `body`, recording any error or panic.
fn guard(body: Body<'_>) -> MsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error(String::new());
            MsStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MsStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(MsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail(MsStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail(MsStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(MsStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(MsStatus::Parse, format!("{what} is not UTF-8")))
}

/// Copies `values` into `(buf, cap)` and stores the full length in `len_out`.
unsafe fn fill<T: Copy>(values: &[T], buf: *mut T, cap: usize, len_out: *mut usize) -> Result<(), Fail> {
    *out_ptr(len_out, "length output")? = values.len();
    if values.len() > cap {
        return Err(Fail(MsStatus::BufferTooSmall, format!("need {} elements, buffer holds {cap}", values.len())));
    }
    if !values.is_empty() {
        if buf.is_null() {
            return Err(Fail(MsStatus::NullPointer, "output buffer is null".into()));
        }
        std::ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
    }
    Ok(())
}

fn relation_set(p: &GroupPresentation, which: MsRelations) -> RelationLoopSet {
    match which {
        MsRelations::Presentation => RelationLoopSet::for_presentation(p),
        MsRelations::Trivial => RelationLoopSet::trivial(p),
    }
}

/// Copies the calling thread's last error message, NUL-terminated and
/// truncated to `cap` bytes. Returns the untruncated length without the NUL.
#[no_mangle]
pub unsafe extern "C" fn ms_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builtin presentation. `param` is the rank for free groups and lattices,
/// the order for cyclic groups and the genus for surface groups.
#[no_mangle]
pub unsafe extern "C" fn ms_presentation_builtin(family: MsFamily, param: u32, out: *mut *mut MsPresentation) -> MsStatus {
    guard(Box::new(move || {
        let out = out_ptr(out, "out")?;
        let small = u16::try_from(param).map_err(|_| Fail(MsStatus::InvalidArgument, format!("parameter {param} too large")))?;
        let f = match family {
            MsFamily::FreeGroup => BuiltinFamily::FreeGroup { k: small },
            MsFamily::IntegerLattice => BuiltinFamily::IntegerLattice { d: small },
            MsFamily::Cyclic => BuiltinFamily::Cyclic { n: param },
            MsFamily::SurfaceGenus => BuiltinFamily::SurfaceGenus { g: small },
        };
        *out = Box::into_raw(Box::new(MsPresentation { inner: builtin_presentation(f)? }));
        Ok(())
    }))
}

/// Parses the presentation text format (`generators k`, then one relation per line).
#[no_mangle]
pub unsafe extern "C" fn ms_presentation_parse(source: *const c_char, out: *mut *mut MsPresentation) -> MsStatus {
    guard(Box::new(move || {
        let out = out_ptr(out, "out")?;
        let p = GroupPresentation::parse(text(source, "source")?)?;
        *out = Box::into_raw(Box::new(MsPresentation { inner: p }));
        Ok(())
    }))
}

#[no_mangle]
pub unsafe extern "C" fn ms_presentation_free(p: *mut MsPresentation) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ms_presentation_generator_count(p: *const MsPresentation) -> usize {
    p.as_ref().map_or(0, |p| p.inner.generator_count())
}

/// Builtin finite model acting with `generator_count` generators.
#[no_mangle]
pub unsafe extern "C" fn ms_graph_builtin(kind: MsQuotient, n: usize, generator_count: usize, out: *mut *mut MsGraph) -> MsStatus {
    guard(Box::new(move || {
        let out = out_ptr(out, "out")?;
        let spec = match kind {
            MsQuotient::CyclicShift => QuotientSpec::CyclicShift { n },
            MsQuotient::TorusShift => QuotientSpec::TorusShift { n },
        };
        *out = Box::into_raw(Box::new(MsGraph { inner: SchreierGraph::new(builtin_quotient(&spec, generator_count)?) }));
        Ok(())
    }))
}

/// Parses the permutation-representation text format.
#[no_mangle]
pub unsafe extern "C" fn ms_graph_parse(source: *const c_char, generator_count: usize, out: *mut *mut MsGraph) -> MsStatus {
    guard(Box::new(move || {
        let out = out_ptr(out, "out")?;
        let sigma = SoficApproximation::parse(text(source, "source")?, generator_count)?;
        *out = Box::into_raw(Box::new(MsGraph { inner: SchreierGraph::new(sigma) }));
        Ok(())
    }))
}

#[no_mangle]
pub unsafe extern "C" fn ms_graph_free(g: *mut MsGraph) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ms_graph_vertex_count(g: *const MsGraph) -> usize {
    g.as_ref().map_or(0, |g| g.inner.vertex_count())
}

/// `|S|·|V|`, the length of every cochain on this graph.
#[no_mangle]
pub unsafe extern "C" fn ms_graph_edge_count(g: *const MsGraph) -> usize {
    g.as_ref().map_or(0, |g| g.inner.edge_count())
}

/// Solves for `Z¹`, `B¹` and `H¹` over `Z/modulus`.
#[no_mangle]
pub unsafe extern "C" fn ms_cohomology_solve(
    graph: *const MsGraph,
    presentation: *const MsPresentation,
    relations: MsRelations,
    modulus: u32,
    out: *mut *mut MsCohomology,
) -> MsStatus {
    guard(Box::new(move || {
        let g = &deref(graph, "graph")?.inner;
        let p = &deref(presentation, "presentation")?.inner;
        let out = out_ptr(out, "out")?;
        let h = solve_cocycles(g, &relation_set(p, relations), modulus)?;
        *out = Box::into_raw(Box::new(MsCohomology { inner: h, graph: g.clone() }));
        Ok(())
    }))
}

#[no_mangle]
pub unsafe extern "C" fn ms_cohomology_free(h: *mut MsCohomology) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ms_cohomology_h1_size(h: *const MsCohomology, size_out: *mut u64) -> MsStatus {
    guard(Box::new(move || {
        *out_ptr(size_out, "size_out")? = deref(h, "cohomology")?.inner.h1_size();
        Ok(())
    }))
}

/// Invariant factors of `H¹`, ascending; empty when `H¹` is trivial.
#[no_mangle]
pub unsafe extern "C" fn ms_cohomology_invariant_factors(
    h: *const MsCohomology,
    buf: *mut u64,
    cap: usize,
    len_out: *mut usize,
) -> MsStatus {
    guard(Box::new(move || fill(&deref(h, "cohomology")?.inner.invariant_factors(), buf, cap, len_out)))
}

/// Writes the `H¹` class coordinates of a cocycle. Fails with
/// `InvalidArgument` when `values` is not a cocycle.
#[no_mangle]
pub unsafe extern "C" fn ms_cohomology_class_of(
    h: *const MsCohomology,
    values: *const u32,
    len: usize,
    buf: *mut u64,
    cap: usize,
    len_out: *mut usize,
) -> MsStatus {
    guard(Box::new(move || {
        let h = deref(h, "cohomology")?;
        let alpha = Cochain1::from_values(&h.graph, h.inner.modulus(), slice(values, len, "values")?.to_vec())?;
        let class = h.inner.class_of(&alpha).ok_or_else(|| Fail(MsStatus::InvalidArgument, "cochain is not a cocycle".into()))?;
        fill(&class, buf, cap, len_out)
    }))
}

/// Draws `class_rep + dθ` with `θ` uniform, where `class_rep` represents the
/// class at position `class_index` (zero first). Writes `edge_count` values.
#[no_mangle]
pub unsafe extern "C" fn ms_popa_sample(
    h: *const MsCohomology,
    presentation: *const MsPresentation,
    relations: MsRelations,
    class_index: usize,
    seed: u64,
    trial: u64,
    buf: *mut u32,
    cap: usize,
    len_out: *mut usize,
) -> MsStatus {
    guard(Box::new(move || {
        let h = deref(h, "cohomology")?;
        let p = &deref(presentation, "presentation")?.inner;
        let classes = h.inner.all_classes();
        let class = classes.get(class_index).ok_or_else(|| {
            Fail(MsStatus::InvalidArgument, format!("class index {class_index} out of range ({} classes)", classes.len()))
        })?;
        let spec = PopaModelSpec::new(h.graph.clone(), h.inner.modulus(), h.inner.class_cochain(class)?, relation_set(p, relations))?;
        let sample = sample_popa_model(&spec, &Stream::new(seed, "popa", &[trial]))?;
        fill(sample.values(), buf, cap, len_out)
    }))
}

/// `max_w (1/|V|) Σ_v |loop sum|` for an edge labelling mod `modulus`.
#[no_mangle]
pub unsafe extern "C" fn ms_near_cocycle_defect(
    graph: *const MsGraph,
    presentation: *const MsPresentation,
    relations: MsRelations,
    modulus: u32,
    values: *const u32,
    len: usize,
    defect_out: *mut f64,
) -> MsStatus {
    guard(Box::new(move || {
        let g = &deref(graph, "graph")?.inner;
        let p = &deref(presentation, "presentation")?.inner;
        let alpha = Cochain1::from_values(g, modulus, slice(values, len, "values")?.to_vec())?;
        *out_ptr(defect_out, "defect_out")? = near_cocycle_defect(g, &alpha, &relation_set(p, relations))?;
        Ok(())
    }))
}

/// Distance from an edge labelling to the coboundaries. With `exact` false
/// the value is an upper bound from coordinate descent.
#[no_mangle]
pub unsafe extern "C" fn ms_coset_distance(
    graph: *const MsGraph,
    modulus: u32,
    values: *const u32,
    len: usize,
    exact: bool,
    seed: u64,
    distance_out: *mut f64,
) -> MsStatus {
    guard(Box::new(move || {
        let g = &deref(graph, "graph")?.inner;
        let alpha = Cochain1::from_values(g, modulus, slice(values, len, "values")?.to_vec())?;
        let mode = if exact { SearchMode::Exact } else { SearchMode::Heuristic };
        *out_ptr(distance_out, "distance_out")? = coset_distance(g, &alpha, mode, &Stream::new(seed, "coset-distance", &[]))?.distance;
        Ok(())
    }))
}

/// Connects two microstates over `{0..alphabet_size-1}` by the Bernoulli
/// walk with uniform letters, default `κ` and `s` for `delta`, inside the
/// TV ball of radius `epsilon` on the word ball of `window_radius`.
#[no_mangle]
pub unsafe extern "C" fn ms_connect_bernoulli(
    graph: *const MsGraph,
    presentation: *const MsPresentation,
    alphabet_size: u32,
    delta: f64,
    epsilon: f64,
    window_radius: usize,
    seed: u64,
    x: *const u32,
    y: *const u32,
    len: usize,
    result_out: *mut MsConnectResult,
) -> MsStatus {
    guard(Box::new(move || {
        let g = &deref(graph, "graph")?.inner;
        let p = &deref(presentation, "presentation")?.inner;
        let out = out_ptr(result_out, "result_out")?;
        let alphabet = Alphabet::Finite { size: alphabet_size };
        let x = Microstate::new(alphabet, slice(x, len, "x")?.to_vec())?;
        let y = Microstate::new(alphabet, slice(y, len, "y")?.to_vec())?;
        let nu = LetterDistribution::uniform(alphabet_size);
        let window = Window::ball(p, window_radius);
        let spec = NeighbourhoodSpec::marginal_tv(product_marginal(&nu, &window, alphabet)?, epsilon)?;
        let space = VertexModelSpace::new(g.approximation(), &spec)?;
        let cfg = WalkConfig::with_defaults(delta, seed)?;
        let r = connect(&x, &y, &cfg, &space, &nu, &Stream::new(seed, "connect", &[0]))?;
        *out = MsConnectResult {
            success: r.success,
            attempts: r.attempts as u32,
            max_step_distance: r.path.max_step(),
            worst_tv: r.path.worst_score(),
        };
        Ok(())
    }))
}

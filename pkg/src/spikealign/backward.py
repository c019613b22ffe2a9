"""Backward-function families and the functional-correlation metric.

The error transported to a layer is modulated elementwise by a scalar
function g applied to that layer's input drive.  Four families are
supported:

* ``LifSurrogate`` - the smooth surrogate derivative of the LIF firing
  nonlinearity (the classic backward function for BP/FA/DFA),
* ``Prfs`` - positive random Fourier series: a normalized random
  sine/cosine sum shifted into the positive range,
* ``Gaussian`` - a bell curve,
* ``Opto`` - cos^2, a phase/frequency-parameterized nonlinearity that is
  easy to realize optically.

``correlation`` measures functional similarity between two such functions
as a centered, normalized cross-correlation over a fixed interval
(trapezoidal quadrature).
"""

from dataclasses import dataclass, field

import numpy as np

from .lif import LifParams


class UndefinedCorrelationError(ValueError):
    """Raised when a correlation is requested against a zero-variance function."""


@dataclass(frozen=True)
class LifSurrogate:
    """Surrogate derivative of the LIF firing function.

    Zero at or below threshold; above threshold it is the derivative of the
    steady-state firing rate 1 / (t_ref + tau*ln(a/(a - h_th))) with respect
    to the drive a, which decays from an integrable singularity just above
    h_th.
    """

    params: LifParams = field(default_factory=LifParams)

    family = "surrogate"

    def values(self, a):
        a = np.asarray(a, dtype=np.float64)
        h_th, t_ref, tau = self.params.h_th, self.params.t_ref, self.params.tau
        out = np.zeros_like(a)
        above = a > h_th
        if np.any(above):
            aa = a[above]
            with np.errstate(over="ignore"):
                denom = aa * (aa - h_th) * (t_ref + tau * np.log(aa / (aa - h_th))) ** 2
                out[above] = h_th * t_ref * tau / denom
        return out

    def params_text(self):
        p = self.params
        return f"h_th={p.h_th!r},t_ref={p.t_ref!r},tau={p.tau!r}"


@dataclass(frozen=True)
class Prfs:
    """Positive random Fourier series g(a) = m + sum_k [p_k sin(w k pi a) + q_k cos(w k pi a)].

    Coefficients obey sum(|p|) + sum(|q|) = 1, which bounds the oscillating
    part by 1 in magnitude, so m >= 1 guarantees g >= 0 everywhere.  omega
    rescales the fundamental frequency (period 2/omega on the a-axis).
    """

    k: int
    omega: float
    p: tuple
    q: tuple
    m: float = 1.0

    family = "prfs"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not (self.omega > 0):
            raise ValueError(f"omega must be > 0, got {self.omega}")
        if self.m < 0:
            raise ValueError(f"m must be >= 0, got {self.m}")
        object.__setattr__(self, "p", tuple(float(x) for x in self.p))
        object.__setattr__(self, "q", tuple(float(x) for x in self.q))
        if len(self.p) != self.k or len(self.q) != self.k:
            raise ValueError(
                f"need k={self.k} coefficients, got {len(self.p)} p / {len(self.q)} q"
            )
        total = sum(abs(x) for x in self.p) + sum(abs(x) for x in self.q)
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"coefficients must satisfy sum(|p|+|q|)=1, got {total}")

    @classmethod
    def from_coefficients(cls, p, q, omega, m=1.0):
        """Build a Prfs from raw coefficients, normalizing sum(|p|+|q|) to 1."""
        p = np.asarray(p, dtype=np.float64)
        q = np.asarray(q, dtype=np.float64)
        total = np.abs(p).sum() + np.abs(q).sum()
        if total <= 1e-300:
            raise ValueError("cannot normalize all-zero coefficients")
        return cls(k=len(p), omega=float(omega), p=tuple(p / total), q=tuple(q / total), m=float(m))

    def values(self, a):
        a = np.asarray(a, dtype=np.float64)
        phase = (self.omega * np.pi) * a[..., None] * np.arange(1, self.k + 1)
        series = np.sin(phase) @ np.asarray(self.p) + np.cos(phase) @ np.asarray(self.q)
        return self.m + series

    def params_text(self):
        ptxt = ";".join(repr(x) for x in self.p)
        qtxt = ";".join(repr(x) for x in self.q)
        return f"k={self.k},omega={self.omega!r},m={self.m!r},p={ptxt},q={qtxt}"


@dataclass(frozen=True)
class Gaussian:
    """Bell curve a * exp(-(x-b)^2 / (2 c^2)): height a, center b, RMS width c."""

    a: float = 1.0
    b: float = 0.4
    c: float = 10.0

    family = "gaussian"

    def __post_init__(self):
        if not (self.a > 0):
            raise ValueError(f"height a must be > 0, got {self.a}")
        if not (self.c > 0):
            raise ValueError(f"width c must be > 0, got {self.c}")

    def values(self, x):
        x = np.asarray(x, dtype=np.float64)
        return self.a * np.exp(-((x - self.b) ** 2) / (2.0 * self.c**2))

    def params_text(self):
        return f"a={self.a!r},b={self.b!r},c={self.c!r}"


@dataclass(frozen=True)
class Opto:
    """cos^2(omega*x + theta): bounded in [0,1] by construction."""

    omega: float = 0.1
    theta: float = 150.0

    family = "opto"

    def values(self, x):
        x = np.asarray(x, dtype=np.float64)
        return np.cos(self.omega * x + self.theta) ** 2

    def params_text(self):
        return f"omega={self.omega!r},theta={self.theta!r}"


BackwardFn = LifSurrogate | Prfs | Gaussian | Opto

_FAMILIES = {"surrogate": LifSurrogate, "prfs": Prfs, "gaussian": Gaussian, "opto": Opto}


def evaluate(spec: BackwardFn, a):
    """Pointwise value of a backward function; scalar in, scalar out."""
    arr = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("backward function input must be finite")
    out = spec.values(arr)
    return float(out) if np.isscalar(a) or arr.ndim == 0 else out


def sample_prfs(seed: int, k: int = 4, omega: float = 0.01, m: float = 1.0) -> Prfs:
    """Draw one PRFS: p,q ~ U[-1,1]^k, normalized to sum(|p|+|q|) = 1."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not (omega > 0):
        raise ValueError(f"omega must be > 0, got {omega}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    p = rng.uniform(-1.0, 1.0, k)
    q = rng.uniform(-1.0, 1.0, k)
    return Prfs.from_coefficients(p, q, omega=omega, m=m)


def format_backward_fn(spec: BackwardFn) -> str:
    """Serialize a spec to compact text: ``family:key=value,...``."""
    params = spec.params_text()
    return spec.family if not params else f"{spec.family}:{params}"


def parse_backward_fn(text: str) -> BackwardFn:
    """Inverse of `format_backward_fn`.  Raises ValueError on malformed input."""
    text = text.strip()
    family, _, body = text.partition(":")
    family = family.strip().lower()
    if family not in _FAMILIES:
        raise ValueError(f"unknown backward-function family {family!r}")
    kv = {}
    if body:
        for item in body.split(","):
            key, sep, val = item.partition("=")
            if not sep:
                raise ValueError(f"malformed parameter {item!r} in {text!r}")
            kv[key.strip()] = val.strip()
    if family == "surrogate":
        lif_kwargs = {k: float(v) for k, v in kv.items()}
        unknown = set(lif_kwargs) - {"h_th", "t_ref", "tau", "dt"}
        if unknown:
            raise ValueError(f"unknown surrogate parameters {sorted(unknown)}")
        return LifSurrogate(LifParams(**lif_kwargs))
    if family == "prfs":
        try:
            if "seed" in kv:
                return sample_prfs(
                    seed=int(kv["seed"]),
                    k=int(kv.get("k", 4)),
                    omega=float(kv.get("omega", 0.01)),
                    m=float(kv.get("m", 1.0)),
                )
            p = [float(x) for x in kv["p"].split(";")]
            q = [float(x) for x in kv["q"].split(";")]
            return Prfs(
                k=int(kv.get("k", len(p))),
                omega=float(kv["omega"]),
                p=tuple(p),
                q=tuple(q),
                m=float(kv.get("m", 1.0)),
            )
        except KeyError as exc:
            raise ValueError(f"prfs spec missing parameter {exc}") from exc
    if family == "gaussian":
        return Gaussian(
            a=float(kv.get("a", 1.0)), b=float(kv.get("b", 0.4)), c=float(kv.get("c", 10.0))
        )
    return Opto(omega=float(kv.get("omega", 0.1)), theta=float(kv.get("theta", 150.0)))


@dataclass(frozen=True)
class CorrelationConfig:
    """Quadrature interval and step for the correlation metric."""

    lo: float = -100.0
    hi: float = 100.0
    step: float = 0.01

    def __post_init__(self):
        if not (self.lo < self.hi):
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")
        if not (self.step > 0):
            raise ValueError(f"step must be > 0, got {self.step}")

    def grid(self) -> np.ndarray:
        n = int(round((self.hi - self.lo) / self.step))
        return np.linspace(self.lo, self.hi, n + 1)


def _trapezoid_weights(x: np.ndarray) -> np.ndarray:
    w = np.full(x.shape, x[1] - x[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def _centered(y: np.ndarray, w: np.ndarray, span: float):
    mean = float(w @ y) / span
    return y - mean, mean


def correlation(
    g: BackwardFn, reference: BackwardFn, cfg: CorrelationConfig = CorrelationConfig()
) -> float:
    """Functional similarity of two backward functions in [-1, 1].

    Centered cross-correlation normalized by the centered L2 norms, all
    integrals by trapezoidal quadrature over ``[cfg.lo, cfg.hi]``.  Raises
    `UndefinedCorrelationError` when either function has (numerically) zero
    variance over the interval.
    """
    x = cfg.grid()
    w = _trapezoid_weights(x)
    span = cfg.hi - cfg.lo
    fc, fmean = _centered(reference.values(x), w, span)
    gc, gmean = _centered(g.values(x), w, span)
    fnorm = float(np.sqrt(w @ (fc * fc)))
    gnorm = float(np.sqrt(w @ (gc * gc)))
    # RMS threshold: true constants leave only rounding residue after centering
    if fnorm / np.sqrt(span) <= 1e-12 * (1.0 + abs(fmean)):
        raise UndefinedCorrelationError("reference function has zero variance on the interval")
    if gnorm / np.sqrt(span) <= 1e-12 * (1.0 + abs(gmean)):
        raise UndefinedCorrelationError("candidate function has zero variance on the interval")
    eta = float(w @ (fc * gc)) / (fnorm * gnorm)
    return float(np.clip(eta, -1.0, 1.0))


def prfs_eta_samples(
    n_samples: int,
    omega: float,
    reference: BackwardFn | None = None,
    cfg: CorrelationConfig = CorrelationConfig(),
    seed: int = 0,
    k: int = 4,
    m: float = 1.0,
) -> tuple[list[Prfs], np.ndarray]:
    """Sample many PRFS and compute their correlation with a reference in one pass.

    Returns (specs, etas).  Equivalent to calling `correlation` per spec but
    shares the sin/cos basis across samples, which is what makes histograms
    over 10^4 draws cheap.
    """
    if reference is None:
        reference = LifSurrogate()
    x = cfg.grid()
    w = _trapezoid_weights(x)
    span = cfg.hi - cfg.lo
    fc, _ = _centered(reference.values(x), w, span)
    fnorm = float(np.sqrt(w @ (fc * fc)))
    if fnorm / np.sqrt(span) <= 1e-12:
        raise UndefinedCorrelationError("reference function has zero variance on the interval")

    phase = (omega * np.pi) * np.outer(np.arange(1, k + 1), x)
    basis = np.concatenate([np.sin(phase), np.cos(phase)], axis=0)  # (2k, len(x))

    specs = [sample_prfs(s, k=k, omega=omega, m=m) for s in range(seed, seed + n_samples)]
    coef = np.array([list(s.p) + list(s.q) for s in specs])  # (n, 2k)
    gvals = m + coef @ basis  # (n, len(x))
    gmean = (gvals @ w) / span
    gc = gvals - gmean[:, None]
    gnorm = np.sqrt((gc * gc) @ w)
    etas = (gc @ (w * fc)) / (gnorm * fnorm)
    return specs, np.clip(etas, -1.0, 1.0)


def bin_by_correlation(
    specs: list,
    reference: BackwardFn,
    edges,
    cfg: CorrelationConfig = CorrelationConfig(),
    etas=None,
) -> dict:
    """Partition specs into correlation bins.

    ``edges`` are ordered bin boundaries; bin j covers [edges[j], edges[j+1]),
    except the last bin which also includes its right edge.  A value landing
    exactly on an interior edge therefore belongs to the bin that starts
    there.  Specs falling outside every bin land under the ``"overflow"``
    key.  Precomputed ``etas`` may be passed to skip the quadrature.
    """
    edges = np.asarray(edges, dtype=np.float64)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("edges must be an increasing 1-D sequence of length >= 2")
    if etas is None:
        etas = np.array([correlation(s, reference, cfg) for s in specs])
    else:
        etas = np.asarray(etas, dtype=np.float64)
        if len(etas) != len(specs):
            raise ValueError("etas and specs length mismatch")
    bins = {(float(lo), float(hi)): [] for lo, hi in zip(edges[:-1], edges[1:])}
    bins["overflow"] = []
    for spec, eta in zip(specs, etas):
        j = int(np.searchsorted(edges, eta, side="right")) - 1
        if eta == edges[-1]:
            j = len(edges) - 2
        if 0 <= j <= len(edges) - 2:
            bins[(float(edges[j]), float(edges[j + 1]))].append((spec, float(eta)))
        else:
            bins["overflow"].append((spec, float(eta)))
    return bins

"""Clock-driven leaky integrate-and-fire layer dynamics.

A layer of LIF neurons accumulates a weighted input drive into its membrane
potential with exponential leak, fires when the membrane crosses threshold,
resets to zero, and stays pinned at zero for a refractory period.  All state
is dense; one update is one discrete time step of length ``dt``.
"""

from dataclasses import dataclass, field

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False


@dataclass(frozen=True)
class LifParams:
    """Neuron constants shared by every neuron in a layer.

    h_th:  firing threshold of the membrane potential (dimensionless)
    dt:    integration step in ms
    t_ref: refractory duration in ms
    tau:   membrane decay time constant in ms
    """

    h_th: float = 0.4
    dt: float = 0.25
    t_ref: float = 1.0
    tau: float = 20.0

    def __post_init__(self):
        if not (self.dt > 0):
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not (self.tau > 0):
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if not (0 < self.dt / self.tau <= 1):
            raise ValueError(f"dt/tau must lie in (0,1], got {self.dt / self.tau}")
        if self.t_ref < 0:
            raise ValueError(f"t_ref must be >= 0, got {self.t_ref}")
        if not (self.h_th > 0):
            raise ValueError(f"h_th must be > 0, got {self.h_th}")

    @property
    def leak(self) -> float:
        """Per-step leak fraction dt/tau."""
        return self.dt / self.tau

    @property
    def refractory_steps(self) -> int:
        """Steps a neuron stays pinned at zero after firing.

        floor(t_ref/dt) while dt < t_ref; once the step length reaches the
        refractory time the period vanishes entirely (0 steps), so coarse
        time grids simulate neurons without a refractory period.
        """
        if self.dt >= self.t_ref:
            return 0
        return int(np.floor(self.t_ref / self.dt + 1e-9))


@dataclass
class LayerState:
    """Dynamic state of one LIF layer: membrane potentials and refractory counters.

    Arrays share a trailing shape: ``(n,)`` for a single sample or ``(n, b)``
    for a batch of independent samples.  ``membrane`` is pinned to exactly 0
    wherever ``refractory_remaining > 0``.
    """

    membrane: np.ndarray
    refractory_remaining: np.ndarray = field(default=None)

    def __post_init__(self):
        self.membrane = np.asarray(self.membrane, dtype=np.float64)
        if self.refractory_remaining is None:
            self.refractory_remaining = np.zeros(self.membrane.shape, dtype=np.int32)
        else:
            self.refractory_remaining = np.asarray(
                self.refractory_remaining, dtype=np.int32
            )
        if self.refractory_remaining.shape != self.membrane.shape:
            raise ValueError(
                "membrane and refractory_remaining shapes differ: "
                f"{self.membrane.shape} vs {self.refractory_remaining.shape}"
            )

    @classmethod
    def zeros(cls, n: int, batch: int | None = None) -> "LayerState":
        shape = (n,) if batch is None else (n, batch)
        return cls(np.zeros(shape), np.zeros(shape, dtype=np.int32))

    def copy(self) -> "LayerState":
        return LayerState(self.membrane.copy(), self.refractory_remaining.copy())


def _step_update_np(h, refr, drive, one_minus_q, q, h_th, ref_steps, spikes):
    """Numpy twin of the jitted kernel; updates h/refr in place, fills spikes."""
    active = refr <= 0
    acc = one_minus_q * h + q * drive
    fired = active & (acc >= h_th)
    h[...] = np.where(fired | ~active, 0.0, acc)
    spikes[...] = np.where(fired, 1.0, 0.0)
    refr[...] = np.where(fired, ref_steps, np.maximum(refr - 1, 0))


if _HAVE_NUMBA:

    @njit(cache=True)
    def _step_update_jit(h, refr, drive, one_minus_q, q, h_th, ref_steps, spikes):
        n, b = h.shape
        for i in range(n):
            for j in range(b):
                if refr[i, j] > 0:
                    h[i, j] = 0.0
                    spikes[i, j] = 0.0
                    refr[i, j] -= 1
                else:
                    acc = one_minus_q * h[i, j] + q * drive[i, j]
                    if acc >= h_th:
                        h[i, j] = 0.0
                        spikes[i, j] = 1.0
                        refr[i, j] = ref_steps
                    else:
                        h[i, j] = acc
                        spikes[i, j] = 0.0


def step_inplace(h, refr, drive, params: LifParams, spikes, use_numba: bool = True):
    """Advance one LIF step in place on 2-D ``(n, batch)`` arrays.

    Internal fast path shared with the training engine; the public
    contract is `integrate_step`.  Jitted and numpy paths are bit-identical
    (same IEEE operations in the same order).
    """
    q = params.leak
    if _HAVE_NUMBA and use_numba:
        _step_update_jit(
            h, refr, drive, 1.0 - q, q, params.h_th, params.refractory_steps, spikes
        )
    else:
        _step_update_np(
            h, refr, drive, 1.0 - q, q, params.h_th, params.refractory_steps, spikes
        )


def integrate_step(
    state: LayerState, drive: np.ndarray, params: LifParams
) -> tuple[LayerState, np.ndarray]:
    """Advance a layer by one time step; returns (new state, spike vector).

    Non-refractory neurons accumulate ``h <- (1 - dt/tau)*h + (dt/tau)*v``;
    any membrane reaching threshold fires, resets to 0, and arms its
    refractory counter.  Refractory neurons stay pinned at 0, ignore the
    drive, emit no spike, and tick their counter down by one.
    """
    drive = np.asarray(drive, dtype=np.float64)
    if drive.shape != state.membrane.shape:
        raise ValueError(
            f"drive shape {drive.shape} does not match layer shape "
            f"{state.membrane.shape}"
        )
    if not np.all(np.isfinite(drive)):
        raise ValueError("drive contains non-finite values")

    flat = state.membrane.ndim == 1
    h = state.membrane.reshape(-1, 1).copy() if flat else state.membrane.copy()
    refr = (
        state.refractory_remaining.reshape(-1, 1).copy()
        if flat
        else state.refractory_remaining.copy()
    )
    d = drive.reshape(-1, 1) if flat else drive
    spikes = np.empty_like(h)
    step_inplace(h, refr, np.ascontiguousarray(d), params, spikes)
    if flat:
        h, refr, spikes = h[:, 0], refr[:, 0], spikes[:, 0]
    return LayerState(h, refr), spikes


def layer_drive(W: np.ndarray, b: np.ndarray, presyn: np.ndarray) -> np.ndarray:
    """Input drive to a layer: ``v = W @ presyn + b``.

    ``presyn`` may be a binary spike vector or a real-valued input vector;
    batched presyn of shape ``(n_pre, batch)`` gives a ``(n_post, batch)``
    drive with the bias broadcast per column.
    """
    W = np.asarray(W, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    presyn = np.asarray(presyn, dtype=np.float64)
    if W.ndim != 2 or presyn.shape[0] != W.shape[1]:
        raise ValueError(
            f"weight matrix {W.shape} cannot be applied to presyn of shape "
            f"{presyn.shape}"
        )
    if b.shape != (W.shape[0],):
        raise ValueError(f"bias shape {b.shape} does not match {W.shape[0]} rows")
    if presyn.ndim == 1:
        return W @ presyn + b
    return W @ presyn + b[:, None]

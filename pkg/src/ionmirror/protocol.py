"""Monte Carlo simulation of the triggered single-photon generation protocol.

One cycle: Doppler-cool with both circular polarizations, optically pump with
one of them until the ion falls into the ground state dark to that beam, wait
for the AOM switches, then open the detection gate and fire a short pulse of
the opposite polarization.  The pulse pumps the ion back across, and the
terminal photon of that transfer is a lone pi photon inside the gate: a
triggered single photon.

Scattering is modeled as discrete jump events (rate-level dynamics; the
excited-state lifetime is far below the stage durations).  Each scatter
returns to the original ground state via a sigma decay with probability 2/3
or crosses to the other ground state via a pi decay with probability 1/3.
The sigma+ beam drives the m = -1/2 ground state and sigma- the m = +1/2
state; a beam's polarization impurity drives the opposite state at the
impurity fraction of the full rate.  A small branch per scatter parks the ion
in the metastable D state until the repump resolves it.

Randomness is organized so trials are reproducible and order-independent:
trial i consumes a fixed-size row of uniforms that is a pure function of
(master seed, i), with a deterministic per-trial overflow stream for the rare
long trials.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .radiometry import TransitionKind

SIGMA_PLUS_BEAM = "sigma+"
SIGMA_MINUS_BEAM = "sigma-"

_ROW_WIDTH = 64


class IonState(enum.Enum):
    GROUND_MINUS = "g-"  # m = -1/2, driven by the sigma+ beam
    GROUND_PLUS = "g+"  # m = +1/2, driven by the sigma- beam
    DARK_D32 = "dark"


class EventKind(enum.IntEnum):
    """Photon species codes; fixed values are part of the binary record format."""

    PI = 0
    SIGMA_PLUS = 1
    SIGMA_MINUS = 2
    BACKGROUND = 3

    @property
    def transition(self) -> TransitionKind | None:
        return {
            EventKind.PI: TransitionKind.PI,
            EventKind.SIGMA_PLUS: TransitionKind.SIGMA_PLUS,
            EventKind.SIGMA_MINUS: TransitionKind.SIGMA_MINUS,
        }.get(self)


EVENT_DTYPE = np.dtype(
    [
        ("trial", "<u4"),
        ("time_ns", "<f8"),
        ("kind", "<u1"),
        ("collected", "<u1"),
        ("passed_polarizer", "<u1"),
        ("detector", "<u1"),
    ]
)


@dataclass(frozen=True)
class Stage:
    """One protocol stage: which beams are on, for how long, gated or not.

    ``beam_window_ns`` restricts the beams to a sub-interval of the stage
    (used for the short drive pulse inside the detection gate).
    """

    name: str
    duration_ns: float
    beams: frozenset = frozenset()
    detection_gate: bool = False
    beam_window_ns: tuple[float, float] | None = None

    def __post_init__(self):
        if self.duration_ns <= 0:
            raise ValueError(f"stage {self.name!r} duration must be positive")
        bad = set(self.beams) - {SIGMA_PLUS_BEAM, SIGMA_MINUS_BEAM}
        if bad:
            raise ValueError(f"unknown beams {bad}")
        if self.beam_window_ns is not None:
            a, b = self.beam_window_ns
            if not 0 <= a < b <= self.duration_ns:
                raise ValueError("beam window must lie inside the stage")

    def window(self) -> tuple[float, float]:
        return self.beam_window_ns if self.beam_window_ns else (0.0, self.duration_ns)


@dataclass(frozen=True)
class PulseSequence:
    stages: tuple[Stage, ...]

    @property
    def cycle_ns(self) -> float:
        return sum(s.duration_ns for s in self.stages)

    @property
    def repetition_rate_khz(self) -> float:
        return 1e6 / self.cycle_ns

    def gate_intervals_ns(self) -> list[tuple[float, float]]:
        """Open detection gate intervals, as offsets from the cycle start."""
        out = []
        t = 0.0
        for s in self.stages:
            if s.detection_gate:
                out.append((t, t + s.duration_ns))
            t += s.duration_ns
        return out

    def gate_open_ns(self) -> float:
        return sum(b - a for a, b in self.gate_intervals_ns())


def default_sequence() -> PulseSequence:
    """Cool 500 ns (both beams), pump 500 ns (sigma-), wait 750 ns, a 1000 ns
    detection gate containing a 250 ns sigma+ pulse starting 250 ns in, and a
    500 ns idle for the AOMs to switch back; 3.25 us per cycle, 307.7 kHz.

    The published stage list sums to 2750 ns; the trailing idle accounts for
    the measured 3.25 us repetition period.
    """
    return PulseSequence(
        stages=(
            Stage("cool", 500.0, frozenset({SIGMA_PLUS_BEAM, SIGMA_MINUS_BEAM})),
            Stage("pump", 500.0, frozenset({SIGMA_MINUS_BEAM})),
            Stage("wait", 750.0),
            Stage(
                "detect",
                1000.0,
                frozenset({SIGMA_PLUS_BEAM}),
                detection_gate=True,
                beam_window_ns=(250.0, 500.0),
            ),
            Stage("reset", 500.0),
        )
    )


@dataclass(frozen=True)
class ChainStage:
    """Named transmission factor; value may be per-transition-kind."""

    name: str
    value: float | dict

    def __post_init__(self):
        vals = self.value.values() if isinstance(self.value, dict) else (self.value,)
        for v in vals:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"stage {self.name!r} value {v} outside [0, 1]")

    def value_for(self, kind: TransitionKind) -> float:
        if isinstance(self.value, dict):
            if kind in self.value:
                return self.value[kind]
            if kind.is_sigma and TransitionKind.SIGMA_PLUS in self.value:
                return self.value[TransitionKind.SIGMA_PLUS]
            raise KeyError(f"stage {self.name!r} has no value for {kind}")
        return self.value


@dataclass(frozen=True)
class DetectionChain:
    """Ordered loss chain from emission to detector click, plus gate background."""

    stages: tuple[ChainStage, ...]
    background_rate_cps: float = 0.0

    def __post_init__(self):
        if self.background_rate_cps < 0:
            raise ValueError("background rate must be >= 0")

    def detection_probability(self, kind: TransitionKind) -> float:
        p = 1.0
        for s in self.stages:
            p *= s.value_for(kind)
        return p


def paper_chain() -> DetectionChain:
    """The loss chain of the collection-efficiency measurement: full-aperture
    pi collection times inferred diffraction efficiency, iris, other optics,
    and PMT quantum efficiency, with an ideal polarizer."""
    sig = TransitionKind.SIGMA_PLUS
    pi = TransitionKind.PI
    return DetectionChain(
        stages=(
            ChainStage("collection", {pi: 0.174, sig: 0.113}),
            ChainStage("diffraction", 0.333),
            ChainStage("iris", 0.50),
            ChainStage("other_optics", 0.76),
            ChainStage("detector_qe", 0.19),
            ChainStage("polarizer", {pi: 1.0, sig: 0.0}),
        ),
    )


@dataclass
class ProtocolSummary:
    trials: int
    cycle_ns: float
    repetition_rate_khz: float
    detected: int
    pi_emitted_in_gate: int
    pump_started_driven: int
    pump_completed: int
    mean_scatters_per_pump: float
    pump_scatter_histogram: dict[int, int]
    pump_success_probability: float
    detected_fraction: float
    analytic_detection_probability: float

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["pump_scatter_histogram"] = {str(k): v for k, v in sorted(self.pump_scatter_histogram.items())}
        return d


@dataclass
class ProtocolResult:
    events: np.ndarray  # EVENT_DTYPE records, detection-eligible or all emissions
    summary: ProtocolSummary


def _overflow_rng(seed: int, trial: int) -> np.ndarray:
    bg = np.random.Philox(key=np.uint64(seed), counter=[0, 0, 1, trial])
    return np.random.Generator(bg).random(512)


def trial_uniform_block(seed: int, n_trials: int, offset: int = 0) -> np.ndarray:
    """Rows of uniforms, row i a pure function of (seed, offset + i)."""
    bg = np.random.Philox(key=np.uint64(seed))
    if offset:
        bg = bg.jumped(offset)  # jumped() strides the counter without drawing
    gen = np.random.Generator(bg)
    return gen.random((n_trials, _ROW_WIDTH))


def transfer_probability(
    window_ns: float, scattering_rate_mhz: float, p_dark: float = 0.0
) -> float:
    """P(optical pumping transfer completes within a drive window).

    Scatters arrive at the given rate; each one completes the transfer with
    probability (1 - p_dark)/3, parks the ion dark with p_dark, or returns it
    with the remainder.  Exits (completion or dark) therefore occur at the
    thinned rate R (1 - 2(1-p_dark)/3), which gives the closed form below.
    """
    q = 1.0 - p_dark
    exit_frac = 1.0 - 2.0 * q / 3.0
    rate = scattering_rate_mhz * 1e-3  # per ns
    p_unbounded = (q / 3.0) / exit_frac
    return p_unbounded * (1.0 - math.exp(-rate * exit_frac * window_ns))


def analytic_detection_probability(
    sequence: PulseSequence,
    chain: DetectionChain,
    scattering_rate_mhz: float = 50.0,
    p_dark: float = 0.005,
) -> float:
    """Closed-form detection probability per cycle for the default protocol shape.

    Cooling leaves the ion in either ground state with equal probability, so
    the pump transfer is needed in half the cycles; the gated pulse must then
    complete its own transfer, whose terminal pi photon passes the chain.
    Valid for the standard cool / pump / wait / gated-pulse shape with
    stage-boundary repump and pure beams.
    """
    detect = [s for s in sequence.stages if s.detection_gate and s.beams]
    pump = [s for s in sequence.stages if s.beams and not s.detection_gate and len(s.beams) == 1]
    if not detect:
        return 0.0
    w0, w1 = detect[0].window()
    p_detect_tr = transfer_probability(w1 - w0, scattering_rate_mhz, p_dark)
    p_ready = 1.0
    if pump:
        ws, we = pump[-1].window()
        p_pump_tr = transfer_probability(we - ws, scattering_rate_mhz, p_dark)
        p_ready = 0.5 + 0.5 * p_pump_tr
    p_chain = chain.detection_probability(TransitionKind.PI)
    return p_ready * p_detect_tr * p_chain


def run_protocol(
    sequence: PulseSequence,
    trials: int,
    chain: DetectionChain,
    seed: int,
    scattering_rate_mhz: float = 50.0,
    p_dark: float = 0.005,
    repump: str = "stage",
    laser_impurity: float = 0.0,
    record: str = "detected",
) -> ProtocolResult:
    """Simulate ``trials`` protocol cycles and sample the detection chain.

    ``repump`` places the instantaneous D-state repump at "stage" or "cycle"
    boundaries.  ``laser_impurity`` is the fraction of each beam's power in
    the wrong polarization, driving the nominally dark ground state at that
    fraction of the scattering rate (the main route to a second pi photon in
    a gate).  ``record`` selects which events are kept: "detected" (clicks
    only), "eligible" (every in-gate emission with its sampling flags), "all"
    (every emission in the cycle), or "none".

    The detector field of returned events is 0; use
    :func:`split_detectors` to model the beamsplitter.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    if record not in ("detected", "eligible", "all", "none"):
        raise ValueError(f"unknown record mode {record!r}")
    if not 0.0 <= laser_impurity <= 1.0:
        raise ValueError("laser impurity must be in [0, 1]")
    if repump not in ("stage", "cycle"):
        raise ValueError("repump must be 'stage' or 'cycle'")
    gates = sequence.gate_intervals_ns()
    if not gates or sequence.gate_open_ns() <= 0:
        raise ValueError("sequence has no open detection gate; nothing can be detected")

    rate = scattering_rate_mhz * 1e-3  # scatters per ns
    p13 = p_dark + (1.0 - p_dark) / 3.0
    cycle = sequence.cycle_ns
    minus, plus, dark = IonState.GROUND_MINUS, IonState.GROUND_PLUS, IonState.DARK_D32
    chain_stages = chain.stages
    record_all = record == "all"
    record_eligible = record in ("eligible", "all")
    keep_any = record != "none"

    # stage schedule precomputation
    sched = []
    t0 = 0.0
    for s in sequence.stages:
        w0, w1 = s.window()
        sched.append((s, t0, t0 + w0, t0 + w1))
        t0 += s.duration_ns
    both_full = frozenset({SIGMA_PLUS_BEAM, SIGMA_MINUS_BEAM})

    # P(any dark decay during a fully-driven stage of duration T)
    def dark_prob(duration):
        return 1.0 - math.exp(-rate * duration * p_dark)

    events: list[tuple] = []
    pump_hist: dict[int, int] = {}
    n_started_driven = 0
    n_completed = 0
    n_pi_gate = 0
    n_detected = 0
    sum_pump_scatters = 0

    block = trial_uniform_block(seed, trials).tolist()

    for trial in range(trials):
        row = block[trial]
        j = 0
        n_row = _ROW_WIDTH

        def draw():
            nonlocal j, row, n_row
            if j >= n_row:
                row = _overflow_rng(seed, trial).tolist()
                n_row = len(row)
                j = 0
            v = row[j]
            j += 1
            return v

        state = minus if draw() < 0.5 else plus
        pump_scatters = 0
        pump_started_driven = False
        pump_completed = False

        for stage, stage_t0, drive_t0, drive_t1 in sched:
            if state is dark and repump == "stage":
                state = minus if draw() < 0.5 else plus
            if not stage.beams or state is dark:
                continue
            drives_minus = SIGMA_PLUS_BEAM in stage.beams
            drives_plus = SIGMA_MINUS_BEAM in stage.beams
            is_pump = not stage.detection_gate and stage.beams != both_full
            gate_open = stage.detection_gate

            if is_pump:
                pump_started_driven = (drives_plus and state is plus) or (
                    drives_minus and state is minus
                )
                pump_completed = not pump_started_driven

            # fast path: symmetric full drive, gate closed, events not kept
            if stage.beams == both_full and not gate_open and not record_all:
                if repump == "cycle" and draw() < dark_prob(drive_t1 - drive_t0):
                    state = dark
                else:
                    state = minus if draw() < 0.5 else plus
                continue

            t = drive_t0
            while True:
                if state is minus:
                    r = rate if drives_minus else rate * laser_impurity
                elif state is plus:
                    r = rate if drives_plus else rate * laser_impurity
                else:
                    break
                if r <= 0.0:
                    break
                t -= math.log(1.0 - draw()) / r
                if t >= drive_t1:
                    break
                u = draw()
                if u < p_dark:
                    state = dark
                    break
                is_pi = u < p13
                if is_pump and pump_started_driven and not pump_completed:
                    pump_scatters += 1
                if is_pi:
                    kind = EventKind.PI
                    if is_pump and pump_started_driven:
                        pump_completed = True
                    state = plus if state is minus else minus
                else:
                    # sigma return decay carries the sigma sense of its transition
                    kind = EventKind.SIGMA_PLUS if state is minus else EventKind.SIGMA_MINUS
                abs_t = trial * cycle + t
                if gate_open:
                    if is_pi:
                        n_pi_gate += 1
                    collected = False
                    passed_pol = False
                    detected = True
                    tk = kind.transition
                    for ci, cs in enumerate(chain_stages):
                        if draw() >= cs.value_for(tk):
                            detected = False
                            break
                        if ci == 0:
                            collected = True
                        if cs.name == "polarizer":
                            passed_pol = True
                    if detected:
                        collected = True
                        passed_pol = True
                        n_detected += 1
                    if keep_any and (detected or record_eligible):
                        events.append((trial, abs_t, int(kind), collected, passed_pol, 0))
                elif record_all:
                    events.append((trial, abs_t, int(kind), False, False, 0))

        if pump_started_driven:
            n_started_driven += 1
            sum_pump_scatters += pump_scatters
            pump_hist[pump_scatters] = pump_hist.get(pump_scatters, 0) + 1
        if pump_completed:
            n_completed += 1

    arr = np.array(events, dtype=EVENT_DTYPE) if events else np.empty(0, dtype=EVENT_DTYPE)
    mean_sc = sum_pump_scatters / n_started_driven if n_started_driven else float("nan")
    summary = ProtocolSummary(
        trials=trials,
        cycle_ns=cycle,
        repetition_rate_khz=sequence.repetition_rate_khz,
        detected=n_detected,
        pi_emitted_in_gate=n_pi_gate,
        pump_started_driven=n_started_driven,
        pump_completed=n_completed,
        mean_scatters_per_pump=mean_sc,
        pump_scatter_histogram=pump_hist,
        pump_success_probability=n_completed / trials,
        detected_fraction=n_detected / trials,
        analytic_detection_probability=analytic_detection_probability(
            sequence, chain, scattering_rate_mhz, p_dark
        ),
    )
    return ProtocolResult(events=arr, summary=summary)


def sample_detection(
    kind: EventKind,
    chain: DetectionChain,
    rng: np.random.Generator,
) -> tuple[bool, bool, bool]:
    """Bernoulli walk of one in-gate photon through the chain.

    Returns (collected, passed_polarizer, detected); background events skip
    the chain entirely (they are defined at the detector).
    """
    if kind is EventKind.BACKGROUND:
        return True, True, True
    tk = kind.transition
    collected = False
    passed_pol = False
    for i, cs in enumerate(chain.stages):
        if rng.random() >= cs.value_for(tk):
            return collected, passed_pol, False
        if i == 0:
            collected = True
        if cs.name == "polarizer":
            passed_pol = True
    return True, True, True


def add_background(
    events: np.ndarray,
    rate_cps: float,
    sequence: PulseSequence,
    trials: int,
    seed: int,
) -> np.ndarray:
    """Append Poissonian detector background uniformly over the open gates.

    The rate is counts per second at the detector while a gate is open.
    Returns a new time-sorted event array.
    """
    if rate_cps < 0:
        raise ValueError("background rate must be >= 0")
    if rate_cps == 0:
        return np.sort(events, order="time_ns") if events.size else events
    gates = sequence.gate_intervals_ns()
    open_ns = sequence.gate_open_ns()
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed), counter=[0, 0, 2, 0]))
    n_bg = rng.poisson(rate_cps * 1e-9 * open_ns * trials)
    bg = np.empty(n_bg, dtype=EVENT_DTYPE)
    bg["trial"] = rng.integers(0, trials, n_bg)
    # place each count uniformly over the open gate time of its cycle
    offsets = rng.random(n_bg) * open_ns
    times = np.zeros(n_bg)
    acc = 0.0
    for a, b in gates:
        span = b - a
        in_gate = (offsets >= acc) & (offsets < acc + span)
        times[in_gate] = a + (offsets[in_gate] - acc)
        acc += span
    bg["time_ns"] = bg["trial"] * sequence.cycle_ns + times
    bg["kind"] = int(EventKind.BACKGROUND)
    bg["collected"] = 1
    bg["passed_polarizer"] = 1
    bg["detector"] = 0
    merged = np.concatenate([events, bg]) if events.size else bg
    return np.sort(merged, order="time_ns")


def split_detectors(events: np.ndarray, seed: int) -> np.ndarray:
    """Assign each detected event to detector 1 or 2 with equal probability."""
    out = events.copy()
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed), counter=[0, 0, 3, 0]))
    out["detector"] = np.where(rng.random(len(out)) < 0.5, 1, 2).astype("u1")
    return out


def saturation_scattering_rate_mhz(
    power_uw: float = 7.0,
    beam_diameter_um: float = 100.0,
    detuning_mhz: float = -10.0,
    linewidth_mhz: float = 19.6,
    wavelength_nm: float = 370.0,
) -> float:
    """Steady-state scattering rate from laser parameters.

    Two-level formula R = (Gamma/2) s / (1 + s + (2 delta / Gamma)^2) with
    s = I / I_sat, I the peak intensity of a top-hat beam of the given
    diameter, and I_sat = pi h c Gamma / (3 lambda^3).  A convenience with
    the usual caveats: multi-level structure and polarization mixing are
    folded into the effective saturation.
    """
    h = 6.62607015e-34
    c = 2.99792458e8
    gamma = 2 * math.pi * linewidth_mhz * 1e6
    lam = wavelength_nm * 1e-9
    i_sat = math.pi * h * c * gamma / (3 * lam**3)
    area = math.pi * (beam_diameter_um * 1e-6 / 2) ** 2
    s = (power_uw * 1e-6 / area) / i_sat
    delta = 2 * math.pi * detuning_mhz * 1e6
    r = (gamma / 2) * s / (1 + s + (2 * delta / gamma) ** 2)  # events per second
    return r / 1e6

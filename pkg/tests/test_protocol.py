"""Monte Carlo protocol: pumping statistics, detection sampling, determinism."""

import math

import numpy as np
import pytest
from scipy import stats

from ionmirror.protocol import (
    ChainStage,
    DetectionChain,
    EventKind,
    PulseSequence,
    Stage,
    add_background,
    analytic_detection_probability,
    default_sequence,
    paper_chain,
    run_protocol,
    sample_detection,
    saturation_scattering_rate_mhz,
    split_detectors,
    transfer_probability,
)
from ionmirror.radiometry import TransitionKind

PI = TransitionKind.PI
SIG = TransitionKind.SIGMA_PLUS


def ideal_chain(**kw):
    """Everything transmits; polarizer blocks sigma perfectly."""
    return DetectionChain(
        stages=(
            ChainStage("collection", 1.0),
            ChainStage("polarizer", {PI: 1.0, SIG: 0.0}),
        ),
        **kw,
    )


class TestSequence:
    def test_default_timing(self):
        seq = default_sequence()
        assert seq.cycle_ns == 3250.0
        assert seq.repetition_rate_khz == pytest.approx(307.69, abs=0.01)
        assert seq.gate_open_ns() == 1000.0
        assert seq.gate_intervals_ns() == [(1750.0, 2750.0)]

    def test_stage_validation(self):
        with pytest.raises(ValueError, match="duration"):
            Stage("bad", -1.0)
        with pytest.raises(ValueError, match="beams"):
            Stage("bad", 10.0, frozenset({"laser"}))
        with pytest.raises(ValueError, match="window"):
            Stage("bad", 10.0, frozenset({"sigma+"}), beam_window_ns=(5.0, 20.0))

    def test_gateless_sequence_rejected(self):
        seq = PulseSequence(stages=(Stage("cool", 100.0, frozenset({"sigma+"})),))
        with pytest.raises(ValueError, match="gate"):
            run_protocol(seq, 10, ideal_chain(), seed=0)


class TestPumpStatistics:
    @pytest.fixture(scope="class")
    def clean_run(self):
        # dark branch off: the transfer statistics are exactly geometric
        return run_protocol(default_sequence(), 200_000, ideal_chain(), seed=11, p_dark=0.0)

    def test_mean_scatters_per_pump(self, clean_run):
        assert clean_run.summary.mean_scatters_per_pump == pytest.approx(3.0, rel=0.02)

    def test_scatters_geometric_chi_square(self, clean_run):
        hist = clean_run.summary.pump_scatter_histogram
        n = sum(hist.values())
        kmax = 15
        observed = [hist.get(k, 0) for k in range(1, kmax)]
        observed.append(n - sum(observed))  # pooled tail
        probs = [(2 / 3) ** (k - 1) / 3 for k in range(1, kmax)]
        probs.append(1.0 - sum(probs))
        expected = [p * n for p in probs]
        chi2, p_value = stats.chisquare(observed, expected)
        assert p_value > 0.01

    def test_pump_ends_in_driven_dark_state(self, clean_run):
        assert clean_run.summary.pump_success_probability >= 0.999

    def test_half_of_cycles_need_pumping(self, clean_run):
        frac = clean_run.summary.pump_started_driven / clean_run.summary.trials
        assert frac == pytest.approx(0.5, abs=0.01)

    def test_single_pi_per_gate(self):
        res = run_protocol(
            default_sequence(), 30_000, ideal_chain(), seed=3, p_dark=0.0, record="eligible"
        )
        ev = res.events
        pi_events = ev[ev["kind"] == int(EventKind.PI)]
        trials, counts = np.unique(pi_events["trial"], return_counts=True)
        assert counts.max() == 1
        detected = ev[ev["detector"] >= 0]  # detector unset here, use flags
        per_trial = np.bincount(
            ev["trial"][(ev["collected"] == 1) & (ev["passed_polarizer"] == 1)],
            minlength=30_000,
        )
        assert per_trial.max() <= 1

    def test_dark_branch_reduces_yield(self):
        clean = run_protocol(default_sequence(), 40_000, ideal_chain(), seed=5, p_dark=0.0)
        dark = run_protocol(default_sequence(), 40_000, ideal_chain(), seed=5, p_dark=0.02)
        assert dark.summary.detected < clean.summary.detected


class TestDetectionSampling:
    def test_transparent_chain_detects_gated_pi(self):
        res = run_protocol(default_sequence(), 2_000, ideal_chain(), seed=2, p_dark=0.0)
        # every cycle that produced a gated pi photon is detected
        assert res.summary.detected == res.summary.pi_emitted_in_gate

    def test_opaque_stage_blocks_everything(self):
        chain = DetectionChain(stages=(ChainStage("collection", 0.0),))
        res = run_protocol(default_sequence(), 2_000, chain, seed=2, p_dark=0.0)
        assert res.summary.detected == 0

    def test_sample_detection_trivial_paths(self):
        rng = np.random.default_rng(0)
        assert sample_detection(EventKind.PI, ideal_chain(), rng) == (True, True, True)
        blocked = DetectionChain(stages=(ChainStage("collection", 0.0),))
        assert sample_detection(EventKind.PI, blocked, rng) == (False, False, False)
        assert sample_detection(EventKind.BACKGROUND, blocked, rng) == (True, True, True)

    def test_sigma_leakage_rate_matches_analytic_product(self):
        leak = 0.05
        chain = DetectionChain(
            stages=(
                ChainStage("collection", {PI: 0.0, SIG: 0.4}),
                ChainStage("polarizer", {PI: 0.0, SIG: leak}),
            )
        )
        trials = 300_000
        res = run_protocol(default_sequence(), trials, chain, seed=9, p_dark=0.0)
        # mean sigma photons per gate = mean scatters - 1 terminal pi, over
        # the cycles whose transfer happens inside the pulse window
        p_transfer = transfer_probability(250.0, 50.0)
        sigma_per_gate = (3.0 - 1.0) * p_transfer
        expected = trials * sigma_per_gate * 0.4 * leak
        assert res.summary.detected == pytest.approx(expected, abs=4 * math.sqrt(expected))

    def test_monte_carlo_matches_closed_form(self):
        trials = 200_000
        res = run_protocol(default_sequence(), trials, paper_chain(), seed=21, p_dark=0.005)
        expected = res.summary.analytic_detection_probability * trials
        assert res.summary.detected == pytest.approx(expected, abs=3 * math.sqrt(expected))


class TestDeterminism:
    def test_identical_seed_bit_identical(self):
        a = run_protocol(default_sequence(), 5_000, paper_chain(), seed=42)
        b = run_protocol(default_sequence(), 5_000, paper_chain(), seed=42)
        assert np.array_equal(a.events, b.events)
        assert a.summary.as_dict() == b.summary.as_dict()

    def test_different_seed_differs(self):
        a = run_protocol(default_sequence(), 5_000, paper_chain(), seed=42)
        b = run_protocol(default_sequence(), 5_000, paper_chain(), seed=43)
        assert not np.array_equal(a.events, b.events)

    def test_trials_are_order_independent(self):
        # a trial's events depend on (seed, trial index) only, so a shorter
        # run reproduces the prefix of a longer one exactly
        small = run_protocol(default_sequence(), 2_000, paper_chain(), seed=7)
        large = run_protocol(default_sequence(), 6_000, paper_chain(), seed=7)
        prefix = large.events[large.events["trial"] < 2_000]
        assert np.array_equal(small.events, prefix)


class TestSplitAndBackground:
    def _events(self, n, seed=0):
        ev = np.zeros(n, dtype=run_protocol.__globals__["EVENT_DTYPE"])
        ev["trial"] = np.arange(n)
        ev["time_ns"] = np.arange(n) * 3250.0 + 2000.0
        ev["kind"] = int(EventKind.PI)
        ev["collected"] = 1
        ev["passed_polarizer"] = 1
        return ev

    def test_split_is_binomial(self):
        n = 1_000_000
        out = split_detectors(self._events(n), seed=1)
        n1 = int((out["detector"] == 1).sum())
        assert n1 + int((out["detector"] == 2).sum()) == n
        assert n1 == pytest.approx(n / 2, abs=3 * math.sqrt(n / 4))
        assert n1 / n == pytest.approx(0.5, abs=0.005)

    def test_single_event_lands_on_one_detector(self):
        out = split_detectors(self._events(1), seed=5)
        assert out["detector"][0] in (1, 2)

    def test_split_deterministic(self):
        a = split_detectors(self._events(100), seed=3)
        b = split_detectors(self._events(100), seed=3)
        assert np.array_equal(a, b)

    def test_background_rate_zero_is_identity(self):
        ev = self._events(50)
        out = add_background(ev, 0.0, default_sequence(), 50, seed=1)
        assert np.array_equal(np.sort(ev, order="time_ns"), out)

    def test_background_poisson_count_and_placement(self):
        seq = default_sequence()
        trials = 100_000
        rate = 5_000.0  # cps during gate
        out = add_background(np.empty(0, dtype=self._events(1).dtype), rate, seq, trials, seed=2)
        expected = rate * 1e-9 * seq.gate_open_ns() * trials
        assert len(out) == pytest.approx(expected, abs=3 * math.sqrt(expected))
        # all background falls inside the open gate of its own cycle
        in_cycle = out["time_ns"] - out["trial"] * seq.cycle_ns
        (g0, g1), = seq.gate_intervals_ns()
        assert np.all((in_cycle >= g0) & (in_cycle < g1))
        assert np.all(np.diff(out["time_ns"]) >= 0)

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            add_background(self._events(1), -1.0, default_sequence(), 1, seed=0)


class TestHelpers:
    def test_transfer_probability_limits(self):
        assert transfer_probability(1e9, 50.0, 0.0) == pytest.approx(1.0)
        assert transfer_probability(0.0, 50.0, 0.0) == 0.0
        # dark branch diverts 1.5% per scatter-chain
        assert transfer_probability(1e9, 50.0, 0.005) == pytest.approx(0.985, abs=0.001)

    def test_saturation_rate_paper_params(self):
        r = saturation_scattering_rate_mhz()
        # 7 uW over a 100 um spot, -10 MHz detuned: tens of MHz, below Gamma/2
        assert 5.0 < r < 62.0

    def test_analytic_probability_matches_chain_regime(self):
        p = analytic_detection_probability(default_sequence(), paper_chain(), 50.0, 0.0)
        product = paper_chain().detection_probability(PI)
        assert 0.95 * product < p <= product

    def test_chain_stage_validation(self):
        with pytest.raises(ValueError):
            ChainStage("bad", 1.5)
        with pytest.raises(ValueError):
            ChainStage("bad", {PI: -0.1})
        stage = ChainStage("pol", {PI: 0.9, SIG: 0.1})
        assert stage.value_for(TransitionKind.SIGMA_MINUS) == 0.1

    def test_invalid_run_arguments(self):
        with pytest.raises(ValueError):
            run_protocol(default_sequence(), 0, ideal_chain(), seed=1)
        with pytest.raises(ValueError):
            run_protocol(default_sequence(), 10, ideal_chain(), seed=1, record="some")
        with pytest.raises(ValueError):
            run_protocol(default_sequence(), 10, ideal_chain(), seed=1, repump="never")

"""Emission patterns, solid angle capture, and polarization projection.

Expected values come from independent oracles computed inside this file:
brute-force sphere quadrature for pattern normalization, the closed-form
rectangle solid angle, and a standalone vector-projection integral for the
polarizer leakage.
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from ionmirror.radiometry import (
    ApertureGeometry,
    PolarizerSetting,
    TransitionKind,
    collection_fraction,
    emission_intensity,
    equivalent_circular_na,
    pi_aligned_polarizer,
    polarizer_transmission,
    solid_angle_fraction,
    solid_angle_fraction_analytic,
)

PI = TransitionKind.PI
SIG = TransitionKind.SIGMA_PLUS


def sphere_quadrature(func, n_theta=2000, n_phi=400):
    """Oracle: midpoint integration of func(theta) over the full sphere."""
    th = (np.arange(n_theta) + 0.5) / n_theta * np.pi
    d_omega = 2 * np.pi * np.sin(th) * (np.pi / n_theta)
    return float((func(th) * d_omega).sum())


class TestEmissionIntensity:
    def test_pi_vanishes_on_axis(self):
        assert emission_intensity(PI, (0.0, 0.0, 1.0)) == 0.0

    def test_pi_equator_value_from_quadrature_oracle(self):
        # normalize sin^2 over the sphere by brute force -> peak value
        norm = sphere_quadrature(lambda th: np.sin(th) ** 2)
        expected_peak = 1.0 / norm  # = 3/(8 pi)
        got = emission_intensity(PI, (1.0, 0.0, 0.0))
        assert got == pytest.approx(expected_peak, rel=1e-6)
        assert got == pytest.approx(3 / (8 * math.pi), rel=1e-12)

    def test_sigma_on_axis_from_quadrature_oracle(self):
        norm = sphere_quadrature(lambda th: (1 + np.cos(th) ** 2) / 2)
        expected_on_axis = 1.0 / norm  # (1+1)/2 / norm = 3/(8 pi)
        got = emission_intensity(SIG, (0.0, 0.0, 1.0))
        assert got == pytest.approx(expected_on_axis, rel=1e-6)

    @pytest.mark.parametrize("kind", [PI, SIG, TransitionKind.SIGMA_MINUS])
    def test_sphere_normalization(self, kind):
        def pattern(th):
            c = np.cos(th)
            if kind is PI:
                return (3 / (8 * np.pi)) * (1 - c**2)
            return (3 / (16 * np.pi)) * (1 + c**2)

        assert sphere_quadrature(pattern) == pytest.approx(1.0, abs=1e-6)

    def test_rejects_unnormalized_direction(self):
        with pytest.raises(ValueError, match="normalized"):
            emission_intensity(PI, (0.0, 0.0, 2.0))

    def test_sigma_plus_minus_share_pattern(self):
        d = np.array([0.3, 0.5, math.sqrt(1 - 0.34)])
        assert emission_intensity(SIG, d) == emission_intensity(TransitionKind.SIGMA_MINUS, d)


class TestSolidAngle:
    def test_paper_geometry(self, paper_aperture):
        assert solid_angle_fraction(paper_aperture) == pytest.approx(0.133, abs=0.002)

    def test_quadrature_matches_analytic_oracle(self, paper_aperture):
        got = solid_angle_fraction(paper_aperture)
        exact = solid_angle_fraction_analytic(paper_aperture)
        assert got == pytest.approx(exact, abs=1e-4)

    def test_hemisphere_limit(self):
        big = ApertureGeometry(width_um=1e7, length_um=1e7, ion_height_um=59.6)
        assert solid_angle_fraction_analytic(big) == pytest.approx(0.5, abs=1e-5)
        # quadrature approaches the limit too, at a size it can still sample
        wide = ApertureGeometry(width_um=4000.0, length_um=4000.0, ion_height_um=59.6)
        got = solid_angle_fraction(wide, n=3000)
        assert got == pytest.approx(solid_angle_fraction_analytic(wide), abs=2e-3)
        assert got > 0.47

    def test_vanishing_width(self):
        tiny = ApertureGeometry(width_um=1e-6, length_um=127.0, ion_height_um=59.6)
        assert solid_angle_fraction(tiny) == pytest.approx(0.0, abs=1e-8)

    def test_grid_refinement_converges(self, paper_aperture):
        a = solid_angle_fraction(paper_aperture, n=400)
        b = solid_angle_fraction(paper_aperture, n=800)
        assert abs(a - b) < 1e-4

    def test_invalid_geometry_rejected(self):
        with pytest.raises(ValueError):
            ApertureGeometry(width_um=-1.0)
        with pytest.raises(ValueError):
            ApertureGeometry(quantization_axis=(0.0, 0.0, 1.0))  # out of plane
        with pytest.raises(ValueError):
            ApertureGeometry(quantization_axis=(0.5, 0.5, 0.0))  # not unit


class TestEquivalentNA:
    def test_paper_value(self, paper_aperture):
        frac = solid_angle_fraction(paper_aperture)
        assert equivalent_circular_na(frac) == pytest.approx(0.679, abs=0.005)

    def test_analytic_inversion(self):
        # forward map: fraction = (1 - cos theta)/2; invert and compare
        theta = 0.6
        frac = (1 - math.cos(theta)) / 2
        assert equivalent_circular_na(frac) == pytest.approx(math.sin(theta), rel=1e-12)

    def test_endpoints(self):
        assert equivalent_circular_na(0.0) == 0.0
        assert equivalent_circular_na(0.5) == pytest.approx(1.0)

    def test_beyond_hemisphere_rejected(self):
        with pytest.raises(ValueError, match="hemisphere"):
            equivalent_circular_na(0.6)


class TestCollectionFraction:
    def test_paper_pi(self, paper_aperture):
        assert collection_fraction(PI, paper_aperture) == pytest.approx(0.174, abs=0.003)

    def test_paper_sigma(self, paper_aperture):
        assert collection_fraction(SIG, paper_aperture) == pytest.approx(0.113, abs=0.003)

    def test_isotropic_equals_solid_angle(self, paper_aperture):
        iso = collection_fraction(None, paper_aperture)
        assert iso == pytest.approx(solid_angle_fraction(paper_aperture), abs=1e-6)

    def test_pattern_enhancement_bounds(self, paper_aperture):
        omega = solid_angle_fraction(paper_aperture)
        r_pi = collection_fraction(PI, paper_aperture) / omega
        r_sig = collection_fraction(SIG, paper_aperture) / omega
        assert 1.0 < r_pi <= 1.5
        assert 0.75 <= r_sig < 1.0

    def test_monotonic_in_dimensions(self, paper_aperture):
        rng = np.random.default_rng(7)
        for _ in range(6):
            w = rng.uniform(20, 150)
            l = rng.uniform(20, 150)
            h = rng.uniform(30, 90)
            base = ApertureGeometry(width_um=w, length_um=l, ion_height_um=h)
            c0 = collection_fraction(PI, base, n=300)
            assert collection_fraction(PI, replace(base, width_um=w * 1.3), n=300) >= c0
            assert collection_fraction(PI, replace(base, length_um=l * 1.3), n=300) >= c0
            assert collection_fraction(PI, replace(base, ion_height_um=h * 1.3), n=300) < c0

    def test_grid_refinement_converges(self, paper_aperture):
        a = collection_fraction(PI, paper_aperture, n=400)
        b = collection_fraction(PI, paper_aperture, n=800)
        assert abs(a - b) < 1e-4

    def test_iris_restricts_collection(self, paper_aperture, paper_aperture_iris):
        full = collection_fraction(PI, paper_aperture)
        cut = collection_fraction(PI, paper_aperture_iris)
        assert cut < full
        # the published iris transmission for pi light was 50(5)%
        assert cut / full == pytest.approx(0.50, abs=0.05)


def oracle_polarizer_leakage(aperture, kind, pol_axis, n=900):
    """Independent vector-projection quadrature, built from scratch."""
    w, l, h = aperture.width_um, aperture.length_um, aperture.ion_height_um
    x = np.linspace(-w / 2, w / 2, n + 1)
    y = np.linspace(-l / 2, l / 2, n + 1)
    X, Y = np.meshgrid(
        0.5 * (x[1:] + x[:-1]), 0.5 * (y[1:] + y[:-1]), indexing="ij"
    )
    d = np.sqrt(X**2 + Y**2 + h**2)
    kx, ky, kz = X / d, Y / d, h / d
    dom = h / d**3 * (w / n) * (l / n)
    if aperture.iris_na is not None:
        dom = np.where(np.hypot(kx, ky) <= aperture.iris_na, dom, 0.0)
    a = np.asarray(aperture.quantization_axis)
    if kind is PI:
        dv = a.astype(complex)
    else:
        zhat = np.array([0.0, 0.0, 1.0])
        e1 = np.cross(zhat, a)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(a, e1)
        dv = (e1 + 1j * e2) / math.sqrt(2)
    kd = kx * dv[0] + ky * dv[1] + kz * dv[2]
    eps = [dv[i] - kd * (kx, ky, kz)[i] for i in range(3)]
    inten = sum(abs(e) ** 2 for e in eps)
    proj = sum(pol_axis[i] * eps[i] for i in range(3))
    return float((abs(proj) ** 2 * dom).sum() / (inten * dom).sum())


class TestPolarizer:
    def test_on_axis_sigma_blocked(self, axis_45):
        tiny = ApertureGeometry(iris_na=0.01)
        pol = pi_aligned_polarizer(tiny)
        assert polarizer_transmission(SIG, tiny, pol) == pytest.approx(0.0, abs=1e-3)

    def test_on_axis_pi_transmitted(self, axis_45):
        tiny = ApertureGeometry(iris_na=0.01)
        pol = pi_aligned_polarizer(tiny)
        assert polarizer_transmission(PI, tiny, pol) == pytest.approx(1.0, abs=1e-3)

    def test_sigma_leakage_at_iris_048(self, paper_aperture_iris):
        pol = pi_aligned_polarizer(paper_aperture_iris)
        leak = polarizer_transmission(SIG, paper_aperture_iris, pol)
        assert 0.0 < leak < 0.1
        oracle = oracle_polarizer_leakage(
            paper_aperture_iris, SIG, np.asarray(paper_aperture_iris.quantization_axis)
        )
        assert leak == pytest.approx(oracle, rel=1e-3)

    def test_sigma_leakage_increases_with_iris_na(self, paper_aperture):
        pol = pi_aligned_polarizer(paper_aperture)
        leaks = [
            polarizer_transmission(SIG, replace(paper_aperture, iris_na=na), pol)
            for na in (0.1, 0.25, 0.4, 0.55, 0.68)
        ]
        assert all(b > a for a, b in zip(leaks, leaks[1:]))

    def test_finite_extinction_ratio_mixes_leakage(self, paper_aperture_iris):
        ax = paper_aperture_iris.axis()
        perfect = PolarizerSetting(transmission_axis=(ax[0], ax[1], 0.0))
        lossy = PolarizerSetting(transmission_axis=(ax[0], ax[1], 0.0), extinction_ratio=100.0)
        t0 = polarizer_transmission(SIG, paper_aperture_iris, perfect)
        t1 = polarizer_transmission(SIG, paper_aperture_iris, lossy)
        assert t1 > t0
        assert t1 == pytest.approx(t0 + (1 - t0) / 100.0, rel=1e-9)

    def test_polarizer_axis_validation(self):
        with pytest.raises(ValueError, match="perpendicular"):
            PolarizerSetting(transmission_axis=(0.0, 0.0, 1.0))
        with pytest.raises(ValueError, match="unit"):
            PolarizerSetting(transmission_axis=(0.5, 0.0, 0.0))

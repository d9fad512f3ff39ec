import math
import os
import sys
import time
import unittest

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from psog.errors import ConfigurationError, ContractError, GeometryError
from psog.eye_render import EyeImage
from psog.sensing import (K_BOLTZMANN, Q_ELECTRON, DetectionArea, PhotodiodeConfig, SensorChain,
                          bin_window, build_footprint, compute_sensor_output, gaussian_window_weights,
                          photodiode_current)


def brute_force_output(image, area, s):
    """Pixel-by-pixel evaluation of a detection area, written with plain loops"""
    rows, cols = image.shape
    cy, cx = image.optical_center
    mx, my = image.mm_per_pixel_x, image.mm_per_pixel_y

    def pixel(r, c):
        if 0 <= r < rows and 0 <= c < cols:
            return float(image.intensities[r, c])
        return image.fill_value

    if area.shape == "circular_gaussian":
        win_cols = max(1, int(round(area.diameter / mx)))
        win_rows = max(1, int(round(area.diameter / my)))
        col0 = int(math.floor(cx + area.center_x / mx - (win_cols - 1) / 2.0 + 0.5))
        row0 = int(math.floor(cy + area.center_y / my - (win_rows - 1) / 2.0 + 0.5))
        total = 0.0
        for i in range(win_rows):
            for j in range(win_cols):
                di = i - (win_rows - 1) / 2.0
                dj = j - (win_cols - 1) / 2.0
                weight = math.exp(-(di ** 2 / (2.0 * (win_rows / 2.0) ** 2) + dj ** 2 / (2.0 * (win_cols / 2.0) ** 2)))
                total += weight * pixel(row0 + i, col0 + j)
        return total / (win_rows * win_cols)

    theta = math.radians(area.angle)
    cos_a, sin_a = math.cos(theta), math.sin(theta)
    reach = math.hypot(area.length, area.width) / 2.0
    offsets = [(k + 0.5) / s - 0.5 for k in range(s)]
    total, weight_sum = 0.0, 0.0
    for r in range(int(math.floor(cy + (area.center_y - reach) / my)) - 2,
                   int(math.ceil(cy + (area.center_y + reach) / my)) + 3):
        for c in range(int(math.floor(cx + (area.center_x - reach) / mx)) - 2,
                       int(math.ceil(cx + (area.center_x + reach) / mx)) + 3):
            count = 0
            for oy in offsets:
                y = ((r - cy) + oy) * my - area.center_y
                for ox in offsets:
                    x = ((c - cx) + ox) * mx - area.center_x
                    u = x * cos_a - y * sin_a
                    v = x * sin_a + y * cos_a
                    if abs(u) <= area.length / 2.0 and abs(v) <= area.width / 2.0:
                        count += 1
            if count:
                weight = count / float(s * s)
                total += weight * pixel(r, c)
                weight_sum += weight
    return total / weight_sum


def random_case(rng):
    rows, cols = int(rng.integers(8, 21)), int(rng.integers(8, 25))
    mx, my = float(rng.uniform(0.2, 0.6)), float(rng.uniform(0.2, 0.6))
    image = EyeImage(rng.uniform(0.0, 1.0, size=(rows, cols)), mx, my,
                     ((rows - 1) / 2.0, (cols - 1) / 2.0), fill_value=float(rng.uniform(0.0, 1.0)))
    center_x = float(rng.uniform(-cols / 2.0, cols / 2.0) * mx)
    center_y = float(rng.uniform(-rows / 2.0, rows / 2.0) * my)
    if rng.random() < 0.5:
        area = DetectionArea.rectangle(center_x, center_y, rng.uniform(0.8, 4.0), rng.uniform(0.8, 4.0),
                                       rng.uniform(-90.0, 90.0))
    else:
        area = DetectionArea.circle(center_x, center_y, rng.uniform(0.3, 4.0))
    return image, area, int(rng.choice([2, 3]))


class TestSensorOutput(unittest.TestCase):
    """
    Test scenarios for photosensor window binning:
    1. Gaussian window weights
    2. Plain and modulated window binning examples
    3. Randomized agreement with a brute-force pixel loop
    4. Out-of-frame fill and geometry errors
    5. Monotonicity and affine response
    6. Detection area validation
    """

    def test_gaussian_weights(self):
        """Test 1: Peak 1, exp(-4/9) corners on 3x3, symmetric under flips"""
        np.testing.assert_array_equal(gaussian_window_weights(1, 1), np.array([[1.0]]))
        weights = gaussian_window_weights(3, 3)
        self.assertEqual(weights[1, 1], 1.0)
        self.assertAlmostEqual(weights[0, 0], math.exp(-4.0 / 9.0), places=12)
        self.assertAlmostEqual(weights[0, 0], 0.6412, places=4)
        odd = gaussian_window_weights(5, 8)
        np.testing.assert_allclose(odd, np.flipud(odd), atol=1e-15)
        np.testing.assert_allclose(odd, np.fliplr(odd), atol=1e-15)
        with self.assertRaises(ContractError):
            gaussian_window_weights(0, 3)

    def test_plain_window_binning(self):
        """Test 2a: Unmodulated windows average their pixels"""
        self.assertAlmostEqual(bin_window(np.full((3, 3), 0.5)), 0.5, places=15)
        self.assertAlmostEqual(bin_window(np.array([[0.1, 0.2], [0.3, 0.4]])), 0.25, places=15)

    def test_circular_window_on_constant_field(self):
        """Test 2b: Circular area on a field of ones gives the mean Gaussian weight, below 1"""
        image = EyeImage(np.ones((30, 30)), 0.25, 0.25, (14.5, 14.5), fill_value=1.0)
        area = DetectionArea.circle(0.0, 0.0, 2.0)
        output = compute_sensor_output(image, area)
        expected = float(np.mean(gaussian_window_weights(8, 8)))
        self.assertAlmostEqual(output, expected, places=12)
        self.assertLess(output, 1.0)
        self.assertAlmostEqual(bin_window(np.ones((8, 8)), modulated=True), expected, places=12)

    def test_brute_force_oracle(self):
        """Test 3: 1,000 random images and areas agree with the pixel loop to 1e-12 in under 10 s"""
        rng = np.random.default_rng(20240611)
        start = time.time()
        worst = 0.0
        for _ in range(1000):
            image, area, s = random_case(rng)
            expected = brute_force_output(image, area, s)
            actual = compute_sensor_output(image, area, supersampling=s)
            worst = max(worst, abs(actual - expected))
        self.assertLessEqual(worst, 1e-12)
        self.assertLess(time.time() - start, 10.0)

    def test_out_of_frame_fill(self):
        """Test 4a: Pixels outside the image contribute the fill value"""
        image = EyeImage(np.zeros((10, 10)), 1.0, 1.0, (4.5, 4.5), fill_value=1.0)
        # straddles the left image edge at x = -5 mm
        area = DetectionArea.rectangle(-5.0, 0.0, 4.0, 2.0)
        self.assertAlmostEqual(compute_sensor_output(image, area, supersampling=2), 0.5, places=15)
        footprint = build_footprint(area, image.shape, 1.0, 1.0, image.optical_center, supersampling=2)
        self.assertGreater(footprint.outside_weight, 0.0)

    def test_area_outside_padded_frame(self):
        """Test 4b: An area beyond the padded frame is a geometry error"""
        image = EyeImage(np.zeros((10, 10)), 1.0, 1.0, (4.5, 4.5))
        with self.assertRaises(GeometryError):
            compute_sensor_output(image, DetectionArea.rectangle(100.0, 0.0, 2.0, 2.0))
        with self.assertRaises(GeometryError):
            compute_sensor_output(image, DetectionArea.circle(0.0, -60.0, 2.0))

    def test_footprint_shape_mismatch(self):
        """Test 4c: A footprint only applies to the image geometry it was built for"""
        footprint = build_footprint(DetectionArea.circle(0.0, 0.0, 2.0), (10, 10), 1.0, 1.0, (4.5, 4.5))
        with self.assertRaises(ContractError):
            footprint.apply(EyeImage(np.zeros((12, 10)), 1.0, 1.0, (5.5, 4.5)))

    def test_monotonicity(self):
        """Test 5a: Brightening a pixel inside the footprint never lowers the output"""
        rng = np.random.default_rng(7)
        data = rng.uniform(0.0, 0.5, size=(20, 20))
        for area in (DetectionArea.rectangle(0.3, -0.2, 3.0, 1.5, 30.0), DetectionArea.circle(0.0, 0.0, 3.0)):
            before = compute_sensor_output(EyeImage(data, 0.3, 0.3, (9.5, 9.5)), area)
            for r, c in ((9, 9), (10, 11), (8, 10)):
                brighter = data.copy()
                brighter[r, c] += 0.4
                after = compute_sensor_output(EyeImage(brighter, 0.3, 0.3, (9.5, 9.5)), area)
                self.assertGreaterEqual(after, before)

    def test_affine_response(self):
        """Test 5b: Scaling by k scales the output; adding c adds c times the mean weight"""
        rng = np.random.default_rng(11)
        data = rng.uniform(0.0, 0.4, size=(24, 24))
        base_image = EyeImage(data, 0.25, 0.25, (11.5, 11.5))
        rectangle = DetectionArea.rectangle(0.0, 0.5, 2.5, 1.0, 15.0)
        circle = DetectionArea.circle(-0.5, 0.0, 2.0)

        for area in (rectangle, circle):
            base = compute_sensor_output(base_image, area)
            scaled = compute_sensor_output(EyeImage(data * 2.0, 0.25, 0.25, (11.5, 11.5)), area)
            self.assertAlmostEqual(scaled, 2.0 * base, places=12)

        offset = EyeImage(data + 0.5, 0.25, 0.25, (11.5, 11.5))
        self.assertAlmostEqual(compute_sensor_output(offset, rectangle),
                               compute_sensor_output(base_image, rectangle) + 0.5, places=12)
        mean_weight = float(np.mean(gaussian_window_weights(8, 8)))
        self.assertAlmostEqual(compute_sensor_output(offset, circle),
                               compute_sensor_output(base_image, circle) + 0.5 * mean_weight, places=12)

    def test_detection_area_validation(self):
        """Test 6: Shape-specific fields and ranges are enforced"""
        with self.assertRaises(ConfigurationError):
            DetectionArea.rectangle(0.0, 0.0, -1.0, 1.0)
        with self.assertRaises(ConfigurationError):
            DetectionArea.rectangle(0.0, 0.0, 1.0, 1.0, angle=95.0)
        with self.assertRaises(ConfigurationError):
            DetectionArea("circular_gaussian", 0.0, 0.0, length=1.0, diameter=2.0)
        with self.assertRaises(ConfigurationError):
            DetectionArea.circle(0.0, 0.0, 0.0)
        with self.assertRaises(ConfigurationError):
            DetectionArea("hexagon", 0.0, 0.0)


class TestPhotodiode(unittest.TestCase):
    """
    Test scenarios for the photodiode model and sensor chain:
    1. Photovoltaic linearity at zero bias
    2. Dark current under bias
    3. Sensor chain conversion and seeded noise
    4. Configuration validation
    """

    def test_zero_bias_is_linear(self):
        """Test 1a: At V_A = 0 the current is exactly R*P for 100 random pairs"""
        rng = np.random.default_rng(42)
        for _ in range(100):
            responsivity = float(rng.uniform(0.05, 1.2))
            power = float(rng.uniform(0.0, 1e-2))
            config = PhotodiodeConfig(responsivity=responsivity)
            self.assertEqual(photodiode_current(config, power), responsivity * power)

    def test_doubling_power_doubles_current(self):
        """Test 1b: Linearity in photovoltaic mode"""
        config = PhotodiodeConfig()
        self.assertEqual(photodiode_current(config, 2e-6), 2.0 * photodiode_current(config, 1e-6))
        np.testing.assert_array_equal(photodiode_current(config, np.array([0.0, 1e-6])), np.array([0.0, 5e-7]))

    def test_dark_current_under_bias(self):
        """Test 2: V_A = kT/q * ln 2 gives I = -I_s with no light"""
        temperature = 0.026 * Q_ELECTRON / K_BOLTZMANN
        config = PhotodiodeConfig(responsivity=0.5, reverse_saturation_current=1e-9,
                                  bias_voltage=0.026 * math.log(2.0), temperature=temperature)
        self.assertAlmostEqual(photodiode_current(config, 0.0), -1e-9, delta=1e-18)
        with self.assertRaises(ContractError):
            photodiode_current(config, -1.0)

    def test_sensor_chain_conversion(self):
        """Test 3a: Chain passes intensities through, or converts them to current"""
        values = np.array([0.2, 0.4])
        np.testing.assert_array_equal(SensorChain().convert(values), values)
        chain = SensorChain(PhotodiodeConfig(responsivity=0.5), use_photodiode=True, optical_power_w=1e-6)
        np.testing.assert_allclose(chain.convert(values), values * 5e-7, rtol=1e-15)

    def test_sensor_chain_noise(self):
        """Test 3b: Noise needs a seeded generator and is reproducible"""
        chain = SensorChain(noise_stddev=0.01)
        values = np.full(50, 0.3)
        with self.assertRaises(ContractError):
            chain.measure(values)
        first = chain.measure(values, np.random.default_rng(3))
        second = chain.measure(values, np.random.default_rng(3))
        np.testing.assert_array_equal(first, second)
        self.assertFalse(np.allclose(first, values))
        np.testing.assert_array_equal(SensorChain().measure(values), values)
        self.assertEqual(SensorChain(PhotodiodeConfig(noise_stddev=1e-9), use_photodiode=True).effective_noise, 1e-9)

    def test_configuration_validation(self):
        """Test 4: Invalid photodiode and chain settings are rejected"""
        with self.assertRaises(ConfigurationError):
            PhotodiodeConfig(responsivity=0.0)
        with self.assertRaises(ConfigurationError):
            PhotodiodeConfig(temperature=-1.0)
        with self.assertRaises(ConfigurationError):
            PhotodiodeConfig(noise_stddev=-0.1)
        with self.assertRaises(ConfigurationError):
            SensorChain(optical_power_w=0.0)


if __name__ == '__main__':
    unittest.main()

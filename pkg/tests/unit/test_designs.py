import itertools
import math
import os
import sys
import unittest

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from psog.designs import (DesignAnchors, DesignParams, build_design, compose_design, design_raw_output,
                          expected_coefficients, param_axes)
from psog.errors import ConfigurationError, ContractError
from psog.eye_render import CameraConfig, EyeModelConfig, EyeState
from psog.scene import Scene

MODEL = EyeModelConfig()

PARAMS = {
    "D1": DesignParams(length=4.0, width=2.0),
    "D2": DesignParams(length=4.0, width=2.0, angle=30.0),
    "D3": DesignParams(diameter=4.0),
    "D4": DesignParams(diameter=4.0, pos_y=0.0, pos_x=0.0),
}


class TestDesignLayouts(unittest.TestCase):
    """
    Test scenarios for design construction:
    1. Coefficient vectors and area counts of D1-D4
    2. Geometric symmetry of the area placement
    3. D4 array spacing and positions
    4. Parameter validation
    5. Per-channel parameters and the D1 vertical mode
    """

    def test_coefficients_per_design(self):
        """Test 1: Area counts and coefficient vectors match the combination rules"""
        expected = {
            "D1": (4, (1, -1, 0, 0), (0, 0, 1, -1)),
            "D2": (2, (1, -1), (1, 1)),
            "D3": (4, (1, -1, 0, 0), (0, 0, 1, 1)),
            "D4": (18, (1, 1, 0, 0, 0, 0, 0, -1, -1) + (0,) * 9, (0,) * 9 + (0, 1, 1, 0, 0, 0, -1, -1, 0)),
        }
        for name, (count, h, v) in expected.items():
            design = build_design(name, PARAMS[name], MODEL)
            self.assertEqual(len(design.areas), count, name)
            self.assertEqual(design.h_coeffs, h, name)
            self.assertEqual(design.v_coeffs, v, name)
            self.assertEqual(design.coefficient_matrix.shape, (2, count))

    def test_d1_pairs_are_mirrored(self):
        """Test 2a: D1 horizontal pair mirrors about the vertical axis, vertical pair about the horizontal one"""
        for length, width in ((0.5, 0.5), (4.0, 2.0), (12.0, 7.5)):
            design = build_design("D1", DesignParams(length=length, width=width), MODEL)
            ps1, ps2, ps3, ps4 = design.areas
            self.assertEqual(ps1.center_x, -ps2.center_x)
            self.assertEqual(ps1.center_y, ps2.center_y)
            self.assertEqual(ps3.center_y, -ps4.center_y)
            self.assertEqual(ps3.center_x, ps4.center_x)
            self.assertAlmostEqual(abs(ps1.center_x), MODEL.iris_radius, places=12)

    def test_d2_tilts_are_opposite(self):
        """Test 2b: D2 rectangles tilt by +A and -A and sit 8 mm apart"""
        design = build_design("D2", PARAMS["D2"], MODEL)
        left, right = design.areas
        self.assertEqual(abs(left.angle), 30.0)
        self.assertEqual(left.angle, -right.angle)
        self.assertAlmostEqual(right.center_x - left.center_x, 8.0, places=12)

    def test_d3_vertical_pair_below_center(self):
        """Test 2c: D3 vertical pair sits below the pupil center, mirrored in x"""
        design = build_design("D3", PARAMS["D3"], MODEL)
        ps3, ps4 = design.areas[2:]
        self.assertGreater(ps3.center_y, 0.0)
        self.assertEqual(ps3.center_y, ps4.center_y)
        self.assertEqual(ps3.center_x, -ps4.center_x)

    def test_d4_array_overlap(self):
        """Test 3a: D = 4 mm gives 3 mm spacing and overlapping neighbours"""
        design = build_design("D4", PARAMS["D4"], MODEL)
        horizontal, vertical = design.areas[:9], design.areas[9:]
        for row in (horizontal, vertical):
            for first, second in zip(row, row[1:]):
                distance = math.hypot(second.center_x - first.center_x, second.center_y - first.center_y)
                self.assertAlmostEqual(distance, 3.0, places=12)
                self.assertLess(distance, 4.0)
        self.assertEqual(horizontal[4].center_x, 0.0)
        self.assertEqual(vertical[4].center_y, 0.0)

    def test_d4_positions_are_anatomical(self):
        """Test 3b: Positive pos_y raises the horizontal row, positive pos_x moves the column away from nasal"""
        design = build_design("D4", DesignParams(diameter=2.0, pos_y=1.5, pos_x=1.0), MODEL)
        for area in design.areas[:9]:
            self.assertEqual(area.center_y, -1.5)
        for area in design.areas[9:]:
            self.assertEqual(area.center_x, -1.0)

    def test_parameter_ranges(self):
        """Test 4a: Out-of-range parameters name the offending key"""
        with self.assertRaises(ConfigurationError) as ctx:
            DesignParams.from_mapping("D1", {"length": 15.0, "width": 2.0})
        self.assertEqual(ctx.exception.key, "params.length")
        self.assertIn("15.0", str(ctx.exception))
        with self.assertRaises(ConfigurationError):
            DesignParams.from_mapping("D2", {"length": 4.0, "width": 2.0, "angle": 50.0})
        with self.assertRaises(ConfigurationError):
            DesignParams.from_mapping("D4", {"diameter": 4.0, "pos_y": 2.5, "pos_x": 0.0})

    def test_parameter_union(self):
        """Test 4b: Missing, foreign and misspelled parameters are rejected"""
        with self.assertRaises(ConfigurationError) as ctx:
            DesignParams.from_mapping("D1", {"lenght": 4.0, "width": 2.0})
        self.assertEqual(ctx.exception.key, "params.lenght")
        with self.assertRaises(ConfigurationError):
            DesignParams.from_mapping("D3", {})
        with self.assertRaises(ConfigurationError):
            build_design("D3", DesignParams(diameter=4.0, length=2.0), MODEL)
        with self.assertRaises(ConfigurationError) as ctx:
            param_axes("D5")
        self.assertEqual(ctx.exception.key, "design.name")

    def test_parameter_order(self):
        """Test 4c: Values follow the canonical axis order"""
        params = DesignParams.from_values("D4", (3.0, -0.5, 1.0))
        self.assertEqual(params.to_dict("D4"), {"diameter": 3.0, "pos_y": -0.5, "pos_x": 1.0})
        self.assertEqual(params.values("D4"), (3.0, -0.5, 1.0))
        with self.assertRaises(ContractError):
            DesignParams.from_values("D1", (1.0,))

    def test_per_channel_parameters(self):
        """Test 5a: Horizontal and vertical areas take their own parameter sets"""
        horizontal = DesignParams(length=6.0, width=1.0)
        vertical = DesignParams(length=2.0, width=3.0)
        design = compose_design("D1", horizontal, vertical, MODEL)
        self.assertEqual([a.length for a in design.areas], [6.0, 6.0, 2.0, 2.0])
        self.assertEqual([a.width for a in design.areas], [1.0, 1.0, 3.0, 3.0])
        with self.assertRaises(ConfigurationError):
            compose_design("D2", PARAMS["D2"], DesignParams(length=5.0, width=2.0, angle=30.0), MODEL)

    def test_d1_vertical_sum_mode(self):
        """Test 5b: The sum switch changes only the D1 vertical coefficients"""
        design = build_design("D1", PARAMS["D1"], MODEL, d1_vertical_mode="sum")
        self.assertEqual(design.v_coeffs, (0, 0, 1, 1))
        self.assertEqual(design.h_coeffs, (1, -1, 0, 0))
        self.assertEqual(expected_coefficients("D3", "sum"), expected_coefficients("D3"))
        with self.assertRaises(ConfigurationError):
            build_design("D1", PARAMS["D1"], MODEL, d1_vertical_mode="product")

    def test_anchors_are_configurable(self):
        """Test 5c: Anchor fractions move the areas"""
        design = build_design("D1", PARAMS["D1"], MODEL, DesignAnchors(d1_horizontal_x=1.2))
        self.assertAlmostEqual(design.areas[1].center_x, 1.2 * MODEL.iris_radius, places=12)
        with self.assertRaises(ConfigurationError):
            DesignAnchors(d4_spacing=0.0)


class TestDesignRawOutput(unittest.TestCase):
    """
    Test scenarios for de-matrixing:
    1. Worked examples per design
    2. Linearity and offset cancellation
    3. Length mismatches
    4. Mirror antisymmetry on a rendered symmetric eye
    """

    def test_examples(self):
        """Test 1: D1 equal pairs cancel, D2 difference and sum, D4 outer pairs"""
        d1 = build_design("D1", PARAMS["D1"], MODEL)
        self.assertEqual(design_raw_output(d1, [0.6, 0.6, 0.3, 0.3]), (0.0, 0.0))
        d2 = build_design("D2", PARAMS["D2"], MODEL)
        h, v = design_raw_output(d2, [0.6, 0.4])
        self.assertAlmostEqual(h, 0.2, places=15)
        self.assertAlmostEqual(v, 1.0, places=15)
        d4 = build_design("D4", PARAMS["D4"], MODEL)
        h, v = design_raw_output(d4, [1, 1, 0, 0, 0, 0, 0, 0.25, 0.25] + [0] * 9)
        self.assertEqual((h, v), (1.5, 0.0))

    def test_linearity(self):
        """Test 2: k*values + c maps to k*raw + c*sum(coefficients)"""
        rng = np.random.default_rng(5)
        for name in ("D1", "D2", "D3", "D4"):
            design = build_design(name, PARAMS[name], MODEL)
            values = rng.uniform(0.0, 1.0, size=len(design.areas))
            h, v = design_raw_output(design, values)
            h2, v2 = design_raw_output(design, 3.0 * values + 0.7)
            self.assertAlmostEqual(h2, 3.0 * h + 0.7 * sum(design.h_coeffs), places=12)
            self.assertAlmostEqual(v2, 3.0 * v + 0.7 * sum(design.v_coeffs), places=12)
            if name != "D2":
                self.assertEqual(sum(design.h_coeffs), 0)

    def test_matrix_input(self):
        """Test 2b: A (samples, areas) matrix gives per-sample arrays"""
        design = build_design("D2", PARAMS["D2"], MODEL)
        h, v = design_raw_output(design, np.array([[0.6, 0.4], [0.1, 0.3]]))
        np.testing.assert_allclose(h, [0.2, -0.2], atol=1e-15)
        np.testing.assert_allclose(v, [1.0, 0.4], atol=1e-15)

    def test_length_mismatch(self):
        """Test 3: Wrong number of sensor values is a contract error"""
        design = build_design("D1", PARAMS["D1"], MODEL)
        with self.assertRaises(ContractError):
            design_raw_output(design, [0.1, 0.2, 0.3])
        with self.assertRaises(ContractError):
            design_raw_output(design, np.zeros((2, 5)))

    def test_mirror_antisymmetry(self):
        """Test 4: yaw -> -yaw negates h_raw and keeps v_raw for D1, D3 and D4"""
        scene = Scene(EyeModelConfig(eyelids_enabled=False, supersampling_factor=2),
                      CameraConfig(image_rows=96, image_cols=128))
        for name, (yaw, pitch) in itertools.product(("D1", "D3", "D4"), ((6.0, 0.0), (3.5, 2.0))):
            design = build_design(name, PARAMS[name], scene.model)
            h_pos, v_pos = scene.raw_outputs(design, EyeState(yaw, pitch, 4.0))
            h_neg, v_neg = scene.raw_outputs(design, EyeState(-yaw, pitch, 4.0))
            self.assertAlmostEqual(h_pos, -h_neg, delta=1e-12, msg=name)
            self.assertAlmostEqual(v_pos, v_neg, delta=1e-12, msg=name)
            if name != "D4":
                self.assertNotAlmostEqual(h_pos, 0.0, places=6, msg=name)


if __name__ == '__main__':
    unittest.main()

#pragma once

#include "lumeneit/geometry.hpp"

namespace test_support {

// Small phantom resolution for fast tests (a few thousand elements).
inline lumeneit::MeshResolution coarse(int layers = 10) {
    lumeneit::MeshResolution r;
    r.electrode_segments = 2;
    r.gap_segments = 2;
    r.radial_bands = 3;
    r.radial_grading = 3.0;
    r.axial_layers = layers;
    return r;
}

} // namespace test_support

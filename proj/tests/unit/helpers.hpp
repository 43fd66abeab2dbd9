#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "nhrf/connections.hpp"
#include "nhrf/geometry.hpp"
#include "nhrf/scenario.hpp"

namespace testing {

inline constexpr double kPi = std::numbers::pi;

// Preset scenario with every axis resampled to `samples` nodes (0 keeps the preset counts).
inline nhrf::Scenario preset(const std::string& name, int samples = 0) {
    nhrf::Scenario s = nhrf::load_preset(name);
    if (samples > 0)
        for (auto& a : s.axes) a.samples = samples;
    return s;
}

inline nhrf::Geometry geometry(const nhrf::Scenario& s, nhrf::Backend b = nhrf::Backend::Symbolic) {
    return nhrf::make_geometry(s, b);
}

inline nhrf::Site site(std::initializer_list<double> u) {
    nhrf::Site s;
    std::size_t k = 0;
    for (double v : u) s.u[k++] = v;
    return s;
}

// Uniform random interior point of the chart (node = -1: symbolic evaluation only).
inline nhrf::Site random_site(const nhrf::Chart& c, std::mt19937& rng) {
    nhrf::Site s;
    for (int k = 0; k < c.dim(); ++k) {
        std::uniform_real_distribution<double> d(c.lower(k), c.upper(k));
        s.u[static_cast<std::size_t>(k)] = d(rng);
    }
    return s;
}

// Random grid node of the chart, valid for grid fields.
inline nhrf::Site random_node(const nhrf::Chart& c, std::mt19937& rng) {
    std::uniform_int_distribution<std::size_t> d(0, c.node_count() - 1);
    return c.node_site(d(rng));
}

}  // namespace testing

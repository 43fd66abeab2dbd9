#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nhrf/connections.hpp"
#include "nhrf/geometry.hpp"

namespace nhrf {

enum class Integrator { Euler, RK4 };
std::string to_string(Integrator i);
Integrator integrator_from_string(const std::string& s);

struct FlowConfig {
    ConnectionKind connection = ConnectionKind::Canonical;
    std::optional<double> kappa;  // unset: 2/(n+m)
    double dchi = 1e-3;
    int steps = 0;
    Integrator integrator = Integrator::RK4;
    // a step is rejected when the smallest Cholesky pivot of g or h drops to this value
    double positivity_tolerance = 0.0;

    double kappa_for(int dim) const { return kappa ? *kappa : 2.0 / dim; }
};

struct FlowDiagnostics {
    double volume = 0.0;
    double r = 0.0;  // volume-averaged scalar curvature
    double min_sR = 0.0;
    double max_sR = 0.0;
    double einstein_residual = 0.0;  // max |Ric - (sR/(n+m)) g|
    double mixed_residual = 0.0;     // max |R_ia|, |R_ai|
};

// Grid-backed d-metric along the flow; the N-connection is held fixed.
struct FlowState {
    double chi = 0.0;
    Geometry geo;
    FlowDiagnostics diag;
};

// Samples the geometry on its chart grid (symbolic blocks become seeds) and computes diagnostics.
FlowState make_flow_state(const Geometry& geo, const FlowConfig& cfg);
FlowDiagnostics diagnose(const Geometry& geo, ConnectionKind k);

// Rates of the g and h components (packed upper triangles, per grid node).
struct MetricRate {
    std::vector<std::vector<double>> g;
    std::vector<std::vector<double>> h;
    double r = 0.0;
};
MetricRate flow_rhs(const FlowState& s, const FlowConfig& cfg);
FlowState step(const FlowState& s, const FlowConfig& cfg);

using FlowObserver = std::function<void(int step, const FlowState& state)>;

struct Trajectory {
    std::vector<double> chi;
    std::vector<FlowDiagnostics> diag;
    std::vector<FlowState> states;  // filled only when requested
    FlowState final_state;
};
// Runs cfg.steps steps; the observer sees the initial state (step 0) and every accepted step.
Trajectory evolve(const FlowState& s0, const FlowConfig& cfg, const FlowObserver& observer = {}, bool keep_states = false);

// max over nodes of |G_a - G_b|_F / |G_b|_F for the frame metric blocks.
double metric_drift(const FlowState& a, const FlowState& b);
// grid value of g_ij (h-block) or h_ab (v-block, index n+a) at a node
double metric_value(const FlowState& s, int alpha, int beta, std::size_t node);

// CSV with the diagnostic columns followed by extra named columns.
std::string trajectory_csv(const Trajectory& t, const std::vector<std::string>& extra_names,
                           const std::vector<std::vector<double>>& extra_rows);

}  // namespace nhrf

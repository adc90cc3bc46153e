#pragma once

#include <utility>
#include <vector>

#include "crossreg/energy.hpp"

namespace crossreg {

struct SolverConfig {
    int n_levels = 3;            // pyramid depth (level 0 = full resolution)
    int iters_per_level = 100;
    double step_size = 4.0;      // first trial update per iteration, voxels
    double step_shrink = 0.5;    // backtracking factor, in (0,1)
    double converge_tol = 1e-5;  // relative objective decrease threshold
    double cycle_weight = 0.1;   // inverse-consistency penalty weight
    double fluid_sigma = 2.0;    // Gaussian preconditioning of the update; 0 disables
    EnergyConfig energy;
    long seed = 0;               // recorded with results; the solver itself is deterministic

    void validate() const;
};

struct TraceRow {
    int level = 0;
    int iteration = 0;      // 0 = objective at level entry, then one row per accepted step
    double objective = 0.0; // weighted total including the cycle penalty
    LossTerms terms;        // unweighted per-term values
    double cycle = 0.0;     // unweighted inverse-consistency value
};

struct RegResult {
    DisplacementField phi_fwd;  // warps the moving image onto the fixed grid
    DisplacementField phi_bwd;  // warps the fixed image onto the moving grid
    std::vector<TraceRow> loss_trace;
    double jacobian_positive_fraction = 0.0;
    bool converged = false;
};

// Mean squared magnitude of compose_fields(phi_bwd, phi_fwd) over the voxels
// whose forward-mapped position stays inside the grid. Zero iff the composed
// map is the identity there.
double inverse_consistency_loss(const DisplacementField& phi_fwd, const DisplacementField& phi_bwd);

// Minimize the bidirectional multi-scale energy plus the cycle penalty by
// coarse-to-fine projected gradient descent with backtracking line search.
// Iterates are clamped so every sampled position stays inside the grid, and
// accepted steps never increase the objective. Throws NumericalError (with the
// trace so far) if the objective turns non-finite.
RegResult register_volumes(const Volume& fixed, const Volume& moving, const SolverConfig& cfg);

}  // namespace crossreg

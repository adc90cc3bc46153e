#pragma once

#include <utility>

#include "crossreg/field.hpp"
#include "crossreg/volume.hpp"

namespace crossreg {

// Weights and scales of the bidirectional multi-scale registration objective.
// Similarity terms are losses in [-1, 0] (lower is better) and all weights are
// stored positive, so the objective is minimized throughout.
struct EnergyConfig {
    double w_sim = 1.2;          // full-resolution similarity weight
    double w_sim_down = 0.6;     // downsampled similarity weight
    double w_smooth = 0.5;       // full-resolution smoothness weight
    double w_smooth_down = 0.25; // downsampled smoothness weight
    int lcc_radius = 2;          // half-width of the correlation window, voxels
    int down_factor = 2;         // block size of the extra coarse scale

    void validate() const;
};

// Named pieces of the objective. Each term is the unweighted sum over both
// directions; `total` applies the configured weights.
struct LossTerms {
    double total = 0.0;
    double sim = 0.0;
    double sim_down = 0.0;
    double smooth = 0.0;
    double smooth_down = 0.0;
};

// Negated mean of the squared local correlation coefficient over
// (2*radius+1)^3 windows (clipped at the volume boundary). Windows where
// either image has (numerically) zero variance contribute 0. Range [-1, 0].
double lcc_similarity_loss(const Volume& a, const Volume& b, int radius);

// Mean over voxels and components of the squared spatial gradient of the
// field, forward differences with a one-sided stencil on the far boundary.
double smoothness_loss(const DisplacementField& field);

// w_sim * (lcc(F, M(phi_f)) + lcc(M, F(phi_b)))
//   + w_sim_down * (the same on down_factor block-averaged images and
//                   restricted fields)
//   + w_smooth * (smooth(phi_f) + smooth(phi_b))
//   + w_smooth_down * (smoothness of the restricted fields)
LossTerms total_loss(const Volume& fixed, const Volume& moving, const DisplacementField& phi_fwd,
                     const DisplacementField& phi_bwd, const EnergyConfig& cfg);

// Analytic derivative of total_loss with respect to every displacement
// component of both fields. Optionally reports the loss terms of the
// evaluation it shares with the gradient computation.
std::pair<DisplacementField, DisplacementField> total_loss_gradient(
    const Volume& fixed, const Volume& moving, const DisplacementField& phi_fwd,
    const DisplacementField& phi_bwd, const EnergyConfig& cfg, LossTerms* terms = nullptr);

}  // namespace crossreg

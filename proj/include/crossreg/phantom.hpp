#pragma once

#include <array>
#include <vector>

#include "crossreg/field.hpp"
#include "crossreg/volume.hpp"

namespace crossreg {

struct Ellipsoid {
    std::array<double, 3> center{0, 0, 0};     // voxels
    std::array<double, 3> semi_axes{1, 1, 1};  // voxels
};

struct Sphere {
    std::array<double, 3> center{0, 0, 0};  // voxels
    double radius = 1.0;                    // voxels
};

// A synthetic paired-modality test case with known deformation. Modality A is
// the undeformed anatomy; modality B shows the same anatomy deformed by a
// smooth random field, with its own intensity mapping. The lesion contrast is
// set per modality; contrast_b = 0 makes the lesion invisible in B.
//
// The anatomy is: a textured background (multi-octave sinusoidal pattern with
// a modality-specific affine intensity map), a flat organ ellipsoid, optional
// vessel-like spheres inside the organ (visible in both modalities), and one
// lesion sphere inside the organ.
struct PhantomSpec {
    Dims3 dims{64, 64, 64};

    Ellipsoid organ{{32, 32, 32}, {18, 14, 12}};
    double organ_intensity_a = 0.35;
    double organ_intensity_b = 0.45;
    double organ_texture_amplitude_a = 0.05;   // parenchyma texture gain; short
    double organ_texture_amplitude_b = -0.06;  // wavelengths only, both modalities

    Sphere lesion{{36, 32, 32}, 8.0};
    double lesion_contrast_a = 0.5;
    double lesion_contrast_b = 0.0;

    double background_a = 0.45;  // mean background level, modality A
    double background_b = 0.55;
    double texture_amplitude_a = 0.30;   // signed texture gain per modality;
    double texture_amplitude_b = -0.35;  // opposite signs model contrast inversion

    std::vector<Sphere> vessels;  // inside the organ, away from the lesion
    double vessel_intensity_a = 0.10;
    double vessel_intensity_b = 0.10;

    double noise_sigma = 0.02;
    double deform_amplitude = 3.0;   // max displacement magnitude, voxels
    double deform_smoothness = 10.0; // Gaussian kernel width of the field, voxels
    long seed = 1;

    void validate() const;

    // The canonical invisible-lesion configuration (three vessels, zero
    // lesion contrast in modality B).
    static PhantomSpec invisibility_default();
};

struct PhantomPair {
    Volume mod_a;
    Volume mod_b;
    LabelMask label_a;          // lesion in A's frame
    LabelMask label_b_oracle;   // label_a carried through the true field
    LabelMask organ_b;          // deformed organ in B's frame
    DisplacementField phi_true; // B-frame field: anatomy_B(p) = anatomy_A(p + phi_true(p))
};

// Deterministic given spec.seed.
PhantomPair generate_pair(const PhantomSpec& spec);

// Otsu threshold over the ROI's intensities; returns the ROI voxels on the
// minority side of the threshold. A (numerically) constant ROI yields an
// empty mask.
LabelMask intensity_baseline_segment(const Volume& vol, const LabelMask& roi);

}  // namespace crossreg
